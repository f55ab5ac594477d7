#pragma once

#include <cstdint>
#include <string>

#include "flest/federation.hpp"
#include "flest/kg_data.hpp"

namespace flest {

/// Everything that identifies an experiment. output_dir and threads are
/// execution details and stay out of the canonical form / hash.
struct ExperimentConfig {
    std::string dataset;  // triples file; empty when the synthetic source is used

    // built-in synthetic source; synthetic_triples > 0 enables it
    std::size_t synthetic_entities = 0;
    std::size_t synthetic_relations = 0;
    std::size_t synthetic_triples = 0;
    std::size_t synthetic_rank = 8;
    std::uint64_t synthetic_seed = 1;

    int num_clients = 1;
    std::size_t rank = 200;
    double s = 0.5;
    double alpha = 0.1;
    double beta = 1e-4;
    double lr = 0.0005;
    double dropout = 0.3;
    std::size_t batch_size = 128;
    int local_epochs = 3;
    int rounds_max = 300;
    int patience = 15;
    int eval_every = 5;
    std::uint64_t partition_seed = 1;
    std::uint64_t init_seed = 1;
    std::uint64_t shuffle_seed = 1;
    std::string mode = "federated";
    double train_ratio = 0.9;
    double valid_ratio = 0.05;
    double test_ratio = 0.05;

    std::string output_dir = "out";
    int threads = 1;

    void validate() const;  // std::invalid_argument on any bad field

    Hyper hyper() const;
    SplitRatios ratios() const;
    RunMode run_mode() const;
    RunConfig run_config() const;
};

/// `key=value` lines in fixed order, one per science-relevant field; the
/// identity of a run. Doubles are shortest-round-trip formatted, so
/// parse -> reformat is the identity.
std::string canonical_text(const ExperimentConfig& c);

/// canonical_text plus the execution fields; written as config.resolved and
/// readable back through the CLI's --config option.
std::string resolved_text(const ExperimentConfig& c);

/// FNV-1a 64 of canonical_text; stored in checkpoints.
std::uint64_t config_hash(const ExperimentConfig& c);

}  // namespace flest
