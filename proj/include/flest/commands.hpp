#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flest/config.hpp"
#include "flest/kg_data.hpp"

namespace flest {

/// Materialize the configured data source (triples file or the synthetic
/// generator).
std::vector<RawTriple> load_dataset(const ExperimentConfig& cfg);

/// Write per-client manifests (client_<id>.lines, one 0-based input line
/// index per line) and partition_summary.json into the output directory.
int cmd_partition(const ExperimentConfig& cfg);

/// Run training; writes config.resolved, metrics.jsonl (one record per
/// round), best.ckpt (highest mean validation MRR, when validation runs),
/// final.ckpt, and summary.json.
int cmd_train(const ExperimentConfig& cfg);

struct EvalArgs {
    std::string checkpoint;
    std::string split = "test";  // train | valid | test
    bool raw = false;            // rank against the unfiltered candidate set
};

/// Evaluate a checkpoint on one split: per-client and aggregated reports,
/// printed as a table and written as JSON.
int cmd_eval(const ExperimentConfig& cfg, const EvalArgs& args);

struct GradcheckArgs {
    int instances = 20;
    std::uint64_t seed = 99;
    bool corrupt = false;  // test hook: damage one analytic gradient to prove failures surface
};

/// Central finite-difference check of the analytic gradients over a seeded
/// grid of small instances, plus a stationary-point probe. Returns 0 on
/// pass, 3 on failure.
int cmd_gradcheck(const GradcheckArgs& args);

}  // namespace flest
