#include "flest/config.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace flest {

namespace {

std::string fmt_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return {buf, res.ptr};
}

void emit(std::string& out, const char* key, const std::string& value) {
    out += key;
    out += '=';
    // empty strings round-trip through the CLI config reader as ""
    out += value.empty() ? "\"\"" : value;
    out += '\n';
}

void emit_fields(std::string& out, const ExperimentConfig& c, bool with_execution) {
    emit(out, "dataset", c.dataset);
    emit(out, "synthetic-entities", std::to_string(c.synthetic_entities));
    emit(out, "synthetic-relations", std::to_string(c.synthetic_relations));
    emit(out, "synthetic-triples", std::to_string(c.synthetic_triples));
    emit(out, "synthetic-rank", std::to_string(c.synthetic_rank));
    emit(out, "synthetic-seed", std::to_string(c.synthetic_seed));
    emit(out, "num-clients", std::to_string(c.num_clients));
    emit(out, "rank", std::to_string(c.rank));
    emit(out, "s", fmt_double(c.s));
    emit(out, "alpha", fmt_double(c.alpha));
    emit(out, "beta", fmt_double(c.beta));
    emit(out, "lr", fmt_double(c.lr));
    emit(out, "dropout", fmt_double(c.dropout));
    emit(out, "batch-size", std::to_string(c.batch_size));
    emit(out, "local-epochs", std::to_string(c.local_epochs));
    emit(out, "rounds-max", std::to_string(c.rounds_max));
    emit(out, "patience", std::to_string(c.patience));
    emit(out, "eval-every", std::to_string(c.eval_every));
    emit(out, "partition-seed", std::to_string(c.partition_seed));
    emit(out, "init-seed", std::to_string(c.init_seed));
    emit(out, "shuffle-seed", std::to_string(c.shuffle_seed));
    emit(out, "mode", c.mode);
    emit(out, "train-ratio", fmt_double(c.train_ratio));
    emit(out, "valid-ratio", fmt_double(c.valid_ratio));
    emit(out, "test-ratio", fmt_double(c.test_ratio));
    if (with_execution) {
        emit(out, "output-dir", c.output_dir);
        emit(out, "threads", std::to_string(c.threads));
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    const bool has_file = !dataset.empty();
    const bool has_synth = synthetic_triples > 0;
    if (has_file == has_synth) {
        throw std::invalid_argument(
            "config: set exactly one data source (dataset or synthetic-triples)");
    }
    if (has_synth && (synthetic_entities < 2 || synthetic_relations < 1 || synthetic_rank < 1)) {
        throw std::invalid_argument(
            "config: synthetic source needs >= 2 entities, >= 1 relation, rank >= 1");
    }
    if (num_clients < 1) throw std::invalid_argument("config: num-clients must be >= 1");
    if (rank < 1) throw std::invalid_argument("config: rank must be >= 1");
    if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("config: s must be in (0,1]");
    if (rounds_max < 1) throw std::invalid_argument("config: rounds-max must be >= 1");
    if (patience < 0) throw std::invalid_argument("config: patience must be >= 0");
    if (eval_every < 0) throw std::invalid_argument("config: eval-every must be >= 0");
    if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
    if (mode != "federated" && mode != "local_only") {
        throw std::invalid_argument("config: mode must be federated or local_only, got '" + mode +
                                    "'");
    }
    if (train_ratio < 0.0 || valid_ratio < 0.0 || test_ratio < 0.0 ||
        std::abs(train_ratio + valid_ratio + test_ratio - 1.0) > 1e-9) {
        throw std::invalid_argument("config: split ratios must be non-negative and sum to 1");
    }
    hyper().validate();
}

Hyper ExperimentConfig::hyper() const {
    Hyper h;
    h.alpha = alpha;
    h.beta = beta;
    h.lr = lr;
    h.dropout_rate = dropout;
    h.local_epochs = local_epochs;
    h.batch_size = batch_size;
    return h;
}

SplitRatios ExperimentConfig::ratios() const { return {train_ratio, valid_ratio, test_ratio}; }

RunMode ExperimentConfig::run_mode() const {
    if (mode == "federated") return RunMode::federated;
    if (mode == "local_only") return RunMode::local_only;
    throw std::invalid_argument("config: unknown mode '" + mode + "'");
}

RunConfig ExperimentConfig::run_config() const {
    RunConfig rc;
    rc.num_clients = num_clients;
    rc.rounds_max = rounds_max;
    rc.hyper = hyper();
    rc.rank = rank;
    rc.s = s;
    rc.init_seed = init_seed;
    rc.shuffle_seed = shuffle_seed;
    rc.mode = run_mode();
    rc.eval_every = eval_every;
    rc.patience = patience;
    rc.threads = threads;
    return rc;
}

std::string canonical_text(const ExperimentConfig& c) {
    std::string out;
    emit_fields(out, c, false);
    return out;
}

std::string resolved_text(const ExperimentConfig& c) {
    std::string out;
    emit_fields(out, c, true);
    return out;
}

std::uint64_t config_hash(const ExperimentConfig& c) {
    const std::string text = canonical_text(c);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace flest
