#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <unordered_set>
#include <vector>

#include "flest/kg_data.hpp"
#include "flest/model.hpp"

namespace flest {

inline constexpr std::array<int, 3> kHitKs{1, 3, 10};

struct EvalReport {
    std::size_t num_queries = 0;
    double mrr = 0.0;
    std::map<int, double> hits;  // keys 1, 3, 10
};

/// Zeroed report carrying the standard hit keys; the identity element of
/// aggregate_reports.
EvalReport empty_report();

enum class QueryDirection { tail, head };

struct RankQuery {
    QueryDirection direction = QueryDirection::tail;
    Triple triple;
    std::vector<double> scores;                // one per candidate entity
    std::unordered_set<std::int32_t> filter;   // known-true ids other than the target
};

/// Fractional rank of `target` among the non-filtered candidates:
/// 1 + |{better}| + |{ties}|/2 (mean rank among ties). Filter must not
/// contain the target.
double rank_of(std::span<const double> scores, std::int32_t target,
               const std::unordered_set<std::int32_t>& filter);
double rank_of(const RankQuery& q);

/// MRR = mean(1/rank); Hit@k counts ceil(rank) <= k. Empty input is an
/// error; use empty_report() for the no-query case.
EvalReport report_from_ranks(std::span<const double> ranks);

struct EvalOptions {
    bool filtered = true;  // false ranks against the raw candidate set
};

/// Link-prediction evaluation of `split`: per triple one tail query and one
/// head query against the shard's full entity vocabulary, filtered against
/// every triple the client knows (train, valid, test). Pure function of the
/// frozen params; no dropout.
EvalReport evaluate_shard(const ModelParams& params, const ClientShard& shard,
                          std::span<const Triple> split, const EvalOptions& opts = {});

/// Query-count-weighted mean of mrr and each hits@k; num_queries summed.
EvalReport aggregate_reports(std::span<const EvalReport> reports);

}  // namespace flest
