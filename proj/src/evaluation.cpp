#include "flest/evaluation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "flest/matrix.hpp"

namespace flest {

namespace {

std::uint64_t pair_key(std::int32_t a, std::int32_t b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

void check_triple_ids(const Triple& t, std::size_t ne, std::size_t nr) {
    const bool ok = t.head >= 0 && static_cast<std::size_t>(t.head) < ne && t.tail >= 0 &&
                    static_cast<std::size_t>(t.tail) < ne && t.rel >= 0 &&
                    static_cast<std::size_t>(t.rel) < nr;
    if (!ok) {
        throw std::invalid_argument("triple (" + std::to_string(t.head) + "," +
                                    std::to_string(t.rel) + "," + std::to_string(t.tail) +
                                    ") outside vocab " + std::to_string(ne) + " entities, " +
                                    std::to_string(nr) + " relations");
    }
}

}  // namespace

EvalReport empty_report() {
    EvalReport r;
    for (int k : kHitKs) r.hits[k] = 0.0;
    return r;
}

double rank_of(std::span<const double> scores, std::int32_t target,
               const std::unordered_set<std::int32_t>& filter) {
    if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
        throw std::invalid_argument("rank_of: target " + std::to_string(target) +
                                    " outside candidate range " + std::to_string(scores.size()));
    }
    if (filter.contains(target)) {
        throw std::invalid_argument("rank_of: filter must exclude the target");
    }
    const double st = scores[static_cast<std::size_t>(target)];
    std::size_t better = 0;
    std::size_t ties = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j == static_cast<std::size_t>(target)) continue;
        if (filter.contains(static_cast<std::int32_t>(j))) continue;
        if (scores[j] > st) ++better;
        else if (scores[j] == st) ++ties;
    }
    return 1.0 + static_cast<double>(better) + static_cast<double>(ties) * 0.5;
}

double rank_of(const RankQuery& q) {
    const std::int32_t target = q.direction == QueryDirection::tail ? q.triple.tail : q.triple.head;
    return rank_of(q.scores, target, q.filter);
}

EvalReport report_from_ranks(std::span<const double> ranks) {
    if (ranks.empty()) throw std::invalid_argument("report_from_ranks: no ranks");
    EvalReport r = empty_report();
    r.num_queries = ranks.size();
    double rr_sum = 0.0;
    std::array<std::size_t, kHitKs.size()> hit_counts{};
    for (double rank : ranks) {
        rr_sum += 1.0 / rank;
        const double whole = std::ceil(rank);
        for (std::size_t i = 0; i < kHitKs.size(); ++i) {
            if (whole <= kHitKs[i]) ++hit_counts[i];
        }
    }
    const double n = static_cast<double>(ranks.size());
    r.mrr = rr_sum / n;
    for (std::size_t i = 0; i < kHitKs.size(); ++i) {
        r.hits[kHitKs[i]] = static_cast<double>(hit_counts[i]) / n;
    }
    return r;
}

EvalReport evaluate_shard(const ModelParams& params, const ClientShard& shard,
                          std::span<const Triple> split, const EvalOptions& opts) {
    if (split.empty()) throw std::invalid_argument("evaluate_shard: empty split");
    const std::size_t ne = params.num_entities();
    const std::size_t nr = params.num_relations();
    if (ne != shard.vocab.num_entities() || nr != shard.vocab.num_relations()) {
        throw std::invalid_argument("evaluate_shard: params cover " + std::to_string(ne) + "/" +
                                    std::to_string(nr) + " ids, shard vocab has " +
                                    std::to_string(shard.vocab.num_entities()) + "/" +
                                    std::to_string(shard.vocab.num_relations()));
    }

    // Per-entity composites; column j is bit-equal to the matvec chain used
    // by score_triple, so ranking agrees with the per-triple scorer exactly.
    const Matrix ce = matmul(params.e_dic, params.e_loading);
    const Matrix heads = matmul(params.w1, ce);                               // r x |E|
    const Matrix tails = matmul(params.w3, ce);                               // r x |E|
    const Matrix rels = matmul(params.w2, matmul(params.r_dic, params.r_loading));  // r x |R|

    std::unordered_map<std::uint64_t, std::unordered_set<std::int32_t>> known_tails, known_heads;
    if (opts.filtered) {
        auto note = [&](const Triple& t) {
            known_tails[pair_key(t.head, t.rel)].insert(t.tail);
            known_heads[pair_key(t.tail, t.rel)].insert(t.head);
        };
        for (const Triple& t : shard.train) note(t);
        for (const Triple& t : shard.valid) note(t);
        for (const Triple& t : shard.test) note(t);
    }

    const std::size_t r = params.rank;
    std::vector<double> ranks;
    ranks.reserve(2 * split.size());
    std::vector<double> scores(ne);
    std::unordered_set<std::int32_t> filter;

    for (const Triple& tr : split) {
        check_triple_ids(tr, ne, nr);
        const std::vector<double> v = rels.col(static_cast<std::size_t>(tr.rel));

        // tail query: fix (head, rel), rank every entity as tail
        std::vector<double> z = heads.col(static_cast<std::size_t>(tr.head));
        for (std::size_t k = 0; k < r; ++k) z[k] *= v[k];
        for (std::size_t t = 0; t < ne; ++t) scores[t] = dot(z, tails.col(t));
        filter.clear();
        if (opts.filtered) {
            if (auto it = known_tails.find(pair_key(tr.head, tr.rel)); it != known_tails.end()) {
                filter = it->second;
                filter.erase(tr.tail);
            }
        }
        ranks.push_back(rank_of(scores, tr.tail, filter));

        // head query: fix (rel, tail), rank every entity as head
        const std::vector<double> w = tails.col(static_cast<std::size_t>(tr.tail));
        for (std::size_t h = 0; h < ne; ++h) {
            std::vector<double> zh = heads.col(h);
            for (std::size_t k = 0; k < r; ++k) zh[k] *= v[k];
            scores[h] = dot(zh, w);
        }
        filter.clear();
        if (opts.filtered) {
            if (auto it = known_heads.find(pair_key(tr.tail, tr.rel)); it != known_heads.end()) {
                filter = it->second;
                filter.erase(tr.head);
            }
        }
        ranks.push_back(rank_of(scores, tr.head, filter));
    }
    return report_from_ranks(ranks);
}

EvalReport aggregate_reports(std::span<const EvalReport> reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate_reports: no reports");
    EvalReport out = empty_report();
    double mrr_sum = 0.0;
    std::map<int, double> hit_sums;
    for (int k : kHitKs) hit_sums[k] = 0.0;
    for (const EvalReport& r : reports) {
        if (r.num_queries == 0) continue;  // zero weight
        const double n = static_cast<double>(r.num_queries);
        out.num_queries += r.num_queries;
        mrr_sum += n * r.mrr;
        for (int k : kHitKs) hit_sums[k] += n * r.hits.at(k);
    }
    if (out.num_queries == 0) return out;
    const double total = static_cast<double>(out.num_queries);
    out.mrr = mrr_sum / total;
    for (int k : kHitKs) out.hits[k] = hit_sums[k] / total;
    return out;
}

}  // namespace flest
