#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "flest/evaluation.hpp"
#include "flest/kg_data.hpp"
#include "flest/model.hpp"
#include "flest/rng.hpp"

using namespace flest;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// sort-based oracle with the mean-rank-among-ties convention
double oracle_rank(const std::vector<double>& scores, std::int32_t target,
                   const std::unordered_set<std::int32_t>& filter) {
    std::vector<double> kept;
    for (std::int32_t j = 0; j < static_cast<std::int32_t>(scores.size()); ++j) {
        if (j == target || !filter.contains(j)) kept.push_back(scores[static_cast<std::size_t>(j)]);
    }
    std::sort(kept.begin(), kept.end(), std::greater<>());
    const double ts = scores[static_cast<std::size_t>(target)];
    const auto first = std::lower_bound(kept.begin(), kept.end(), ts, std::greater<>());
    const auto last = std::upper_bound(kept.begin(), kept.end(), ts, std::greater<>());
    const double better = static_cast<double>(first - kept.begin());
    const double tied_others = static_cast<double>(last - first) - 1.0;  // minus the target
    return 1.0 + better + tied_others / 2.0;
}

// shard with one relation whose score tensor the test dictates: with
// identity dictionaries and loadings and an all-ones relation composite,
// score(h, 0, t) reduces to W3(h, t)
ModelParams params_with_scores(const Matrix& s) {
    const std::size_t ne = s.rows();
    ModelParams p;
    p.rank = ne;
    p.s = 0.5;
    p.e_dic = Matrix::identity(ne);
    p.r_dic = Matrix::identity(ne);
    p.w1 = Matrix::identity(ne);
    p.w2 = Matrix::identity(ne);
    p.w3 = s;
    p.e_loading = Matrix::identity(ne);
    p.r_loading = Matrix(ne, 1);
    for (double& x : p.r_loading.data()) x = 1.0;
    return p;
}

ClientShard fixture_shard() {
    ClientShard shard;
    for (int i = 0; i < 5; ++i) shard.vocab.add_entity("e" + std::to_string(i));
    shard.vocab.add_relation("r0");
    shard.train = {{0, 0, 2}};
    shard.test = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}};
    shard.triples = shard.train;
    shard.triples.insert(shard.triples.end(), shard.test.begin(), shard.test.end());
    return shard;
}

}  // namespace

TEST_CASE("rank_of basics") {
    const std::vector<double> scores{0.9, 0.5, 0.7};
    CHECK(rank_of(scores, 2, {}) == 2.0);
    CHECK(rank_of(scores, 2, {0}) == 1.0);
    CHECK(rank_of(scores, 0, {}) == 1.0);
    CHECK(rank_of(scores, 1, {}) == 3.0);

    const std::vector<double> tied{1.0, 1.0, 0.5};
    CHECK(rank_of(tied, 0, {}) == 1.5);
    CHECK(rank_of(tied, 0, {1}) == 1.0);

    CHECK_THROWS_AS(rank_of(scores, 3, {}), std::invalid_argument);
    CHECK_THROWS_AS(rank_of(scores, -1, {}), std::invalid_argument);
    CHECK_THROWS_AS(rank_of(scores, 1, {1}), std::invalid_argument);  // target filtered
}

TEST_CASE("rank_of agrees with the sort oracle on 1000 queries") {
    Rng rng(90);
    for (int q = 0; q < 1000; ++q) {
        const std::size_t n = 2 + rng.bounded(12);
        std::vector<double> scores(n);
        for (double& x : scores) {
            // coarse grid forces frequent ties
            x = rng.bernoulli(0.5) ? static_cast<double>(rng.bounded(4)) : rng.gaussian();
        }
        const auto target = static_cast<std::int32_t>(rng.bounded(n));
        std::unordered_set<std::int32_t> filter;
        for (std::int32_t j = 0; j < static_cast<std::int32_t>(n); ++j) {
            if (j != target && rng.bernoulli(0.25)) filter.insert(j);
        }
        const double got = rank_of(scores, target, filter);
        CHECK(got == oracle_rank(scores, target, filter));
        CHECK(got >= 1.0);
        CHECK(got <= static_cast<double>(n - filter.size()));
    }
}

TEST_CASE("enlarging the filter never increases a rank") {
    Rng rng(91);
    std::vector<double> scores(20);
    for (double& x : scores) x = rng.gaussian();
    const std::int32_t target = 7;
    std::unordered_set<std::int32_t> filter;
    double prev = rank_of(scores, target, filter);
    for (std::int32_t j = 0; j < 20; ++j) {
        if (j == target) continue;
        filter.insert(j);
        const double r = rank_of(scores, target, filter);
        CHECK(r <= prev);
        prev = r;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("report_from_ranks") {
    const std::vector<double> single{2.0};
    const EvalReport r = report_from_ranks(single);
    CHECK(r.num_queries == 1);
    CHECK(r.mrr == 0.5);
    CHECK(r.hits.at(1) == 0.0);
    CHECK(r.hits.at(3) == 1.0);
    CHECK(r.hits.at(10) == 1.0);

    // fractional ranks round up for hit membership
    const EvalReport f = report_from_ranks(std::vector<double>{1.5});
    CHECK(f.hits.at(1) == 0.0);
    CHECK(f.hits.at(3) == 1.0);
    CHECK(near(f.mrr, 1.0 / 1.5, 1e-15));

    const EvalReport ones = report_from_ranks(std::vector<double>{1.0, 1.0});
    CHECK(ones.mrr == 1.0);
    CHECK(ones.hits.at(1) == 1.0);

    CHECK_THROWS_AS(report_from_ranks(std::vector<double>{}), std::invalid_argument);

    Rng rng(92);
    std::vector<double> ranks(64);
    for (double& x : ranks) x = 1.0 + static_cast<double>(rng.bounded(15));
    const EvalReport rep = report_from_ranks(ranks);
    CHECK(rep.hits.at(1) <= rep.hits.at(3));
    CHECK(rep.hits.at(3) <= rep.hits.at(10));
    CHECK(rep.mrr >= rep.hits.at(1));
    CHECK(rep.mrr <= 1.0);
    double mean_recip = 0.0;
    for (double x : ranks) mean_recip += 1.0 / x;
    mean_recip /= static_cast<double>(ranks.size());
    CHECK(near(rep.mrr, mean_recip, 1e-15));
}

TEST_CASE("evaluate_shard with a perfect model") {
    Matrix perm(5, 5);
    for (std::size_t h = 0; h < 5; ++h) perm(h, (h + 1) % 5) = 1.0;
    const ModelParams p = params_with_scores(perm);

    ClientShard shard;
    for (int i = 0; i < 5; ++i) shard.vocab.add_entity("e" + std::to_string(i));
    shard.vocab.add_relation("r0");
    shard.test = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}};
    shard.train = {{4, 0, 0}};
    shard.triples = shard.test;
    shard.triples.insert(shard.triples.end(), shard.train.begin(), shard.train.end());

    const EvalReport r = evaluate_shard(p, shard, shard.test);
    CHECK(r.num_queries == 8);
    CHECK(r.mrr == 1.0);
    CHECK(r.hits.at(1) == 1.0);
    CHECK(r.hits.at(10) == 1.0);

    CHECK_THROWS_AS(evaluate_shard(p, shard, shard.valid), std::invalid_argument);
}

TEST_CASE("evaluate_shard hand fixture") {
    const Matrix s(5, 5, {0.1, 0.9, 0.8, 0.3, 0.2,   //
                          0.5, 0.4, 0.6, 0.7, 0.3,   //
                          0.2, 0.2, 0.1, 0.9, 0.9,   //
                          0.6, 0.5, 0.4, 0.3, 0.6,   //
                          0.1, 0.2, 0.3, 0.4, 0.5});
    const ModelParams p = params_with_scores(s);
    const ClientShard shard = fixture_shard();

    // hand-derived ranks, in (tail, head) order per test triple:
    // (0,0,1): 1, 1; (1,0,2): 2, 1; (2,0,3): 1.5, 1; (3,0,4): 1.5, 2
    const EvalReport r = evaluate_shard(p, shard, shard.test);
    CHECK(r.num_queries == 8);
    CHECK(near(r.mrr, 19.0 / 24.0, 1e-12));
    CHECK(r.hits.at(1) == 0.5);
    CHECK(r.hits.at(3) == 1.0);
    CHECK(r.hits.at(10) == 1.0);

    // repeat call is identical
    const EvalReport again = evaluate_shard(p, shard, shard.test);
    CHECK(again.mrr == r.mrr);
    CHECK(again.hits == r.hits);

    // raw mode stops filtering the known train tail (0,0,2), so some
    // queries rank lower
    const EvalReport raw = evaluate_shard(p, shard, shard.test, EvalOptions{false});
    CHECK(raw.num_queries == 8);
    CHECK(raw.mrr < r.mrr);
    CHECK(near(raw.mrr, 35.0 / 48.0, 1e-12));
}

TEST_CASE("aggregate_reports") {
    EvalReport a = empty_report();
    a.num_queries = 1;
    a.mrr = 1.0;
    a.hits = {{1, 1.0}, {3, 1.0}, {10, 1.0}};
    const EvalReport solo = aggregate_reports(std::vector<EvalReport>{a});
    CHECK(solo.num_queries == 1);
    CHECK(solo.mrr == 1.0);

    EvalReport b = empty_report();
    b.num_queries = 3;
    b.mrr = 0.5;
    b.hits = {{1, 0.0}, {3, 1.0 / 3.0}, {10, 1.0}};
    const EvalReport both = aggregate_reports(std::vector<EvalReport>{a, b});
    CHECK(both.num_queries == 4);
    CHECK(near(both.mrr, 0.625, 1e-15));
    CHECK(near(both.hits.at(1), 0.25, 1e-15));

    // zero-query reports are identity elements
    const EvalReport padded =
        aggregate_reports(std::vector<EvalReport>{empty_report(), a, empty_report(), b});
    CHECK(padded.num_queries == 4);
    CHECK(padded.mrr == both.mrr);

    CHECK_THROWS_AS(aggregate_reports(std::vector<EvalReport>{}), std::invalid_argument);

    // random reports against scalar re-derivation
    Rng rng(93);
    std::vector<EvalReport> reports;
    double wsum = 0.0, total = 0.0;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> ranks(1 + rng.bounded(9));
        for (double& x : ranks) x = 1.0 + static_cast<double>(rng.bounded(10));
        reports.push_back(report_from_ranks(ranks));
        wsum += static_cast<double>(reports.back().num_queries) * reports.back().mrr;
        total += static_cast<double>(reports.back().num_queries);
    }
    const EvalReport agg = aggregate_reports(reports);
    CHECK(agg.num_queries == static_cast<std::size_t>(total));
    CHECK(near(agg.mrr, wsum / total, 1e-12));
}
