#include "doctest.h"

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flest/kg_data.hpp"

using namespace flest;

namespace {

std::vector<RawTriple> chain_triples(std::size_t n) {
    std::vector<RawTriple> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"e" + std::to_string(i), "r" + std::to_string(i % 3),
                       "e" + std::to_string(i + 1)});
    }
    return out;
}

std::set<std::size_t> line_set(const ClientShard& shard) {
    return {shard.source_lines.begin(), shard.source_lines.end()};
}

// minimal shard with explicit train triples; entities named e0..e{n-1}
ClientShard toy_shard(std::size_t num_entities, std::size_t num_relations,
                      std::vector<Triple> train) {
    ClientShard shard;
    for (std::size_t i = 0; i < num_entities; ++i) shard.vocab.add_entity("e" + std::to_string(i));
    for (std::size_t j = 0; j < num_relations; ++j) {
        shard.vocab.add_relation("r" + std::to_string(j));
    }
    shard.triples = train;
    shard.train = std::move(train);
    return shard;
}

}  // namespace

TEST_CASE("load_triples basics") {
    std::istringstream one("a\tr\tb\n");
    const auto got = load_triples(one);
    REQUIRE(got.size() == 1);
    CHECK(got[0] == RawTriple{"a", "r", "b"});

    std::istringstream empty("");
    CHECK(load_triples(empty).empty());

    std::istringstream blanks("a\tr\tb\n\n\nc\tr\td\n");
    CHECK(load_triples(blanks).size() == 2);

    std::istringstream crlf("a\tr\tb\r\n");
    CHECK(load_triples(crlf)[0] == RawTriple{"a", "r", "b"});

    std::istringstream no_final_newline("a\tr\tb");
    CHECK(load_triples(no_final_newline).size() == 1);
}

TEST_CASE("load_triples fixture preserves file order") {
    std::string text;
    std::vector<RawTriple> expect;
    for (int i = 0; i < 10; ++i) {
        const std::string h = "h" + std::to_string(i);
        const std::string r = "rel" + std::to_string(i % 2);
        const std::string t = "t" + std::to_string(9 - i);
        text += h + "\t" + r + "\t" + t + "\n";
        expect.push_back({h, r, t});
    }
    std::istringstream in(text);
    CHECK(load_triples(in) == expect);
}

TEST_CASE("load_triples malformed line reports line number") {
    std::istringstream two_fields("a\tr\tb\nbroken line\n");
    CHECK_THROWS_WITH_AS(load_triples(two_fields), doctest::Contains("line 2"),
                         std::runtime_error);

    std::istringstream four_fields("a\tr\tb\tc\n");
    CHECK_THROWS_AS(load_triples(four_fields), std::runtime_error);
}

TEST_CASE("build_vocab first-appearance order") {
    const Vocab v = build_vocab({{"a", "r", "b"}});
    CHECK(v.num_entities() == 2);
    CHECK(v.num_relations() == 1);
    CHECK(v.entity_id("a") == 0);
    CHECK(v.entity_id("b") == 1);
    CHECK(v.relation_id("r") == 0);

    const Vocab self = build_vocab({{"a", "r", "a"}});
    CHECK(self.num_entities() == 1);
    CHECK(self.num_relations() == 1);
}

TEST_CASE("build_vocab fixture id table") {
    const std::vector<RawTriple> fixture{
        {"tokyo", "capital_of", "japan"},   {"paris", "capital_of", "france"},
        {"japan", "neighbor_of", "korea"},  {"paris", "located_in", "france"},
        {"korea", "neighbor_of", "japan"},  {"tokyo", "located_in", "japan"},
    };
    const Vocab v = build_vocab(fixture);
    CHECK(v.entity_id("tokyo") == 0);
    CHECK(v.entity_id("japan") == 1);
    CHECK(v.entity_id("paris") == 2);
    CHECK(v.entity_id("france") == 3);
    CHECK(v.entity_id("korea") == 4);
    CHECK(v.relation_id("capital_of") == 0);
    CHECK(v.relation_id("neighbor_of") == 1);
    CHECK(v.relation_id("located_in") == 2);
    CHECK(v.entity_id("berlin") == -1);
    CHECK(v.relation_id("rules") == -1);

    for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.num_entities()); ++i) {
        CHECK(v.entity_id(v.entity_name(i)) == i);
    }
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.num_relations()); ++i) {
        CHECK(v.relation_id(v.relation_name(i)) == i);
    }
}

TEST_CASE("partition trivial shapes") {
    const auto ten = chain_triples(10);

    const auto one = partition(ten, 1, 7);
    REQUIRE(one.size() == 1);
    CHECK(one[0].triples.size() == 10);
    CHECK(line_set(one[0]).size() == 10);

    const auto five = partition(ten, 5, 7);
    REQUIRE(five.size() == 5);
    std::set<std::size_t> all;
    for (const auto& shard : five) {
        CHECK(shard.triples.size() == 2);
        for (std::size_t line : shard.source_lines) {
            CHECK(all.insert(line).second);  // disjoint
        }
    }
    CHECK(all.size() == 10);  // union covers the input
}

TEST_CASE("partition size balance and split cover") {
    const auto triples = chain_triples(103);
    const auto shards = partition(triples, 4, 3);
    REQUIRE(shards.size() == 4);
    std::size_t lo = triples.size(), hi = 0, total = 0;
    for (const auto& shard : shards) {
        lo = std::min(lo, shard.triples.size());
        hi = std::max(hi, shard.triples.size());
        total += shard.triples.size();
        CHECK(shard.train.size() + shard.valid.size() + shard.test.size() ==
              shard.triples.size());

        // splits are a disjoint cover of the shard (triples are unique here)
        std::vector<Triple> merged = shard.train;
        merged.insert(merged.end(), shard.valid.begin(), shard.valid.end());
        merged.insert(merged.end(), shard.test.begin(), shard.test.end());
        auto key = [](const Triple& t) {
            return std::array<std::int32_t, 3>{t.head, t.rel, t.tail};
        };
        std::set<std::array<std::int32_t, 3>> merged_keys, shard_keys;
        for (const Triple& t : merged) merged_keys.insert(key(t));
        for (const Triple& t : shard.triples) shard_keys.insert(key(t));
        CHECK(merged_keys == shard_keys);

        // local vocab covers exactly what appears in the shard
        std::set<std::int32_t> seen_e, seen_r;
        for (const Triple& t : shard.triples) {
            seen_e.insert(t.head);
            seen_e.insert(t.tail);
            seen_r.insert(t.rel);
        }
        CHECK(seen_e.size() == shard.vocab.num_entities());
        CHECK(seen_r.size() == shard.vocab.num_relations());
    }
    CHECK(hi - lo <= 1);
    CHECK(total == triples.size());
}

TEST_CASE("partition split ratios use floor counts") {
    const auto shards = partition(chain_triples(100), 1, 11);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].valid.size() == 5);
    CHECK(shards[0].test.size() == 5);
    CHECK(shards[0].train.size() == 90);

    const auto all_train = partition(chain_triples(10), 1, 11, SplitRatios{1.0, 0.0, 0.0});
    CHECK(all_train[0].train.size() == 10);
    CHECK(all_train[0].valid.empty());
    CHECK(all_train[0].test.empty());
}

TEST_CASE("partition determinism") {
    const auto triples = chain_triples(1000);

    const auto a = partition(triples, 5, 42);
    const auto b = partition(triples, 5, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t c = 0; c < a.size(); ++c) {
        CHECK(a[c].source_lines == b[c].source_lines);
        CHECK(a[c].train == b[c].train);
        CHECK(a[c].valid == b[c].valid);
        CHECK(a[c].test == b[c].test);
    }

    const auto other = partition(triples, 5, 43);
    bool any_differ = false;
    for (std::size_t c = 0; c < a.size(); ++c) {
        if (line_set(a[c]) != line_set(other[c])) any_differ = true;
    }
    CHECK(any_differ);
}

TEST_CASE("partition rejects bad arguments") {
    const auto ten = chain_triples(10);
    CHECK_THROWS_AS(partition(ten, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(partition(ten, 11, 1), std::invalid_argument);
    CHECK_THROWS_AS(partition(ten, 2, 1, SplitRatios{0.9, 0.2, 0.05}), std::invalid_argument);
    CHECK_THROWS_AS(partition(ten, 2, 1, SplitRatios{-0.1, 0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("make_batches groups tails per pair") {
    // two triples share the (head, rel) pair
    const ClientShard shard = toy_shard(3, 1, {{0, 0, 1}, {0, 0, 2}});
    const auto batches = make_batches(shard, 128, 1, 0);
    REQUIRE(batches.size() == 1);
    REQUIRE(batches[0].pairs.size() == 1);
    CHECK(batches[0].pairs[0] == std::pair<std::int32_t, std::int32_t>{0, 0});
    CHECK(batches[0].tails[0] == std::vector<std::int32_t>{1, 2});
    CHECK(batches[0].label_vector(0) == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("make_batches batch size and pair uniqueness") {
    const ClientShard shard = toy_shard(4, 2, {{0, 0, 1}, {1, 0, 2}, {2, 1, 3}});
    const auto batches = make_batches(shard, 1, 9, 0);
    REQUIRE(batches.size() == 3);
    std::set<std::pair<std::int32_t, std::int32_t>> seen;
    for (const auto& b : batches) {
        REQUIRE(b.pairs.size() == 1);
        CHECK(b.num_entities == 4);
        CHECK(seen.insert(b.pairs[0]).second);
    }
    CHECK(seen.size() == 3);

    const ClientShard empty = toy_shard(2, 1, {});
    CHECK(make_batches(empty, 8, 1, 0).empty());
}

TEST_CASE("make_batches label mass equals training triples") {
    const auto shards = partition(chain_triples(60), 2, 5);
    for (const auto& shard : shards) {
        std::size_t mass = 0;
        for (const auto& batch : make_batches(shard, 7, 21, 3)) {
            for (const auto& tails : batch.tails) mass += tails.size();
        }
        CHECK(mass == shard.train.size());
    }
}

TEST_CASE("make_batches seeded order") {
    const auto shards = partition(chain_triples(50), 1, 2, SplitRatios{1.0, 0.0, 0.0});
    const ClientShard& shard = shards[0];

    const auto a = make_batches(shard, 8, 5, 2);
    const auto b = make_batches(shard, 8, 5, 2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].pairs == b[i].pairs);
        CHECK(a[i].tails == b[i].tails);
    }

    // a different epoch reshuffles the pair order but keeps the pair set
    const auto c = make_batches(shard, 8, 5, 3);
    std::vector<std::pair<std::int32_t, std::int32_t>> flat_a, flat_c;
    for (const auto& batch : a) {
        flat_a.insert(flat_a.end(), batch.pairs.begin(), batch.pairs.end());
    }
    for (const auto& batch : c) {
        flat_c.insert(flat_c.end(), batch.pairs.begin(), batch.pairs.end());
    }
    CHECK(flat_a != flat_c);
    std::sort(flat_a.begin(), flat_a.end());
    std::sort(flat_c.begin(), flat_c.end());
    CHECK(flat_a == flat_c);
}
