#include "flest/kg_data.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "flest/rng.hpp"

namespace flest {

std::int32_t Vocab::add_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(entities_.size());
    entities_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
}

std::int32_t Vocab::add_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(relations_.size());
    relations_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

std::int32_t Vocab::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    return it == entity_ids_.end() ? -1 : it->second;
}

std::int32_t Vocab::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    return it == relation_ids_.end() ? -1 : it->second;
}

std::vector<double> Batch::label_vector(std::size_t pair_idx) const {
    std::vector<double> v(num_entities, 0.0);
    for (std::int32_t t : tails.at(pair_idx)) v[static_cast<std::size_t>(t)] = 1.0;
    return v;
}

std::vector<RawTriple> load_triples(std::istream& in) {
    std::vector<RawTriple> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        const auto t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos) {
            throw std::runtime_error("load_triples: line " + std::to_string(line_no) +
                                     " does not have exactly 3 tab-separated fields");
        }
        out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    return out;
}

std::vector<RawTriple> load_triples_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_triples: cannot open " + path);
    return load_triples(in);
}

Vocab build_vocab(const std::vector<RawTriple>& triples) {
    Vocab v;
    for (const auto& t : triples) {
        v.add_entity(t[0]);
        v.add_relation(t[1]);
        v.add_entity(t[2]);
    }
    return v;
}

namespace {

void split_shard(ClientShard& shard, SplitRatios ratios, std::uint64_t seed) {
    const std::size_t n = shard.triples.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(shard.client_id), 0x5117));
    fisher_yates(order, rng);
    const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * ratios.valid);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * ratios.test);
    for (std::size_t i = 0; i < n; ++i) {
        const Triple& t = shard.triples[order[i]];
        if (i < n_valid) {
            shard.valid.push_back(t);
        } else if (i < n_valid + n_test) {
            shard.test.push_back(t);
        } else {
            shard.train.push_back(t);
        }
    }
}

}  // namespace

std::vector<ClientShard> partition(const std::vector<RawTriple>& triples, int num_clients,
                                   std::uint64_t seed, SplitRatios ratios) {
    if (num_clients < 1) throw std::invalid_argument("partition: num_clients must be >= 1");
    if (static_cast<std::size_t>(num_clients) > triples.size()) {
        throw std::invalid_argument("partition: more clients (" + std::to_string(num_clients) +
                                    ") than triples (" + std::to_string(triples.size()) + ")");
    }
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
        ratios.train + ratios.valid + ratios.test > 1.0 + 1e-9) {
        throw std::invalid_argument("partition: invalid split ratios");
    }

    std::vector<std::size_t> order(triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x9a97));
    fisher_yates(order, rng);

    std::vector<ClientShard> shards(static_cast<std::size_t>(num_clients));
    for (std::size_t c = 0; c < shards.size(); ++c) shards[c].client_id = static_cast<int>(c);
    for (std::size_t i = 0; i < order.size(); ++i) {
        ClientShard& shard = shards[i % shards.size()];
        const RawTriple& raw = triples[order[i]];
        Triple t;
        t.head = shard.vocab.add_entity(raw[0]);
        t.rel = shard.vocab.add_relation(raw[1]);
        t.tail = shard.vocab.add_entity(raw[2]);
        shard.triples.push_back(t);
        shard.source_lines.push_back(order[i]);
    }
    for (auto& shard : shards) split_shard(shard, ratios, seed);
    return shards;
}

std::vector<Batch> make_batches(const ClientShard& shard, std::size_t batch_size,
                                std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    if (shard.train.empty()) return {};

    // unique (head, rel) pairs in first-appearance order, with all observed tails
    std::unordered_map<std::uint64_t, std::size_t> pair_index;
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    std::vector<std::vector<std::int32_t>> tails;
    for (const Triple& t : shard.train) {
        const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.head)) << 32) |
                                  static_cast<std::uint32_t>(t.rel);
        auto it = pair_index.find(key);
        if (it == pair_index.end()) {
            pair_index.emplace(key, pairs.size());
            pairs.emplace_back(t.head, t.rel);
            tails.emplace_back();
            it = pair_index.find(key);
        }
        tails[it->second].push_back(t.tail);
    }
    for (auto& ts : tails) {
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    }

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, epoch, 0xba7c4));
    fisher_yates(order, rng);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        Batch b;
        b.num_entities = shard.vocab.num_entities();
        const std::size_t end = std::min(order.size(), start + batch_size);
        for (std::size_t i = start; i < end; ++i) {
            b.pairs.push_back(pairs[order[i]]);
            b.tails.push_back(tails[order[i]]);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace flest
