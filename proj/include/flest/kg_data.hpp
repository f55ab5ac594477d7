#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

namespace flest {

using RawTriple = std::array<std::string, 3>;  // head, relation, tail

struct Triple {
    std::int32_t head = 0;
    std::int32_t rel = 0;
    std::int32_t tail = 0;
    bool operator==(const Triple&) const = default;
};

/// Bidirectional id mapping for entities and relations. Ids are dense
/// 0..n-1 in first-appearance order, so construction is deterministic.
class Vocab {
  public:
    std::int32_t add_entity(const std::string& name);
    std::int32_t add_relation(const std::string& name);

    std::int32_t entity_id(const std::string& name) const;    // -1 if unknown
    std::int32_t relation_id(const std::string& name) const;  // -1 if unknown

    const std::string& entity_name(std::int32_t id) const { return entities_.at(static_cast<std::size_t>(id)); }
    const std::string& relation_name(std::int32_t id) const { return relations_.at(static_cast<std::size_t>(id)); }

    std::size_t num_entities() const { return entities_.size(); }
    std::size_t num_relations() const { return relations_.size(); }

  private:
    std::vector<std::string> entities_;
    std::vector<std::string> relations_;
    std::unordered_map<std::string, std::int32_t> entity_ids_;
    std::unordered_map<std::string, std::int32_t> relation_ids_;
};

/// One client's private slice of the knowledge graph. The vocab is local:
/// ids are meaningless outside the shard.
struct ClientShard {
    int client_id = 0;
    Vocab vocab;
    std::vector<Triple> triples;            // all triples of the shard, local ids
    std::vector<std::size_t> source_lines;  // per triple, index into the input triple list
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
};

struct SplitRatios {
    double train = 0.9;
    double valid = 0.05;
    double test = 0.05;
};

/// 1-N training batch: each (head, relation) pair is scored against every
/// local entity; tails[i] lists the entities labeled 1 for pairs[i] (sorted
/// ascending), every other entity is labeled 0.
struct Batch {
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    std::vector<std::vector<std::int32_t>> tails;
    std::size_t num_entities = 0;

    std::vector<double> label_vector(std::size_t pair_idx) const;
};

/// Parse UTF-8 text, one `head<TAB>relation<TAB>tail` triple per line.
/// Empty lines are skipped. A line without exactly three tab-separated
/// fields raises std::runtime_error naming the 1-based line number.
std::vector<RawTriple> load_triples(std::istream& in);
std::vector<RawTriple> load_triples_file(const std::string& path);

Vocab build_vocab(const std::vector<RawTriple>& triples);

/// Randomly partition triples across clients without replacement: seeded
/// uniform shuffle, then round-robin assignment, so shard sizes differ by at
/// most one. Each shard gets a local vocab and a seeded train/valid/test
/// split by `ratios`.
std::vector<ClientShard> partition(const std::vector<RawTriple>& triples, int num_clients,
                                   std::uint64_t seed, SplitRatios ratios = {});

/// Group the shard's training split into unique (head, relation) pairs and
/// emit them in a seeded order that depends on (seed, epoch), batch_size
/// pairs per batch. Every unique pair appears exactly once per epoch.
std::vector<Batch> make_batches(const ClientShard& shard, std::size_t batch_size,
                                std::uint64_t seed, std::uint64_t epoch);

}  // namespace flest
