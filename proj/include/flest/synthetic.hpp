#pragma once

#include <cstdint>
#include <vector>

#include "flest/kg_data.hpp"

namespace flest {

struct SyntheticSpec {
    std::size_t num_entities = 20;
    std::size_t num_relations = 3;
    std::size_t num_triples = 120;
    std::size_t planted_rank = 8;
    std::uint64_t seed = 1;
};

/// Seeded KG with planted low-rank structure: Gaussian head/relation/tail
/// factors of the planted rank score every (h, r, t) cell with h != t, and
/// the num_triples highest-scoring cells become triples. Entities are named
/// e<i>, relations r<j>; output is ordered by cell index, so it is a pure
/// function of the spec.
std::vector<RawTriple> generate_synthetic_kg(const SyntheticSpec& spec);

}  // namespace flest
