#include "flest/synthetic.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>
#include <string>

#include "flest/matrix.hpp"
#include "flest/rng.hpp"

namespace flest {

std::vector<RawTriple> generate_synthetic_kg(const SyntheticSpec& spec) {
    const std::size_t ne = spec.num_entities;
    const std::size_t nr = spec.num_relations;
    if (ne < 2 || nr < 1 || spec.planted_rank < 1) {
        throw std::invalid_argument("synthetic KG needs >= 2 entities, >= 1 relation, rank >= 1");
    }
    const std::size_t cells = ne * (ne - 1) * nr;
    if (spec.num_triples < 1 || spec.num_triples > cells) {
        throw std::invalid_argument("synthetic KG: num_triples " +
                                    std::to_string(spec.num_triples) + " outside [1, " +
                                    std::to_string(cells) + "]");
    }

    // one factor row per entity, used in both head and tail roles, so the
    // planted structure matches the model's shared entity loadings
    const std::size_t k = spec.planted_rank;
    Matrix ent_f(ne, k), rel_f(nr, k);
    Rng rng(mix_seed(spec.seed, 0x5a11));
    for (double& x : ent_f.data()) x = rng.gaussian();
    for (double& x : rel_f.data()) x = rng.gaussian();

    // keep the num_triples largest (score, cell) pairs; the cell index breaks
    // ties so selection is a total order
    using Entry = std::pair<double, std::uint64_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> top;
    std::uint64_t cell = 0;
    for (std::size_t h = 0; h < ne; ++h) {
        for (std::size_t r = 0; r < nr; ++r) {
            for (std::size_t t = 0; t < ne; ++t, ++cell) {
                if (t == h) continue;
                double score = 0.0;
                for (std::size_t m = 0; m < k; ++m) {
                    score += ent_f(h, m) * rel_f(r, m) * ent_f(t, m);
                }
                const Entry e{score, cell};
                if (top.size() < spec.num_triples) {
                    top.push(e);
                } else if (e > top.top()) {
                    top.pop();
                    top.push(e);
                }
            }
        }
    }

    std::vector<std::uint64_t> chosen;
    chosen.reserve(spec.num_triples);
    while (!top.empty()) {
        chosen.push_back(top.top().second);
        top.pop();
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<RawTriple> out;
    out.reserve(chosen.size());
    for (std::uint64_t c : chosen) {
        const std::size_t t = c % ne;
        const std::size_t r = (c / ne) % nr;
        const std::size_t h = c / (ne * nr);
        out.push_back({"e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t)});
    }
    return out;
}

}  // namespace flest
