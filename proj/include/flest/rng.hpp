#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace flest {

// splitmix64 finalizer; used to derive independent seed streams from a base
// seed plus stream tags, so every consumer of randomness is a pure function
// of the experiment seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

/// Seeded random stream. The engine is std::mt19937_64 (fully specified by
/// the standard); higher-level draws (uniform doubles, gaussians, bounded
/// ints, shuffles) are implemented here rather than with std:: distributions,
/// whose output is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller, pairs cached
    double gaussian();

    // uniform integer in [0, n), n >= 1
    std::uint64_t bounded(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace flest
