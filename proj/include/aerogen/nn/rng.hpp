#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace aerogen::nn {

// Deterministic random source. The normal/uniform transforms are pinned here
// instead of relying on std::*_distribution so that a seed reproduces the
// same stream across standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return (next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (cached second value)
    double normal();

    // integer in [lo, hi] inclusive, unbiased by rejection
    int64_t randint(int64_t lo, int64_t hi);

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(randint(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream: derives a child seed from this rng's seed and a
    // label. Used to give pipeline stages isolated, order-independent streams.
    static uint64_t derive_seed(uint64_t base, const std::string& label);

private:
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace aerogen::nn
