#include "aerogen/nn/rng.hpp"

#include <cmath>

namespace aerogen::nn {

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    // Box-Muller; u1 kept away from 0 so log() stays finite.
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 1e-300);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
}

int64_t Rng::randint(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return lo + static_cast<int64_t>(r % span);
}

uint64_t Rng::derive_seed(uint64_t base, const std::string& label) {
    // FNV-1a over the label, then splitmix64 finalization mixed with base.
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ull;
    }
    uint64_t z = base + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace aerogen::nn
