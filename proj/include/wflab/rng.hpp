#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "wflab/sha256.hpp"

namespace wflab {

// Deterministic random stream keyed by a 256-bit seed plus a stream tag.
// Tags keep independent pipeline stages (target choice, patch length,
// schedules, flips, ...) from aliasing each other. All draw primitives are
// implemented here so results do not depend on the standard library's
// unspecified distribution algorithms.
class StreamRng {
public:
    StreamRng(const Digest256& seed, std::string_view tag) {
        Sha256 h;
        h.update(seed.data(), seed.size());
        h.update("/");
        h.update(tag);
        Digest256 d = h.finish();
        std::uint64_t s = 0;
        for (int i = 0; i < 8; ++i) s = (s << 8) | d[i];
        engine_.seed(s);
    }

    explicit StreamRng(std::uint64_t seed, std::string_view tag = "")
        : StreamRng(seed_from_u64(seed), tag) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return x % n;
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        // Box-Muller, always consuming two uniforms.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Sample k distinct indices from [0,n) in sorted order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        shuffle(idx);
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        return idx;
    }

    static Digest256 seed_from_u64(std::uint64_t seed) {
        char buf[32];
        int n = std::snprintf(buf, sizeof buf, "u64:%llu", static_cast<unsigned long long>(seed));
        Sha256 h;
        h.update(buf, static_cast<std::size_t>(n));
        return h.finish();
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace wflab
