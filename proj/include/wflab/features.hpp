#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "wflab/trace.hpp"

namespace wflab {

struct FeatureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CUMUL-style 104-dim feature vector: [total packets, total incoming,
// total outgoing, live_len] followed by 100 linearly interpolated points of
// the cumulative direction sum over [1, live_len].
inline std::vector<double> cumul_features(const Trace& t) {
    if (t.live_len < 2) throw FeatureError("cumul_features: live_len < 2");
    int n = t.live_len;
    int in = 0, out = 0;
    std::vector<double> cum(static_cast<std::size_t>(n));
    double s = 0;
    for (int i = 0; i < n; ++i) {
        Dir d = t.padded[static_cast<std::size_t>(i)];
        if (d > 0) ++out; else ++in;
        s += d;
        cum[static_cast<std::size_t>(i)] = s;
    }
    std::vector<double> f;
    f.reserve(104);
    f.push_back(static_cast<double>(n));
    f.push_back(static_cast<double>(in));
    f.push_back(static_cast<double>(out));
    f.push_back(static_cast<double>(n));
    for (int j = 0; j < 100; ++j) {
        // position on [1, n] mapped to the cumulative sequence c_1..c_n
        double pos = 1.0 + static_cast<double>(j) * (n - 1) / 99.0;
        int lo = static_cast<int>(std::floor(pos));
        int hi = std::min(lo + 1, n);
        double frac = pos - lo;
        double v = cum[static_cast<std::size_t>(lo - 1)] * (1 - frac) +
                   cum[static_cast<std::size_t>(hi - 1)] * frac;
        f.push_back(v);
    }
    return f;
}

// Counts/mean/max of maximal same-direction runs, per direction:
// [out_count, out_mean, out_max, in_count, in_mean, in_max].
inline std::vector<double> burst_features(const Trace& t) {
    if (t.live_len < 1) throw FeatureError("burst_features: empty trace");
    double cnt[2] = {0, 0}, sum[2] = {0, 0}, mx[2] = {0, 0};
    int i = 0;
    while (i < t.live_len) {
        Dir d = t.padded[static_cast<std::size_t>(i)];
        int j = i;
        while (j < t.live_len && t.padded[static_cast<std::size_t>(j)] == d) ++j;
        int run = j - i;
        int side = d > 0 ? 0 : 1;
        cnt[side] += 1;
        sum[side] += run;
        mx[side] = std::max(mx[side], static_cast<double>(run));
        i = j;
    }
    return {cnt[0], cnt[0] > 0 ? sum[0] / cnt[0] : 0.0, mx[0],
            cnt[1], cnt[1] > 0 ? sum[1] / cnt[1] : 0.0, mx[1]};
}

// Combined handcrafted vector (110-dim) used by the k-NN attack.
inline std::vector<double> hand_features(const Trace& t) {
    auto f = cumul_features(t);
    auto b = burst_features(t);
    f.insert(f.end(), b.begin(), b.end());
    return f;
}

// Representative 40-feature set for information-leakage analysis:
// 4 aggregate counts, 30 subsampled cumulative points, 6 burst statistics.
inline std::vector<double> leakage_features(const Trace& t) {
    auto c = cumul_features(t);
    std::vector<double> f(c.begin(), c.begin() + 4);
    for (int j = 0; j < 30; ++j) f.push_back(c[static_cast<std::size_t>(4 + j * 99 / 29)]);
    auto b = burst_features(t);
    f.insert(f.end(), b.begin(), b.end());
    return f;
}

}  // namespace wflab
