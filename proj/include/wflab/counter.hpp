#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "wflab/neural.hpp"
#include "wflab/rng.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct CounterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Length-M_p direction window packed into a bitmask: bit (M_p-1-i) set means
// position i is +1. Numeric order on the mask equals lexicographic order on
// the sequence with -1 < +1, so the canonical class representative is the
// minimal mask.
using Window = std::uint32_t;

inline Window pack_window(const Dir* d, int M_p) {
    Window w = 0;
    for (int i = 0; i < M_p; ++i) w = (w << 1) | (d[i] > 0 ? 1u : 0u);
    return w;
}

inline std::vector<Dir> unpack_window(Window w, int M_p) {
    std::vector<Dir> d(static_cast<std::size_t>(M_p));
    for (int i = 0; i < M_p; ++i)
        d[static_cast<std::size_t>(i)] = (w >> (M_p - 1 - i)) & 1u ? Dir{+1} : Dir{-1};
    return d;
}

inline int hamming(Window a, Window b) { return std::popcount(a ^ b); }

// Merge classes are connected components of the <=threshold Hamming graph;
// each class is represented by its minimal window.
inline std::set<Window> merged_window_set(const std::vector<Window>& windows, int threshold) {
    std::vector<Window> uniq(windows);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::size_t n = uniq.size();
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) { parent[x] = parent[parent[x]]; x = parent[x]; }
        return x;
    };
    if (threshold > 0) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (hamming(uniq[i], uniq[j]) <= threshold) {
                    auto a = find(i), b = find(j);
                    if (a != b) parent[std::max(a, b)] = std::min(a, b);
                }
    }
    std::set<Window> canon;
    for (std::size_t i = 0; i < n; ++i) canon.insert(uniq[find(i)]);  // root has minimal window
    return canon;
}

struct FreqAnalysisResult {
    std::vector<Window> candidates;  // canonical reps present in every visit
    double precision = 0;            // candidates matching a true mini-patch
    double recall = 0;               // true mini-patches recovered
    int threshold = 0;
    int skipped_traces = 0;
};

// Sliding-window frequency analysis over repeated visits: per visit, all
// length-M_p windows are Hamming-merged; the candidate set is the
// intersection of the per-visit canonical sets. M_p and beta are assumed
// known to the attacker.
inline FreqAnalysisResult frequency_analysis(const std::vector<const Trace*>& visits, int M_p,
                                             double beta,
                                             const std::vector<std::vector<Dir>>& true_minis) {
    if (visits.empty()) throw CounterError("frequency_analysis: no visits");
    if (M_p < 1 || M_p > 30) throw CounterError("frequency_analysis: bad M_p");
    FreqAnalysisResult res;
    res.threshold = static_cast<int>(beta * M_p);

    std::set<Window> inter;
    bool first = true;
    for (const Trace* t : visits) {
        if (t->live_len < M_p) { ++res.skipped_traces; continue; }
        std::vector<Window> ws;
        ws.reserve(static_cast<std::size_t>(t->live_len - M_p + 1));
        for (int i = 0; i + M_p <= t->live_len; ++i)
            ws.push_back(pack_window(t->padded.data() + i, M_p));
        auto merged = merged_window_set(ws, res.threshold);
        if (first) {
            inter = std::move(merged);
            first = false;
        } else {
            std::set<Window> next;
            std::set_intersection(inter.begin(), inter.end(), merged.begin(), merged.end(),
                                  std::inserter(next, next.begin()));
            inter = std::move(next);
        }
    }
    if (first) throw CounterError("frequency_analysis: all traces shorter than M_p");
    res.candidates.assign(inter.begin(), inter.end());

    if (!true_minis.empty()) {
        std::vector<Window> truth;
        for (const auto& m : true_minis) truth.push_back(pack_window(m.data(), M_p));
        int matched_cand = 0;
        for (Window c : res.candidates) {
            bool hit = false;
            for (Window tw : truth)
                if (hamming(c, tw) <= res.threshold) { hit = true; break; }
            if (hit) ++matched_cand;
        }
        int covered = 0;
        for (Window tw : truth) {
            bool hit = false;
            for (Window c : res.candidates)
                if (hamming(c, tw) <= res.threshold) { hit = true; break; }
            if (hit) ++covered;
        }
        res.precision = res.candidates.empty()
                            ? 0.0
                            : static_cast<double>(matched_cand) / static_cast<double>(res.candidates.size());
        res.recall = static_cast<double>(covered) / static_cast<double>(truth.size());
    }
    return res;
}

// Removes every occurrence of a candidate window (within the Hamming
// threshold) from the live region and re-pads.
inline Trace strip_frequent(const Trace& t, const std::vector<Window>& candidates, int M_p,
                            int threshold) {
    if (candidates.empty()) return t;
    std::vector<Dir> out;
    out.reserve(static_cast<std::size_t>(t.live_len));
    int i = 0;
    while (i < t.live_len) {
        bool strip = false;
        if (i + M_p <= t.live_len) {
            Window w = pack_window(t.padded.data() + i, M_p);
            for (Window c : candidates)
                if (hamming(w, c) <= threshold) { strip = true; break; }
        }
        if (strip) {
            i += M_p;
        } else {
            out.push_back(t.padded[static_cast<std::size_t>(i)]);
            ++i;
        }
    }
    if (out.empty()) out.push_back(t.padded[0]);  // keep the trace non-empty
    return pad_trace(out, t.pad_len());
}

// --- anomaly detection on window samples ---------------------------------------

struct AnomalyResult {
    double cluster_patch_fraction[2] = {0, 0};  // patches in each 2-means cluster
    double cluster_purity = 0;                  // best-assignment accuracy of clustering
    double detector_accuracy = 0;               // held-out supervised accuracy
};

inline Model make_mlp(int in_dim, int hidden, int num_classes, std::uint64_t seed) {
    Model m;
    m.arch_name = "mlp";
    m.layers = {{.kind = LayerKind::Dense, .out_units = hidden},
                {.kind = LayerKind::Relu},
                {.kind = LayerKind::Dense, .out_units = num_classes}};
    m.input_len = in_dim;
    m.num_classes = num_classes;
    m.shapes = infer_shapes(m.layers, in_dim);
    m.feature_layer = 0;
    m.weights.resize(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        int n = weight_count(m.layers[i]);
        if (n == 0) continue;
        double s = std::sqrt(1.0 / m.layers[i].in_units);
        StreamRng rng(StreamRng::seed_from_u64(seed), "init/mlp/" + std::to_string(i));
        m.weights[i].resize(static_cast<std::size_t>(n));
        for (auto& v : m.weights[i]) v = rng.uniform(-s, s);
        for (int j = n - m.layers[i].out_units; j < n; ++j)
            m.weights[i][static_cast<std::size_t>(j)] = 0.0;
    }
    return m;
}

// 2-means with farthest-point initialization: first center drawn from the
// seed stream, second is the farthest sample from it.
inline std::vector<int> two_means(const std::vector<std::vector<double>>& xs, std::uint64_t seed,
                                  int max_iters = 100) {
    if (xs.size() < 2) throw CounterError("two_means: need >= 2 samples");
    std::size_t d = xs[0].size();
    auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        return s;
    };
    StreamRng rng(StreamRng::seed_from_u64(seed), "two_means");
    std::size_t i0 = static_cast<std::size_t>(rng.below(xs.size()));
    std::size_t i1 = i0;
    double best = -1;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dd = dist2(xs[i], xs[i0]);
        if (dd > best) { best = dd; i1 = i; }
    }
    std::vector<std::vector<double>> centers = {xs[i0], xs[i1]};
    std::vector<int> assign(xs.size(), 0);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            int a = dist2(xs[i], centers[0]) <= dist2(xs[i], centers[1]) ? 0 : 1;
            if (a != assign[i]) { assign[i] = a; changed = true; }
        }
        for (int c = 0; c < 2; ++c) {
            std::vector<double> mu(d, 0.0);
            int n = 0;
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (assign[i] == c) {
                    ++n;
                    for (std::size_t j = 0; j < d; ++j) mu[j] += xs[i][j];
                }
            if (n > 0) {
                for (auto& v : mu) v /= n;
                centers[static_cast<std::size_t>(c)] = std::move(mu);
            }
        }
        if (!changed) break;
    }
    // Guarantee two non-empty clusters: move the farthest point if collapsed.
    int n0 = 0;
    for (int a : assign) if (a == 0) ++n0;
    if (n0 == 0 || n0 == static_cast<int>(xs.size())) {
        int lone = n0 == 0 ? 0 : 1;
        std::size_t far_i = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double dd = dist2(xs[i], centers[static_cast<std::size_t>(1 - lone)]);
            if (dd > far_d) { far_d = dd; far_i = i; }
        }
        assign[far_i] = lone;
    }
    return assign;
}

// Clustering + supervised separation probe on patch vs natural windows.
// Window samples are fed to Phi padded to its input length; the supervised
// detector is a small dense net on the raw window values.
inline AnomalyResult anomaly_probe(const std::vector<std::vector<Dir>>& patches,
                                   const std::vector<std::vector<Dir>>& naturals,
                                   const Model& phi, std::uint64_t seed) {
    if (patches.size() != naturals.size() || patches.size() < 2)
        throw CounterError("anomaly_probe: need equal sample counts >= 2 per class");
    AnomalyResult res;

    auto window_feature = [&](const std::vector<Dir>& w) {
        std::vector<double> x(static_cast<std::size_t>(phi.input_len), 0.0);
        for (std::size_t i = 0; i < w.size() && i < x.size(); ++i) x[i] = w[i];
        return extract_features(phi, x);
    };
    std::vector<std::vector<double>> feats;
    std::vector<int> is_patch;
    for (const auto& w : patches) { feats.push_back(window_feature(w)); is_patch.push_back(1); }
    for (const auto& w : naturals) { feats.push_back(window_feature(w)); is_patch.push_back(0); }

    auto assign = two_means(feats, seed);
    int cnt[2] = {0, 0}, patch_cnt[2] = {0, 0};
    for (std::size_t i = 0; i < feats.size(); ++i) {
        cnt[assign[i]]++;
        if (is_patch[i]) patch_cnt[assign[i]]++;
    }
    int total_patches = static_cast<int>(patches.size());
    for (int c = 0; c < 2; ++c)
        res.cluster_patch_fraction[c] =
            total_patches > 0 ? static_cast<double>(patch_cnt[c]) / total_patches : 0;
    // Purity under the better of the two cluster->class assignments.
    int correct_a = patch_cnt[0] + (cnt[1] - patch_cnt[1]);
    int correct_b = patch_cnt[1] + (cnt[0] - patch_cnt[0]);
    res.cluster_purity = static_cast<double>(std::max(correct_a, correct_b)) /
                         static_cast<double>(feats.size());

    // Supervised probe: train/test split 50/50, deterministic shuffle.
    int M_p = static_cast<int>(patches[0].size());
    LabeledInputs train;
    std::vector<std::vector<double>> test_x;
    std::vector<int> test_y;
    std::vector<std::size_t> order(patches.size() + naturals.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    StreamRng split_rng(StreamRng::seed_from_u64(seed), "anomaly/split");
    split_rng.shuffle(order);
    auto raw_input = [&](std::size_t i) {
        const auto& w = i < patches.size() ? patches[i] : naturals[i - patches.size()];
        std::vector<double> x(static_cast<std::size_t>(M_p));
        for (int j = 0; j < M_p; ++j) x[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)];
        return x;
    };
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        std::size_t i = order[oi];
        int y = i < patches.size() ? 1 : 0;
        if (oi < order.size() / 2) {
            train.xs.push_back(raw_input(i));
            train.labels.push_back(y);
            train.origin.emplace_back(y, 0);
        } else {
            test_x.push_back(raw_input(i));
            test_y.push_back(y);
        }
    }
    Model det = make_mlp(M_p, 16, 2, seed);
    TrainOpts topts;
    topts.epochs = 40;
    topts.lr = 0.05;
    topts.seed = seed;
    train_sgd(det, train, topts);
    res.detector_accuracy = accuracy(det, test_x, test_y);
    return res;
}

// --- input preprocessing ---------------------------------------------------------

enum class PreprocessMode { Drop, Flip, Trim };

inline PreprocessMode preprocess_mode(const std::string& s) {
    if (s == "drop") return PreprocessMode::Drop;
    if (s == "flip") return PreprocessMode::Flip;
    if (s == "trim") return PreprocessMode::Trim;
    throw CounterError("unknown preprocess mode: " + s);
}

inline Trace preprocess(const Trace& t, PreprocessMode mode, double rho, StreamRng& rng) {
    if (rho < 0 || rho >= 1) throw CounterError("preprocess: rho must be in [0,1)");
    auto live = t.live();
    auto k = static_cast<std::size_t>(rho * static_cast<double>(live.size()));
    if (k == 0) return t;
    switch (mode) {
        case PreprocessMode::Drop: {
            auto idx = rng.sample_indices(live.size(), k);
            std::vector<Dir> out;
            out.reserve(live.size() - k);
            std::size_t p = 0;
            for (std::size_t i = 0; i < live.size(); ++i) {
                if (p < idx.size() && idx[p] == i) { ++p; continue; }
                out.push_back(live[i]);
            }
            if (out.empty()) out.push_back(live[0]);
            return pad_trace(out, t.pad_len());
        }
        case PreprocessMode::Flip: {
            auto idx = rng.sample_indices(live.size(), k);
            for (auto i : idx) live[i] = -live[i];
            return pad_trace(live, t.pad_len());
        }
        case PreprocessMode::Trim: {
            live.resize(live.size() - k);
            if (live.empty()) live.push_back(t.padded[0]);
            return pad_trace(live, t.pad_len());
        }
    }
    throw CounterError("unreachable");
}

}  // namespace wflab
