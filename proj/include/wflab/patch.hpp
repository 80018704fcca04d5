#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wflab/inject.hpp"
#include "wflab/neural.hpp"
#include "wflab/rng.hpp"
#include "wflab/sha256.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct PatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// User-side randomness root. The derived seed parameterizes target choice,
// patch length, schedules and flips; it is never serialized into patch
// metadata or reports.
struct Secret {
    Digest256 key_hash{};
    std::uint64_t nonce = 0;
    std::string site_id;
    Digest256 derived_seed{};

    StreamRng stream(std::string_view tag) const { return StreamRng(derived_seed, tag); }
};

inline Secret derive_secret(std::string_view key, std::uint64_t nonce, std::string site_id) {
    if (key.empty()) throw PatchError("derive_secret: empty key");
    Secret s;
    s.key_hash = Sha256::hash(key);
    s.nonce = nonce;
    s.site_id = std::move(site_id);
    Sha256 h;
    h.update(s.key_hash.data(), s.key_hash.size());
    std::uint8_t nb[8];
    for (int i = 0; i < 8; ++i) nb[i] = static_cast<std::uint8_t>(nonce >> (8 * i));
    h.update(nb, 8);
    h.update(s.site_id);
    s.derived_seed = h.finish();
    return s;
}

struct PatchBudget {
    double R = 0.30;      // max bandwidth overhead fraction
    double epsilon = 0.1; // length-sampling width

    void validate() const {
        if (!(R > 0 && R <= 1)) throw PatchError("budget: R must be in (0,1]");
        if (!(epsilon >= 0 && epsilon < R)) throw PatchError("budget: epsilon must be in [0,R)");
    }
};

struct PatchMeta {
    std::string source_site;
    std::string target_site;
    double realized_overhead = 0;  // r, drawn in (R-epsilon, R]
    int M_p = 0;
    int M_x = 0;
    int num_segments = 0;
    std::string extractor_hash;
};

struct Patch {
    std::vector<Dir> dummies;  // num_segments * M_p entries in {-1,+1}
    PatchMeta meta;
};

// --- secret-parameterized selection -------------------------------------------

struct CandidateFeatures {
    std::string site;
    std::vector<double> mean_feature;
};

inline std::vector<double> mean_feature(const Model& phi, const std::vector<const Trace*>& traces) {
    if (traces.empty()) throw PatchError("mean_feature: no traces");
    std::vector<double> acc(static_cast<std::size_t>(phi.feature_dim()), 0.0);
    std::vector<std::vector<double>> feats(traces.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(traces.size()); ++i)
        feats[static_cast<std::size_t>(i)] = extract_features(phi, *traces[static_cast<std::size_t>(i)]);
    for (const auto& f : feats)
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += f[j];
    for (auto& v : acc) v /= static_cast<double>(traces.size());
    return acc;
}

inline double l2_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Reduced pool = candidates whose feature distance to W's mean is at or above
// the 75th percentile; the target is drawn uniformly from it with the
// secret's target stream.
inline std::string select_target(const Secret& secret, const std::string& W,
                                 const std::vector<double>& w_mean_feature,
                                 const std::vector<CandidateFeatures>& pool) {
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].site == W) continue;
        dist.emplace_back(l2_dist(w_mean_feature, pool[i].mean_feature), i);
    }
    if (dist.size() < 4) throw PatchError("select_target: candidate pool smaller than 4");
    bool all_zero = true;
    for (auto& [d, _] : dist)
        if (d > 0) { all_zero = false; break; }
    if (all_zero) throw PatchError("select_target: degenerate pool (all candidates at distance 0)");

    std::vector<double> ds;
    ds.reserve(dist.size());
    for (auto& [d, _] : dist) ds.push_back(d);
    std::sort(ds.begin(), ds.end());
    std::size_t cut = static_cast<std::size_t>(0.75 * static_cast<double>(ds.size()));
    cut = std::min(cut, ds.size() - 1);
    double threshold = ds[cut];

    std::vector<std::size_t> reduced;
    for (auto& [d, i] : dist)
        if (d >= threshold) reduced.push_back(i);

    auto rng = secret.stream("target");
    std::size_t pick = static_cast<std::size_t>(rng.below(reduced.size()));
    return pool[reduced[pick]].site;
}

struct PatchGeometry {
    double r = 0;        // realized overhead
    int M_x = 0;         // trace segment length
    int num_segments = 0;
    int patch_len = 0;   // num_segments * M_p
};

inline PatchGeometry select_patch_length(const Secret& secret, const PatchBudget& budget, int M_p,
                                         double mean_live_len) {
    budget.validate();
    PatchGeometry g;
    auto rng = secret.stream("length");
    g.r = budget.R - budget.epsilon * rng.uniform();  // in (R-epsilon, R]
    g.M_x = static_cast<int>(std::ceil(static_cast<double>(M_p) / g.r));
    if (mean_live_len < g.M_x) throw PatchError("select_patch_length: traces shorter than one segment");
    g.num_segments = static_cast<int>(std::ceil(mean_live_len / g.M_x));
    g.patch_len = g.num_segments * M_p;
    return g;
}

inline std::vector<Dir> quantize(const std::vector<double>& relaxed) {
    std::vector<Dir> out(relaxed.size());
    for (std::size_t i = 0; i < relaxed.size(); ++i) out[i] = relaxed[i] < 0 ? Dir{-1} : Dir{+1};
    return out;
}

// --- patch optimization --------------------------------------------------------

struct PatchOpts {
    int iterations = 300;
    double lr = 0.5;
    int lr_decay_every = 100;
    double lr_decay = 0.5;
    int batch = 16;
    double sign_step = 0.2;  // per-coordinate step at lr=1 (sign update)
    double beta = 0.2;       // run-time flip ratio accounted for during optimization
};

struct PatchResult {
    Patch patch;
    std::vector<double> loss_history;  // mean batch loss per iteration
};

// Solves the relaxed patch objective with SGD: each step resamples a batch of
// source traces, target features, a fresh schedule and a fresh flip mask
// (held fixed within the step), so the optimized patch is robust to injection
// randomness by construction. Final values are quantized to {-1,+1}.
inline PatchResult generate_patch(const std::vector<const Trace*>& X_W,
                                  const std::vector<const Trace*>& X_T, const Model& phi,
                                  const PatchBudget& budget, int M_p, const Secret& secret,
                                  const PatchGeometry& geom, const PatchMeta& meta_base,
                                  const PatchOpts& opt) {
    if (X_W.empty() || X_T.empty()) throw PatchError("generate_patch: empty trace set");

    int patch_len = geom.patch_len;
    int pad_len = phi.input_len;

    // Target features are fixed during optimization; compute them once.
    std::vector<std::vector<double>> target_feats(X_T.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(X_T.size()); ++i)
        target_feats[static_cast<std::size_t>(i)] =
            extract_features(phi, *X_T[static_cast<std::size_t>(i)]);

    std::vector<std::vector<double>> source_live(X_W.size());
    for (std::size_t i = 0; i < X_W.size(); ++i) {
        const Trace& t = *X_W[i];
        source_live[i].assign(t.padded.begin(), t.padded.begin() + t.live_len);
    }

    // Initialize each mini-patch from a random window of a target trace so the
    // starting point already carries target-like motifs; optimization refines
    // from there. Magnitude 0.5 leaves room for gradient steps to flip signs.
    auto init_rng = secret.stream("patch/init");
    std::vector<double> relaxed(static_cast<std::size_t>(patch_len));
    for (int seg = 0; seg < geom.num_segments; ++seg) {
        const Trace& t = *X_T[static_cast<std::size_t>(init_rng.below(X_T.size()))];
        int max_start = std::max(0, t.live_len - M_p);
        int start = static_cast<int>(init_rng.below(static_cast<std::uint64_t>(max_start) + 1));
        for (int j = 0; j < M_p; ++j) {
            int src = std::min(start + j, std::max(0, t.live_len - 1));
            double v = t.live_len > 0 ? static_cast<double>(t.padded[static_cast<std::size_t>(src)])
                                      : (init_rng.bernoulli(0.5) ? 1.0 : -1.0);
            if (v == 0.0) v = init_rng.bernoulli(0.5) ? 1.0 : -1.0;
            relaxed[static_cast<std::size_t>(seg * M_p + j)] = 0.5 * v;
        }
    }

    auto opt_rng = secret.stream("patch/opt");
    PatchResult res;
    res.loss_history.reserve(static_cast<std::size_t>(opt.iterations));
    double lr = opt.lr;

    std::vector<double> grad(static_cast<std::size_t>(patch_len));
    for (int it = 0; it < opt.iterations; ++it) {
        if (opt.lr_decay_every > 0 && it > 0 && it % opt.lr_decay_every == 0) lr *= opt.lr_decay;

        Schedule sched = make_schedule(opt_rng, geom.num_segments, geom.M_x, M_p);
        FlipMask mask = make_flip_mask(opt_rng, static_cast<std::size_t>(patch_len), opt.beta);
        std::vector<double> flipped = apply_flips(relaxed, mask);
        std::vector<double> flip_sign(static_cast<std::size_t>(patch_len), 1.0);
        for (auto i : mask.indices) flip_sign[i] = -1.0;

        int bs = opt.batch;
        std::vector<std::size_t> src_idx(static_cast<std::size_t>(bs));
        std::vector<std::size_t> tgt_idx(static_cast<std::size_t>(bs));
        for (int b = 0; b < bs; ++b) {
            src_idx[static_cast<std::size_t>(b)] = static_cast<std::size_t>(opt_rng.below(X_W.size()));
            tgt_idx[static_cast<std::size_t>(b)] = static_cast<std::size_t>(opt_rng.below(X_T.size()));
        }

        std::vector<std::vector<double>> per_sample_grad(static_cast<std::size_t>(bs));
        std::vector<double> per_sample_loss(static_cast<std::size_t>(bs), 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (std::ptrdiff_t b = 0; b < bs; ++b) {
            auto ub = static_cast<std::size_t>(b);
            std::vector<double> input;
            std::vector<int> patch_pos;
            inject_relaxed(source_live[src_idx[ub]], flipped, sched, pad_len, input, patch_pos);
            Cache cache = forward_to(phi, input.data(), phi.feature_layer);
            const auto& f = cache.acts.back();
            const auto& ft = target_feats[tgt_idx[ub]];
            std::vector<double> gf(f.size());
            double loss = 0;
            for (std::size_t j = 0; j < f.size(); ++j) {
                double d = f[j] - ft[j];
                loss += d * d;
                gf[j] = 2.0 * d;
            }
            per_sample_loss[ub] = loss;
            std::vector<double> gx = backward_one(phi, cache, phi.feature_layer, gf);
            auto& gp = per_sample_grad[ub];
            gp.assign(static_cast<std::size_t>(patch_len), 0.0);
            for (int i = 0; i < pad_len; ++i) {
                int pi = patch_pos[static_cast<std::size_t>(i)];
                if (pi >= 0)
                    gp[static_cast<std::size_t>(pi)] +=
                        gx[static_cast<std::size_t>(i)] * flip_sign[static_cast<std::size_t>(pi)];
            }
        }

        std::fill(grad.begin(), grad.end(), 0.0);
        double loss_sum = 0;
        for (int b = 0; b < bs; ++b) {
            loss_sum += per_sample_loss[static_cast<std::size_t>(b)];
            const auto& gp = per_sample_grad[static_cast<std::size_t>(b)];
            for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += gp[j];
        }
        double mean_loss = loss_sum / bs;
        if (!std::isfinite(mean_loss))
            throw PatchError("patch optimization diverged at iteration " + std::to_string(it));
        res.loss_history.push_back(mean_loss);

        // Steepest-descent step under the l-inf geometry (sign update): the
        // step size is independent of the gradient scale, which keeps the
        // optimization stable across sites and drives entries to saturation,
        // so the final quantization is nearly lossless.
        for (std::size_t j = 0; j < relaxed.size(); ++j) {
            if (grad[j] > 0)
                relaxed[j] -= lr * opt.sign_step;
            else if (grad[j] < 0)
                relaxed[j] += lr * opt.sign_step;
            relaxed[j] = std::clamp(relaxed[j], -1.0, 1.0);
        }
    }

    res.patch.dummies = quantize(relaxed);
    res.patch.meta = meta_base;
    res.patch.meta.realized_overhead = geom.r;
    res.patch.meta.M_p = M_p;
    res.patch.meta.M_x = geom.M_x;
    res.patch.meta.num_segments = geom.num_segments;
    res.patch.meta.extractor_hash = model_hash(phi);
    return res;
}

// --- patch file format ----------------------------------------------------------
// Versioned text container: meta block, then the +-1 dummy sequence. The
// secret never appears here.

inline void save_patch(const Patch& p, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw PatchError("cannot open for write: " + path);
    f << "wflab-patch v1\n";
    f << "source " << p.meta.source_site << "\n";
    f << "target " << p.meta.target_site << "\n";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", p.meta.realized_overhead);
    f << "overhead " << buf << "\n";
    f << "M_p " << p.meta.M_p << "\n";
    f << "M_x " << p.meta.M_x << "\n";
    f << "num_segments " << p.meta.num_segments << "\n";
    f << "extractor " << p.meta.extractor_hash << "\n";
    f << "dummies " << p.dummies.size() << "\n";
    for (std::size_t i = 0; i < p.dummies.size(); ++i) {
        if (i) f << ' ';
        f << (p.dummies[i] > 0 ? "+1" : "-1");
    }
    f << "\n";
}

inline Patch load_patch(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw PatchError("cannot open: " + path);
    std::string magic, ver, key;
    f >> magic >> ver;
    if (magic != "wflab-patch" || ver != "v1") throw PatchError("bad patch file: " + path);
    Patch p;
    std::string overhead;
    std::size_t n = 0;
    f >> key >> p.meta.source_site >> key >> p.meta.target_site >> key >> overhead >> key >>
        p.meta.M_p >> key >> p.meta.M_x >> key >> p.meta.num_segments >> key >>
        p.meta.extractor_hash >> key >> n;
    p.meta.realized_overhead = std::strtod(overhead.c_str(), nullptr);
    p.dummies.resize(n);
    for (auto& d : p.dummies) {
        std::string tok;
        f >> tok;
        if (tok == "+1") d = +1;
        else if (tok == "-1") d = -1;
        else throw PatchError("bad dummy symbol in " + path);
    }
    if (!f) throw PatchError("truncated patch file: " + path);
    return p;
}

}  // namespace wflab
