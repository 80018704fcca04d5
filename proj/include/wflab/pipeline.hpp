#pragma once

#include <map>
#include <string>
#include <vector>

#include "wflab/attacks.hpp"
#include "wflab/inject.hpp"
#include "wflab/neural.hpp"
#include "wflab/patch.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct DefenseConfig {
    PatchBudget budget;
    int M_p = 10;
    double beta = 0.2;
    PatchOpts opt;

    PatchOpts effective_opt() const {
        PatchOpts o = opt;
        o.beta = beta;
        return o;
    }
};

// Per-site candidate mean features over the training split.
inline std::vector<CandidateFeatures> build_candidate_pool(const Dataset& ds, const Model& phi) {
    std::vector<CandidateFeatures> pool;
    pool.reserve(ds.websites.size());
    for (const auto& site : ds.websites) {
        CandidateFeatures c;
        c.site = site;
        c.mean_feature = mean_feature(phi, ds.split_of(site, /*train=*/true));
        pool.push_back(std::move(c));
    }
    return pool;
}

// One secret's defense state for one site: the optimized patch plus the
// secret whose substreams drive per-visit schedules and flips.
struct SiteDefense {
    Secret secret;
    Patch patch;
    PatchGeometry geom;
    std::vector<double> loss_history;
    int M_p = 10;
    double beta = 0.2;
};

inline SiteDefense make_site_defense(const Dataset& ds, const std::string& site, const Model& phi,
                                     const std::vector<CandidateFeatures>& pool,
                                     const DefenseConfig& cfg, const std::string& key,
                                     std::uint64_t nonce) {
    SiteDefense sd;
    sd.M_p = cfg.M_p;
    sd.beta = cfg.beta;
    sd.secret = derive_secret(key, nonce, site);

    auto X_W = ds.split_of(site, /*train=*/true);
    auto w_mean = mean_feature(phi, X_W);
    std::string target = select_target(sd.secret, site, w_mean, pool);
    auto X_T = ds.split_of(target, /*train=*/true);

    sd.geom = select_patch_length(sd.secret, cfg.budget, cfg.M_p, ds.mean_live_len(site));
    PatchMeta meta;
    meta.source_site = site;
    meta.target_site = target;
    auto res = generate_patch(X_W, X_T, phi, cfg.budget, cfg.M_p, sd.secret, sd.geom, meta,
                              cfg.effective_opt());
    sd.patch = std::move(res.patch);
    sd.loss_history = std::move(res.loss_history);
    return sd;
}

inline Schedule visit_schedule(const SiteDefense& sd, int visit_id) {
    auto rng = sd.secret.stream("visit/sched/" + std::to_string(visit_id));
    return make_schedule(rng, sd.geom.num_segments, sd.geom.M_x, sd.M_p);
}

inline FlipMask visit_flips(const SiteDefense& sd, int visit_id) {
    auto rng = sd.secret.stream("visit/flip/" + std::to_string(visit_id));
    return make_flip_mask(rng, sd.patch.dummies.size(), sd.beta);
}

// Defends one visit: fresh schedule and flip mask from the secret's
// per-visit substreams, then segment injection.
inline DefendedTrace defend_visit(const SiteDefense& sd, const Trace& t, int visit_id) {
    Schedule s = visit_schedule(sd, visit_id);
    FlipMask m = visit_flips(sd, visit_id);
    auto flipped = apply_flips(sd.patch.dummies, m);
    return inject(t, flipped, s);
}

inline std::vector<std::vector<Dir>> mini_patches(const Patch& p) {
    std::vector<std::vector<Dir>> out;
    for (int k = 0; k < p.meta.num_segments; ++k)
        out.emplace_back(p.dummies.begin() + k * p.meta.M_p,
                         p.dummies.begin() + (k + 1) * p.meta.M_p);
    return out;
}

// Defends one split of a dataset under per-site secrets derived from
// (key, nonce). The result keeps site grouping and marks every trace with
// the requested split flag so it can feed attacker training or evaluation.
struct DefendedSplit {
    Dataset dataset;
    std::map<std::string, SiteDefense> defenses;
};

inline DefendedSplit defend_split(const Dataset& ds, const Model& phi,
                                  const std::vector<CandidateFeatures>& pool,
                                  const DefenseConfig& cfg, const std::string& key,
                                  std::uint64_t nonce, bool defend_train_split,
                                  bool mark_as_train) {
    DefendedSplit out;
    out.dataset.pad_len = ds.pad_len;
    out.dataset.websites = ds.websites;
    for (const auto& site : ds.websites) {
        SiteDefense sd = make_site_defense(ds, site, phi, pool, cfg, key, nonce);
        auto traces = ds.split_of(site, defend_train_split);
        auto& dst = out.dataset.traces[site];
        for (std::size_t i = 0; i < traces.size(); ++i)
            dst.push_back(defend_visit(sd, *traces[i], static_cast<int>(i)).trace);
        out.dataset.is_train[site].assign(dst.size(), mark_as_train);
        out.defenses.emplace(site, std::move(sd));
    }
    return out;
}

// Attacker-side defended training set under N distinct secrets per site:
// training traces are partitioned round-robin across the secrets.
inline Dataset defend_split_multi(const Dataset& ds, const Model& phi,
                                  const std::vector<CandidateFeatures>& pool,
                                  const DefenseConfig& cfg, const std::string& key,
                                  std::uint64_t nonce_base, int num_secrets) {
    if (num_secrets < 1) throw PatchError("defend_split_multi: num_secrets must be >= 1");
    Dataset out;
    out.pad_len = ds.pad_len;
    out.websites = ds.websites;
    for (const auto& site : ds.websites) {
        std::vector<SiteDefense> sds;
        sds.reserve(static_cast<std::size_t>(num_secrets));
        for (int n = 0; n < num_secrets; ++n)
            sds.push_back(make_site_defense(ds, site, phi, pool, cfg, key,
                                            nonce_base + static_cast<std::uint64_t>(n)));
        auto traces = ds.split_of(site, /*train=*/true);
        auto& dst = out.traces[site];
        for (std::size_t i = 0; i < traces.size(); ++i) {
            auto& sd = sds[i % sds.size()];
            dst.push_back(defend_visit(sd, *traces[i], static_cast<int>(i)).trace);
        }
        out.is_train[site].assign(dst.size(), true);
    }
    return out;
}

inline std::pair<std::vector<const Trace*>, std::vector<int>> labeled_split(const Dataset& ds,
                                                                            bool train) {
    std::vector<const Trace*> traces;
    std::vector<int> labels;
    for (std::size_t s = 0; s < ds.websites.size(); ++s) {
        for (const Trace* t : ds.split_of(ds.websites[s], train)) {
            traces.push_back(t);
            labels.push_back(static_cast<int>(s));
        }
    }
    return {traces, labels};
}

// Pool of precomputed per-site defenses used during adversarial-patch
// fine-tuning; every use draws a fresh schedule and flip mask, so patched
// inputs differ across epochs even with a fixed patch pool.
class FinetunePatchPool {
public:
    FinetunePatchPool(const Dataset& ds, const Model& phi,
                      const std::vector<CandidateFeatures>& pool, const DefenseConfig& cfg,
                      const std::string& key, std::uint64_t nonce_base, int secrets_per_site) {
        for (const auto& site : ds.websites) {
            auto& v = defenses_[site];
            for (int n = 0; n < secrets_per_site; ++n)
                v.push_back(make_site_defense(ds, site, phi, pool, cfg, key,
                                              nonce_base + static_cast<std::uint64_t>(n)));
        }
        sites_ = ds.websites;
    }

    // Deterministic in (site, idx, epoch); defends with probability 1/2.
    bool defend(int site_idx, int trace_idx, int epoch, const Trace& original,
                std::vector<double>& x) const {
        const auto& site = sites_[static_cast<std::size_t>(site_idx)];
        const auto& v = defenses_.at(site);
        StreamRng rng(StreamRng::seed_from_u64(0xf17e),
                      "finetune/" + site + "/" + std::to_string(trace_idx) + "/" +
                          std::to_string(epoch));
        if (!rng.bernoulli(0.5)) return false;
        const auto& sd = v[static_cast<std::size_t>(rng.below(v.size()))];
        int visit_id = static_cast<int>(rng.next_u64() & 0x7fffffff);
        auto d = defend_visit(sd, original, visit_id);
        trace_to_input(d.trace, x);
        return true;
    }

private:
    std::vector<std::string> sites_;
    std::map<std::string, std::vector<SiteDefense>> defenses_;
};

inline Model finetune_extractor(const Model& base, const Dataset& ds, const Model& phi_for_pool,
                                const std::vector<CandidateFeatures>& pool,
                                const DefenseConfig& cfg, int epochs, std::uint64_t seed,
                                int secrets_per_site = 2) {
    FinetunePatchPool fpool(ds, phi_for_pool, pool, cfg, "finetune-key", 9000, secrets_per_site);
    // Index traces of the training split in dataset order for lookup.
    TrainOpts opts;
    opts.seed = seed;
    opts.lr = 0.005;  // gentler rate for fine-tuning
    const Dataset* dsp = &ds;
    auto defend_fn = [dsp, &fpool](int site_idx, int trace_idx, int epoch,
                                   std::vector<double>& x) {
        const auto& site = dsp->websites[static_cast<std::size_t>(site_idx)];
        const Trace& t = dsp->traces.at(site)[static_cast<std::size_t>(trace_idx)];
        return fpool.defend(site_idx, trace_idx, epoch, t, x);
    };
    return adv_patch_finetune(base, ds, epochs, defend_fn, opts);
}

}  // namespace wflab
