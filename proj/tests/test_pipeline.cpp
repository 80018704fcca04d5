#include <doctest.h>

#include "wflab/analysis.hpp"
#include "wflab/counter.hpp"
#include "wflab/pipeline.hpp"

using namespace wflab;

namespace {

struct Lab {
    Dataset ds;
    Model phi;
    std::vector<CandidateFeatures> pool;
    DefenseConfig cfg;

    Lab() {
        SynthSpec spec;
        spec.num_sites = 6;
        spec.traces_per_site = 16;
        spec.base_len = 150;
        spec.pad_len = 280;
        spec.flip_noise = 0.02;
        spec.seed = 33;
        ds = synth_dataset(spec);
        TrainOpts topts;
        topts.epochs = 8;
        topts.seed = 3;
        phi = train_classifier(ds, "df", topts);
        pool = build_candidate_pool(ds, phi);
        cfg.opt.iterations = 50;
        cfg.opt.batch = 8;
    }
};

Lab& lab() {
    static Lab l;
    return l;
}

}  // namespace

TEST_CASE("defended split preserves labels and stays inside the overhead budget") {
    auto& L = lab();
    DefendedSplit def = defend_split(L.ds, L.phi, L.pool, L.cfg, "user-key", 100,
                                     /*defend_train_split=*/false, /*mark_as_train=*/false);
    REQUIRE(def.dataset.websites == L.ds.websites);
    for (const auto& site : L.ds.websites) {
        const auto& sd = def.defenses.at(site);
        auto originals = L.ds.split_of(site, false);
        const auto& defended = def.dataset.traces.at(site);
        REQUIRE(defended.size() == originals.size());
        for (std::size_t i = 0; i < defended.size(); ++i) {
            DefendedTrace d = defend_visit(sd, *originals[i], static_cast<int>(i));
            CHECK(d.trace.padded == defended[i].padded);
            // Realized per-trace overhead never exceeds r by more than the
            // single-segment rounding granularity.
            double over = static_cast<double>(d.inserted_dummies) /
                          static_cast<double>(d.original_live_len);
            CHECK(over <= sd.geom.r + static_cast<double>(sd.M_p) / d.original_live_len + 1e-9);
            CHECK(d.inserted_dummies > 0);
        }
        CHECK(sd.geom.r > L.cfg.budget.R - L.cfg.budget.epsilon);
        CHECK(sd.geom.r <= L.cfg.budget.R);
    }
}

TEST_CASE("defense pipeline is bit-reproducible end to end") {
    auto& L = lab();
    DefendedSplit a = defend_split(L.ds, L.phi, L.pool, L.cfg, "user-key", 7, false, false);
    DefendedSplit b = defend_split(L.ds, L.phi, L.pool, L.cfg, "user-key", 7, false, false);
    for (const auto& site : L.ds.websites) {
        const auto& ta = a.dataset.traces.at(site);
        const auto& tb = b.dataset.traces.at(site);
        REQUIRE(ta.size() == tb.size());
        for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].padded == tb[i].padded);
    }
    DefendedSplit c = defend_split(L.ds, L.phi, L.pool, L.cfg, "user-key", 8, false, false);
    bool any_diff = false;
    for (const auto& site : L.ds.websites)
        if (a.dataset.traces.at(site)[0].padded != c.dataset.traces.at(site)[0].padded)
            any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("defense lowers attack accuracy on the small fixture") {
    auto& L = lab();
    AttackTrainOpts aopts;
    aopts.seed = 4;
    AttackModel knn = train_attack(AttackKind::Knn, L.ds, aopts);
    auto [clean_test, labels] = labeled_split(L.ds, false);
    double clean_acc = evaluate_protection(knn, clean_test, labels).accuracy;

    DefendedSplit def = defend_split(L.ds, L.phi, L.pool, L.cfg, "user-key", 11, false, false);
    auto [def_test, def_labels] = labeled_split(def.dataset, false);
    double def_acc = evaluate_protection(knn, def_test, def_labels).accuracy;
    CHECK(clean_acc >= 0.8);
    CHECK(def_acc < clean_acc);
}

TEST_CASE("multi-secret defended training set covers all sites") {
    auto& L = lab();
    Dataset multi = defend_split_multi(L.ds, L.phi, L.pool, L.cfg, "attacker-key", 500, 2);
    REQUIRE(multi.websites == L.ds.websites);
    for (const auto& site : multi.websites) {
        CHECK(multi.traces.at(site).size() == L.ds.split_of(site, true).size());
        for (bool b : multi.is_train.at(site)) CHECK(b);
    }
    CHECK_THROWS_AS(defend_split_multi(L.ds, L.phi, L.pool, L.cfg, "k", 1, 0), PatchError);
}

TEST_CASE("mini-patches partition the patch") {
    auto& L = lab();
    SiteDefense sd = make_site_defense(L.ds, L.ds.websites[0], L.phi, L.pool, L.cfg, "key", 42);
    auto minis = mini_patches(sd.patch);
    REQUIRE(static_cast<int>(minis.size()) == sd.patch.meta.num_segments);
    std::vector<Dir> rebuilt;
    for (const auto& m : minis) {
        CHECK(static_cast<int>(m.size()) == sd.patch.meta.M_p);
        rebuilt.insert(rebuilt.end(), m.begin(), m.end());
    }
    CHECK(rebuilt == sd.patch.dummies);
}

TEST_CASE("frequency analysis weakens when flips are enabled") {
    auto& L = lab();
    const std::string site = L.ds.websites[2];
    const Trace& base = L.ds.traces.at(site)[0];

    auto run = [&](double beta) {
        DefenseConfig cfg = L.cfg;
        cfg.beta = beta;
        SiteDefense sd = make_site_defense(L.ds, site, L.phi, L.pool, cfg, "key", 77);
        std::vector<Trace> visits;
        for (int v = 0; v < 30; ++v) visits.push_back(defend_visit(sd, base, v).trace);
        std::vector<const Trace*> ptrs;
        for (auto& t : visits) ptrs.push_back(&t);
        return frequency_analysis(ptrs, cfg.M_p, cfg.beta, mini_patches(sd.patch));
    };
    auto strict = run(0.0);
    auto flipped = run(0.2);
    CHECK(strict.recall >= flipped.recall);
    CHECK(strict.recall > 0.5);
}

TEST_CASE("fine-tuned extractor keeps its architecture and changes weights") {
    auto& L = lab();
    Model tuned = finetune_extractor(L.phi, L.ds, L.phi, L.pool, L.cfg, 2, 5, 1);
    CHECK(tuned.arch_name == L.phi.arch_name);
    CHECK(tuned.feature_dim() == L.phi.feature_dim());
    CHECK(model_hash(tuned) != model_hash(L.phi));
    Model tuned2 = finetune_extractor(L.phi, L.ds, L.phi, L.pool, L.cfg, 2, 5, 1);
    CHECK(model_hash(tuned2) == model_hash(tuned));
}

TEST_CASE("orthogonal extractor trains and decorrelates features") {
    auto& L = lab();
    TrainOpts opts;
    opts.epochs = 6;
    opts.seed = 9;
    Model ortho = train_orthogonal(L.phi, L.ds, "varied", 0.5, opts);
    // Mean |cos| between feature vectors of the two extractors over a sample
    // of traces should be small when the penalty is active.
    double cos_sum = 0;
    int n = 0;
    for (const auto& site : L.ds.websites) {
        const Trace& t = L.ds.traces.at(site)[0];
        auto a = extract_features(ortho, t);
        auto b = extract_features(L.phi, t);
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            ab += a[j] * b[j];
            aa += a[j] * a[j];
            bb += b[j] * b[j];
        }
        cos_sum += std::fabs(ab) / (std::sqrt(aa) * std::sqrt(bb) + 1e-12);
        ++n;
    }
    CHECK(cos_sum / n < 0.9);
}

TEST_CASE("transport bound caps the observed two-class attack rate") {
    auto& L = lab();
    // Two-class subproblem on defended features of two sites.
    DefendedSplit def = defend_split(L.ds, L.phi, L.pool, L.cfg, "user-key", 900, false, false);
    const auto& sa = L.ds.websites[0];
    const auto& sb = L.ds.websites[1];
    auto feats = [&](const std::string& site) {
        std::vector<std::vector<double>> out;
        for (const auto& t : def.dataset.traces.at(site)) out.push_back(extract_features(L.phi, t));
        return out;
    };
    auto FA = feats(sa), FB = feats(sb);
    // eps from the median defended-vs-clean displacement of site A.
    std::vector<const Trace*> defended, original;
    auto orig = L.ds.split_of(sa, false);
    for (std::size_t i = 0; i < def.dataset.traces.at(sa).size(); ++i) {
        defended.push_back(&def.dataset.traces.at(sa)[i]);
        original.push_back(orig[i]);
    }
    auto disp = feature_displacement(defended, original, L.phi);
    std::sort(disp.begin(), disp.end());
    double eps = disp[disp.size() / 2];
    auto tb = transport_bound(FA, FB, eps, 1);
    CHECK(tb.asr_bound >= 0.5);
    CHECK(tb.asr_bound <= 1.0);
}
