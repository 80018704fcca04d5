// Command-line front end for the fingerprinting attack/defense laboratory.
// Every randomized subcommand takes an explicit --seed; runs are
// bit-reproducible from (config file, seed).

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wflab/analysis.hpp"
#include "wflab/attacks.hpp"
#include "wflab/config.hpp"
#include "wflab/counter.hpp"
#include "wflab/pipeline.hpp"
#include "wflab/report.hpp"

using namespace wflab;

namespace {

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    return ExperimentConfig::from_file(path);
}

Model load_or_train_extractor(const ExperimentConfig& cfg, const std::string& model_path,
                              const Dataset& ds, std::uint64_t seed) {
    Model m;
    if (!model_path.empty()) {
        m = load_model(model_path);
    } else {
        TrainOpts opts;
        opts.epochs = static_cast<int>(cfg.get_int("extractor.epochs", 30));
        opts.lr = cfg.get_double("extractor.lr", 0.01);
        opts.seed = seed;
        m = train_classifier(ds, cfg.get("extractor.arch", "df"), opts);
    }
    // Adversarial-patch fine-tuning hardens the feature space against
    // injected patches, which makes patches optimized against it transfer
    // much better to retrained attackers.
    int ft = static_cast<int>(cfg.get_int("extractor.finetune_epochs", 0));
    if (ft > 0) {
        auto pool = build_candidate_pool(ds, m);
        m = finetune_extractor(m, ds, m, pool, cfg.defense(), ft, seed + 5);
    }
    return m;
}

void finish_report(RunReport& rep, const std::string& out) {
    rep.save(out);
    std::cout << rep.table();
    std::cout << "report_hash " << rep.hash() << "\n";
}

int cmd_synth(const std::string& config, std::uint64_t seed, const std::string& out) {
    auto cfg = load_config(config);
    Dataset ds = synth_dataset(cfg.synth_spec(seed));
    save_dataset(ds, out);
    std::cout << "wrote " << ds.num_traces() << " traces for " << ds.websites.size()
              << " sites to " << out << "\n";
    return 0;
}

int cmd_train_extractor(const std::string& config, std::uint64_t seed, const std::string& out) {
    auto cfg = load_config(config);
    Dataset ds = cfg.dataset(seed);
    TrainOpts opts;
    opts.epochs = static_cast<int>(cfg.get_int("extractor.epochs", 30));
    opts.lr = cfg.get_double("extractor.lr", 0.01);
    opts.seed = seed;
    opts.on_epoch = [](int e, double loss, double acc) {
        std::cout << "epoch " << e << " loss " << loss << " acc " << acc << "\n";
    };
    Model m = train_classifier(ds, cfg.get("extractor.arch", "df"), opts);
    save_model(m, out);
    std::cout << "extractor " << model_hash(m) << " -> " << out << "\n";
    return 0;
}

int cmd_defend(const std::string& config, std::uint64_t seed, const std::string& model_path,
               const std::string& site, const std::string& out_patch,
               const std::string& out_traces, const std::string& report_out) {
    auto cfg = load_config(config);
    Dataset ds = cfg.dataset(seed);
    Model phi = load_or_train_extractor(cfg, model_path, ds, seed);
    auto pool = build_candidate_pool(ds, phi);
    DefenseConfig dc = cfg.defense();

    std::vector<std::string> sites = site.empty() ? ds.websites : std::vector<std::string>{site};
    RunReport rep(cfg.hash(), seed);
    for (const auto& s : sites) {
        SiteDefense sd = make_site_defense(ds, s, phi, pool, dc, cfg.secret_key(), cfg.nonce());
        rep.add("defend/" + s, "realized_overhead", sd.geom.r);
        rep.add("defend/" + s, "patch_len", sd.patch.dummies.size());
        rep.add("defend/" + s, "final_loss", sd.loss_history.back());
        if (!out_patch.empty())
            save_patch(sd.patch, sites.size() == 1 ? out_patch : out_patch + "." + s);
        if (!out_traces.empty()) {
            Dataset defended;
            defended.pad_len = ds.pad_len;
            defended.websites = {s};
            auto originals = ds.split_of(s, /*train=*/false);
            auto& dst = defended.traces[s];
            for (std::size_t i = 0; i < originals.size(); ++i)
                dst.push_back(defend_visit(sd, *originals[i], static_cast<int>(i)).trace);
            defended.is_train[s].assign(dst.size(), false);
            save_dataset(defended, sites.size() == 1 ? out_traces : out_traces + "." + s);
        }
    }
    finish_report(rep, report_out);
    return 0;
}

int cmd_attack(const std::string& config, std::uint64_t seed, const std::string& model_path,
               const std::string& attack, const std::string& scenario,
               const std::string& report_out) {
    auto cfg = load_config(config);
    Dataset ds = cfg.dataset(seed);
    Model phi = load_or_train_extractor(cfg, model_path, ds, seed);
    auto pool = build_candidate_pool(ds, phi);
    DefenseConfig dc = cfg.defense();

    RunReport rep(cfg.hash(), seed);
    AttackTrainOpts aopts;
    aopts.seed = seed + 1;
    aopts.epochs = static_cast<int>(cfg.get_int("attack.epochs", 30));

    // Undefended baseline.
    AttackModel clean_attack = train_attack(attack_kind(attack), ds, aopts);
    auto [clean_test, clean_labels] = labeled_split(ds, false);
    auto base = evaluate_protection(clean_attack, clean_test, clean_labels);
    rep.add("attack/undefended", "accuracy", base.accuracy);

    // User-side defended test traces.
    DefendedSplit user = defend_split(ds, phi, pool, dc, cfg.secret_key(), cfg.nonce(),
                                      /*defend_train_split=*/false, /*mark_as_train=*/false);

    // Attacker-side training set depends on the scenario.
    Dataset atk_train;
    if (scenario == "matching" || scenario == "mismatched") {
        int n = static_cast<int>(cfg.get_int("attack.num_secrets", 1));
        atk_train = defend_split_multi(ds, phi, pool, dc, "attacker-" + cfg.secret_key(),
                                       cfg.nonce() + 1000, n);
    } else if (scenario == "overtime") {
        // Drifted data: regenerate the synthetic corpus with higher noise.
        SynthSpec drift = cfg.synth_spec(seed);
        drift.flip_noise = std::min(0.45, drift.flip_noise + cfg.get_double("attack.drift", 0.03));
        drift.seed = seed + 777;
        Dataset drifted = synth_dataset(drift);
        auto drift_pool = build_candidate_pool(drifted, phi);
        atk_train = defend_split_multi(drifted, phi, drift_pool, dc,
                                       "attacker-" + cfg.secret_key(), cfg.nonce() + 1000, 1);
    } else {
        throw AttackError("unknown scenario: " + scenario);
    }

    AttackKind kind = attack_kind(attack);
    if (scenario == "mismatched" && (kind == AttackKind::CnnDf || kind == AttackKind::CnnVaried))
        kind = kind == AttackKind::CnnDf ? AttackKind::CnnVaried : AttackKind::CnnDf;

    AttackModel am = train_attack(kind, atk_train, aopts);
    auto [def_test, def_labels] = labeled_split(user.dataset, false);
    auto res = evaluate_protection(am, def_test, def_labels);
    rep.add("attack/" + scenario, "accuracy", res.accuracy);
    rep.add("attack/" + scenario, "protection", res.protection);
    finish_report(rep, report_out);
    return 0;
}

int cmd_counter(const std::string& config, std::uint64_t seed, const std::string& model_path,
                const std::string& report_out) {
    auto cfg = load_config(config);
    Dataset ds = cfg.dataset(seed);
    Model phi = load_or_train_extractor(cfg, model_path, ds, seed);
    auto pool = build_candidate_pool(ds, phi);
    DefenseConfig dc = cfg.defense();
    int visits = static_cast<int>(cfg.get_int("counter.visits", 50));

    RunReport rep(cfg.hash(), seed);
    const std::string site = ds.websites[0];
    const Trace& base = ds.traces.at(site)[0];
    for (double beta : {0.0, dc.beta}) {
        DefenseConfig c2 = dc;
        c2.beta = beta;
        SiteDefense sd = make_site_defense(ds, site, phi, pool, c2, cfg.secret_key(), cfg.nonce());
        std::vector<Trace> ts;
        for (int v = 0; v < visits; ++v) ts.push_back(defend_visit(sd, base, v).trace);
        std::vector<const Trace*> ptrs;
        for (auto& t : ts) ptrs.push_back(&t);
        auto res = frequency_analysis(ptrs, c2.M_p, beta, mini_patches(sd.patch));
        std::string stage = "counter/beta=" + std::to_string(beta);
        rep.add(stage, "recall", res.recall);
        rep.add(stage, "precision", res.precision);
        rep.add(stage, "candidates", res.candidates.size());
    }
    finish_report(rep, report_out);
    return 0;
}

int cmd_analyze(const std::string& config, std::uint64_t seed, const std::string& model_path,
                const std::string& report_out, const std::string& csv_out) {
    auto cfg = load_config(config);
    Dataset ds = cfg.dataset(seed);
    Model phi = load_or_train_extractor(cfg, model_path, ds, seed);
    auto pool = build_candidate_pool(ds, phi);
    DefenseConfig dc = cfg.defense();

    RunReport rep(cfg.hash(), seed);

    // Leakage: undefended vs defended feature MI.
    auto mi_of = [&](const Dataset& d, bool train) {
        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        for (std::size_t s = 0; s < d.websites.size(); ++s)
            for (const Trace* t : d.split_of(d.websites[s], train)) {
                rows.push_back(leakage_features(*t));
                labels.push_back(static_cast<int>(s));
            }
        return leakage_report(rows, labels);
    };
    auto undef = mi_of(ds, true);
    rep.add("leakage/undefended", "max_mi", undef.max_mi);
    DefendedSplit def = defend_split(ds, phi, pool, dc, cfg.secret_key(), cfg.nonce(), true, true);
    auto defended = mi_of(def.dataset, true);
    rep.add("leakage/defended", "max_mi", defended.max_mi);

    // Transport bound curve over epsilon for the first site pair; emitted as
    // CSV for external plotting.
    auto feats = [&](const std::string& site) {
        std::vector<std::vector<double>> out;
        for (const Trace* t : ds.split_of(site, true)) out.push_back(extract_features(phi, *t));
        return out;
    };
    auto FA = feats(ds.websites[0]);
    auto FB = feats(ds.websites[1]);
    double max_eps = cfg.get_double("analyze.max_eps", 20.0);
    std::ofstream csv(csv_out);
    csv << "eps,C,asr_bound\n";
    for (int i = 0; i <= 20; ++i) {
        double eps = max_eps * i / 20.0;
        auto tb = transport_bound(FA, FB, eps, seed);
        csv << eps << "," << tb.C << "," << tb.asr_bound << "\n";
        if (i == 20) rep.add("transport/limit", "asr_bound", tb.asr_bound);
    }
    finish_report(rep, report_out);
    return 0;
}

int cmd_report(const std::string& in) {
    std::ifstream f(in);
    if (!f) throw ConfigError("cannot open report: " + in);
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::cout << all;
    std::cout << "report_hash " << hex_digest(Sha256::hash(all)) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"website-fingerprinting attack/defense laboratory"};
    app.require_subcommand(1);

    std::string config, out, model_path, site, out_patch, out_traces;
    std::string attack = "cnn_df", scenario = "matching", report_out = "report", csv_out = "bound.csv";
    std::string report_in;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub, bool needs_seed) {
        sub->add_option("--config", config, "experiment config file (key=value)");
        if (needs_seed)
            sub->add_option("--seed", seed, "master seed")->required();
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic closed-world corpus");
    add_common(synth, true);
    synth->add_option("--out", out, "output trace file")->required();

    auto* trainx = app.add_subcommand("train-extractor", "train the feature extractor");
    add_common(trainx, true);
    trainx->add_option("--out", out, "model output path")->required();

    auto* defend = app.add_subcommand("defend", "generate patches and defended traces");
    add_common(defend, true);
    defend->add_option("--extractor", model_path, "trained extractor (trains one if absent)");
    defend->add_option("--site", site, "single site to defend (default: all)");
    defend->add_option("--out-patch", out_patch, "patch output path");
    defend->add_option("--out-traces", out_traces, "defended trace output path");
    defend->add_option("--report", report_out, "report basename");

    auto* atk = app.add_subcommand("attack", "train and evaluate an attack scenario");
    add_common(atk, true);
    atk->add_option("--extractor", model_path, "trained extractor (trains one if absent)");
    atk->add_option("--attack", attack, "knn|linear_cumul|cnn_df|cnn_varied");
    atk->add_option("--scenario", scenario, "matching|mismatched|overtime");
    atk->add_option("--report", report_out, "report basename");

    auto* counter = app.add_subcommand("counter", "run countermeasure analyses");
    add_common(counter, true);
    counter->add_option("--extractor", model_path, "trained extractor (trains one if absent)");
    counter->add_option("--report", report_out, "report basename");

    auto* analyze = app.add_subcommand("analyze", "leakage and robustness-bound analysis");
    add_common(analyze, true);
    analyze->add_option("--extractor", model_path, "trained extractor (trains one if absent)");
    analyze->add_option("--report", report_out, "report basename");
    analyze->add_option("--csv", csv_out, "bound-curve CSV path");

    auto* repc = app.add_subcommand("report", "print a stored report with its hash");
    repc->add_option("--in", report_in, "report .jsonl path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(config, seed, out);
        if (trainx->parsed()) return cmd_train_extractor(config, seed, out);
        if (defend->parsed())
            return cmd_defend(config, seed, model_path, site, out_patch, out_traces, report_out);
        if (atk->parsed()) return cmd_attack(config, seed, model_path, attack, scenario, report_out);
        if (counter->parsed()) return cmd_counter(config, seed, model_path, report_out);
        if (analyze->parsed()) return cmd_analyze(config, seed, model_path, report_out, csv_out);
        if (repc->parsed()) return cmd_report(report_in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
