#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "wflab/features.hpp"
#include "wflab/neural.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct AttackError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AttackKind { Knn, LinearCumul, CnnDf, CnnVaried };

inline const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::Knn: return "knn";
        case AttackKind::LinearCumul: return "linear_cumul";
        case AttackKind::CnnDf: return "cnn_df";
        case AttackKind::CnnVaried: return "cnn_varied";
    }
    return "?";
}

inline AttackKind attack_kind(const std::string& name) {
    if (name == "knn") return AttackKind::Knn;
    if (name == "linear_cumul") return AttackKind::LinearCumul;
    if (name == "cnn_df") return AttackKind::CnnDf;
    if (name == "cnn_varied") return AttackKind::CnnVaried;
    throw AttackError("unknown attack kind: " + name);
}

struct FeatureScaler {
    std::vector<double> mu, sigma;

    void fit(const std::vector<std::vector<double>>& xs) {
        std::size_t d = xs.at(0).size();
        mu.assign(d, 0.0);
        sigma.assign(d, 0.0);
        for (const auto& x : xs)
            for (std::size_t j = 0; j < d; ++j) mu[j] += x[j];
        for (auto& v : mu) v /= static_cast<double>(xs.size());
        for (const auto& x : xs)
            for (std::size_t j = 0; j < d; ++j) sigma[j] += (x[j] - mu[j]) * (x[j] - mu[j]);
        for (auto& v : sigma) v = std::sqrt(v / static_cast<double>(xs.size())) + 1e-9;
    }

    std::vector<double> apply(std::vector<double> x) const {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mu[j]) / sigma[j];
        return x;
    }
};

struct AttackModel {
    AttackKind kind;
    std::vector<std::string> sites;  // label order
    // knn
    int k = 5;
    std::vector<std::vector<double>> train_feats;
    std::vector<int> train_labels;
    // linear_cumul / cnn
    FeatureScaler scaler;
    Model net;
};

inline Model make_dense_model(int in_dim, int num_classes, std::uint64_t seed) {
    Model m;
    m.arch_name = "dense";
    m.layers = {{.kind = LayerKind::Dense, .out_units = num_classes}};
    m.input_len = in_dim;
    m.num_classes = num_classes;
    m.shapes = infer_shapes(m.layers, in_dim);
    m.feature_layer = 0;
    m.weights.resize(1);
    StreamRng rng(StreamRng::seed_from_u64(seed), "init/dense");
    int n = weight_count(m.layers[0]);
    double s = std::sqrt(1.0 / in_dim);
    m.weights[0].resize(static_cast<std::size_t>(n));
    for (auto& v : m.weights[0]) v = rng.uniform(-s, s);
    for (int j = n - num_classes; j < n; ++j) m.weights[0][static_cast<std::size_t>(j)] = 0.0;
    return m;
}

struct AttackTrainOpts {
    std::uint64_t seed = 0;
    int epochs = 30;        // cnn attacks
    int linear_epochs = 80; // linear softmax on CUMUL features
    double lr = 0.01;
    int k = 5;
};

inline AttackModel train_attack(AttackKind kind, const Dataset& ds, const AttackTrainOpts& opts) {
    AttackModel am;
    am.kind = kind;
    am.sites = ds.websites;
    switch (kind) {
        case AttackKind::Knn: {
            am.k = opts.k;
            std::vector<std::vector<double>> raw;
            for (std::size_t s = 0; s < ds.websites.size(); ++s) {
                for (const Trace* t : ds.split_of(ds.websites[s], /*train=*/true)) {
                    raw.push_back(hand_features(*t));
                    am.train_labels.push_back(static_cast<int>(s));
                }
            }
            if (raw.empty()) throw AttackError("train_attack: no training traces");
            am.scaler.fit(raw);
            for (auto& x : raw) am.train_feats.push_back(am.scaler.apply(std::move(x)));
            break;
        }
        case AttackKind::LinearCumul: {
            LabeledInputs data;
            std::vector<std::vector<double>> raw;
            for (std::size_t s = 0; s < ds.websites.size(); ++s) {
                for (const Trace* t : ds.split_of(ds.websites[s], /*train=*/true)) {
                    raw.push_back(cumul_features(*t));
                    data.labels.push_back(static_cast<int>(s));
                    data.origin.emplace_back(static_cast<int>(s), 0);
                }
            }
            if (raw.empty()) throw AttackError("train_attack: no training traces");
            am.scaler.fit(raw);
            for (auto& x : raw) data.xs.push_back(am.scaler.apply(std::move(x)));
            am.net = make_dense_model(static_cast<int>(data.xs[0].size()),
                                      static_cast<int>(ds.websites.size()), opts.seed);
            TrainOpts topts;
            topts.epochs = opts.linear_epochs;
            topts.lr = 0.05;
            topts.seed = opts.seed;
            train_sgd(am.net, data, topts);
            break;
        }
        case AttackKind::CnnDf:
        case AttackKind::CnnVaried: {
            TrainOpts topts;
            topts.epochs = opts.epochs;
            topts.lr = opts.lr;
            topts.seed = opts.seed;
            am.net = train_classifier(ds, kind == AttackKind::CnnDf ? "df" : "varied", topts);
            break;
        }
    }
    return am;
}

// Class scores (higher = more likely). For k-NN: vote count, with mean
// distance as the deterministic tie-breaker, then smaller site id.
inline std::vector<double> attack_scores(const AttackModel& am, const Trace& t) {
    std::size_t C = am.sites.size();
    switch (am.kind) {
        case AttackKind::Knn: {
            auto q = am.scaler.apply(hand_features(t));
            std::vector<std::pair<double, int>> d;
            d.reserve(am.train_feats.size());
            for (std::size_t i = 0; i < am.train_feats.size(); ++i) {
                double s = 0;
                const auto& x = am.train_feats[i];
                for (std::size_t j = 0; j < q.size(); ++j) s += (q[j] - x[j]) * (q[j] - x[j]);
                d.emplace_back(s, am.train_labels[i]);
            }
            int k = std::min<int>(am.k, static_cast<int>(d.size()));
            std::partial_sort(d.begin(), d.begin() + k, d.end());
            std::vector<double> votes(C, 0.0), dist_sum(C, 0.0);
            for (int i = 0; i < k; ++i) {
                votes[static_cast<std::size_t>(d[static_cast<std::size_t>(i)].second)] += 1;
                dist_sum[static_cast<std::size_t>(d[static_cast<std::size_t>(i)].second)] +=
                    std::sqrt(d[static_cast<std::size_t>(i)].first);
            }
            // Score = votes with small deterministic penalties for mean
            // distance and site index so ranking is total.
            std::vector<double> scores(C);
            for (std::size_t c = 0; c < C; ++c) {
                double mean_d = votes[c] > 0 ? dist_sum[c] / votes[c] : 1e18;
                scores[c] = votes[c] - 1e-9 * mean_d - 1e-15 * static_cast<double>(c);
            }
            return scores;
        }
        case AttackKind::LinearCumul: {
            auto q = am.scaler.apply(cumul_features(t));
            Cache c = forward_one(am.net, q.data());
            return c.acts.back();
        }
        case AttackKind::CnnDf:
        case AttackKind::CnnVaried: {
            std::vector<double> x;
            trace_to_input(t, x);
            Cache c = forward_one(am.net, x.data());
            return c.acts.back();
        }
    }
    throw AttackError("unreachable");
}

inline int attack_predict(const AttackModel& am, const Trace& t) {
    auto s = attack_scores(am, t);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

inline std::vector<int> attack_topk(const AttackModel& am, const Trace& t, int k) {
    auto s = attack_scores(am, t);
    std::vector<int> idx(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)]; });
    idx.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(idx.size()))));
    return idx;
}

struct ProtectionResult {
    double protection = 0;  // 1 - accuracy
    double accuracy = 0;
    std::map<std::pair<int, int>, int> confusion;  // (true, predicted) -> count
};

inline ProtectionResult evaluate_protection(const AttackModel& am,
                                            const std::vector<const Trace*>& traces,
                                            const std::vector<int>& labels) {
    if (traces.empty()) throw AttackError("evaluate_protection: empty test set");
    ProtectionResult r;
    std::vector<int> preds(traces.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(traces.size()); ++i)
        preds[static_cast<std::size_t>(i)] = attack_predict(am, *traces[static_cast<std::size_t>(i)]);
    int correct = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (preds[i] == labels[i]) ++correct;
        r.confusion[{labels[i], preds[i]}]++;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(traces.size());
    r.protection = 1.0 - r.accuracy;
    return r;
}

struct IntersectionResult {
    std::vector<std::pair<int, int>> ranked;  // (site, frequency), descending
    bool success = false;                     // true site strictly most frequent
    int true_site_frequency = 0;
    bool true_in_all_rounds = false;
};

// Logs the top-k predictions per visit and aggregates frequencies over the
// joint list; the attack succeeds only if the true site is the unique most
// frequent label (ties count as failure).
inline IntersectionResult intersection_attack(const AttackModel& am,
                                              const std::vector<const Trace*>& visits,
                                              int true_site, int k = 10) {
    if (visits.size() < 2) throw AttackError("intersection_attack: need >= 2 visits");
    int num_sites = static_cast<int>(am.sites.size());
    if (k > num_sites) k = num_sites;  // clamp
    std::map<int, int> freq;
    int rounds_with_truth = 0;
    for (const Trace* v : visits) {
        auto top = attack_topk(am, *v, k);
        bool has_truth = false;
        for (int s : top) {
            freq[s]++;
            if (s == true_site) has_truth = true;
        }
        if (has_truth) ++rounds_with_truth;
    }
    IntersectionResult r;
    for (auto& [site, f] : freq) r.ranked.emplace_back(site, f);
    std::stable_sort(r.ranked.begin(), r.ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    r.true_site_frequency = freq.count(true_site) ? freq[true_site] : 0;
    r.true_in_all_rounds = rounds_with_truth == static_cast<int>(visits.size());
    if (!r.ranked.empty() && r.ranked[0].first == true_site) {
        bool tie = r.ranked.size() > 1 && r.ranked[1].second == r.ranked[0].second;
        r.success = !tie;
    }
    return r;
}

}  // namespace wflab
