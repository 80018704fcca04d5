#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "wflab/neural.hpp"
#include "wflab/rng.hpp"

namespace wflab {

struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- information leakage -----------------------------------------------------

// Plug-in histogram mutual information (bits) between a scalar feature and
// the label, with equal-frequency binning over the pooled sample. The
// rank-based bin edges make the estimate invariant to strictly monotone
// transformations of the feature.
inline double mutual_information(const std::vector<double>& values, const std::vector<int>& labels,
                                 int bins = 20) {
    if (values.size() != labels.size() || values.empty())
        throw AnalysisError("mutual_information: size mismatch");
    std::map<int, int> label_count;
    for (int y : labels) label_count[y]++;
    if (label_count.size() < 2) throw AnalysisError("mutual_information: need >= 2 labels");
    for (auto& [y, c] : label_count)
        if (c < 10) throw AnalysisError("mutual_information: need >= 10 samples per label");

    std::size_t n = values.size();
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;  // upper edges of bins 0..bins-2
    for (int b = 1; b < bins; ++b)
        edges.push_back(sorted[static_cast<std::size_t>(b) * n / static_cast<std::size_t>(bins)]);

    auto bin_of = [&](double v) {
        return static_cast<int>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
    };

    std::map<int, std::vector<double>> per_label_bin;  // label -> bin counts
    std::vector<double> bin_count(static_cast<std::size_t>(bins), 0.0);
    for (auto& [y, _] : label_count)
        per_label_bin[y].assign(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        int b = bin_of(values[i]);
        bin_count[static_cast<std::size_t>(b)] += 1;
        per_label_bin[labels[i]][static_cast<std::size_t>(b)] += 1;
    }

    auto entropy = [](const std::vector<double>& counts, double total) {
        double h = 0;
        for (double c : counts) {
            if (c <= 0) continue;
            double p = c / total;
            h -= p * std::log2(p);
        }
        return h;
    };

    double h_bin = entropy(bin_count, static_cast<double>(n));
    double h_cond = 0;
    for (auto& [y, counts] : per_label_bin) {
        double ny = static_cast<double>(label_count[y]);
        h_cond += ny / static_cast<double>(n) * entropy(counts, ny);
    }
    double mi = h_bin - h_cond;
    return mi > 0 ? mi : 0.0;
}

struct LeakageReport {
    std::vector<double> per_feature_mi;  // bits
    double max_mi = 0;

    // ECDF point: fraction of features leaking at most x bits.
    double ecdf(double x) const {
        std::size_t c = 0;
        for (double v : per_feature_mi)
            if (v <= x) ++c;
        return per_feature_mi.empty() ? 0.0
                                      : static_cast<double>(c) / static_cast<double>(per_feature_mi.size());
    }
};

inline LeakageReport leakage_report(const std::vector<std::vector<double>>& feature_rows,
                                    const std::vector<int>& labels, int bins = 20) {
    if (feature_rows.empty()) throw AnalysisError("leakage_report: no samples");
    LeakageReport rep;
    std::size_t d = feature_rows[0].size();
    rep.per_feature_mi.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> col(feature_rows.size());
        for (std::size_t i = 0; i < feature_rows.size(); ++i) col[i] = feature_rows[i][j];
        rep.per_feature_mi[j] = mutual_information(col, labels, bins);
    }
    rep.max_mi = *std::max_element(rep.per_feature_mi.begin(), rep.per_feature_mi.end());
    return rep;
}

// --- optimal-transport robustness bound ----------------------------------------

// Maximum bipartite matching by augmenting paths (Kuhn's algorithm).
// Returns match_right: for every right vertex, the matched left vertex or -1.
inline std::vector<int> max_bipartite_matching_pairs(const std::vector<std::vector<int>>& adj,
                                                     int n_right) {
    std::vector<int> match_right(static_cast<std::size_t>(n_right), -1);
    std::vector<char> used;
    std::function<bool(int)> try_kuhn = [&](int u) {
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (used[static_cast<std::size_t>(v)]) continue;
            used[static_cast<std::size_t>(v)] = 1;
            if (match_right[static_cast<std::size_t>(v)] < 0 ||
                try_kuhn(match_right[static_cast<std::size_t>(v)])) {
                match_right[static_cast<std::size_t>(v)] = u;
                return true;
            }
        }
        return false;
    };
    for (int u = 0; u < static_cast<int>(adj.size()); ++u) {
        used.assign(static_cast<std::size_t>(n_right), 0);
        try_kuhn(u);
    }
    return match_right;
}

inline int max_bipartite_matching(const std::vector<std::vector<int>>& adj, int n_right) {
    auto match_right = max_bipartite_matching_pairs(adj, n_right);
    int size = 0;
    for (int u : match_right)
        if (u >= 0) ++size;
    return size;
}

struct TransportBound {
    double eps_phi = 0;
    double C = 0;          // minimal mismatch cost in [0,1]
    double asr_bound = 0;  // (1 + C) / 2
    int n = 0;             // matched sample size
};

// Empirical transportation cost between two feature sample sets: pairs
// (i, j) are connectable iff their l2 distance is strictly below 2*eps_phi;
// C = 1 - |max matching| / n on equal-size subsamples.
inline TransportBound transport_bound(const std::vector<std::vector<double>>& F_W,
                                      const std::vector<std::vector<double>>& F_T, double eps_phi,
                                      std::uint64_t subsample_seed = 0) {
    if (eps_phi < 0) throw AnalysisError("transport_bound: eps_phi must be >= 0");
    if (F_W.empty() || F_T.empty()) throw AnalysisError("transport_bound: empty sample set");
    std::size_t n = std::min(F_W.size(), F_T.size());

    auto subsample = [&](const std::vector<std::vector<double>>& xs, const char* tag) {
        if (xs.size() == n) return xs;
        StreamRng rng(StreamRng::seed_from_u64(subsample_seed), std::string("transport/") + tag);
        auto idx = rng.sample_indices(xs.size(), n);
        std::vector<std::vector<double>> out;
        out.reserve(n);
        for (auto i : idx) out.push_back(xs[i]);
        return out;
    };
    auto A = subsample(F_W, "W");
    auto B = subsample(F_T, "T");

    double lim = 2.0 * eps_phi;
    std::vector<std::vector<int>> adj(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < A[i].size(); ++k) {
                double d = A[i][k] - B[j][k];
                s += d * d;
            }
            if (std::sqrt(s) < lim) adj[i].push_back(static_cast<int>(j));
        }
    }
    int m = max_bipartite_matching(adj, static_cast<int>(n));
    TransportBound tb;
    tb.eps_phi = eps_phi;
    tb.n = static_cast<int>(n);
    tb.C = 1.0 - static_cast<double>(m) / static_cast<double>(n);
    tb.asr_bound = 0.5 * (1.0 + tb.C);
    return tb;
}

// Per-trace l2 feature displacement between paired defended/original traces.
inline std::vector<double> feature_displacement(const std::vector<const Trace*>& defended,
                                                const std::vector<const Trace*>& original,
                                                const Model& phi) {
    if (defended.size() != original.size())
        throw AnalysisError("feature_displacement: unpaired traces");
    std::vector<double> out(defended.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(defended.size()); ++i) {
        auto ui = static_cast<std::size_t>(i);
        auto a = extract_features(phi, *defended[ui]);
        auto b = extract_features(phi, *original[ui]);
        double s = 0;
        for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        out[ui] = std::sqrt(s);
    }
    return out;
}

}  // namespace wflab
