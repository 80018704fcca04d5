#include <doctest.h>

#include <algorithm>

#include "wflab/analysis.hpp"

using namespace wflab;

TEST_CASE("mutual information saturates for a perfectly informative feature") {
    std::vector<double> v;
    std::vector<int> y;
    StreamRng rng(std::uint64_t{1}, "mi");
    for (int i = 0; i < 400; ++i) {
        int label = i % 2;
        v.push_back(label * 10.0 + rng.uniform(-0.1, 0.1));
        y.push_back(label);
    }
    CHECK(mutual_information(v, y) > 0.9);
    CHECK(mutual_information(v, y) <= 1.0 + 1e-9);
}

TEST_CASE("mutual information vanishes for an independent feature") {
    std::vector<double> v;
    std::vector<int> y;
    StreamRng rng(std::uint64_t{2}, "mi0");
    for (int i = 0; i < 1000; ++i) {
        v.push_back(rng.uniform());
        y.push_back(i % 2);
    }
    CHECK(mutual_information(v, y) < 0.1);
}

TEST_CASE("mutual information is invariant to monotone transforms") {
    std::vector<double> v;
    std::vector<int> y;
    StreamRng rng(std::uint64_t{3}, "mono");
    for (int i = 0; i < 300; ++i) {
        int label = i % 3;
        v.push_back(label + rng.uniform());
        y.push_back(label);
    }
    std::vector<double> tv(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) tv[i] = std::exp(0.5 * v[i]) + 7.0;
    CHECK(mutual_information(v, y) == doctest::Approx(mutual_information(tv, y)).epsilon(1e-12));
}

TEST_CASE("mutual information preconditions") {
    std::vector<double> v(50, 1.0);
    std::vector<int> one(50, 0);
    CHECK_THROWS_AS(mutual_information(v, one), AnalysisError);
    std::vector<int> sparse(50, 0);
    sparse[0] = 1;  // only one sample for label 1
    CHECK_THROWS_AS(mutual_information(v, sparse), AnalysisError);
    CHECK_THROWS_AS(mutual_information({1.0}, {0, 1}), AnalysisError);
}

TEST_CASE("leakage report aggregates per-feature MI") {
    StreamRng rng(std::uint64_t{4}, "leak");
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
        int label = i % 2;
        rows.push_back({label * 5.0 + rng.uniform(), rng.uniform()});
        y.push_back(label);
    }
    auto rep = leakage_report(rows, y);
    REQUIRE(rep.per_feature_mi.size() == 2);
    CHECK(rep.per_feature_mi[0] > rep.per_feature_mi[1]);
    CHECK(rep.max_mi == rep.per_feature_mi[0]);
    CHECK(rep.ecdf(2.0) == doctest::Approx(1.0));
    CHECK(rep.ecdf(-1.0) == doctest::Approx(0.0));
}

namespace {
// Exhaustive maximum-matching oracle: bitmask DP over (left vertex, used
// right set); exact for the small instances used here.
int brute_matching(const std::vector<std::vector<int>>& adj, int n_right) {
    int n_left = static_cast<int>(adj.size());
    std::vector<std::vector<int>> memo(static_cast<std::size_t>(n_left + 1),
                                       std::vector<int>(1u << n_right, -1));
    std::function<int(int, unsigned)> rec = [&](int u, unsigned used) -> int {
        if (u == n_left) return 0;
        int& m = memo[static_cast<std::size_t>(u)][used];
        if (m >= 0) return m;
        int best = rec(u + 1, used);  // leave u unmatched
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (used & (1u << v)) continue;
            best = std::max(best, 1 + rec(u + 1, used | (1u << v)));
        }
        return m = best;
    };
    return rec(0, 0);
}
}  // namespace

TEST_CASE("maximum bipartite matching equals brute force on random graphs") {
    StreamRng rng(std::uint64_t{5}, "match");
    for (int rep = 0; rep < 200; ++rep) {
        int nl = static_cast<int>(rng.range(1, 8));
        int nr = static_cast<int>(rng.range(1, 8));
        double p = rng.uniform(0.1, 0.7);
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(nl));
        for (int u = 0; u < nl; ++u)
            for (int v = 0; v < nr; ++v)
                if (rng.bernoulli(p)) adj[static_cast<std::size_t>(u)].push_back(v);
        CHECK(max_bipartite_matching(adj, nr) == brute_matching(adj, nr));
    }
}

TEST_CASE("transport bound: identical samples give the chance bound") {
    std::vector<std::vector<double>> F;
    StreamRng rng(std::uint64_t{6}, "tb");
    for (int i = 0; i < 12; ++i) F.push_back({rng.uniform(), rng.uniform()});
    auto tb = transport_bound(F, F, 0.5);
    CHECK(tb.C == doctest::Approx(0.0));
    CHECK(tb.asr_bound == doctest::Approx(0.5));
}

TEST_CASE("transport bound: far-apart samples give the trivial bound") {
    std::vector<std::vector<double>> A, B;
    for (int i = 0; i < 8; ++i) {
        A.push_back({0.0, static_cast<double>(i)});
        B.push_back({100.0, static_cast<double>(i)});
    }
    auto tb = transport_bound(A, B, 0.5);
    CHECK(tb.C == doctest::Approx(1.0));
    CHECK(tb.asr_bound == doctest::Approx(1.0));
    CHECK_THROWS_AS(transport_bound(A, B, -1.0), AnalysisError);
    CHECK_THROWS_AS(transport_bound({}, B, 1.0), AnalysisError);
}

TEST_CASE("transport edge rule is strict") {
    // Distance exactly 2*eps must NOT create an edge.
    std::vector<std::vector<double>> A = {{0.0}};
    std::vector<std::vector<double>> B = {{1.0}};
    auto tb = transport_bound(A, B, 0.5);
    CHECK(tb.C == doctest::Approx(1.0));
    auto tb2 = transport_bound(A, B, 0.5000001);
    CHECK(tb2.C == doctest::Approx(0.0));
}

TEST_CASE("transport subsampling equalizes set sizes deterministically") {
    StreamRng rng(std::uint64_t{7}, "sub");
    std::vector<std::vector<double>> A, B;
    for (int i = 0; i < 6; ++i) A.push_back({rng.uniform()});
    for (int i = 0; i < 15; ++i) B.push_back({rng.uniform()});
    auto t1 = transport_bound(A, B, 0.3, 9);
    auto t2 = transport_bound(A, B, 0.3, 9);
    CHECK(t1.n == 6);
    CHECK(t1.C == t2.C);
}

TEST_CASE("feature displacement is zero for identical traces") {
    Model phi = make_model("df", 200, 3, 1);
    SynthSpec spec;
    spec.num_sites = 2;
    spec.traces_per_site = 3;
    spec.base_len = 100;
    spec.pad_len = 200;
    Dataset ds = synth_dataset(spec);
    auto traces = ds.split_of(ds.websites[0], true);
    auto disp = feature_displacement(traces, traces, phi);
    for (double d : disp) CHECK(d == doctest::Approx(0.0));
    CHECK_THROWS_AS(feature_displacement(traces, {}, phi), AnalysisError);
}
