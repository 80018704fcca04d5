#include <doctest.h>

#include <cstdio>
#include <functional>

#include "wflab/neural.hpp"

using namespace wflab;

namespace {

double rel_err(double a, double b) {
    double scale = std::max({std::fabs(a), std::fabs(b), 1e-4});
    return std::fabs(a - b) / scale;
}

// Central finite-difference check of grad against scalar function f at x.
double max_grad_rel_err(std::vector<double>& x, const std::vector<double>& grad,
                        const std::function<double()>& f, const std::vector<std::size_t>& coords,
                        double h = 1e-4) {
    double worst = 0;
    for (auto c : coords) {
        double orig = x[c];
        x[c] = orig + h;
        double fp = f();
        x[c] = orig - h;
        double fm = f();
        x[c] = orig;
        double fd = (fp - fm) / (2 * h);
        worst = std::max(worst, rel_err(fd, grad[c]));
    }
    return worst;
}

std::vector<std::size_t> pick_coords(StreamRng& rng, std::size_t n, std::size_t k) {
    if (n <= k) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    return rng.sample_indices(n, k);
}

// Checks one layer's input and weight gradients against finite differences
// of L = sum(gy .* forward(x)).
void check_layer(LayerSpec l, Shape in, std::uint64_t seed) {
    std::vector<LayerSpec> ls = {l};
    std::vector<Shape> shapes(2);
    shapes[0] = in;
    switch (ls[0].kind) {
        case LayerKind::Conv1d:
            shapes[1] = {ls[0].out_ch, (in.len - ls[0].kernel) / ls[0].stride + 1};
            break;
        case LayerKind::Relu: shapes[1] = in; break;
        case LayerKind::MaxPool1d: shapes[1] = {in.ch, in.len / ls[0].pool}; break;
        case LayerKind::GlobalAvgPool: shapes[1] = {in.ch, 1}; break;
        case LayerKind::Dense:
            ls[0].in_units = in.size();
            shapes[1] = {ls[0].out_units, 1};
            break;
    }
    Shape out = shapes[1];

    StreamRng rng(seed, "fd/layer");
    std::vector<double> x(static_cast<std::size_t>(shapes[0].size()));
    for (auto& v : x) v = rng.uniform(-1, 1);
    std::vector<double> w(static_cast<std::size_t>(weight_count(ls[0])));
    for (auto& v : w) v = rng.uniform(-0.5, 0.5);
    std::vector<double> gy(static_cast<std::size_t>(out.size()));
    for (auto& v : gy) v = rng.uniform(-1, 1);

    auto loss = [&] {
        std::vector<double> y(static_cast<std::size_t>(out.size()), 0.0);
        layer_forward(ls[0], shapes[0], out, w, x.data(), y.data());
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += gy[i] * y[i];
        return s;
    };

    std::vector<double> gx(x.size(), 0.0), gw(w.size(), 0.0);
    layer_backward(ls[0], shapes[0], out, w, x.data(), gy.data(), gx.data(),
                   gw.empty() ? nullptr : gw.data());

    auto xc = pick_coords(rng, x.size(), 24);
    CHECK(max_grad_rel_err(x, gx, loss, xc) <= 1e-3);
    if (!w.empty()) {
        auto wc = pick_coords(rng, w.size(), 24);
        CHECK(max_grad_rel_err(w, gw, loss, wc) <= 1e-3);
    }
}

}  // namespace

TEST_CASE("shape inference for the reference architectures") {
    auto layers = df_arch(20);
    auto shapes = infer_shapes(layers, 5000);
    CHECK(shapes[1].ch == 32);
    CHECK(shapes[1].len == (5000 - 8) / 4 + 1);
    CHECK(shapes.back().ch == 20);
    CHECK(shapes.back().len == 1);
    auto v = varied_arch(20);
    auto vs = infer_shapes(v, 5000);
    CHECK(vs.back().ch == 20);
    CHECK_THROWS_AS(arch_by_name("nope", 2), NeuralError);
}

TEST_CASE("every layer kind passes finite-difference gradient checks") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        check_layer({.kind = LayerKind::Conv1d, .in_ch = 1, .out_ch = 4, .kernel = 5, .stride = 2},
                    {1, 37}, seed);
        check_layer({.kind = LayerKind::Conv1d, .in_ch = 3, .out_ch = 4, .kernel = 4, .stride = 3},
                    {3, 25}, seed);
        check_layer({.kind = LayerKind::Relu}, {2, 17}, seed);
        check_layer({.kind = LayerKind::MaxPool1d, .pool = 3}, {2, 18}, seed);
        check_layer({.kind = LayerKind::GlobalAvgPool}, {3, 11}, seed);
        check_layer({.kind = LayerKind::Dense, .out_units = 6}, {2, 9}, seed);
    }
}

TEST_CASE("end-to-end feature-distance loss passes finite-difference checks") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Model m = make_model("df", 200, 3, seed);
        StreamRng rng(seed, "fd/e2e");
        std::vector<double> x(200), ft(static_cast<std::size_t>(m.feature_dim()));
        for (auto& v : x) v = rng.uniform(-1, 1);
        for (auto& v : ft) v = rng.uniform(-1, 1);

        auto loss = [&] {
            auto f = extract_features(m, x);
            double s = 0;
            for (std::size_t j = 0; j < f.size(); ++j) s += (f[j] - ft[j]) * (f[j] - ft[j]);
            return s;
        };
        Cache cache = forward_to(m, x.data(), m.feature_layer);
        const auto& f = cache.acts.back();
        std::vector<double> gf(f.size());
        for (std::size_t j = 0; j < f.size(); ++j) gf[j] = 2.0 * (f[j] - ft[j]);
        auto gx = backward_one(m, cache, m.feature_layer, gf);

        auto coords = pick_coords(rng, x.size(), 30);
        CHECK(max_grad_rel_err(x, gx, loss, coords) <= 1e-3);
    }
}

TEST_CASE("cross-entropy weight gradients pass finite-difference checks") {
    Model m = make_model("df", 200, 3, 7);
    StreamRng rng(std::uint64_t{7}, "fd/xent");
    std::vector<double> x(200);
    for (auto& v : x) v = rng.uniform(-1, 1);
    int label = 1;

    auto loss = [&] {
        Cache c = forward_one(m, x.data());
        std::vector<double> g;
        return xent_loss_grad(c.acts.back(), label, g);
    };
    Cache c = forward_one(m, x.data());
    std::vector<double> gtop;
    xent_loss_grad(c.acts.back(), label, gtop);
    std::vector<std::vector<double>> gw(m.weights.size());
    backward_one(m, c, static_cast<int>(m.layers.size()) - 1, gtop, &gw);

    for (std::size_t li = 0; li < m.weights.size(); ++li) {
        if (m.weights[li].empty()) continue;
        auto coords = pick_coords(rng, m.weights[li].size(), 12);
        CHECK(max_grad_rel_err(m.weights[li], gw[li], loss, coords) <= 1e-3);
    }
}

TEST_CASE("softmax is a probability vector") {
    auto p = softmax({1.0, 2.0, 3.0, 1000.0});
    double s = 0;
    for (double v : p) { CHECK(v >= 0); s += v; }
    CHECK(s == doctest::Approx(1.0));
    CHECK(p[3] > 0.99);
}

TEST_CASE("training fits a small separable problem") {
    SynthSpec spec;
    spec.num_sites = 3;
    spec.traces_per_site = 12;
    spec.base_len = 120;
    spec.pad_len = 200;
    spec.flip_noise = 0.02;
    spec.seed = 5;
    Dataset ds = synth_dataset(spec);

    TrainOpts opts;
    opts.epochs = 12;
    opts.seed = 11;
    Model m = train_classifier(ds, "df", opts);
    auto train = collect_inputs(ds, true);
    CHECK(accuracy(m, train.xs, train.labels) >= 0.9);
}

TEST_CASE("training is bit-reproducible") {
    SynthSpec spec;
    spec.num_sites = 2;
    spec.traces_per_site = 8;
    spec.base_len = 80;
    spec.pad_len = 150;
    spec.seed = 9;
    Dataset ds = synth_dataset(spec);
    TrainOpts opts;
    opts.epochs = 4;
    opts.seed = 13;
    Model a = train_classifier(ds, "df", opts);
    Model b = train_classifier(ds, "df", opts);
    CHECK(model_hash(a) == model_hash(b));
}

TEST_CASE("model save/load round trip is bit exact") {
    SynthSpec spec;
    spec.num_sites = 2;
    spec.traces_per_site = 6;
    spec.base_len = 60;
    spec.pad_len = 150;
    Dataset ds = synth_dataset(spec);
    TrainOpts opts;
    opts.epochs = 2;
    Model m = train_classifier(ds, "df", opts);
    save_model(m, "test_model_rt.txt");
    Model back = load_model("test_model_rt.txt");
    CHECK(model_hash(back) == model_hash(m));
    CHECK_THROWS_AS(load_model("test_model_missing.txt"), NeuralError);
    std::remove("test_model_rt.txt");
}

TEST_CASE("divergence is reported with the failing epoch") {
    SynthSpec spec;
    spec.num_sites = 2;
    spec.traces_per_site = 6;
    spec.base_len = 60;
    spec.pad_len = 150;
    Dataset ds = synth_dataset(spec);
    TrainOpts opts;
    opts.epochs = 40;
    opts.lr = 1e6;  // guaranteed blow-up
    CHECK_THROWS_AS(train_classifier(ds, "df", opts), NeuralError);
}
