#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "wflab/rng.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct NeuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LayerKind { Conv1d, Relu, MaxPool1d, GlobalAvgPool, Dense };

struct LayerSpec {
    LayerKind kind;
    int in_ch = 0, out_ch = 0, kernel = 0, stride = 0;  // conv
    int pool = 0;                                       // maxpool width == stride
    int in_units = 0, out_units = 0;                    // dense
};

struct Shape {
    int ch = 0, len = 0;
    int size() const { return ch * len; }
};

inline int weight_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Conv1d: return l.out_ch * l.in_ch * l.kernel + l.out_ch;
        case LayerKind::Dense: return l.out_units * l.in_units + l.out_units;
        default: return 0;
    }
}

// shapes[0] is the input shape; shapes[i+1] the output of layer i.
// Dense layers are shaped {units, 1}; they consume the flattened input.
inline std::vector<Shape> infer_shapes(std::vector<LayerSpec>& layers, int input_len) {
    std::vector<Shape> shapes;
    shapes.push_back({1, input_len});
    for (auto& l : layers) {
        Shape in = shapes.back();
        Shape out;
        switch (l.kind) {
            case LayerKind::Conv1d:
                if (l.in_ch != in.ch) throw NeuralError("conv1d channel mismatch");
                if (in.len < l.kernel) throw NeuralError("conv1d input shorter than kernel");
                out = {l.out_ch, (in.len - l.kernel) / l.stride + 1};
                break;
            case LayerKind::Relu:
                out = in;
                break;
            case LayerKind::MaxPool1d:
                if (in.len < l.pool) throw NeuralError("maxpool input shorter than window");
                out = {in.ch, in.len / l.pool};
                break;
            case LayerKind::GlobalAvgPool:
                out = {in.ch, 1};
                break;
            case LayerKind::Dense:
                l.in_units = in.size();
                out = {l.out_units, 1};
                break;
        }
        shapes.push_back(out);
    }
    return shapes;
}

struct Model {
    std::string arch_name;
    std::vector<LayerSpec> layers;
    std::vector<std::vector<double>> weights;  // per layer; empty for weightless layers
    std::vector<Shape> shapes;
    int feature_layer = -1;  // layer whose output is the embedding Phi(x)
    int input_len = 0;
    int num_classes = 0;

    int feature_dim() const { return shapes[static_cast<std::size_t>(feature_layer) + 1].size(); }
};

inline std::vector<LayerSpec> df_arch(int num_classes) {
    return {
        {.kind = LayerKind::Conv1d, .in_ch = 1, .out_ch = 32, .kernel = 8, .stride = 4},
        {.kind = LayerKind::Relu},
        {.kind = LayerKind::MaxPool1d, .pool = 4},
        {.kind = LayerKind::Conv1d, .in_ch = 32, .out_ch = 64, .kernel = 8, .stride = 4},
        {.kind = LayerKind::Relu},
        {.kind = LayerKind::GlobalAvgPool},
        {.kind = LayerKind::Dense, .out_units = 128},
        {.kind = LayerKind::Dense, .out_units = num_classes},
    };
}

// Architecture-varied CNN for cross-architecture transfer experiments.
inline std::vector<LayerSpec> varied_arch(int num_classes) {
    return {
        {.kind = LayerKind::Conv1d, .in_ch = 1, .out_ch = 24, .kernel = 12, .stride = 3},
        {.kind = LayerKind::Relu},
        {.kind = LayerKind::MaxPool1d, .pool = 3},
        {.kind = LayerKind::Conv1d, .in_ch = 24, .out_ch = 48, .kernel = 6, .stride = 3},
        {.kind = LayerKind::Relu},
        {.kind = LayerKind::GlobalAvgPool},
        {.kind = LayerKind::Dense, .out_units = 128},
        {.kind = LayerKind::Dense, .out_units = num_classes},
    };
}

inline std::vector<LayerSpec> arch_by_name(const std::string& name, int num_classes) {
    if (name == "df") return df_arch(num_classes);
    if (name == "varied") return varied_arch(num_classes);
    throw NeuralError("unknown architecture: " + name);
}

// Feature layer is the first 128-unit dense layer (the penultimate one).
inline int default_feature_layer(const std::vector<LayerSpec>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].kind == LayerKind::Dense) return static_cast<int>(i);
    throw NeuralError("architecture has no dense layer");
}

inline Model make_model(const std::string& arch_name, int input_len, int num_classes,
                        std::uint64_t seed) {
    Model m;
    m.arch_name = arch_name;
    m.layers = arch_by_name(arch_name, num_classes);
    m.input_len = input_len;
    m.num_classes = num_classes;
    m.shapes = infer_shapes(m.layers, input_len);
    m.feature_layer = default_feature_layer(m.layers);
    m.weights.resize(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        int n = weight_count(m.layers[i]);
        if (n == 0) continue;
        const auto& l = m.layers[i];
        int fan_in = l.kind == LayerKind::Conv1d ? l.in_ch * l.kernel : l.in_units;
        double s = std::sqrt(1.0 / fan_in);
        StreamRng rng(StreamRng::seed_from_u64(seed), "init/" + arch_name + "/" + std::to_string(i));
        auto& w = m.weights[i];
        w.resize(static_cast<std::size_t>(n));
        for (auto& v : w) v = rng.uniform(-s, s);
        // Biases start at zero.
        int nb = l.kind == LayerKind::Conv1d ? l.out_ch : l.out_units;
        for (int j = n - nb; j < n; ++j) w[static_cast<std::size_t>(j)] = 0.0;
    }
    return m;
}

// --- forward / backward ------------------------------------------------------

struct Cache {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[i+1] = layer i output
};

inline void layer_forward(const LayerSpec& l, const Shape& in, const Shape& out,
                          const std::vector<double>& w, const double* x, double* y) {
    switch (l.kind) {
        case LayerKind::Conv1d: {
            const double* bias = w.data() + l.out_ch * l.in_ch * l.kernel;
            for (int o = 0; o < l.out_ch; ++o) {
                for (int i = 0; i < out.len; ++i) {
                    double acc = bias[o];
                    int base = i * l.stride;
                    for (int c = 0; c < l.in_ch; ++c) {
                        const double* xr = x + c * in.len + base;
                        const double* wr = w.data() + (o * l.in_ch + c) * l.kernel;
                        for (int j = 0; j < l.kernel; ++j) acc += wr[j] * xr[j];
                    }
                    y[o * out.len + i] = acc;
                }
            }
            break;
        }
        case LayerKind::Relu:
            for (int i = 0; i < in.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
            break;
        case LayerKind::MaxPool1d:
            for (int c = 0; c < in.ch; ++c) {
                for (int i = 0; i < out.len; ++i) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int j = 0; j < l.pool; ++j)
                        best = std::max(best, x[c * in.len + i * l.pool + j]);
                    y[c * out.len + i] = best;
                }
            }
            break;
        case LayerKind::GlobalAvgPool:
            for (int c = 0; c < in.ch; ++c) {
                double s = 0;
                for (int i = 0; i < in.len; ++i) s += x[c * in.len + i];
                y[c] = s / in.len;
            }
            break;
        case LayerKind::Dense: {
            const double* bias = w.data() + l.out_units * l.in_units;
            for (int o = 0; o < l.out_units; ++o) {
                double acc = bias[o];
                const double* wr = w.data() + o * l.in_units;
                for (int i = 0; i < l.in_units; ++i) acc += wr[i] * x[i];
                y[o] = acc;
            }
            break;
        }
    }
}

// grad_w may be null (no weight gradients wanted); gx must be zero-initialized.
inline void layer_backward(const LayerSpec& l, const Shape& in, const Shape& out,
                           const std::vector<double>& w, const double* x, const double* gy,
                           double* gx, double* grad_w) {
    switch (l.kind) {
        case LayerKind::Conv1d: {
            double* gbias = grad_w ? grad_w + l.out_ch * l.in_ch * l.kernel : nullptr;
            for (int o = 0; o < l.out_ch; ++o) {
                for (int i = 0; i < out.len; ++i) {
                    double g = gy[o * out.len + i];
                    if (g == 0.0) continue;
                    int base = i * l.stride;
                    if (gbias) gbias[o] += g;
                    for (int c = 0; c < l.in_ch; ++c) {
                        const double* xr = x + c * in.len + base;
                        const double* wr = w.data() + (o * l.in_ch + c) * l.kernel;
                        double* gxr = gx + c * in.len + base;
                        double* gwr = grad_w ? grad_w + (o * l.in_ch + c) * l.kernel : nullptr;
                        for (int j = 0; j < l.kernel; ++j) {
                            gxr[j] += g * wr[j];
                            if (gwr) gwr[j] += g * xr[j];
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::Relu:
            for (int i = 0; i < in.size(); ++i) gx[i] = x[i] > 0 ? gy[i] : 0.0;
            break;
        case LayerKind::MaxPool1d:
            for (int c = 0; c < in.ch; ++c) {
                for (int i = 0; i < out.len; ++i) {
                    int arg = 0;
                    double best = -std::numeric_limits<double>::infinity();
                    for (int j = 0; j < l.pool; ++j) {
                        double v = x[c * in.len + i * l.pool + j];
                        if (v > best) { best = v; arg = j; }
                    }
                    gx[c * in.len + i * l.pool + arg] += gy[c * out.len + i];
                }
            }
            break;
        case LayerKind::GlobalAvgPool:
            for (int c = 0; c < in.ch; ++c) {
                double g = gy[c] / in.len;
                for (int i = 0; i < in.len; ++i) gx[c * in.len + i] = g;
            }
            break;
        case LayerKind::Dense: {
            double* gbias = grad_w ? grad_w + l.out_units * l.in_units : nullptr;
            for (int o = 0; o < l.out_units; ++o) {
                double g = gy[o];
                if (gbias) gbias[o] += g;
                const double* wr = w.data() + o * l.in_units;
                double* gwr = grad_w ? grad_w + o * l.in_units : nullptr;
                for (int i = 0; i < l.in_units; ++i) {
                    gx[i] += g * wr[i];
                    if (gwr) gwr[i] += g * x[i];
                }
            }
            break;
        }
    }
}

inline Cache forward_one(const Model& m, const double* x) {
    Cache c;
    c.acts.resize(m.layers.size() + 1);
    c.acts[0].assign(x, x + m.shapes[0].size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        c.acts[i + 1].assign(static_cast<std::size_t>(m.shapes[i + 1].size()), 0.0);
        layer_forward(m.layers[i], m.shapes[i], m.shapes[i + 1], m.weights[i],
                      c.acts[i].data(), c.acts[i + 1].data());
    }
    return c;
}

// Forward only up to and including layer `top` (0-based).
inline Cache forward_to(const Model& m, const double* x, int top) {
    Cache c;
    c.acts.resize(static_cast<std::size_t>(top) + 2);
    c.acts[0].assign(x, x + m.shapes[0].size());
    for (int i = 0; i <= top; ++i) {
        auto ui = static_cast<std::size_t>(i);
        c.acts[ui + 1].assign(static_cast<std::size_t>(m.shapes[ui + 1].size()), 0.0);
        layer_forward(m.layers[ui], m.shapes[ui], m.shapes[ui + 1], m.weights[ui],
                      c.acts[ui].data(), c.acts[ui + 1].data());
    }
    return c;
}

// Backpropagates grad_top (gradient at the output of layer `top`) down to the
// input. If inject_layer >= 0, inject_grad is added to the gradient at that
// layer's output on the way down (used by the orthogonality penalty).
// grad_w, when non-null, must be sized like m.weights and is accumulated into.
// Returns the gradient w.r.t. the input.
inline std::vector<double> backward_one(const Model& m, const Cache& cache, int top,
                                        const std::vector<double>& grad_top,
                                        std::vector<std::vector<double>>* grad_w = nullptr,
                                        int inject_layer = -1,
                                        const std::vector<double>* inject_grad = nullptr) {
    std::vector<double> g = grad_top;
    for (int i = top; i >= 0; --i) {
        auto ui = static_cast<std::size_t>(i);
        if (i == inject_layer && inject_grad) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += (*inject_grad)[j];
        }
        std::vector<double> gx(static_cast<std::size_t>(m.shapes[ui].size()), 0.0);
        double* gw = nullptr;
        if (grad_w && !m.weights[ui].empty()) {
            if ((*grad_w)[ui].size() != m.weights[ui].size())
                (*grad_w)[ui].assign(m.weights[ui].size(), 0.0);
            gw = (*grad_w)[ui].data();
        }
        layer_backward(m.layers[ui], m.shapes[ui], m.shapes[ui + 1], m.weights[ui],
                       cache.acts[ui].data(), g.data(), gx.data(), gw);
        g = std::move(gx);
    }
    return g;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : z) mx = std::max(mx, v);
    std::vector<double> p(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) { p[i] = std::exp(z[i] - mx); s += p[i]; }
    for (auto& v : p) v /= s;
    return p;
}

// Cross-entropy loss and dL/dlogits for one sample.
inline double xent_loss_grad(const std::vector<double>& logits, int label,
                             std::vector<double>& grad_out) {
    auto p = softmax(logits);
    grad_out = p;
    grad_out[static_cast<std::size_t>(label)] -= 1.0;
    double pl = std::max(p[static_cast<std::size_t>(label)], 1e-300);
    return -std::log(pl);
}

inline void trace_to_input(const Trace& t, std::vector<double>& out) {
    out.resize(t.padded.size());
    for (std::size_t i = 0; i < t.padded.size(); ++i) out[i] = static_cast<double>(t.padded[i]);
}

inline int predict(const Model& m, const std::vector<double>& x) {
    Cache c = forward_one(m, x.data());
    const auto& z = c.acts.back();
    int best = 0;
    for (std::size_t i = 1; i < z.size(); ++i)
        if (z[i] > z[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

inline std::vector<double> extract_features(const Model& m, const std::vector<double>& x) {
    Cache c = forward_to(m, x.data(), m.feature_layer);
    return c.acts.back();
}

inline std::vector<double> extract_features(const Model& m, const Trace& t) {
    std::vector<double> x;
    trace_to_input(t, x);
    return extract_features(m, x);
}

// --- training ----------------------------------------------------------------

struct TrainOpts {
    int epochs = 30;
    double lr = 0.01;
    double momentum = 0.9;
    int batch = 32;
    std::uint64_t seed = 0;
    double ortho_lambda = 0.0;       // weight of |cos| penalty against ref model
    const Model* ortho_ref = nullptr;
    // Optional per-sample input substitution (adversarial-patch fine-tuning
    // feeds freshly defended inputs here). Receives (site index, trace index,
    // epoch) and may return an alternative input vector.
    std::function<bool(int, int, int, std::vector<double>&)> substitute;
    std::function<void(int, double, double)> on_epoch;  // (epoch, mean loss, train acc)
};

struct LabeledInputs {
    std::vector<std::vector<double>> xs;
    std::vector<int> labels;
    // (site index within dataset order, index within site) per sample
    std::vector<std::pair<int, int>> origin;
};

inline LabeledInputs collect_inputs(const Dataset& ds, bool train) {
    LabeledInputs out;
    for (std::size_t s = 0; s < ds.websites.size(); ++s) {
        const auto& site = ds.websites[s];
        const auto& ts = ds.traces.at(site);
        const auto& fl = ds.is_train.at(site);
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (fl[i] != train) continue;
            std::vector<double> x;
            trace_to_input(ts[i], x);
            out.xs.push_back(std::move(x));
            out.labels.push_back(static_cast<int>(s));
            out.origin.emplace_back(static_cast<int>(s), static_cast<int>(i));
        }
    }
    return out;
}

inline double accuracy(const Model& m, const std::vector<std::vector<double>>& xs,
                       const std::vector<int>& labels) {
    if (xs.empty()) return 0.0;
    int correct = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : correct)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(xs.size()); ++i) {
        if (predict(m, xs[static_cast<std::size_t>(i)]) == labels[static_cast<std::size_t>(i)])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(xs.size());
}

// SGD with momentum over cross-entropy, optional orthogonality penalty and
// per-sample input substitution. Per-sample gradients are accumulated in
// sample order, so training is bit-reproducible regardless of thread count.
inline void train_sgd(Model& m, const LabeledInputs& data, const TrainOpts& opts) {
    std::size_t n = data.xs.size();
    if (n == 0) throw NeuralError("train_sgd: no training data");

    std::vector<std::vector<double>> velocity(m.weights.size());
    for (std::size_t i = 0; i < m.weights.size(); ++i)
        velocity[i].assign(m.weights[i].size(), 0.0);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        StreamRng shuffle_rng(StreamRng::seed_from_u64(opts.seed),
                              "train/shuffle/" + std::to_string(epoch));
        shuffle_rng.shuffle(order);
        double loss_sum = 0;
        int correct = 0;

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(opts.batch)) {
            std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(opts.batch), n - start);
            std::vector<std::vector<std::vector<double>>> gw(bs);
            std::vector<double> losses(bs, 0.0);
            std::vector<int> hits(bs, 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(bs); ++bi) {
                auto ub = static_cast<std::size_t>(bi);
                std::size_t si = order[start + ub];
                std::vector<double> x = data.xs[si];
                if (opts.substitute) {
                    auto [site, idx] = data.origin[si];
                    opts.substitute(site, idx, epoch, x);
                }
                Cache cache = forward_one(m, x.data());
                const auto& logits = cache.acts.back();
                std::vector<double> gtop;
                double loss = xent_loss_grad(logits, data.labels[si], gtop);

                std::vector<double> inject;
                if (opts.ortho_lambda > 0 && opts.ortho_ref) {
                    auto a = cache.acts[static_cast<std::size_t>(m.feature_layer) + 1];
                    auto b = extract_features(*opts.ortho_ref, x);
                    double ab = 0, aa = 0, bb = 0;
                    for (std::size_t j = 0; j < a.size(); ++j) {
                        ab += a[j] * b[j]; aa += a[j] * a[j]; bb += b[j] * b[j];
                    }
                    double na = std::sqrt(aa) + 1e-12, nb = std::sqrt(bb) + 1e-12;
                    double cosv = ab / (na * nb);
                    loss += opts.ortho_lambda * std::abs(cosv);
                    double sign = cosv >= 0 ? 1.0 : -1.0;
                    inject.resize(a.size());
                    for (std::size_t j = 0; j < a.size(); ++j)
                        inject[j] = opts.ortho_lambda * sign *
                                    (b[j] / (na * nb) - cosv * a[j] / (na * na));
                }

                gw[ub].resize(m.weights.size());
                backward_one(m, cache, static_cast<int>(m.layers.size()) - 1, gtop, &gw[ub],
                             inject.empty() ? -1 : m.feature_layer,
                             inject.empty() ? nullptr : &inject);
                losses[ub] = loss;
                int best = 0;
                for (std::size_t j = 1; j < logits.size(); ++j)
                    if (logits[j] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
                hits[ub] = best == data.labels[si] ? 1 : 0;
            }

            for (std::size_t bi = 0; bi < bs; ++bi) {
                loss_sum += losses[bi];
                correct += hits[bi];
            }
            if (!std::isfinite(loss_sum))
                throw NeuralError("training diverged (non-finite loss) at epoch " +
                                  std::to_string(epoch));

            double scale = 1.0 / static_cast<double>(bs);
            for (std::size_t li = 0; li < m.weights.size(); ++li) {
                if (m.weights[li].empty()) continue;
                auto& v = velocity[li];
                auto& w = m.weights[li];
                for (std::size_t j = 0; j < w.size(); ++j) {
                    double g = 0;
                    for (std::size_t bi = 0; bi < bs; ++bi)
                        if (!gw[bi][li].empty()) g += gw[bi][li][j];
                    v[j] = opts.momentum * v[j] - opts.lr * scale * g;
                    w[j] += v[j];
                }
            }
        }
        if (opts.on_epoch)
            opts.on_epoch(epoch, loss_sum / static_cast<double>(n),
                          static_cast<double>(correct) / static_cast<double>(n));
    }
}

inline Model train_classifier(const Dataset& ds, const std::string& arch_name,
                              const TrainOpts& opts) {
    if (ds.websites.size() < 2) throw NeuralError("train_classifier: need at least 2 sites");
    Model m = make_model(arch_name, ds.pad_len, static_cast<int>(ds.websites.size()), opts.seed);
    LabeledInputs data = collect_inputs(ds, /*train=*/true);
    if (opts.epochs > 0) train_sgd(m, data, opts);
    return m;
}

// Adversarial-patch fine-tuning: each epoch mixes clean and freshly defended
// traces, keeping true labels. defend_fn(site, idx, epoch, x) overwrites x
// with a defended input and returns true, or returns false to keep it clean.
inline Model adv_patch_finetune(Model m, const Dataset& ds, int epochs,
                                std::function<bool(int, int, int, std::vector<double>&)> defend_fn,
                                TrainOpts opts) {
    if (epochs <= 0) return m;
    opts.epochs = epochs;
    opts.substitute = std::move(defend_fn);
    LabeledInputs data = collect_inputs(ds, /*train=*/true);
    train_sgd(m, data, opts);
    return m;
}

inline Model train_orthogonal(const Model& ref, const Dataset& ds, const std::string& arch_name,
                              double lambda, TrainOpts opts) {
    if (ref.feature_dim() != make_model(arch_name, ds.pad_len, 2, 0).feature_dim())
        throw NeuralError("train_orthogonal: feature width mismatch");
    opts.ortho_lambda = lambda;
    opts.ortho_ref = lambda > 0 ? &ref : nullptr;
    return train_classifier(ds, arch_name, opts);
}

// --- checkpoint format --------------------------------------------------------
// Versioned text container: header, layer specs, then weight arrays in layer
// order as hex floats (bit-exact across runs).

inline void save_model(const Model& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw NeuralError("cannot open for write: " + path);
    f << "wflab-model v1\n";
    f << "arch " << m.arch_name << "\n";
    f << "input_len " << m.input_len << "\n";
    f << "num_classes " << m.num_classes << "\n";
    f << "feature_layer " << m.feature_layer << "\n";
    f << "layers " << m.layers.size() << "\n";
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        f << "weights " << i << " " << m.weights[i].size() << "\n";
        char buf[40];
        for (double v : m.weights[i]) {
            std::snprintf(buf, sizeof buf, "%a\n", v);
            f << buf;
        }
    }
}

inline Model load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw NeuralError("cannot open: " + path);
    std::string magic, ver;
    f >> magic >> ver;
    if (magic != "wflab-model" || ver != "v1") throw NeuralError("bad model file: " + path);
    std::string key, arch;
    int input_len, num_classes, feature_layer;
    std::size_t nlayers;
    f >> key >> arch >> key >> input_len >> key >> num_classes >> key >> feature_layer >> key >>
        nlayers;
    Model m = make_model(arch, input_len, num_classes, 0);
    if (m.layers.size() != nlayers || m.feature_layer != feature_layer)
        throw NeuralError("model file layer mismatch: " + path);
    for (std::size_t i = 0; i < nlayers; ++i) {
        std::size_t li, nw;
        f >> key >> li >> nw;
        if (li != i || nw != m.weights[i].size()) throw NeuralError("model file weight mismatch");
        for (auto& v : m.weights[i]) {
            std::string tok;
            f >> tok;
            v = std::strtod(tok.c_str(), nullptr);
        }
    }
    if (!f) throw NeuralError("truncated model file: " + path);
    return m;
}

inline std::string model_hash(const Model& m) {
    Sha256 h;
    h.update(m.arch_name);
    for (const auto& w : m.weights)
        if (!w.empty()) h.update(w.data(), w.size() * sizeof(double));
    return hex_digest(h.finish());
}

}  // namespace wflab
