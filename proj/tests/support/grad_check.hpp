#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "clothrl/nn/layers.hpp"
#include "clothrl/util/rng.hpp"

// Central finite-difference validation of every layer's reverse-mode
// gradients, run in double precision so the h = 1e-3 stencil is far from
// rounding noise.
namespace gradcheck {

using clothrl::Rng;
using clothrl::nn::TensorT;

struct Problem {
    std::vector<TensorT<double>*> tensors;
    std::function<TensorT<double>()> forward;
    std::function<void(const TensorT<double>&)> backward;
};

inline double loss_of(const TensorT<double>& y, const std::vector<double>& r) {
    double l = 0.0;
    for (std::size_t i = 0; i < y.values.size(); ++i) l += y.values[i] * r[i];
    return l;
}

// Checks every element of every tensor against (L(v+h) - L(v-h)) / 2h and
// returns the worst relative error.
inline double check_problem(Problem& p, Rng& rng, double h = 1e-3) {
    TensorT<double> y0 = p.forward();
    std::vector<double> r(y0.values.size());
    for (double& v : r) v = rng.uniform(-1.0, 1.0);
    TensorT<double> dy(y0.shape);
    dy.values = r;
    for (auto* t : p.tensors) {
        t->ensure_grad();
        t->zero_grad();
    }
    p.backward(dy);

    double worst = 0.0;
    for (auto* t : p.tensors) {
        for (std::size_t i = 0; i < t->values.size(); ++i) {
            const double saved = t->values[i];
            t->values[i] = saved + h;
            const double lp = loss_of(p.forward(), r);
            t->values[i] = saved - h;
            const double lm = loss_of(p.forward(), r);
            t->values[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = t->grad[i];
            const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

inline void randomize(TensorT<double>& t, Rng& rng, double scale = 1.0) {
    for (double& v : t.values) v = rng.uniform(-scale, scale);
}

inline double check_linear(Rng& rng) {
    const int in = 2 + static_cast<int>(rng.uniform_index(6));
    const int out = 1 + static_cast<int>(rng.uniform_index(6));
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    clothrl::nn::LinearT<double> layer(in, out, rng);
    TensorT<double> x({n, in});
    randomize(x, rng);
    Problem p;
    p.tensors = {&layer.w, &layer.b, &x};
    p.forward = [&] { return layer.forward(x); };
    p.backward = [&](const TensorT<double>& dy) { x.grad = layer.backward(x, dy).values; };
    return check_problem(p, rng);
}

inline double check_conv2d(Rng& rng) {
    const int in_ch = 1 + static_cast<int>(rng.uniform_index(3));
    const int out_ch = 1 + static_cast<int>(rng.uniform_index(3));
    const int k = 1 + static_cast<int>(rng.uniform_index(4));
    const int stride = 1 + static_cast<int>(rng.uniform_index(2));
    const int pad = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k)));
    const int h = k + static_cast<int>(rng.uniform_index(4));
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    clothrl::nn::Conv2dT<double> layer(in_ch, out_ch, k, stride, pad, rng);
    TensorT<double> x({n, in_ch, h, h});
    randomize(x, rng);
    Problem p;
    p.tensors = {&layer.w, &layer.b, &x};
    p.forward = [&] { return layer.forward(x); };
    p.backward = [&](const TensorT<double>& dy) { x.grad = layer.backward(x, dy).values; };
    return check_problem(p, rng);
}

inline double check_tconv2d(Rng& rng) {
    const int in_ch = 1 + static_cast<int>(rng.uniform_index(3));
    const int out_ch = 1 + static_cast<int>(rng.uniform_index(3));
    const int k = 2 + static_cast<int>(rng.uniform_index(3));
    const int stride = 1 + static_cast<int>(rng.uniform_index(2));
    const int pad = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k - 1)));
    const int h = 2 + static_cast<int>(rng.uniform_index(4));
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    clothrl::nn::TConv2dT<double> layer(in_ch, out_ch, k, stride, pad, rng);
    TensorT<double> x({n, in_ch, h, h});
    randomize(x, rng);
    Problem p;
    p.tensors = {&layer.w, &layer.b, &x};
    p.forward = [&] { return layer.forward(x); };
    p.backward = [&](const TensorT<double>& dy) { x.grad = layer.backward(x, dy).values; };
    return check_problem(p, rng);
}

inline double check_layernorm(Rng& rng) {
    const int d = 2 + static_cast<int>(rng.uniform_index(12));
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    clothrl::nn::LayerNormT<double> layer(d);
    randomize(layer.gain, rng);
    randomize(layer.bias, rng);
    TensorT<double> x({n, d});
    randomize(x, rng, 2.0);
    Problem p;
    p.tensors = {&layer.gain, &layer.bias, &x};
    p.forward = [&] { return layer.forward(x); };
    p.backward = [&](const TensorT<double>& dy) { x.grad = layer.backward(x, dy).values; };
    return check_problem(p, rng);
}

inline double check_layernorm2d(Rng& rng) {
    const int c = 2 + static_cast<int>(rng.uniform_index(6));
    const int h = 1 + static_cast<int>(rng.uniform_index(4));
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    clothrl::nn::LayerNorm2dT<double> layer(c);
    randomize(layer.gain, rng);
    randomize(layer.bias, rng);
    TensorT<double> x({n, c, h, h});
    randomize(x, rng, 2.0);
    Problem p;
    p.tensors = {&layer.gain, &layer.bias, &x};
    p.forward = [&] { return layer.forward(x); };
    p.backward = [&](const TensorT<double>& dy) { x.grad = layer.backward(x, dy).values; };
    return check_problem(p, rng);
}

inline double check_gelu(Rng& rng) {
    const int d = 1 + static_cast<int>(rng.uniform_index(16));
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    TensorT<double> x({n, d});
    randomize(x, rng, 3.0);
    Problem p;
    p.tensors = {&x};
    p.forward = [&] { return clothrl::nn::gelu(x); };
    p.backward = [&](const TensorT<double>& dy) {
        x.grad = clothrl::nn::gelu_backward(x, dy).values;
    };
    return check_problem(p, rng);
}

inline double check_concat(Rng& rng) {
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    const int da = 1 + static_cast<int>(rng.uniform_index(5));
    const int db = 1 + static_cast<int>(rng.uniform_index(5));
    TensorT<double> a({n, da}), b({n, db});
    randomize(a, rng);
    randomize(b, rng);
    Problem p;
    p.tensors = {&a, &b};
    p.forward = [&] { return clothrl::nn::concat(a, b); };
    p.backward = [&](const TensorT<double>& dy) {
        auto [da_t, db_t] = clothrl::nn::concat_backward(dy, a.shape, b.shape);
        a.grad = da_t.values;
        b.grad = db_t.values;
    };
    return check_problem(p, rng);
}

// Runs `cases` randomized checks per layer type; returns the worst relative
// error observed for each.
inline std::map<std::string, double> run_all(int cases, std::uint64_t seed = 20240901) {
    std::map<std::string, double> worst;
    const std::vector<std::pair<std::string, double (*)(Rng&)>> checks = {
        {"Linear", check_linear},     {"Conv2d", check_conv2d},
        {"TransposedConv2d", check_tconv2d}, {"LayerNorm", check_layernorm},
        {"LayerNorm2d", check_layernorm2d},  {"Gelu", check_gelu},
        {"Concat", check_concat},
    };
    for (const auto& [name, fn] : checks) {
        Rng rng(clothrl::derive_seed(seed, std::hash<std::string>{}(name)));
        double w = 0.0;
        for (int i = 0; i < cases; ++i) w = std::max(w, fn(rng));
        worst[name] = w;
    }
    return worst;
}

}  // namespace gradcheck
