#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "clothrl/nn/registry.hpp"

namespace clothrl::nn {

enum class OptimizerFlavor { Adam, AdamW };

struct OptimizerConfig {
    OptimizerFlavor flavor = OptimizerFlavor::AdamW;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; ignored by the plain Adam flavor
};

// Moments are stored in the parameter precision; per-element arithmetic runs
// in double so float and double instantiations agree to rounding.
template <typename T>
struct OptimizerStateT {
    std::vector<std::vector<T>> m, v;
    std::int64_t step = 0;
};

using OptimizerState = OptimizerStateT<float>;

template <typename T>
void optimizer_step(ParamRegistry<T>& params, OptimizerStateT<T>& state,
                    const OptimizerConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.entries.size());
        state.v.resize(params.entries.size());
        for (std::size_t i = 0; i < params.entries.size(); ++i) {
            state.m[i].assign(params.entries[i].tensor->values.size(), T(0));
            state.v[i].assign(params.entries[i].tensor->values.size(), T(0));
        }
    }
    if (state.m.size() != params.entries.size()) {
        throw std::invalid_argument("optimizer state does not match parameter registry");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.entries.size(); ++pi) {
        TensorT<T>& t = *params.entries[pi].tensor;
        if (!t.has_grad()) throw std::invalid_argument("optimizer_step: missing gradient");
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        if (m.size() != t.values.size()) {
            throw std::invalid_argument("optimizer moment shape mismatch");
        }
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const double g = static_cast<double>(t.grad[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            double update = cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            if (cfg.flavor == OptimizerFlavor::AdamW) {
                update += cfg.lr * cfg.weight_decay * static_cast<double>(t.values[i]);
            }
            t.values[i] = static_cast<T>(static_cast<double>(t.values[i]) - update);
        }
    }
}

}  // namespace clothrl::nn
