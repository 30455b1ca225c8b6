#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clothrl/nn/tensor.hpp"

namespace clothrl::nn {

// Named view over the parameter tensors a network owns. Layers register their
// tensors under hierarchical names; the optimizer, Polyak update and
// checkpoint code all walk the registry in registration order.
template <typename T>
struct ParamRegistry {
    struct Entry {
        std::string name;
        TensorT<T>* tensor;
    };
    std::vector<Entry> entries;

    void add(const std::string& name, TensorT<T>* tensor) {
        for (const Entry& e : entries) {
            if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
        }
        entries.push_back({name, tensor});
        tensor->ensure_grad();
    }

    void zero_grad() {
        for (Entry& e : entries) e.tensor->zero_grad();
    }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const Entry& e : entries) n += e.tensor->numel();
        return n;
    }

    TensorT<T>* find(const std::string& name) const {
        for (const Entry& e : entries) {
            if (e.name == name) return e.tensor;
        }
        return nullptr;
    }
};

}  // namespace clothrl::nn
