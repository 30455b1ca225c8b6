#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace clothrl::nn {

inline std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

// Dense row-major tensor with an optional gradient buffer of the same shape.
// T is float at runtime; tests instantiate double for finite-difference work.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        values.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
    bool has_grad() const { return grad.size() == values.size(); }
};

using Tensor = TensorT<float>;

template <typename T>
void check_shape(const TensorT<T>& t, const std::vector<int>& expect, const char* what) {
    if (t.shape != expect) {
        throw std::invalid_argument(std::string(what) + ": expected shape " + shape_str(expect) +
                                    ", got " + shape_str(t.shape));
    }
}

}  // namespace clothrl::nn
