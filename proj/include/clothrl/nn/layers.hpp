#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "clothrl/nn/registry.hpp"
#include "clothrl/nn/tensor.hpp"
#include "clothrl/util/parallel.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// Batch gradients are reduced in fixed-size chunks, summed in chunk order, so
// results do not depend on the worker count.
inline constexpr int kGradChunk = 32;

namespace detail {

template <typename T>
T he_uniform_bound(int fan_in) {
    return static_cast<T>(std::sqrt(6.0 / fan_in));
}

template <typename T>
void fill_uniform(TensorT<T>& t, T bound, Rng& rng) {
    for (T& v : t.values) v = static_cast<T>(rng.uniform(-double(bound), double(bound)));
}

// Gathers a padded (C, H, W) plane into columns of shape (C*k*k, oh*ow).
template <typename T>
void im2col(const T* x, int ch, int h, int w, int k, int stride, int pad, int oh, int ow, T* col) {
    const int pcols = oh * ow;
    for (int c = 0; c < ch; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = col + ((c * k + ki) * k + kj) * pcols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        row[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                ? x[(c * h + iy) * w + ix]
                                                : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-adds columns back onto the (C, H, W) plane; inverse layout of im2col.
template <typename T>
void col2im(const T* col, int ch, int h, int w, int k, int stride, int pad, int oh, int ow, T* x) {
    const int pcols = oh * ow;
    for (int c = 0; c < ch; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = col + ((c * k + ki) * k + kj) * pcols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        if (ix < 0 || ix >= w) continue;
                        x[(c * h + iy) * w + ix] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

// Runs fn(chunk_index, begin, end) in parallel, then reduce(chunk_index) for
// every chunk in ascending order on the calling thread.
template <typename Fn, typename Reduce>
void chunked_batch(int n, Fn&& fn, Reduce&& reduce) {
    const int chunks = (n + kGradChunk - 1) / kGradChunk;
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t ci) {
        const int begin = static_cast<int>(ci) * kGradChunk;
        fn(static_cast<int>(ci), begin, std::min(begin + kGradChunk, n));
    });
    for (int ci = 0; ci < chunks; ++ci) reduce(ci);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// GELU (tanh approximation)

template <typename T>
T gelu_scalar(T x) {
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T inner = c * (x + static_cast<T>(0.044715) * x * x * x);
    return static_cast<T>(0.5) * x * (T(1) + std::tanh(inner));
}

template <typename T>
T gelu_grad_scalar(T x) {
    const T c = static_cast<T>(0.7978845608028654);
    const T a = static_cast<T>(0.044715);
    const T inner = c * (x + a * x * x * x);
    const T th = std::tanh(inner);
    const T sech2 = T(1) - th * th;
    return static_cast<T>(0.5) * (T(1) + th) +
           static_cast<T>(0.5) * x * sech2 * c * (T(1) + T(3) * a * x * x);
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.values.size(); ++i) y.values[i] = gelu_scalar(x.values[i]);
    return y;
}

template <typename T>
TensorT<T> gelu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    check_shape(dy, x.shape, "gelu_backward");
    TensorT<T> dx(x.shape);
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        dx.values[i] = dy.values[i] * gelu_grad_scalar(x.values[i]);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Concat along axis 1 (features or channels)

template <typename T>
TensorT<T> concat(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != b.rank() || a.rank() < 2 || a.dim(0) != b.dim(0)) {
        throw std::invalid_argument("concat: incompatible shapes " + shape_str(a.shape) + " and " +
                                    shape_str(b.shape));
    }
    for (int i = 2; i < a.rank(); ++i) {
        if (a.dim(i) != b.dim(i)) {
            throw std::invalid_argument("concat: trailing dims differ for " + shape_str(a.shape) +
                                        " and " + shape_str(b.shape));
        }
    }
    std::vector<int> shape = a.shape;
    shape[1] = a.dim(1) + b.dim(1);
    TensorT<T> y(shape);
    const std::int64_t n = a.dim(0);
    const std::int64_t sa = a.numel() / n;
    const std::int64_t sb = b.numel() / n;
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(a.values.data() + i * sa, sa, y.values.data() + i * (sa + sb));
        std::copy_n(b.values.data() + i * sb, sb, y.values.data() + i * (sa + sb) + sa);
    }
    return y;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_backward(const TensorT<T>& dy,
                                                  const std::vector<int>& shape_a,
                                                  const std::vector<int>& shape_b) {
    TensorT<T> da(shape_a), db(shape_b);
    const std::int64_t n = da.dim(0);
    const std::int64_t sa = da.numel() / n;
    const std::int64_t sb = db.numel() / n;
    if (dy.numel() != da.numel() + db.numel() || dy.dim(0) != da.dim(0)) {
        throw std::invalid_argument("concat_backward: shape mismatch");
    }
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(dy.values.data() + i * (sa + sb), sa, da.values.data() + i * sa);
        std::copy_n(dy.values.data() + i * (sa + sb) + sa, sb, db.values.data() + i * sb);
    }
    return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
struct LinearT {
    int in = 0, out = 0;
    TensorT<T> w;  // (out, in)
    TensorT<T> b;  // (out)

    LinearT() = default;
    LinearT(int in_features, int out_features, Rng& rng)
        : in(in_features), out(out_features), w({out_features, in_features}), b({out_features}) {
        detail::fill_uniform(w, detail::he_uniform_bound<T>(in), rng);
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".w", &w);
        reg.add(prefix + ".b", &b);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.rank() != 2 || x.dim(1) != in) {
            throw std::invalid_argument("Linear: expected (N, " + std::to_string(in) + "), got " +
                                        shape_str(x.shape));
        }
        const int n = x.dim(0);
        TensorT<T> y({n, out});
        CMapRM<T> xm(x.values.data(), n, in);
        CMapRM<T> wm(w.values.data(), out, in);
        MapRM<T> ym(y.values.data(), n, out);
        ym.noalias() = xm * wm.transpose();
        ym.rowwise() += Eigen::Map<const Eigen::RowVector<T, Eigen::Dynamic>>(b.values.data(), out);
        return y;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        check_shape(dy, {x.dim(0), out}, "Linear backward");
        w.ensure_grad();
        b.ensure_grad();
        const int n = x.dim(0);
        TensorT<T> dx({n, in});
        CMapRM<T> xm(x.values.data(), n, in);
        CMapRM<T> wm(w.values.data(), out, in);
        CMapRM<T> dym(dy.values.data(), n, out);
        MapRM<T> dxm(dx.values.data(), n, in);
        dxm.noalias() = dym * wm;
        MapRM<T> dwm(w.grad.data(), out, in);
        dwm.noalias() += dym.transpose() * xm;
        Eigen::Map<Eigen::RowVector<T, Eigen::Dynamic>>(b.grad.data(), out) +=
            dym.colwise().sum();
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
struct Conv2dT {
    int in_ch = 0, out_ch = 0, kernel = 1, stride = 1, padding = 0;
    TensorT<T> w;  // (out_ch, in_ch, k, k)
    TensorT<T> b;  // (out_ch)

    Conv2dT() = default;
    Conv2dT(int in_channels, int out_channels, int k, int s, int p, Rng& rng)
        : in_ch(in_channels),
          out_ch(out_channels),
          kernel(k),
          stride(s),
          padding(p),
          w({out_channels, in_channels, k, k}),
          b({out_channels}) {
        if (k <= 0 || s <= 0 || p < 0) throw std::invalid_argument("Conv2d: bad geometry");
        detail::fill_uniform(w, detail::he_uniform_bound<T>(in_ch * k * k), rng);
    }

    static int out_size(int in, int kernel, int stride, int padding) {
        if (kernel > in + 2 * padding) {
            throw std::invalid_argument("Conv2d: kernel exceeds padded input size");
        }
        return (in + 2 * padding - kernel) / stride + 1;
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".w", &w);
        reg.add(prefix + ".b", &b);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.rank() != 4 || x.dim(1) != in_ch) {
            throw std::invalid_argument("Conv2d: expected (N, " + std::to_string(in_ch) +
                                        ", H, W), got " + shape_str(x.shape));
        }
        const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const int oh = out_size(h, kernel, stride, padding);
        const int ow = out_size(wd, kernel, stride, padding);
        const int kk = in_ch * kernel * kernel;
        const int pcols = oh * ow;
        TensorT<T> y({n, out_ch, oh, ow});
        CMapRM<T> wm(w.values.data(), out_ch, kk);
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t ni) {
            std::vector<T> col(static_cast<std::size_t>(kk) * pcols);
            detail::im2col(x.values.data() + ni * x.numel() / n, in_ch, h, wd, kernel, stride,
                           padding, oh, ow, col.data());
            CMapRM<T> cm(col.data(), kk, pcols);
            MapRM<T> ym(y.values.data() + ni * y.numel() / n, out_ch, pcols);
            ym.noalias() = wm * cm;
            for (int c = 0; c < out_ch; ++c) ym.row(c).array() += b.values[c];
        });
        return y;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const int oh = out_size(h, kernel, stride, padding);
        const int ow = out_size(wd, kernel, stride, padding);
        check_shape(dy, {n, out_ch, oh, ow}, "Conv2d backward");
        w.ensure_grad();
        b.ensure_grad();
        const int kk = in_ch * kernel * kernel;
        const int pcols = oh * ow;
        TensorT<T> dx(x.shape);
        CMapRM<T> wm(w.values.data(), out_ch, kk);

        const int chunks = (n + kGradChunk - 1) / kGradChunk;
        std::vector<std::vector<T>> dw_part(chunks), db_part(chunks);
        detail::chunked_batch(
            n,
            [&](int ci, int begin, int end) {
                auto& dwp = dw_part[ci];
                auto& dbp = db_part[ci];
                dwp.assign(w.values.size(), T(0));
                dbp.assign(b.values.size(), T(0));
                MapRM<T> dwm(dwp.data(), out_ch, kk);
                std::vector<T> col(static_cast<std::size_t>(kk) * pcols);
                for (int ni = begin; ni < end; ++ni) {
                    const T* xp = x.values.data() + ni * x.numel() / n;
                    const T* dyp = dy.values.data() + ni * dy.numel() / n;
                    detail::im2col(xp, in_ch, h, wd, kernel, stride, padding, oh, ow, col.data());
                    CMapRM<T> cm(col.data(), kk, pcols);
                    CMapRM<T> dym(dyp, out_ch, pcols);
                    dwm.noalias() += dym * cm.transpose();
                    for (int c = 0; c < out_ch; ++c) {
                        dbp[c] += dym.row(c).sum();
                    }
                    // dcol = W^T * dy, scattered back to the input plane.
                    MatRM<T> dcol = wm.transpose() * dym;
                    detail::col2im(dcol.data(), in_ch, h, wd, kernel, stride, padding, oh, ow,
                                   dx.values.data() + ni * dx.numel() / n);
                }
            },
            [&](int ci) {
                for (std::size_t i = 0; i < w.grad.size(); ++i) w.grad[i] += dw_part[ci][i];
                for (std::size_t i = 0; i < b.grad.size(); ++i) b.grad[i] += db_part[ci][i];
            });
        return dx;
    }
};

// Direct nested-loop convolution, the reference implementation the im2col path
// is validated against.
template <typename T>
TensorT<T> conv2d_reference(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int stride, int padding) {
    const int n = x.dim(0), in_ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int out_ch = w.dim(0), k = w.dim(2);
    const int oh = Conv2dT<T>::out_size(h, k, stride, padding);
    const int ow = Conv2dT<T>::out_size(wd, k, stride, padding);
    TensorT<T> y({n, out_ch, oh, ow});
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < out_ch; ++co) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = b.values[co];
                    for (int ci = 0; ci < in_ch; ++ci) {
                        for (int ki = 0; ki < k; ++ki) {
                            const int iy = oy * stride + ki - padding;
                            if (iy < 0 || iy >= h) continue;
                            for (int kj = 0; kj < k; ++kj) {
                                const int ix = ox * stride + kj - padding;
                                if (ix < 0 || ix >= wd) continue;
                                acc += w.values[((co * in_ch + ci) * k + ki) * k + kj] *
                                       x.values[((ni * in_ch + ci) * h + iy) * wd + ix];
                            }
                        }
                    }
                    y.values[((ni * out_ch + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// TransposedConv2d

template <typename T>
struct TConv2dT {
    int in_ch = 0, out_ch = 0, kernel = 1, stride = 1, padding = 0;
    TensorT<T> w;  // (in_ch, out_ch, k, k)
    TensorT<T> b;  // (out_ch)

    TConv2dT() = default;
    TConv2dT(int in_channels, int out_channels, int k, int s, int p, Rng& rng)
        : in_ch(in_channels),
          out_ch(out_channels),
          kernel(k),
          stride(s),
          padding(p),
          w({in_channels, out_channels, k, k}),
          b({out_channels}) {
        if (k <= 0 || s <= 0 || p < 0) throw std::invalid_argument("TConv2d: bad geometry");
        detail::fill_uniform(w, detail::he_uniform_bound<T>(in_ch * k * k), rng);
    }

    static int out_size(int in, int kernel, int stride, int padding) {
        const int out = (in - 1) * stride - 2 * padding + kernel;
        if (out <= 0) throw std::invalid_argument("TConv2d: non-positive output size");
        return out;
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".w", &w);
        reg.add(prefix + ".b", &b);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.rank() != 4 || x.dim(1) != in_ch) {
            throw std::invalid_argument("TConv2d: expected (N, " + std::to_string(in_ch) +
                                        ", H, W), got " + shape_str(x.shape));
        }
        const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const int oh = out_size(h, kernel, stride, padding);
        const int ow = out_size(wd, kernel, stride, padding);
        const int kk = out_ch * kernel * kernel;
        const int pcols = h * wd;
        TensorT<T> y({n, out_ch, oh, ow});
        CMapRM<T> wm(w.values.data(), in_ch, kk);
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t ni) {
            CMapRM<T> xm(x.values.data() + ni * x.numel() / n, in_ch, pcols);
            MatRM<T> col = wm.transpose() * xm;  // (out_ch*k*k, h*w)
            T* yp = y.values.data() + ni * y.numel() / n;
            detail::col2im(col.data(), out_ch, oh, ow, kernel, stride, padding, h, wd, yp);
            for (int c = 0; c < out_ch; ++c) {
                T* plane = yp + static_cast<std::size_t>(c) * oh * ow;
                for (int i = 0; i < oh * ow; ++i) plane[i] += b.values[c];
            }
        });
        return y;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const int oh = out_size(h, kernel, stride, padding);
        const int ow = out_size(wd, kernel, stride, padding);
        check_shape(dy, {n, out_ch, oh, ow}, "TConv2d backward");
        w.ensure_grad();
        b.ensure_grad();
        const int kk = out_ch * kernel * kernel;
        const int pcols = h * wd;
        TensorT<T> dx(x.shape);
        CMapRM<T> wm(w.values.data(), in_ch, kk);

        const int chunks = (n + kGradChunk - 1) / kGradChunk;
        std::vector<std::vector<T>> dw_part(chunks), db_part(chunks);
        detail::chunked_batch(
            n,
            [&](int ci, int begin, int end) {
                auto& dwp = dw_part[ci];
                auto& dbp = db_part[ci];
                dwp.assign(w.values.size(), T(0));
                dbp.assign(b.values.size(), T(0));
                MapRM<T> dwm(dwp.data(), in_ch, kk);
                std::vector<T> col(static_cast<std::size_t>(kk) * pcols);
                for (int ni = begin; ni < end; ++ni) {
                    const T* dyp = dy.values.data() + ni * dy.numel() / n;
                    detail::im2col(dyp, out_ch, oh, ow, kernel, stride, padding, h, wd, col.data());
                    CMapRM<T> cm(col.data(), kk, pcols);
                    CMapRM<T> xm(x.values.data() + ni * x.numel() / n, in_ch, pcols);
                    MapRM<T> dxm(dx.values.data() + ni * dx.numel() / n, in_ch, pcols);
                    dxm.noalias() = wm * cm;
                    dwm.noalias() += xm * cm.transpose();
                    for (int c = 0; c < out_ch; ++c) {
                        const T* plane = dyp + static_cast<std::size_t>(c) * oh * ow;
                        T acc = T(0);
                        for (int i = 0; i < oh * ow; ++i) acc += plane[i];
                        dbp[c] += acc;
                    }
                }
            },
            [&](int ci) {
                for (std::size_t i = 0; i < w.grad.size(); ++i) w.grad[i] += dw_part[ci][i];
                for (std::size_t i = 0; i < b.grad.size(); ++i) b.grad[i] += db_part[ci][i];
            });
        return dx;
    }
};

// ---------------------------------------------------------------------------
// LayerNorm over the trailing feature axis of (N, D) tensors

template <typename T>
struct LayerNormT {
    int dim = 0;
    T eps = static_cast<T>(1e-5);
    TensorT<T> gain;  // (D)
    TensorT<T> bias;  // (D)

    LayerNormT() = default;
    explicit LayerNormT(int d) : dim(d), gain({d}), bias({d}) {
        std::fill(gain.values.begin(), gain.values.end(), T(1));
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".g", &gain);
        reg.add(prefix + ".b", &bias);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.rank() != 2 || x.dim(1) != dim) {
            throw std::invalid_argument("LayerNorm: expected (N, " + std::to_string(dim) +
                                        "), got " + shape_str(x.shape));
        }
        const int n = x.dim(0);
        TensorT<T> y(x.shape);
        for (int i = 0; i < n; ++i) {
            const T* xr = x.values.data() + static_cast<std::size_t>(i) * dim;
            T* yr = y.values.data() + static_cast<std::size_t>(i) * dim;
            T mean = T(0);
            for (int j = 0; j < dim; ++j) mean += xr[j];
            mean /= dim;
            T var = T(0);
            for (int j = 0; j < dim; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= dim;
            const T inv = T(1) / std::sqrt(var + eps);
            for (int j = 0; j < dim; ++j) {
                yr[j] = gain.values[j] * (xr[j] - mean) * inv + bias.values[j];
            }
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        check_shape(dy, x.shape, "LayerNorm backward");
        gain.ensure_grad();
        bias.ensure_grad();
        const int n = x.dim(0);
        TensorT<T> dx(x.shape);
        for (int i = 0; i < n; ++i) {
            const T* xr = x.values.data() + static_cast<std::size_t>(i) * dim;
            const T* dyr = dy.values.data() + static_cast<std::size_t>(i) * dim;
            T* dxr = dx.values.data() + static_cast<std::size_t>(i) * dim;
            T mean = T(0);
            for (int j = 0; j < dim; ++j) mean += xr[j];
            mean /= dim;
            T var = T(0);
            for (int j = 0; j < dim; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= dim;
            const T inv = T(1) / std::sqrt(var + eps);
            T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
            for (int j = 0; j < dim; ++j) {
                const T xhat = (xr[j] - mean) * inv;
                const T dxhat = dyr[j] * gain.values[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                gain.grad[j] += dyr[j] * xhat;
                bias.grad[j] += dyr[j];
            }
            for (int j = 0; j < dim; ++j) {
                const T xhat = (xr[j] - mean) * inv;
                const T dxhat = dyr[j] * gain.values[j];
                dxr[j] = inv * (dxhat - sum_dxhat / dim - xhat * sum_dxhat_xhat / dim);
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// LayerNorm across channels at every spatial position of (N, C, H, W) tensors

template <typename T>
struct LayerNorm2dT {
    int channels = 0;
    T eps = static_cast<T>(1e-5);
    TensorT<T> gain;  // (C)
    TensorT<T> bias;  // (C)

    LayerNorm2dT() = default;
    explicit LayerNorm2dT(int c) : channels(c), gain({c}), bias({c}) {
        std::fill(gain.values.begin(), gain.values.end(), T(1));
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".g", &gain);
        reg.add(prefix + ".b", &bias);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.rank() != 4 || x.dim(1) != channels) {
            throw std::invalid_argument("LayerNorm2d: expected (N, " + std::to_string(channels) +
                                        ", H, W), got " + shape_str(x.shape));
        }
        const int n = x.dim(0), hw = x.dim(2) * x.dim(3);
        TensorT<T> y(x.shape);
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t ni) {
            const T* xs = x.values.data() + ni * static_cast<std::size_t>(channels) * hw;
            T* ys = y.values.data() + ni * static_cast<std::size_t>(channels) * hw;
            for (int p = 0; p < hw; ++p) {
                T mean = T(0);
                for (int c = 0; c < channels; ++c) mean += xs[c * hw + p];
                mean /= channels;
                T var = T(0);
                for (int c = 0; c < channels; ++c) {
                    const T d = xs[c * hw + p] - mean;
                    var += d * d;
                }
                var /= channels;
                const T inv = T(1) / std::sqrt(var + eps);
                for (int c = 0; c < channels; ++c) {
                    ys[c * hw + p] =
                        gain.values[c] * (xs[c * hw + p] - mean) * inv + bias.values[c];
                }
            }
        });
        return y;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        check_shape(dy, x.shape, "LayerNorm2d backward");
        gain.ensure_grad();
        bias.ensure_grad();
        const int n = x.dim(0), hw = x.dim(2) * x.dim(3);
        TensorT<T> dx(x.shape);
        const int chunks = (n + kGradChunk - 1) / kGradChunk;
        std::vector<std::vector<T>> dg_part(chunks), db_part(chunks);
        detail::chunked_batch(
            n,
            [&](int ci, int begin, int end) {
                auto& dgp = dg_part[ci];
                auto& dbp = db_part[ci];
                dgp.assign(gain.values.size(), T(0));
                dbp.assign(bias.values.size(), T(0));
                for (int ni = begin; ni < end; ++ni) {
                    const T* xs = x.values.data() + static_cast<std::size_t>(ni) * channels * hw;
                    const T* dys = dy.values.data() + static_cast<std::size_t>(ni) * channels * hw;
                    T* dxs = dx.values.data() + static_cast<std::size_t>(ni) * channels * hw;
                    for (int p = 0; p < hw; ++p) {
                        T mean = T(0);
                        for (int c = 0; c < channels; ++c) mean += xs[c * hw + p];
                        mean /= channels;
                        T var = T(0);
                        for (int c = 0; c < channels; ++c) {
                            const T d = xs[c * hw + p] - mean;
                            var += d * d;
                        }
                        var /= channels;
                        const T inv = T(1) / std::sqrt(var + eps);
                        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                        for (int c = 0; c < channels; ++c) {
                            const T xhat = (xs[c * hw + p] - mean) * inv;
                            const T dxhat = dys[c * hw + p] * gain.values[c];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                            dgp[c] += dys[c * hw + p] * xhat;
                            dbp[c] += dys[c * hw + p];
                        }
                        for (int c = 0; c < channels; ++c) {
                            const T xhat = (xs[c * hw + p] - mean) * inv;
                            const T dxhat = dys[c * hw + p] * gain.values[c];
                            dxs[c * hw + p] = inv * (dxhat - sum_dxhat / channels -
                                                     xhat * sum_dxhat_xhat / channels);
                        }
                    }
                }
            },
            [&](int ci) {
                for (std::size_t i = 0; i < gain.grad.size(); ++i) gain.grad[i] += dg_part[ci][i];
                for (std::size_t i = 0; i < bias.grad.size(); ++i) bias.grad[i] += db_part[ci][i];
            });
        return dx;
    }
};

}  // namespace clothrl::nn
