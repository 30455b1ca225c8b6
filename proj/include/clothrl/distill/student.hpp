#pragma once

#include <cstdint>

#include "clothrl/nn/layers.hpp"
#include "clothrl/nn/registry.hpp"
#include "clothrl/nn/tensor.hpp"

namespace clothrl::distill {

struct StudentConfig {
    int height = 128;
    int width = 128;

    void validate() const;
    bool operator==(const StudentConfig&) const = default;
};

// Encoder-decoder with skip connections: three levels at 16/32/64 channels,
// a bottleneck, and a 1x1 head with a pick channel and a place channel at
// input resolution. LayerNorm over channels and GELU after every hidden
// convolution.
struct StudentNet {
    StudentConfig cfg;

    nn::Conv2dT<float> enc1;  // 3 -> 16
    nn::LayerNorm2dT<float> ln1;
    nn::Conv2dT<float> enc2;  // 16 -> 32, stride 2
    nn::LayerNorm2dT<float> ln2;
    nn::Conv2dT<float> enc3;  // 32 -> 64, stride 2
    nn::LayerNorm2dT<float> ln3;
    nn::Conv2dT<float> mid;  // 64 -> 64
    nn::LayerNorm2dT<float> lnm;
    nn::TConv2dT<float> up1;   // 64 -> 32, stride 2
    nn::Conv2dT<float> dec1;   // 64 -> 32 after the skip concat
    nn::LayerNorm2dT<float> lnd1;
    nn::TConv2dT<float> up2;   // 32 -> 16, stride 2
    nn::Conv2dT<float> dec2;   // 32 -> 16 after the skip concat
    nn::LayerNorm2dT<float> lnd2;
    nn::Conv2dT<float> head;   // 16 -> 2, 1x1

    nn::ParamRegistry<float> params;

    StudentNet(const StudentConfig& config, std::uint64_t seed);
    StudentNet(const StudentNet&) = delete;
    StudentNet& operator=(const StudentNet&) = delete;

    struct Cache {
        nn::Tensor x, a1, n1, g1, a2, n2, g2, a3, n3, g3;
        nn::Tensor m, nm, gm;
        nn::Tensor u1, cat1, d1, nd1, gd1, u2, cat2, d2, nd2, gd2;
    };

    // (N, 3, H, W) -> (N, 2, H, W)
    nn::Tensor forward(const nn::Tensor& x, Cache* cache = nullptr);
    // Accumulates parameter gradients; input gradients are discarded.
    void backward(const Cache& cache, const nn::Tensor& dout);

    void copy_values_from(const StudentNet& other);
};

}  // namespace clothrl::distill
