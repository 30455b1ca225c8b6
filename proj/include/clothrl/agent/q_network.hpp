#pragma once

#include <cstdint>
#include <utility>

#include "clothrl/nn/layers.hpp"
#include "clothrl/nn/registry.hpp"
#include "clothrl/nn/tensor.hpp"

namespace clothrl::agent {

struct QNetworkConfig {
    int grid_side = 16;   // G; must be divisible by 4
    int place_side = 32;  // P; must be divisible by 4
    int latent = 32;
    int objectives = 9;   // output channels per head; fixed regardless of masking

    void validate() const;
    bool operator==(const QNetworkConfig&) const = default;
};

// Shared encoder with a pick head and a pick-conditioned place head. Heads
// emit one Q map channel per objective; action selection reads channel 0
// (Flatten). The place head input is the latent concatenated with a 5-value
// pick encoding: (row, col) normalized by G-1 and the pick's scene position
// over the workspace side.
struct QNetwork {
    QNetworkConfig cfg;

    nn::Conv2dT<float> conv1;
    nn::LayerNorm2dT<float> ln1;
    nn::Conv2dT<float> conv2;
    nn::LayerNorm2dT<float> ln2;
    nn::LinearT<float> enc_fc;
    nn::LayerNormT<float> ln3;

    nn::LinearT<float> pick_fc;
    nn::LayerNormT<float> pick_ln;
    nn::TConv2dT<float> pick_tc1;
    nn::LayerNorm2dT<float> pick_tln;
    nn::TConv2dT<float> pick_tc2;

    nn::LinearT<float> place_fc;
    nn::LayerNormT<float> place_ln;
    nn::TConv2dT<float> place_tc1;
    nn::LayerNorm2dT<float> place_tln;
    nn::TConv2dT<float> place_tc2;

    nn::ParamRegistry<float> params;

    QNetwork(const QNetworkConfig& config, std::uint64_t seed);
    QNetwork(const QNetwork&) = delete;
    QNetwork& operator=(const QNetwork&) = delete;

    static constexpr int kPickEncoding = 5;

    int image_side() const { return cfg.grid_side + 2; }
    int encoder_flat() const;

    struct EncoderCache {
        nn::Tensor x, c1, n1, g1, c2, n2, flat, f1, n3;
    };
    struct HeadCache {
        nn::Tensor in, f1, n1, g1, t1, tn1, tg1;
    };

    // x: (N, 3, G+2, G+2) normalized state images -> (N, latent)
    nn::Tensor encode(const nn::Tensor& x, EncoderCache* cache = nullptr);
    // latent: (N, latent) -> (N, objectives, G, G)
    nn::Tensor pick_maps(const nn::Tensor& latent, HeadCache* cache = nullptr);
    // latent + pick_enc (N, 5) -> (N, objectives, P, P)
    nn::Tensor place_maps(const nn::Tensor& latent, const nn::Tensor& pick_enc,
                          HeadCache* cache = nullptr);

    // Reverse passes accumulate parameter gradients and return input grads.
    nn::Tensor pick_maps_backward(const HeadCache& cache, const nn::Tensor& dmaps);
    std::pair<nn::Tensor, nn::Tensor> place_maps_backward(const HeadCache& cache,
                                                          const nn::Tensor& dmaps);
    void encode_backward(const EncoderCache& cache, const nn::Tensor& dlatent);

    void copy_values_from(const QNetwork& other);
};

}  // namespace clothrl::agent
