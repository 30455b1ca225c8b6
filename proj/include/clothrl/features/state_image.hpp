#pragma once

#include <array>
#include <functional>
#include <vector>

#include "clothrl/sim/types.hpp"

namespace clothrl::features {

// CHW image of shape (3, G+2, G+2). Interior pixel (i, j) of channel c holds
// scene coordinate c of particle (i-1, j-1); the one-pixel border is zero.
struct StateImage {
    int grid_side = 0;
    std::vector<float> pixels;

    int side() const { return grid_side + 2; }
    int plane() const { return side() * side(); }
    float& at(int c, int i, int j) { return pixels[c * plane() + i * side() + j]; }
    float at(int c, int i, int j) const { return pixels[c * plane() + i * side() + j]; }
};

struct NormStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

StateImage to_state_image(const sim::ClothState& state);

// Applies (v - mean_c) / std_c to every pixel, border included.
StateImage normalize(const StateImage& img, const NormStats& stats);

// Streaming per-channel statistics over the interior pixels (equivalently the
// particle coordinates) of every state the source yields. The source fills its
// argument and returns true, or returns false when exhausted.
NormStats compute_norm_stats(const std::function<bool(sim::ClothState&)>& next_state);

}  // namespace clothrl::features
