#include "clothrl/features/state_image.hpp"

#include <cmath>
#include <stdexcept>

namespace clothrl::features {

StateImage to_state_image(const sim::ClothState& state) {
    const int g = state.grid_side;
    StateImage img;
    img.grid_side = g;
    img.pixels.assign(3 * (g + 2) * (g + 2), 0.0f);
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            const Vec3& p = state.at(r, c);
            img.at(0, r + 1, c + 1) = static_cast<float>(p.x);
            img.at(1, r + 1, c + 1) = static_cast<float>(p.y);
            img.at(2, r + 1, c + 1) = static_cast<float>(p.z);
        }
    }
    return img;
}

StateImage normalize(const StateImage& img, const NormStats& stats) {
    StateImage out = img;
    const int plane = img.plane();
    for (int c = 0; c < 3; ++c) {
        const double mean = stats.mean[c];
        const double inv = 1.0 / stats.stddev[c];
        float* px = out.pixels.data() + c * plane;
        for (int i = 0; i < plane; ++i) {
            px[i] = static_cast<float>((static_cast<double>(px[i]) - mean) * inv);
        }
    }
    return out;
}

NormStats compute_norm_stats(const std::function<bool(sim::ClothState&)>& next_state) {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> m2{0.0, 0.0, 0.0};
    std::uint64_t count = 0;
    sim::ClothState state;
    while (next_state(state)) {
        for (const Vec3& p : state.positions) {
            ++count;
            const double v[3] = {p.x, p.y, p.z};
            for (int c = 0; c < 3; ++c) {
                const double delta = v[c] - mean[c];
                mean[c] += delta / static_cast<double>(count);
                m2[c] += delta * (v[c] - mean[c]);
            }
        }
    }
    if (count == 0) throw std::invalid_argument("compute_norm_stats: empty dataset");
    NormStats stats;
    for (int c = 0; c < 3; ++c) {
        stats.mean[c] = mean[c];
        stats.stddev[c] = std::max(std::sqrt(m2[c] / static_cast<double>(count)), 1e-8);
    }
    return stats;
}

}  // namespace clothrl::features
