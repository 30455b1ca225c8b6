#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "clothrl/features/state_image.hpp"
#include "clothrl/sim/types.hpp"

namespace clothrl::pipeline {

// One (s_t, a_t, r_{t+1}, s_{t+1}) tuple. Positions are stored as xyz
// triplets per node in grid order; velocities are not kept since neither the
// state image nor the rewards depend on them. The pick field holds the
// grasped node index in node mode and the requested workspace cell in pixel
// mode.
struct Transition {
    std::vector<float> state;       // 3 * G^2
    std::vector<float> next_state;  // 3 * G^2
    std::int32_t pick = 0;
    std::int32_t place = 0;         // index into the P x P place grid
    std::array<float, 9> reward{};
    std::uint8_t done = 0;
    std::uint8_t redirected = 0;
};

inline std::vector<float> pack_positions(const sim::ClothState& state) {
    std::vector<float> out;
    out.reserve(state.positions.size() * 3);
    for (const Vec3& p : state.positions) {
        out.push_back(static_cast<float>(p.x));
        out.push_back(static_cast<float>(p.y));
        out.push_back(static_cast<float>(p.z));
    }
    return out;
}

inline sim::ClothState unpack_positions(const std::vector<float>& packed, int grid_side) {
    sim::ClothState s;
    s.grid_side = grid_side;
    const int n = grid_side * grid_side;
    s.positions.resize(n);
    s.velocities.assign(n, Vec3{});
    for (int i = 0; i < n; ++i) {
        s.positions[i] = Vec3{packed[3 * i], packed[3 * i + 1], packed[3 * i + 2]};
    }
    return s;
}

// State image directly from packed positions, skipping the ClothState hop.
inline features::StateImage image_from_packed(const std::vector<float>& packed, int grid_side) {
    features::StateImage img;
    img.grid_side = grid_side;
    img.pixels.assign(3 * (grid_side + 2) * (grid_side + 2), 0.0f);
    for (int r = 0; r < grid_side; ++r) {
        for (int c = 0; c < grid_side; ++c) {
            const int node = r * grid_side + c;
            img.at(0, r + 1, c + 1) = packed[3 * node];
            img.at(1, r + 1, c + 1) = packed[3 * node + 1];
            img.at(2, r + 1, c + 1) = packed[3 * node + 2];
        }
    }
    return img;
}

}  // namespace clothrl::pipeline
