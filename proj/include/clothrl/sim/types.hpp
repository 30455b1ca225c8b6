#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "clothrl/util/vec3.hpp"

namespace clothrl::sim {

// Square-grid cloth. Node (r, c) has flat index r * G + c; the grid's first
// index runs along scene x, the second along scene y. Ground plane is z = 0.
struct ClothState {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    int grid_side = 0;

    int node_count() const { return grid_side * grid_side; }
    int index(int r, int c) const { return r * grid_side + c; }
    const Vec3& at(int r, int c) const { return positions[index(r, c)]; }
};

// All forces are per unit particle mass, so stiffness and damping values carry
// units of 1/s^2 and 1/s respectively.
struct SimParams {
    double rest_length = 0.014;        // structural spring rest length (m)
    double k_structural = 5.0e4;
    double k_shear = 8.0e3;
    double k_bend = 1.5e3;
    double damping = 9.0;              // air drag coefficient
    double spring_damping = 60.0;      // axial spring damping coefficient
    double gravity = 9.81;             // m/s^2, acting along -z
    double ground_friction = 0.25;     // tangential velocity retained factor is (1 - mu) per contact substep
    double dt = 1.0e-3;                // physics substep (s)
    int substeps = 30;                 // relaxation substeps appended to each primitive phase
    double cloth_side = 0.21;          // m
    double workspace_side = 0.70;      // m
    double lift_height = 0.10;         // m
    double carry_speed = 1.2;          // m/s, used for both lift and carry phases
    int settle_steps = 220;            // free substeps after release
    double grasp_radius = 0.021;       // resolve_grasp search radius (m)

    // Defaults tuned for G=16; stiffness and timestep rescale with grid
    // resolution so that hanging stretch and stability margins carry over.
    static SimParams for_grid(int grid_side);

    void validate() const;
};

struct PickPlaceAction {
    int pick = 0;        // node index in [0, G^2)
    Vec2 place;          // normalized ground-plane target, components clamped to [0, 1]

    static PickPlaceAction make(int pick, double px, double py) {
        return PickPlaceAction{pick, Vec2{clamp01(px), clamp01(py)}};
    }
};

struct GraspRecord {
    int requested_node = 0;
    int grasped_node = 0;
    bool was_redirected = false;
};

struct SimInstabilityError : std::runtime_error {
    int node;
    explicit SimInstabilityError(int node_index)
        : std::runtime_error("simulation instability: non-finite force at node " +
                             std::to_string(node_index)),
          node(node_index) {}
};

// Flat cloth at rest: node (r, c) at center + R(theta) * ((r, c) spacing
// offsets - half extent), z = 0, zero velocity.
ClothState make_flat_state(int grid_side, const SimParams& params, const Vec2& center,
                           double rotation);

// Flat cloth centered in the workspace, axis aligned.
ClothState make_flat_centered_state(int grid_side, const SimParams& params);

Vec2 centroid_xy(const ClothState& state);

// Throws std::invalid_argument when positions are non-finite, sizes disagree,
// or any node sits below the ground tolerance.
void check_valid(const ClothState& state);

}  // namespace clothrl::sim
