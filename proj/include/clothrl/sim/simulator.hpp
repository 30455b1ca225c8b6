#pragma once

#include <optional>
#include <utility>

#include "clothrl/sim/types.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::sim {

enum class SpringType : std::uint8_t { Structural, Shear, Bend };

struct Spring {
    int a;
    int b;
    SpringType type;
};

// Structural (axis neighbors), shear (diagonal), bend (two apart) springs for
// a G x G grid. Topology depends only on G.
std::vector<Spring> build_springs(int grid_side);

double spring_rest_length(SpringType type, double rest_length);
double spring_stiffness(SpringType type, const SimParams& params);

// Hooke force exerted on endpoint `a` by the spring (b gets the negative).
Vec3 spring_force_on_a(const Vec3& pa, const Vec3& pb, double rest, double stiffness);

struct Pin {
    int node;
    Vec3 target;
};

// One semi-implicit Euler substep: accumulate spring + gravity + damping
// forces, integrate, then project ground contact and apply the pin.
// `forces` is caller-provided scratch sized to the node count.
void step_physics_inplace(ClothState& state, const SimParams& params,
                          const std::vector<Spring>& springs,
                          const std::optional<Pin>& pin, std::vector<Vec3>& forces);

// Convenience copy form of the substep.
ClothState step_physics(const ClothState& state, const SimParams& params,
                        const std::optional<Pin>& pin = std::nullopt);

// Highest node within `radius` (xy distance) of the requested node's xy
// position. Redirects only when a candidate clears the requested node's height
// by more than a small tolerance; equal-height candidates keep the request.
GraspRecord resolve_grasp(const ClothState& state, int requested, double radius);

// Pick-and-place primitive: grasp, lift vertically to lift_height, carry
// horizontally to the place target, release, settle.
std::pair<ClothState, GraspRecord> execute_pick_place(const ClothState& state,
                                                      const PickPlaceAction& action,
                                                      const SimParams& params);

// Deterministic crumpled initial state: flat cloth at a random pose followed
// by 1..max_drops random pick-and-drop actions toward the cloth's centroid.
ClothState generate_crumpled_state(std::uint64_t seed, int grid_side, const SimParams& params,
                                   int max_drops);

// Kinetic + gravitational + elastic energy (per unit mass).
double total_energy(const ClothState& state, const SimParams& params,
                    const std::vector<Spring>& springs);

}  // namespace clothrl::sim
