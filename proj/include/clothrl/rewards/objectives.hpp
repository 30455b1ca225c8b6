#pragma once

#include <array>
#include <vector>

#include "clothrl/sim/types.hpp"

namespace clothrl::rewards {

// Grid row index r runs along scene x, column index c along scene y. "Left"
// means low c, "bottom" low r; NW/SE name the main-diagonal fold (reflection
// (r,c) <-> (c,r)), SW/NE the anti-diagonal one.
enum class ObjectiveId : int {
    Flatten = 0,
    FoldLeftToRight = 1,
    FoldRightToLeft = 2,
    FoldBottomToTop = 3,
    FoldTopToBottom = 4,
    FoldNwToSe = 5,
    FoldSeToNw = 6,
    FoldSwToNe = 7,
    FoldNeToSw = 8,
};

inline constexpr int kObjectiveCount = 9;
inline constexpr double kRewardMax = 50.0;

using RewardVector = std::array<double, kObjectiveCount>;

// Objective subsets used by the 1/3/9-objective configurations. The trio is
// Flatten plus one straight and one diagonal fold.
std::vector<int> objective_set(int count);

// Target position of every node in the perfectly folded, workspace-centered
// configuration for the given fold objective: the stationary half keeps a
// centered flat copy of its sub-grid and each moving node maps onto its
// mirror's target.
std::vector<Vec3> fold_targets(int grid_side, const sim::SimParams& params, ObjectiveId id);

// Raw fold cost: mean mirror-pair distance plus mean moving-node distance to
// target. Zero exactly at the perfect fold.
double fold_cost(const sim::ClothState& state, const sim::SimParams& params, ObjectiveId id);

// Fold cost of the flat workspace-centered cloth; the normalization anchor.
double fold_flat_cost(int grid_side, const sim::SimParams& params, ObjectiveId id);

double reward_flatten(const sim::ClothState& state, const sim::SimParams& params,
                      int resolution = 200);
double reward_fold_straight(const sim::ClothState& state, const sim::SimParams& params,
                            ObjectiveId id);
double reward_fold_diagonal(const sim::ClothState& state, const sim::SimParams& params,
                            ObjectiveId id);

double reward_objective(const sim::ClothState& state, const sim::SimParams& params,
                        ObjectiveId id, int resolution = 200);

RewardVector reward_vector(const sim::ClothState& state, const sim::SimParams& params,
                           int resolution = 200);

}  // namespace clothrl::rewards
