#include "clothrl/rewards/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clothrl/sim/coverage.hpp"

namespace clothrl::rewards {
namespace {

struct FoldSpec {
    bool diagonal;
    // Mirror of node (r, c) under the fold reflection.
    int mr(int r, int c, int g) const;
    int mc(int r, int c, int g) const;
    // True when the node belongs to the moving half.
    bool moving(int r, int c, int g) const;
    int axis = 0;       // straight folds: 0 = fold along r, 1 = fold along c
    bool low_moves = false;
    bool anti = false;  // diagonal folds: reflect across the anti-diagonal
};

int FoldSpec::mr(int r, int c, int g) const {
    if (!diagonal) return axis == 0 ? g - 1 - r : r;
    return anti ? g - 1 - c : c;
}

int FoldSpec::mc(int r, int c, int g) const {
    if (!diagonal) return axis == 0 ? c : g - 1 - c;
    return anti ? g - 1 - r : r;
}

bool FoldSpec::moving(int r, int c, int g) const {
    if (!diagonal) {
        const int v = axis == 0 ? r : c;
        return low_moves ? 2 * v < g - 1 : 2 * v > g - 1;
    }
    const int side = anti ? (r + c) - (g - 1) : r - c;
    return low_moves ? side < 0 : side > 0;
}

FoldSpec fold_spec(ObjectiveId id) {
    switch (id) {
        case ObjectiveId::FoldLeftToRight: return {false, 1, true, false};
        case ObjectiveId::FoldRightToLeft: return {false, 1, false, false};
        case ObjectiveId::FoldBottomToTop: return {false, 0, true, false};
        case ObjectiveId::FoldTopToBottom: return {false, 0, false, false};
        case ObjectiveId::FoldNwToSe: return {true, 0, true, false};
        case ObjectiveId::FoldSeToNw: return {true, 0, false, false};
        case ObjectiveId::FoldSwToNe: return {true, 0, true, true};
        case ObjectiveId::FoldNeToSw: return {true, 0, false, true};
        default: throw std::invalid_argument("not a fold objective");
    }
}

}  // namespace

std::vector<int> objective_set(int count) {
    switch (count) {
        case 1: return {0};
        case 3:
            return {static_cast<int>(ObjectiveId::Flatten),
                    static_cast<int>(ObjectiveId::FoldLeftToRight),
                    static_cast<int>(ObjectiveId::FoldNwToSe)};
        case 9: {
            std::vector<int> all(kObjectiveCount);
            for (int i = 0; i < kObjectiveCount; ++i) all[i] = i;
            return all;
        }
        default: throw std::invalid_argument("objective count must be 1, 3 or 9");
    }
}

std::vector<Vec3> fold_targets(int grid_side, const sim::SimParams& params, ObjectiveId id) {
    const FoldSpec spec = fold_spec(id);
    const int g = grid_side;
    const double h = params.cloth_side / (g - 1);
    const double ctr = params.workspace_side / 2;

    // Bounding box of the stationary half's grid coordinates.
    int rmin = g, rmax = -1, cmin = g, cmax = -1;
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            if (spec.moving(r, c, g)) continue;
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
    }
    const double r0 = (rmin + rmax) / 2.0;
    const double c0 = (cmin + cmax) / 2.0;

    std::vector<Vec3> targets(static_cast<std::size_t>(g) * g);
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            int tr = r, tc = c;
            if (spec.moving(r, c, g)) {
                tr = spec.mr(r, c, g);
                tc = spec.mc(r, c, g);
            }
            targets[static_cast<std::size_t>(r) * g + c] =
                Vec3{ctr + (tr - r0) * h, ctr + (tc - c0) * h, 0.0};
        }
    }
    return targets;
}

double fold_cost(const sim::ClothState& state, const sim::SimParams& params, ObjectiveId id) {
    const FoldSpec spec = fold_spec(id);
    const int g = state.grid_side;
    const auto targets = fold_targets(g, params, id);

    double pair_sum = 0.0;
    int pair_count = 0;
    double move_sum = 0.0;
    int move_count = 0;
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            if (!spec.moving(r, c, g)) continue;
            const int i = state.index(r, c);
            const int j = state.index(spec.mr(r, c, g), spec.mc(r, c, g));
            pair_sum += (state.positions[i] - state.positions[j]).norm();
            ++pair_count;
            move_sum += (state.positions[i] - targets[i]).norm();
            ++move_count;
        }
    }
    if (pair_count == 0) throw std::invalid_argument("fold_cost: grid has no mirror pairs");
    return pair_sum / pair_count + move_sum / move_count;
}

double fold_flat_cost(int grid_side, const sim::SimParams& params, ObjectiveId id) {
    return fold_cost(sim::make_flat_centered_state(grid_side, params), params, id);
}

double reward_flatten(const sim::ClothState& state, const sim::SimParams& params,
                      int resolution) {
    const double ratio = sim::coverage(state, params.workspace_side, resolution) /
                         sim::flat_coverage(params);
    return kRewardMax * std::clamp(ratio, 0.0, 1.0);
}

namespace {

double fold_reward(const sim::ClothState& state, const sim::SimParams& params, ObjectiveId id) {
    const double c0 = fold_flat_cost(state.grid_side, params, id);
    const double cost = fold_cost(state, params, id);
    return kRewardMax * std::clamp(1.0 - cost / c0, 0.0, 1.0);
}

}  // namespace

double reward_fold_straight(const sim::ClothState& state, const sim::SimParams& params,
                            ObjectiveId id) {
    if (fold_spec(id).diagonal) throw std::invalid_argument("expected a straight fold id");
    return fold_reward(state, params, id);
}

double reward_fold_diagonal(const sim::ClothState& state, const sim::SimParams& params,
                            ObjectiveId id) {
    if (!fold_spec(id).diagonal) throw std::invalid_argument("expected a diagonal fold id");
    return fold_reward(state, params, id);
}

double reward_objective(const sim::ClothState& state, const sim::SimParams& params,
                        ObjectiveId id, int resolution) {
    if (id == ObjectiveId::Flatten) return reward_flatten(state, params, resolution);
    return fold_reward(state, params, id);
}

RewardVector reward_vector(const sim::ClothState& state, const sim::SimParams& params,
                           int resolution) {
    RewardVector out;
    for (int i = 0; i < kObjectiveCount; ++i) {
        out[i] = reward_objective(state, params, static_cast<ObjectiveId>(i), resolution);
    }
    return out;
}

}  // namespace clothrl::rewards
