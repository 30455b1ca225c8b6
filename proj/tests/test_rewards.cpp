#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "clothrl/rewards/objectives.hpp"
#include "clothrl/sim/coverage.hpp"
#include "clothrl/sim/simulator.hpp"

using namespace clothrl;
using namespace clothrl::rewards;

namespace {

sim::ClothState state_from_positions(int g, std::vector<Vec3> positions) {
    sim::ClothState s;
    s.grid_side = g;
    s.positions = std::move(positions);
    s.velocities.assign(s.positions.size(), Vec3{});
    return s;
}

// Perfectly folded state: every node sits exactly on its fold target.
sim::ClothState perfect_fold(int g, const sim::SimParams& params, ObjectiveId id) {
    return state_from_positions(g, fold_targets(g, params, id));
}

constexpr ObjectiveId kFoldIds[] = {
    ObjectiveId::FoldLeftToRight, ObjectiveId::FoldRightToLeft, ObjectiveId::FoldBottomToTop,
    ObjectiveId::FoldTopToBottom, ObjectiveId::FoldNwToSe,      ObjectiveId::FoldSeToNw,
    ObjectiveId::FoldSwToNe,      ObjectiveId::FoldNeToSw};

}  // namespace

TEST_CASE("flatten reward") {
    const auto params = sim::SimParams::for_grid(16);
    const auto flat = sim::make_flat_centered_state(16, params);

    SUBCASE("flat cloth scores full marks") {
        CHECK(reward_flatten(flat, params) == doctest::Approx(50.0).epsilon(0.02));
    }

    SUBCASE("half coverage scores about half") {
        // Squash the y extent by exactly one half: the projected area halves.
        auto squashed = flat;
        const double ctr = params.workspace_side / 2;
        for (auto& p : squashed.positions) p.y = ctr + (p.y - ctr) / 2;
        CHECK(reward_flatten(squashed, params) == doctest::Approx(25.0).epsilon(0.03));
    }

    SUBCASE("matches the coverage composition on crumpled states") {
        for (std::uint64_t seed : {5u, 6u, 7u}) {
            const auto s = sim::generate_crumpled_state(seed, 16, params, 4);
            const double expect =
                50.0 * sim::coverage(s, params.workspace_side) / sim::flat_coverage(params);
            CHECK(reward_flatten(s, params) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("fold rewards: anchors") {
    const auto params = sim::SimParams::for_grid(16);
    const auto flat = sim::make_flat_centered_state(16, params);

    for (ObjectiveId id : kFoldIds) {
        CAPTURE(static_cast<int>(id));
        CHECK(reward_objective(perfect_fold(16, params, id), params, id) ==
              doctest::Approx(50.0).epsilon(1e-9));
        CHECK(reward_objective(flat, params, id) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("straight fold cost matches a direct recomputation") {
    const auto params = sim::SimParams::for_grid(16);
    const auto s = sim::generate_crumpled_state(11, 16, params, 3);
    const int g = 16;

    // FoldLeftToRight: moving half c < 8, mirror (r, c) <-> (r, 15 - c),
    // stationary columns 8..15 centered at the workspace center.
    const double h = params.cloth_side / (g - 1);
    const double ctr = params.workspace_side / 2;
    double pair_sum = 0.0, move_sum = 0.0;
    int n = 0;
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g / 2; ++c) {
            const Vec3& a = s.at(r, c);
            const Vec3& b = s.at(r, g - 1 - c);
            pair_sum += (a - b).norm();
            const Vec3 target{ctr + (r - 7.5) * h, ctr + ((g - 1 - c) - 11.5) * h, 0.0};
            move_sum += (a - target).norm();
            ++n;
        }
    }
    const double oracle_cost = pair_sum / n + move_sum / n;
    CHECK(fold_cost(s, params, ObjectiveId::FoldLeftToRight) ==
          doctest::Approx(oracle_cost).epsilon(1e-12));

    const double c0 = fold_flat_cost(g, params, ObjectiveId::FoldLeftToRight);
    const double expect = 50.0 * std::max(0.0, 1.0 - oracle_cost / c0);
    CHECK(reward_fold_straight(s, params, ObjectiveId::FoldLeftToRight) ==
          doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("fold reward rises monotonically from flat to folded") {
    const auto params = sim::SimParams::for_grid(16);
    const auto flat = sim::make_flat_centered_state(16, params);
    for (ObjectiveId id : {ObjectiveId::FoldLeftToRight, ObjectiveId::FoldNwToSe}) {
        const auto targets = fold_targets(16, params, id);
        double prev = -1.0;
        for (int k = 0; k <= 20; ++k) {
            const double t = k / 20.0;
            auto blend = flat;
            for (int i = 0; i < blend.node_count(); ++i) {
                blend.positions[i] = flat.positions[i] * (1.0 - t) + targets[i] * t;
            }
            const double r = reward_objective(blend, params, id);
            CHECK(r >= prev - 1e-9);
            CHECK(r == doctest::Approx(50.0 * t).epsilon(1e-6));
            prev = r;
        }
    }
}

TEST_CASE("diagonal fold symmetry under 90 degree rotation") {
    const auto params = sim::SimParams::for_grid(16);
    const int g = 16;
    const double ctr = params.workspace_side / 2;
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const auto s = sim::generate_crumpled_state(seed, g, params, 3);

        // Rotate the scene 90 degrees counterclockwise about the workspace
        // center and relabel grid indices accordingly: (r, c) -> (g-1-c, r).
        auto rotated = s;
        for (int r = 0; r < g; ++r) {
            for (int c = 0; c < g; ++c) {
                const Vec3& p = s.at(r, c);
                rotated.positions[rotated.index(g - 1 - c, r)] =
                    Vec3{ctr - (p.y - ctr), ctr + (p.x - ctr), p.z};
            }
        }
        const double main_diag = reward_fold_diagonal(s, params, ObjectiveId::FoldNwToSe);
        const double anti_diag = reward_fold_diagonal(rotated, params, ObjectiveId::FoldSwToNe);
        CHECK(main_diag == doctest::Approx(anti_diag).epsilon(1e-6));
    }
}

TEST_CASE("reward vector") {
    const auto params = sim::SimParams::for_grid(16);
    const auto flat = sim::make_flat_centered_state(16, params);

    SUBCASE("flat centered cloth") {
        const auto v = reward_vector(flat, params);
        CHECK(v[0] == doctest::Approx(50.0).epsilon(0.02));
        for (int i = 1; i < kObjectiveCount; ++i) CHECK(v[i] == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("all components stay in range and match individual calls") {
        for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
            const auto s = sim::generate_crumpled_state(seed, 16, params, 4);
            const auto v = reward_vector(s, params);
            for (int i = 0; i < kObjectiveCount; ++i) {
                CHECK(v[i] >= 0.0);
                CHECK(v[i] <= 50.0);
                CHECK(v[i] == reward_objective(s, params, static_cast<ObjectiveId>(i)));
            }
        }
    }
}

TEST_CASE("objective sets") {
    CHECK(objective_set(1) == std::vector<int>{0});
    CHECK(objective_set(3) == std::vector<int>{0, 1, 5});
    CHECK(objective_set(9).size() == 9);
    CHECK_THROWS_AS(objective_set(2), std::invalid_argument);
}
