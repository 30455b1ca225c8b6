#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clothrl/agent/agent.hpp"
#include "clothrl/pipeline/transition.hpp"
#include "clothrl/sim/types.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::pipeline {

struct StepOutcome {
    Transition transition;
    sim::ClothState next;  // full state (with velocities) for chaining
    bool miss = false;
};

// Executes one discrete (pick map index, place cell) action: resolves the
// pick (directly in node mode, via the pixel adapter otherwise), runs the
// primitive at the place cell's center, labels the full reward vector and the
// 95%-coverage done flag. A pixel miss leaves the state unchanged and puts
// the penalty on the flatten reward channel.
StepOutcome step_environment(const sim::ClothState& state, int pick_index, int place_cell,
                             int place_side, const agent::AgentConfig& acfg,
                             const sim::SimParams& params);

// Workspace cell of the P x P (or G x G) grid containing the given scene xy.
int cell_of_position(double x, double y, int cells, double workspace_side);

// Scripted episode of uniform random node picks and place cells. Runs the
// full length regardless of done flags (offline data keeps post-terminal
// context; the flags still gate the TD targets).
std::vector<Transition> random_episode(const sim::ClothState& start, int steps, int place_side,
                                       const agent::AgentConfig& acfg,
                                       const sim::SimParams& params, Rng& rng);

// From a near-flat start: k recorded random folding actions (node onto the
// position of another node), then the reversed actions in undo order (pick
// the node that was carried, place at the cell of its pre-fold position).
// Returns the 2k transitions.
std::vector<Transition> fold_to_unfold_rollout(const sim::ClothState& start, int k,
                                               int place_side, const agent::AgentConfig& acfg,
                                               const sim::SimParams& params, Rng& rng);

struct GenReport {
    std::uint64_t transitions = 0;
    std::uint64_t heuristic_transitions = 0;
    int episodes = 0;
    int heuristic_episodes = 0;
    int instability_retries = 0;
};

struct GenConfig {
    std::uint64_t transitions = 50000;
    double heuristic_fraction = 0.06;
    int grid_side = 16;
    int place_side = 32;
    std::uint64_t seed = 0;
    int random_episode_len = 10;
    int max_drops = 8;
};

// Plans episodes sequentially (heuristic whenever the planned heuristic share
// falls a full transition behind the requested fraction), simulates them in
// parallel with per-episode derived seeds, and concatenates results in
// episode order, so the file bytes depend only on the config and seed.
// Episodes that hit simulator instability are retried under a fresh derived
// seed and counted.
GenReport generate_offline_dataset(const std::string& path, const GenConfig& cfg,
                                   const sim::SimParams& params);

}  // namespace clothrl::pipeline
