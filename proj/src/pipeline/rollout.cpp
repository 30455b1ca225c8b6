#include "clothrl/pipeline/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "clothrl/pipeline/dataset.hpp"
#include "clothrl/rewards/objectives.hpp"
#include "clothrl/sim/simulator.hpp"
#include "clothrl/util/parallel.hpp"

namespace clothrl::pipeline {

namespace {

std::array<float, 9> to_float_rewards(const rewards::RewardVector& r) {
    std::array<float, 9> out;
    for (int j = 0; j < 9; ++j) out[j] = static_cast<float>(r[j]);
    return out;
}

}  // namespace

int cell_of_position(double x, double y, int cells, double workspace_side) {
    const auto axis = [&](double v) {
        const int i = static_cast<int>(std::floor(v / workspace_side * cells));
        return std::clamp(i, 0, cells - 1);
    };
    return axis(x) * cells + axis(y);
}

StepOutcome step_environment(const sim::ClothState& state, int pick_index, int place_cell,
                             int place_side, const agent::AgentConfig& acfg,
                             const sim::SimParams& params) {
    const int g = state.grid_side;
    if (pick_index < 0 || pick_index >= g * g)
        throw std::invalid_argument("step_environment: pick index out of range");
    if (place_cell < 0 || place_cell >= place_side * place_side)
        throw std::invalid_argument("step_environment: place cell out of range");

    StepOutcome out;
    out.transition.state = pack_positions(state);
    out.transition.place = place_cell;

    int node = pick_index;
    if (acfg.pick_mode == agent::PickMode::Pixel) {
        node = agent::pixel_pick_adapter(state, pick_index, g, params.workspace_side,
                                         params.grasp_radius);
        if (node < 0) {
            out.miss = true;
            out.next = state;
            const rewards::RewardVector r = rewards::reward_vector(state, params);
            out.transition.next_state = out.transition.state;
            out.transition.pick = pick_index;
            out.transition.reward = to_float_rewards(r);
            out.transition.reward[0] = static_cast<float>(acfg.miss_penalty);
            out.transition.done =
                r[0] >= acfg.termination_fraction * rewards::kRewardMax ? 1 : 0;
            return out;
        }
    }

    const int pr = place_cell / place_side;
    const int pc = place_cell % place_side;
    const sim::PickPlaceAction action = sim::PickPlaceAction::make(
        node, (pr + 0.5) / double(place_side), (pc + 0.5) / double(place_side));
    auto [next, grasp] = sim::execute_pick_place(state, action, params);

    const rewards::RewardVector r = rewards::reward_vector(next, params);
    out.transition.next_state = pack_positions(next);
    out.transition.pick =
        acfg.pick_mode == agent::PickMode::Pixel ? pick_index : grasp.grasped_node;
    out.transition.reward = to_float_rewards(r);
    out.transition.done = r[0] >= acfg.termination_fraction * rewards::kRewardMax ? 1 : 0;
    out.transition.redirected = grasp.was_redirected ? 1 : 0;
    out.next = std::move(next);
    return out;
}

std::vector<Transition> random_episode(const sim::ClothState& start, int steps, int place_side,
                                       const agent::AgentConfig& acfg,
                                       const sim::SimParams& params, Rng& rng) {
    std::vector<Transition> out;
    out.reserve(steps);
    sim::ClothState state = start;
    const int g = state.grid_side;
    for (int s = 0; s < steps; ++s) {
        const int pick = static_cast<int>(rng.uniform_index(std::uint64_t(g) * g));
        const int place =
            static_cast<int>(rng.uniform_index(std::uint64_t(place_side) * place_side));
        StepOutcome step = step_environment(state, pick, place, place_side, acfg, params);
        out.push_back(std::move(step.transition));
        state = std::move(step.next);
    }
    return out;
}

std::vector<Transition> fold_to_unfold_rollout(const sim::ClothState& start, int k,
                                               int place_side, const agent::AgentConfig& acfg,
                                               const sim::SimParams& params, Rng& rng) {
    std::vector<Transition> out;
    out.reserve(2 * std::max(k, 0));
    sim::ClothState state = start;
    const int g = state.grid_side;

    struct FoldRecord {
        int carried_node;
        Vec3 origin;
    };
    std::vector<FoldRecord> folds;

    for (int i = 0; i < k; ++i) {
        // A real fold: carry one of the outermost nodes onto the position of
        // a node at least half the cloth away. Folding arbitrary interior
        // nodes produces micro-tucks whose reversal is mostly noise.
        const Vec2 cen = sim::centroid_xy(state);
        int node = 0;
        double best = -1.0;
        for (int draw = 0; draw < 6; ++draw) {
            const int cand = static_cast<int>(rng.uniform_index(std::uint64_t(g) * g));
            const Vec3& p = state.positions[cand];
            const double d2 = (p.x - cen.x) * (p.x - cen.x) + (p.y - cen.y) * (p.y - cen.y);
            if (d2 > best) {
                best = d2;
                node = cand;
            }
        }
        const Vec3& from = state.positions[node];
        int onto = -1;
        const double min_span = 0.5 * params.cloth_side;
        for (int draw = 0; draw < 32 && onto < 0; ++draw) {
            const int cand = static_cast<int>(rng.uniform_index(std::uint64_t(g) * g));
            const Vec3& p = state.positions[cand];
            const double dx = p.x - from.x, dy = p.y - from.y;
            if (dx * dx + dy * dy >= min_span * min_span) onto = cand;
        }
        if (onto < 0) onto = (g * g - 1) - node;  // grid-opposite fallback
        const Vec3& target = state.positions[onto];
        const int place = cell_of_position(target.x, target.y, place_side, params.workspace_side);
        StepOutcome step = step_environment(state, node, place, place_side, acfg, params);
        folds.push_back({step.transition.pick, state.positions[step.transition.pick]});
        out.push_back(std::move(step.transition));
        state = std::move(step.next);
    }
    for (int i = k - 1; i >= 0; --i) {
        const int place = cell_of_position(folds[i].origin.x, folds[i].origin.y, place_side,
                                           params.workspace_side);
        StepOutcome step =
            step_environment(state, folds[i].carried_node, place, place_side, acfg, params);
        out.push_back(std::move(step.transition));
        state = std::move(step.next);
    }
    return out;
}

GenReport generate_offline_dataset(const std::string& path, const GenConfig& cfg,
                                   const sim::SimParams& params) {
    if (cfg.transitions == 0) throw std::invalid_argument("transition count must be positive");
    if (cfg.heuristic_fraction < 0.0 || cfg.heuristic_fraction > 1.0)
        throw std::invalid_argument("heuristic fraction must lie in [0, 1]");

    agent::AgentConfig acfg;  // node-mode defaults; only termination/rewards matter here

    struct EpisodePlan {
        bool heuristic;
        int k;
        std::uint64_t seed;
    };
    std::vector<EpisodePlan> plans;
    Rng plan_rng(derive_seed(cfg.seed, 0x91a));
    std::uint64_t planned = 0;
    std::uint64_t heur_planned = 0;
    while (planned < cfg.transitions) {
        EpisodePlan p{};
        p.seed = derive_seed(cfg.seed, 0x1000 + plans.size());
        const double deficit = cfg.heuristic_fraction * double(planned) - double(heur_planned);
        if (deficit >= 1.0) {
            p.heuristic = true;
            p.k = 1 + static_cast<int>(plan_rng.uniform_index(3));
            planned += 2 * p.k;
            heur_planned += 2 * p.k;
        } else {
            p.heuristic = false;
            p.k = 0;
            planned += cfg.random_episode_len;
        }
        plans.push_back(p);
    }

    std::vector<std::vector<Transition>> per_episode(plans.size());
    std::atomic<int> retries{0};
    parallel_for(plans.size(), [&](std::size_t e) {
        const EpisodePlan& p = plans[e];
        for (int attempt = 0;; ++attempt) {
            Rng rng(derive_seed(p.seed, attempt));
            try {
                if (p.heuristic) {
                    const double margin = params.cloth_side * 0.7072 + 0.02;
                    const double w = params.workspace_side;
                    const Vec2 center{rng.uniform(margin, w - margin),
                                      rng.uniform(margin, w - margin)};
                    const double rot = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
                    sim::ClothState flat =
                        sim::make_flat_state(cfg.grid_side, params, center, rot);
                    per_episode[e] = fold_to_unfold_rollout(flat, p.k, cfg.place_side, acfg,
                                                            params, rng);
                } else {
                    sim::ClothState crumpled = sim::generate_crumpled_state(
                        rng.next_u64(), cfg.grid_side, params, cfg.max_drops);
                    per_episode[e] = random_episode(crumpled, cfg.random_episode_len,
                                                    cfg.place_side, acfg, params, rng);
                }
                break;
            } catch (const sim::SimInstabilityError&) {
                retries.fetch_add(1);
                if (attempt >= 50) throw;
            }
        }
    });

    GenReport report;
    report.instability_retries = retries.load();
    std::vector<Transition> records;
    records.reserve(cfg.transitions);
    for (std::size_t e = 0; e < plans.size() && records.size() < cfg.transitions; ++e) {
        report.episodes++;
        if (plans[e].heuristic) report.heuristic_episodes++;
        for (Transition& t : per_episode[e]) {
            if (records.size() == cfg.transitions) break;
            if (plans[e].heuristic) report.heuristic_transitions++;
            records.push_back(std::move(t));
        }
    }
    report.transitions = records.size();

    DatasetHeader header;
    header.grid_side = cfg.grid_side;
    header.place_side = cfg.place_side;
    header.params = params;
    write_dataset(path, header, records);
    return report;
}

}  // namespace clothrl::pipeline
