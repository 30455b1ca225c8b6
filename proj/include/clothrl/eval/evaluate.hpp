#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clothrl/agent/agent.hpp"
#include "clothrl/sim/types.hpp"

namespace clothrl::eval {

struct PolicyDecision {
    int pick = 0;   // pick map flat index (node in node mode, cell in pixel mode)
    int place = 0;  // place cell flat index
};

// A frozen policy under evaluation. act() must be safe to call from parallel
// workers and must depend only on its arguments, so episodes are reproducible
// under any scheduling.
class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyDecision act(const sim::ClothState& state, std::uint64_t episode_seed,
                               int step) = 0;
    // Test hook: a policy may bypass the simulator by writing the next state
    // directly. The default never does.
    virtual bool teleport(const sim::ClothState& state, sim::ClothState& next) {
        (void)state;
        (void)next;
        return false;
    }
    virtual std::size_t parameter_count() const { return 0; }
};

// Greedy (epsilon = 0) argmax policy over a Q-function's flatten channel.
class GreedyAgentPolicy : public Policy {
public:
    GreedyAgentPolicy(agent::QFunction& q, const agent::AgentConfig& cfg,
                      std::size_t n_params = 0);
    PolicyDecision act(const sim::ClothState& state, std::uint64_t episode_seed,
                       int step) override;
    std::size_t parameter_count() const override { return n_params_; }

private:
    agent::QFunction& q_;
    agent::AgentConfig cfg_;
    std::size_t n_params_;
};

// Uniform random pick-and-place baseline; draws are derived from the episode
// seed and step index.
class RandomPolicy : public Policy {
public:
    RandomPolicy(int pick_cells, int place_cells)
        : pick_cells_(pick_cells), place_cells_(place_cells) {}
    PolicyDecision act(const sim::ClothState& state, std::uint64_t episode_seed,
                       int step) override;

private:
    int pick_cells_;
    int place_cells_;
};

struct EvalConfig {
    int episodes = 100;
    int step_cap = 20;
    int grid_side = 16;
    int place_side = 32;
    int max_drops = 8;
    std::uint64_t seed = 0;
    int bootstrap_resamples = 2000;
    double confidence = 0.95;

    void validate() const;
};

struct EpisodeRecord {
    std::uint64_t seed = 0;
    double initial_coverage = 0.0;
    double final_coverage = 0.0;
    int steps = 0;
    double normalized_improvement = 0.0;
    double discounted_return = 0.0;
    bool unstable = false;
};

struct EvalAggregates {
    double mean = 0.0;
    double stddev = 0.0;
    double iqm = 0.0;
    double mean_ci_low = 0.0, mean_ci_high = 0.0;
    double iqm_ci_low = 0.0, iqm_ci_high = 0.0;
};

struct EvalReport {
    EvalConfig config;
    std::vector<EpisodeRecord> episodes;  // seed order
    EvalAggregates aggregates;            // over stable episodes' improvements
    std::size_t parameter_count = 0;
    int unstable_episodes = 0;
};

// Runs seeded greedy episodes from crumpled starts in parallel workers.
// Episodes terminate at the coverage threshold or the step cap; ones hit by
// simulator instability are flagged and left out of the aggregates.
EvalReport evaluate(Policy& policy, const agent::AgentConfig& acfg,
                    const sim::SimParams& params, const EvalConfig& cfg);

// Aggregates recomputed from the per-episode rows; evaluate() stores exactly
// this, which the report invariants rely on.
EvalAggregates aggregate_scores(const std::vector<double>& scores, std::uint64_t seed,
                                int resamples, double confidence);

// JSON report; the timestamp lands in its own "generated_at" field so the
// rest of the document is bit-reproducible. The CSV holds the episode rows.
void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& timestamp);
void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace clothrl::eval
