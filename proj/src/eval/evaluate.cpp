#include "clothrl/eval/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "clothrl/eval/metrics.hpp"
#include "clothrl/pipeline/rollout.hpp"
#include "clothrl/pipeline/transition.hpp"
#include "clothrl/rewards/objectives.hpp"
#include "clothrl/sim/coverage.hpp"
#include "clothrl/sim/simulator.hpp"
#include "clothrl/util/binary_io.hpp"
#include "clothrl/util/parallel.hpp"

namespace clothrl::eval {

namespace {
constexpr std::uint64_t kEpisodeStream = 0xe4a1;
constexpr std::uint64_t kBootStream = 0xb007;
constexpr std::uint64_t kActStream = 0xac10;
}  // namespace

GreedyAgentPolicy::GreedyAgentPolicy(agent::QFunction& q, const agent::AgentConfig& cfg,
                                     std::size_t n_params)
    : q_(q), cfg_(cfg), n_params_(n_params) {
    cfg_.eps_pick = 0.0;
    cfg_.eps_place = 0.0;
}

PolicyDecision GreedyAgentPolicy::act(const sim::ClothState& state, std::uint64_t episode_seed,
                                      int step) {
    Rng rng(derive_seed(episode_seed, kActStream + std::uint64_t(step)));  // never drawn at eps 0
    const std::vector<float> packed = pipeline::pack_positions(state);
    const agent::ActionChoice choice = agent::select_action(q_, packed, cfg_, rng);
    return {choice.pick_index, choice.place_cell};
}

PolicyDecision RandomPolicy::act(const sim::ClothState& state, std::uint64_t episode_seed,
                                 int step) {
    (void)state;
    Rng rng(derive_seed(episode_seed, kActStream + std::uint64_t(step)));
    PolicyDecision d;
    d.pick = int(rng.uniform_index(std::uint64_t(pick_cells_)));
    d.place = int(rng.uniform_index(std::uint64_t(place_cells_)));
    return d;
}

void EvalConfig::validate() const {
    if (episodes < 1) throw std::invalid_argument("episodes must be positive");
    if (step_cap < 1) throw std::invalid_argument("step_cap must be positive");
    if (grid_side < 2 || place_side < 1) throw std::invalid_argument("bad grid sizes");
    if (max_drops < 1) throw std::invalid_argument("max_drops must be positive");
    if (bootstrap_resamples < 100) throw std::invalid_argument("too few resamples");
    if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("bad confidence");
}

EvalAggregates aggregate_scores(const std::vector<double>& scores, std::uint64_t seed,
                                int resamples, double confidence) {
    EvalAggregates agg;
    if (scores.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        agg.mean = agg.stddev = agg.iqm = nan;
        agg.mean_ci_low = agg.mean_ci_high = agg.iqm_ci_low = agg.iqm_ci_high = nan;
        return agg;
    }
    agg.mean = mean(scores);
    agg.stddev = sample_stddev(scores);
    agg.iqm = iqm(scores);
    Rng mean_rng(derive_seed(seed, kBootStream));
    std::tie(agg.mean_ci_low, agg.mean_ci_high) =
        bootstrap_ci(scores, [](const std::vector<double>& s) { return mean(s); }, resamples,
                     confidence, mean_rng);
    Rng iqm_rng(derive_seed(seed, kBootStream + 1));
    std::tie(agg.iqm_ci_low, agg.iqm_ci_high) =
        bootstrap_ci(scores, [](const std::vector<double>& s) { return iqm(s); }, resamples,
                     confidence, iqm_rng);
    return agg;
}

EvalReport evaluate(Policy& policy, const agent::AgentConfig& acfg, const sim::SimParams& params,
                    const EvalConfig& cfg) {
    cfg.validate();
    acfg.validate();
    const sim::ClothState flat = sim::make_flat_centered_state(cfg.grid_side, params);
    const double cov_max = sim::coverage(flat, params.workspace_side);

    EvalReport report;
    report.config = cfg;
    report.parameter_count = policy.parameter_count();
    report.episodes.resize(cfg.episodes);

    parallel_for(std::size_t(cfg.episodes), [&](std::size_t e) {
        EpisodeRecord& rec = report.episodes[e];
        rec.seed = derive_seed(cfg.seed, kEpisodeStream + e);
        try {
            sim::ClothState state =
                sim::generate_crumpled_state(rec.seed, cfg.grid_side, params, cfg.max_drops);
            rec.initial_coverage = sim::coverage(state, params.workspace_side);
            double cov = rec.initial_coverage;
            double disc = 1.0;
            for (int t = 0; t < cfg.step_cap; ++t) {
                bool done = false;
                sim::ClothState next;
                if (policy.teleport(state, next)) {
                    const double r0 = rewards::reward_flatten(next, params);
                    rec.discounted_return += disc * r0;
                    done = r0 >= acfg.termination_fraction * rewards::kRewardMax;
                } else {
                    const PolicyDecision d = policy.act(state, rec.seed, t);
                    pipeline::StepOutcome out = pipeline::step_environment(
                        state, d.pick, d.place, cfg.place_side, acfg, params);
                    next = std::move(out.next);
                    rec.discounted_return += disc * double(out.transition.reward[0]);
                    done = out.transition.done != 0;
                }
                disc *= acfg.gamma;
                state = std::move(next);
                cov = sim::coverage(state, params.workspace_side);
                rec.steps = t + 1;
                if (done) break;
            }
            rec.final_coverage = cov;
            rec.normalized_improvement =
                normalized_improvement(rec.initial_coverage, rec.final_coverage, cov_max);
        } catch (const sim::SimInstabilityError&) {
            rec.unstable = true;
        }
    });

    std::vector<double> scores;
    for (const EpisodeRecord& rec : report.episodes) {
        if (rec.unstable)
            ++report.unstable_episodes;
        else
            scores.push_back(rec.normalized_improvement);
    }
    report.aggregates =
        aggregate_scores(scores, cfg.seed, cfg.bootstrap_resamples, cfg.confidence);
    return report;
}

namespace {

nlohmann::ordered_json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& timestamp) {
    nlohmann::ordered_json j;
    j["generated_at"] = timestamp;
    j["config"] = {{"episodes", report.config.episodes},
                   {"step_cap", report.config.step_cap},
                   {"grid_side", report.config.grid_side},
                   {"place_side", report.config.place_side},
                   {"max_drops", report.config.max_drops},
                   {"seed", report.config.seed},
                   {"bootstrap_resamples", report.config.bootstrap_resamples},
                   {"confidence", report.config.confidence}};
    j["parameter_count"] = report.parameter_count;
    j["unstable_episodes"] = report.unstable_episodes;
    j["aggregates"] = {
        {"mean", finite_or_null(report.aggregates.mean)},
        {"stddev", finite_or_null(report.aggregates.stddev)},
        {"iqm", finite_or_null(report.aggregates.iqm)},
        {"mean_ci",
         {finite_or_null(report.aggregates.mean_ci_low),
          finite_or_null(report.aggregates.mean_ci_high)}},
        {"iqm_ci",
         {finite_or_null(report.aggregates.iqm_ci_low),
          finite_or_null(report.aggregates.iqm_ci_high)}}};
    j["episodes"] = nlohmann::ordered_json::array();
    for (const EpisodeRecord& rec : report.episodes) {
        j["episodes"].push_back({{"seed", rec.seed},
                                 {"initial_coverage", rec.initial_coverage},
                                 {"final_coverage", rec.final_coverage},
                                 {"steps", rec.steps},
                                 {"normalized_improvement", rec.normalized_improvement},
                                 {"discounted_return", rec.discounted_return},
                                 {"unstable", rec.unstable}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path);
    out << "seed,initial_coverage,final_coverage,steps,normalized_improvement,"
           "discounted_return,unstable\n";
    char buf[256];
    for (const EpisodeRecord& rec : report.episodes) {
        std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%d,%.17g,%.17g,%d\n",
                      (unsigned long long)rec.seed, rec.initial_coverage, rec.final_coverage,
                      rec.steps, rec.normalized_improvement, rec.discounted_return,
                      int(rec.unstable));
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace clothrl::eval
