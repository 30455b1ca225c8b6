#include "clothrl/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "clothrl/nn/optimizer.hpp"
#include "clothrl/pipeline/replay_buffer.hpp"
#include "clothrl/pipeline/rollout.hpp"
#include "clothrl/sim/simulator.hpp"
#include "clothrl/util/binary_io.hpp"

namespace clothrl::pipeline {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<const Transition*> gather(const std::vector<Transition>& data,
                                      const std::vector<std::size_t>& idx, std::size_t first,
                                      std::size_t count) {
    std::vector<const Transition*> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(&data[idx[first + i]]);
    return out;
}

void write_row(std::ostream& os, const MetricsRow& r) {
    os << r.step << ',' << r.loss_pick << ',' << r.loss_place << ',' << r.loss_bound << ','
       << r.validation_loss << ',' << r.mean_return << '\n';
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size <= 0 || collect_block <= 0 || opt_iters <= 0)
        throw std::invalid_argument("train config counts must be positive");
    if (blocks < 0 || offline_steps < 0) throw std::invalid_argument("negative loop counts");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(train_split > 0.0 && train_split < 1.0))
        throw std::invalid_argument("train split must lie in (0, 1)");
    if (buffer_capacity == 0) throw std::invalid_argument("buffer capacity must be positive");
    if (episode_cap <= 0) throw std::invalid_argument("episode cap must be positive");
}

void write_metrics_header(const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "step,loss_pick,loss_place,loss_bound,validation_loss,mean_return\n";
}

void append_metrics_row(const std::string& path, const MetricsRow& row) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot open " + path + " for appending");
    write_row(os, row);
}

double td_loss(agent::QFunction& qf, const std::vector<const Transition*>& batch,
               const agent::TargetBatch& targets, const std::vector<int>& active) {
    const int n = static_cast<int>(batch.size());
    const int gm = qf.grid_side() * qf.grid_side();
    const int pm = qf.place_side() * qf.place_side();
    std::vector<const std::vector<float>*> states(n);
    std::vector<int> picks(n);
    for (int i = 0; i < n; ++i) {
        states[i] = &batch[i]->state;
        picks[i] = batch[i]->pick;
    }
    nn::Tensor pick_maps = qf.pick_q(states);
    nn::Tensor place_maps = qf.place_q(states, picks);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j : active) {
            const double dp =
                double(pick_maps.values[(std::size_t(i) * 9 + j) * gm + batch[i]->pick]) -
                double(targets.pick[i][j]);
            const double dl =
                double(place_maps.values[(std::size_t(i) * 9 + j) * pm + batch[i]->place]) -
                double(targets.place[i][j]);
            sum += dp * dp + dl * dl;
        }
    }
    return sum / (double(n) * double(active.size()));
}

features::NormStats dataset_norm_stats(const std::vector<Transition>& data, int grid_side) {
    std::size_t at = 0;
    return features::compute_norm_stats([&](sim::ClothState& s) {
        if (at == data.size()) return false;
        s = unpack_positions(data[at].state, grid_side);
        ++at;
        return true;
    });
}

PretrainResult pretrain(const std::vector<Transition>& data, const TrainConfig& tc,
                        const agent::AgentConfig& acfg, agent::QNetwork& online,
                        agent::QNetwork& target, const features::NormStats& stats,
                        const std::string& metrics_csv) {
    tc.validate();
    acfg.validate();
    if (data.size() < 2) throw std::invalid_argument("pretrain needs at least two transitions");
    const double workspace = sim::SimParams::for_grid(online.cfg.grid_side).workspace_side;

    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng split_rng(derive_seed(tc.seed, 0x5917));
    for (std::size_t i = idx.size() - 1; i > 0; --i)
        std::swap(idx[i], idx[split_rng.uniform_index(i + 1)]);
    const std::size_t train_n =
        std::max<std::size_t>(1, static_cast<std::size_t>(tc.train_split * double(idx.size())));
    const std::size_t val_n = idx.size() - train_n;
    const std::size_t val_take = std::min(val_n, static_cast<std::size_t>(tc.val_batch));

    agent::NetworkQFunction online_q(online, stats, workspace, acfg.pick_mode);
    agent::NetworkQFunction target_q(target, stats, workspace, acfg.pick_mode);
    const std::vector<int> active = rewards::objective_set(acfg.objective_count);

    nn::OptimizerConfig ocfg;
    ocfg.lr = tc.lr;
    nn::OptimizerStateT<float> opt;
    Rng batch_rng(derive_seed(tc.seed, 0xba7c));

    if (!metrics_csv.empty()) write_metrics_header(metrics_csv);
    PretrainResult result;
    const auto validation = [&]() {
        if (val_take == 0) return kNan;
        const auto batch = gather(data, idx, train_n, val_take);
        const agent::TargetBatch tb = agent::compute_targets(batch, online_q, target_q, acfg);
        return td_loss(online_q, batch, tb, active);
    };

    for (int step = 0; step < tc.offline_steps; ++step) {
        std::vector<const Transition*> batch;
        batch.reserve(tc.batch_size);
        for (int b = 0; b < tc.batch_size; ++b)
            batch.push_back(&data[idx[batch_rng.uniform_index(train_n)]]);

        const agent::TargetBatch tb = agent::compute_targets(batch, online_q, target_q, acfg);
        const agent::LossBreakdown loss =
            agent::agent_loss(online, stats, workspace, batch, tb, acfg, true);
        nn::optimizer_step(online.params, opt, ocfg);
        agent::polyak_update(target.params, online.params, acfg.tau);

        if (step % tc.metrics_every == 0 || step + 1 == tc.offline_steps) {
            MetricsRow row;
            row.step = step;
            row.loss_pick = loss.pick;
            row.loss_place = loss.place;
            row.loss_bound = loss.bound;
            row.validation_loss = validation();
            row.mean_return = kNan;
            result.metrics.push_back(row);
            if (!metrics_csv.empty()) append_metrics_row(metrics_csv, row);
        }
    }
    return result;
}

FinetuneResult finetune(const std::vector<Transition>& prefill, const TrainConfig& tc,
                        const agent::AgentConfig& acfg, const sim::SimParams& params,
                        const features::NormStats& stats, agent::QNetwork& online,
                        agent::QNetwork& target, const std::string& metrics_csv) {
    tc.validate();
    acfg.validate();
    const int g = online.cfg.grid_side;
    const int p = online.cfg.place_side;
    const double workspace = params.workspace_side;

    ReplayBuffer buffer(tc.buffer_capacity);
    for (const Transition& t : prefill) {
        if (acfg.pick_mode == agent::PickMode::Pixel) {
            // Re-label the node pick as the workspace cell that contains it.
            Transition cell_t = t;
            const float x = t.state[3 * t.pick];
            const float y = t.state[3 * t.pick + 1];
            cell_t.pick = cell_of_position(x, y, g, workspace);
            buffer.push(std::move(cell_t));
        } else {
            buffer.push(t);
        }
    }

    agent::NetworkQFunction online_q(online, stats, workspace, acfg.pick_mode);
    agent::NetworkQFunction target_q(target, stats, workspace, acfg.pick_mode);

    // Optimization acts on the flatten objective only, with the bound dropped.
    agent::AgentConfig opt_cfg = acfg;
    opt_cfg.objective_count = 1;
    const std::vector<int> active = rewards::objective_set(1);

    nn::OptimizerConfig ocfg;
    ocfg.lr = tc.lr;
    nn::OptimizerStateT<float> opt;
    Rng env_rng(derive_seed(tc.seed, 0xe417));
    Rng batch_rng(derive_seed(tc.seed, 0xba7c));

    if (!metrics_csv.empty()) write_metrics_header(metrics_csv);
    FinetuneResult result;

    sim::ClothState state;
    int episode_step = 0;
    bool need_reset = true;
    std::uint64_t episode_counter = 0;
    double episode_return = 0.0;
    double discount = 1.0;

    for (int block = 0; block < tc.blocks; ++block) {
        agent::AgentConfig collect_cfg = acfg;
        if (tc.eps_final_pick >= 0.0 && tc.blocks > 1) {
            const double t = double(block) / double(tc.blocks - 1);
            collect_cfg.eps_pick = acfg.eps_pick + t * (tc.eps_final_pick - acfg.eps_pick);
        }
        if (tc.eps_final_place >= 0.0 && tc.blocks > 1) {
            const double t = double(block) / double(tc.blocks - 1);
            collect_cfg.eps_place = acfg.eps_place + t * (tc.eps_final_place - acfg.eps_place);
        }

        double return_sum = 0.0;
        int episodes_done = 0;
        int collected = 0;
        while (collected < tc.collect_block) {
            if (need_reset) {
                state = sim::generate_crumpled_state(env_rng.next_u64(), g, params, 4);
                episode_step = 0;
                episode_return = 0.0;
                discount = 1.0;
                need_reset = false;
            }
            const std::vector<float> packed = pack_positions(state);
            const agent::ActionChoice choice =
                agent::select_action(online_q, packed, collect_cfg, env_rng);
            try {
                StepOutcome step =
                    step_environment(state, choice.pick_index, choice.place_cell, p,
                                     collect_cfg, params);
                episode_return += discount * double(step.transition.reward[0]);
                discount *= acfg.gamma;
                const bool done = step.transition.done != 0;
                buffer.push(std::move(step.transition));
                state = std::move(step.next);
                ++collected;
                ++episode_step;
                if (done || episode_step >= tc.episode_cap) {
                    return_sum += episode_return;
                    ++episodes_done;
                    ++episode_counter;
                    need_reset = true;
                }
            } catch (const sim::SimInstabilityError&) {
                result.instability_resets++;
                need_reset = true;
            }
        }
        result.episodes += episodes_done;

        MetricsRow row;
        row.step = block + 1;
        row.validation_loss = kNan;
        for (int it = 0; it < tc.opt_iters; ++it) {
            const auto batch = buffer.sample(tc.batch_size, batch_rng);
            const agent::TargetBatch tb =
                agent::compute_targets(batch, online_q, target_q, opt_cfg);
            const agent::LossBreakdown loss =
                agent::agent_loss(online, stats, workspace, batch, tb, opt_cfg, false);
            nn::optimizer_step(online.params, opt, ocfg);
            agent::polyak_update(target.params, online.params, acfg.tau);
            row.loss_pick += loss.pick / tc.opt_iters;
            row.loss_place += loss.place / tc.opt_iters;
        }
        row.mean_return = episodes_done > 0 ? return_sum / episodes_done : kNan;
        result.metrics.push_back(row);
        if (!metrics_csv.empty()) append_metrics_row(metrics_csv, row);
    }
    result.buffer_size = buffer.size();
    return result;
}

}  // namespace clothrl::pipeline
