#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clothrl/agent/agent.hpp"
#include "clothrl/features/state_image.hpp"
#include "clothrl/pipeline/transition.hpp"
#include "clothrl/sim/types.hpp"

namespace clothrl::pipeline {

struct TrainConfig {
    int batch_size = 256;        // paper-scale runs use 8192
    int collect_block = 2000;    // transitions per fine-tuning block
    int opt_iters = 4;           // optimization iterations per block
    int blocks = 20;
    int offline_steps = 2000;
    double lr = 1e-3;
    double train_split = 0.8;
    std::size_t buffer_capacity = 20000;  // paper-scale 100000
    int episode_cap = 20;
    int metrics_every = 100;  // pretrain validation cadence (steps)
    int val_batch = 512;
    double eps_final_pick = -1.0;   // < 0 keeps epsilon constant over blocks
    double eps_final_place = -1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricsRow {
    std::int64_t step = 0;
    double loss_pick = 0.0;
    double loss_place = 0.0;
    double loss_bound = 0.0;
    double validation_loss = 0.0;  // nan when not measured
    double mean_return = 0.0;      // nan when no episode finished
};

void write_metrics_header(const std::string& path);
void append_metrics_row(const std::string& path, const MetricsRow& row);

// Mean squared TD error at the taken actions over both heads (no gradients);
// used for validation.
double td_loss(agent::QFunction& qf, const std::vector<const Transition*>& batch,
               const agent::TargetBatch& targets, const std::vector<int>& active);

// Per-channel normalization statistics over every s_t in the records.
features::NormStats dataset_norm_stats(const std::vector<Transition>& data, int grid_side);

struct PretrainResult {
    std::vector<MetricsRow> metrics;
};

// Offline loop on an 80/20 split: sampled batches, double-DQN targets, loss
// with the bounding term, optimizer step, Polyak update. Metrics rows are
// appended to metrics_csv (when non-empty) as training runs.
PretrainResult pretrain(const std::vector<Transition>& data, const TrainConfig& tc,
                        const agent::AgentConfig& acfg, agent::QNetwork& online,
                        agent::QNetwork& target, const features::NormStats& stats,
                        const std::string& metrics_csv);

struct FinetuneResult {
    std::vector<MetricsRow> metrics;
    int episodes = 0;
    int instability_resets = 0;
    std::size_t buffer_size = 0;
};

// Online loop: pre-fill the replay buffer from the offline records, then
// alternate epsilon-greedy collection blocks with optimization iterations on
// the flatten objective only, bounding loss dropped. In pixel mode the
// prefilled node picks are re-labeled as the workspace cell containing the
// grasped node's position.
FinetuneResult finetune(const std::vector<Transition>& prefill, const TrainConfig& tc,
                        const agent::AgentConfig& acfg, const sim::SimParams& params,
                        const features::NormStats& stats, agent::QNetwork& online,
                        agent::QNetwork& target, const std::string& metrics_csv);

}  // namespace clothrl::pipeline
