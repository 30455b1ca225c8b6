#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "clothrl/agent/q_network.hpp"
#include "clothrl/features/state_image.hpp"
#include "clothrl/pipeline/transition.hpp"
#include "clothrl/rewards/objectives.hpp"
#include "clothrl/sim/types.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::agent {

// Node mode picks grid nodes directly; pixel mode picks workspace cells on the
// same G x G layout and resolves them to nodes at execution time.
enum class PickMode : std::uint8_t { Node = 0, Pixel = 1 };

struct AgentConfig {
    double gamma = 0.9;
    double tau = 5e-4;
    double r_max = rewards::kRewardMax;
    double eps_pick = 0.0;
    double eps_place = 0.0;
    double termination_fraction = 0.95;
    PickMode pick_mode = PickMode::Node;
    double miss_penalty = -10.0;
    int objective_count = 9;  // size of the trained objective set (1, 3 or 9)

    double q_bound() const { return r_max / (1.0 - gamma); }
    void validate() const;
};

// Batched Q evaluation over packed position arrays. Training and rollouts go
// through the network-backed implementation; tests substitute table mocks.
class QFunction {
public:
    virtual ~QFunction() = default;
    virtual int grid_side() const = 0;
    virtual int place_side() const = 0;
    // -> (N, objectives, G, G)
    virtual nn::Tensor pick_q(const std::vector<const std::vector<float>*>& states) = 0;
    // -> (N, objectives, P, P), conditioned per sample on picks[n]
    virtual nn::Tensor place_q(const std::vector<const std::vector<float>*>& states,
                               const std::vector<int>& picks) = 0;
};

class NetworkQFunction : public QFunction {
public:
    NetworkQFunction(QNetwork& net, const features::NormStats& stats, double workspace_side,
                     PickMode mode)
        : net_(net), stats_(stats), workspace_(workspace_side), mode_(mode) {}

    int grid_side() const override { return net_.cfg.grid_side; }
    int place_side() const override { return net_.cfg.place_side; }
    nn::Tensor pick_q(const std::vector<const std::vector<float>*>& states) override;
    nn::Tensor place_q(const std::vector<const std::vector<float>*>& states,
                       const std::vector<int>& picks) override;

private:
    QNetwork& net_;
    features::NormStats stats_;
    double workspace_;
    PickMode mode_;
};

// Normalized (N, 3, G+2, G+2) image batch from packed states.
nn::Tensor batch_images(const std::vector<const std::vector<float>*>& states, int grid_side,
                        const features::NormStats& stats);

// 5-value place-head conditioning: grid coordinates over G-1 plus the pick's
// scene position over the workspace side. Pixel mode uses the requested
// cell's center with a zero height slot.
std::array<float, QNetwork::kPickEncoding> pick_encoding(const std::vector<float>& packed,
                                                         int grid_side, int pick, PickMode mode,
                                                         double workspace_side);

// Lowest flat index attaining the maximum.
int argmax_index(const float* values, int n);

struct ActionChoice {
    sim::PickPlaceAction action;
    int pick_index = 0;  // flat index into the G x G pick map
    int place_cell = 0;  // flat index into the P x P place map
    bool pick_random = false;
    bool place_random = false;
};

// Factorized epsilon-greedy selection on one objective channel. The place
// target is the chosen cell's center in normalized workspace coordinates
// (map row -> x, column -> y). In pixel mode action.pick holds the requested
// cell; the rollout adapter resolves it to a node.
ActionChoice select_action(QFunction& q, const std::vector<float>& packed_state,
                           const AgentConfig& cfg, Rng& rng, int objective = 0);

struct TargetBatch {
    std::vector<std::array<float, rewards::kObjectiveCount>> pick;
    std::vector<std::array<float, rewards::kObjectiveCount>> place;
};

// Double-estimator targets, all objective channels regardless of masking.
// Place: r + gamma * Q_pick_target(s', argmax Q_pick_online(s')), or r alone
// when terminal. Pick: max over cells of Q_place_target(s_t, pick_t).
TargetBatch compute_targets(const std::vector<const pipeline::Transition*>& batch,
                            QFunction& online, QFunction& target, const AgentConfig& cfg);

struct LossBreakdown {
    double pick = 0.0;
    double place = 0.0;
    double bound = 0.0;
    double total() const { return pick + place + bound; }
};

// Forward and reverse pass over one batch; gradients land in net.params
// (zeroed on entry). TD terms are squared errors at the taken actions,
// averaged over batch x trained objectives. The bound term is the mean
// squared excess of per-map maxima above r_max / (1 - gamma) across both
// heads' trained channels.
LossBreakdown agent_loss(QNetwork& net, const features::NormStats& stats, double workspace_side,
                         const std::vector<const pipeline::Transition*>& batch,
                         const TargetBatch& targets, const AgentConfig& cfg, bool include_bound);

// theta' <- tau * theta + (1 - tau) * theta', elementwise in double precision.
void polyak_update(nn::ParamRegistry<float>& target, const nn::ParamRegistry<float>& online,
                   double tau);

// Nearest node (xy distance) within grasp radius of the requested cell's
// center, or -1 for a miss.
int pixel_pick_adapter(const sim::ClothState& state, int cell, int grid_cells,
                       double workspace_side, double grasp_radius);

inline constexpr char kAgentSectionMagic[4] = {'A', 'G', 'T', 'C'};

struct AgentCheckpoint {
    QNetworkConfig net_cfg;
    AgentConfig cfg;
    features::NormStats stats;
    std::unique_ptr<QNetwork> online;
};

// Tensor table of the online network followed by an "AGTC" section holding
// the network shape, agent config and normalization stats. The target network
// is reconstructed as a copy on load.
void save_agent(const std::string& path, const QNetwork& online, const AgentConfig& cfg,
                const features::NormStats& stats);
AgentCheckpoint load_agent(const std::string& path);

}  // namespace clothrl::agent
