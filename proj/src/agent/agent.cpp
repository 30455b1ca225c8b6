#include "clothrl/agent/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "clothrl/nn/checkpoint.hpp"
#include "clothrl/util/binary_io.hpp"

namespace clothrl::agent {

void AgentConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    if (!(eps_pick >= 0.0 && eps_pick <= 1.0))
        throw std::invalid_argument("eps_pick must lie in [0, 1]");
    if (!(eps_place >= 0.0 && eps_place <= 1.0))
        throw std::invalid_argument("eps_place must lie in [0, 1]");
    if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
    if (!(termination_fraction > 0.0 && termination_fraction <= 1.0))
        throw std::invalid_argument("termination_fraction must lie in (0, 1]");
    rewards::objective_set(objective_count);  // rejects unsupported sizes
}

nn::Tensor batch_images(const std::vector<const std::vector<float>*>& states, int grid_side,
                        const features::NormStats& stats) {
    const int n = static_cast<int>(states.size());
    if (n == 0) throw std::invalid_argument("batch_images: empty batch");
    const int side = grid_side + 2;
    const std::size_t sample = std::size_t(3) * side * side;
    nn::Tensor x({n, 3, side, side});
    for (int i = 0; i < n; ++i) {
        features::StateImage img =
            features::normalize(pipeline::image_from_packed(*states[i], grid_side), stats);
        std::copy(img.pixels.begin(), img.pixels.end(), x.values.begin() + i * sample);
    }
    return x;
}

std::array<float, QNetwork::kPickEncoding> pick_encoding(const std::vector<float>& packed,
                                                         int grid_side, int pick, PickMode mode,
                                                         double workspace_side) {
    if (pick < 0 || pick >= grid_side * grid_side)
        throw std::invalid_argument("pick_encoding: pick index out of range");
    const int r = pick / grid_side;
    const int c = pick % grid_side;
    const double denom = grid_side > 1 ? grid_side - 1.0 : 1.0;
    std::array<float, QNetwork::kPickEncoding> e{};
    e[0] = static_cast<float>(r / denom);
    e[1] = static_cast<float>(c / denom);
    if (mode == PickMode::Node) {
        e[2] = static_cast<float>(packed[3 * pick + 0] / workspace_side);
        e[3] = static_cast<float>(packed[3 * pick + 1] / workspace_side);
        e[4] = static_cast<float>(packed[3 * pick + 2] / workspace_side);
    } else {
        e[2] = static_cast<float>((r + 0.5) / grid_side);
        e[3] = static_cast<float>((c + 0.5) / grid_side);
    }
    return e;
}

nn::Tensor NetworkQFunction::pick_q(const std::vector<const std::vector<float>*>& states) {
    nn::Tensor latent = net_.encode(batch_images(states, net_.cfg.grid_side, stats_));
    return net_.pick_maps(latent);
}

nn::Tensor NetworkQFunction::place_q(const std::vector<const std::vector<float>*>& states,
                                     const std::vector<int>& picks) {
    if (picks.size() != states.size())
        throw std::invalid_argument("place_q: picks do not match states");
    nn::Tensor latent = net_.encode(batch_images(states, net_.cfg.grid_side, stats_));
    nn::Tensor enc({static_cast<int>(states.size()), QNetwork::kPickEncoding});
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto e =
            pick_encoding(*states[i], net_.cfg.grid_side, picks[i], mode_, workspace_);
        std::copy(e.begin(), e.end(), enc.values.begin() + i * QNetwork::kPickEncoding);
    }
    return net_.place_maps(latent, enc);
}

int argmax_index(const float* values, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

ActionChoice select_action(QFunction& q, const std::vector<float>& packed_state,
                           const AgentConfig& cfg, Rng& rng, int objective) {
    const int g = q.grid_side();
    const int p = q.place_side();
    const std::vector<const std::vector<float>*> one{&packed_state};
    ActionChoice out;

    out.pick_random = rng.uniform() < cfg.eps_pick;
    if (out.pick_random) {
        out.pick_index = static_cast<int>(rng.uniform_index(std::uint64_t(g) * g));
    } else {
        nn::Tensor maps = q.pick_q(one);
        out.pick_index = argmax_index(maps.values.data() + std::size_t(objective) * g * g, g * g);
    }

    out.place_random = rng.uniform() < cfg.eps_place;
    if (out.place_random) {
        out.place_cell = static_cast<int>(rng.uniform_index(std::uint64_t(p) * p));
    } else {
        nn::Tensor maps = q.place_q(one, {out.pick_index});
        out.place_cell = argmax_index(maps.values.data() + std::size_t(objective) * p * p, p * p);
    }

    const int pr = out.place_cell / p;
    const int pc = out.place_cell % p;
    out.action = sim::PickPlaceAction::make(out.pick_index, (pr + 0.5) / double(p),
                                            (pc + 0.5) / double(p));
    return out;
}

TargetBatch compute_targets(const std::vector<const pipeline::Transition*>& batch,
                            QFunction& online, QFunction& target, const AgentConfig& cfg) {
    const int n = static_cast<int>(batch.size());
    if (n == 0) throw std::invalid_argument("compute_targets: empty batch");
    const int g = online.grid_side();
    const int p = online.place_side();
    const int gm = g * g;
    const int pm = p * p;

    std::vector<const std::vector<float>*> cur(n), next(n);
    std::vector<int> picks(n);
    for (int i = 0; i < n; ++i) {
        cur[i] = &batch[i]->state;
        next[i] = &batch[i]->next_state;
        picks[i] = batch[i]->pick;
    }

    nn::Tensor place_tgt = target.place_q(cur, picks);
    nn::Tensor pick_on = online.pick_q(next);
    nn::Tensor pick_tgt = target.pick_q(next);
    if (place_tgt.dim(1) != rewards::kObjectiveCount || pick_on.dim(1) != rewards::kObjectiveCount)
        throw std::invalid_argument("compute_targets: Q maps must carry all objective channels");

    TargetBatch out;
    out.pick.resize(n);
    out.place.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < rewards::kObjectiveCount; ++j) {
            const float* cells = place_tgt.values.data() + (std::size_t(i) * 9 + j) * pm;
            out.pick[i][j] = cells[argmax_index(cells, pm)];

            double t = batch[i]->reward[j];
            if (!batch[i]->done) {
                const float* on = pick_on.values.data() + (std::size_t(i) * 9 + j) * gm;
                const float* tg = pick_tgt.values.data() + (std::size_t(i) * 9 + j) * gm;
                t += cfg.gamma * tg[argmax_index(on, gm)];
            }
            out.place[i][j] = static_cast<float>(t);
        }
    }
    return out;
}

namespace {

// TD error plus optional hinge-bound excess on one head's maps, written into
// the map gradient in place.
double head_loss_terms(const nn::Tensor& maps, const std::vector<int>& taken,
                       const std::vector<std::array<float, 9>>& targets,
                       const std::vector<int>& active, int cells, double inv_td, double* bound_sum,
                       double bound, double inv_bound, nn::Tensor& dmaps) {
    const int n = static_cast<int>(taken.size());
    double td = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j : active) {
            const std::size_t base = (std::size_t(i) * 9 + j) * cells;
            const double diff = double(maps.values[base + taken[i]]) - double(targets[i][j]);
            td += diff * diff * inv_td;
            dmaps.values[base + taken[i]] += static_cast<float>(2.0 * diff * inv_td);
            if (bound_sum != nullptr) {
                const float* row = maps.values.data() + base;
                const int am = argmax_index(row, cells);
                const double excess = double(row[am]) - bound;
                if (excess > 0.0) {
                    *bound_sum += excess * excess * inv_bound;
                    dmaps.values[base + am] += static_cast<float>(2.0 * excess * inv_bound);
                }
            }
        }
    }
    return td;
}

}  // namespace

LossBreakdown agent_loss(QNetwork& net, const features::NormStats& stats, double workspace_side,
                         const std::vector<const pipeline::Transition*>& batch,
                         const TargetBatch& targets, const AgentConfig& cfg, bool include_bound) {
    const int n = static_cast<int>(batch.size());
    if (n == 0) throw std::invalid_argument("agent_loss: empty batch");
    if (targets.pick.size() != batch.size() || targets.place.size() != batch.size())
        throw std::invalid_argument("agent_loss: targets do not match batch");
    const std::vector<int> active = rewards::objective_set(cfg.objective_count);
    const int g = net.cfg.grid_side;
    const int p = net.cfg.place_side;
    if (net.cfg.objectives != rewards::kObjectiveCount)
        throw std::invalid_argument("agent_loss: network must carry all objective channels");

    net.params.zero_grad();

    std::vector<const std::vector<float>*> states(n);
    std::vector<int> picks(n), places(n);
    for (int i = 0; i < n; ++i) {
        states[i] = &batch[i]->state;
        picks[i] = batch[i]->pick;
        places[i] = batch[i]->place;
    }

    nn::Tensor x = batch_images(states, g, stats);
    QNetwork::EncoderCache enc_cache;
    nn::Tensor latent = net.encode(x, &enc_cache);

    QNetwork::HeadCache pick_cache;
    nn::Tensor pick_maps = net.pick_maps(latent, &pick_cache);

    nn::Tensor enc({n, QNetwork::kPickEncoding});
    for (int i = 0; i < n; ++i) {
        const auto e = pick_encoding(batch[i]->state, g, picks[i], cfg.pick_mode, workspace_side);
        std::copy(e.begin(), e.end(), enc.values.begin() + std::size_t(i) * QNetwork::kPickEncoding);
    }
    QNetwork::HeadCache place_cache;
    nn::Tensor place_maps = net.place_maps(latent, enc, &place_cache);

    nn::Tensor dpick(pick_maps.shape);
    nn::Tensor dplace(place_maps.shape);

    const double inv_td = 1.0 / (double(n) * double(active.size()));
    const double inv_bound = inv_td / 2.0;  // both heads share the bound mean
    const double bound = cfg.q_bound();
    LossBreakdown loss;
    double bound_sum = 0.0;
    loss.pick = head_loss_terms(pick_maps, picks, targets.pick, active, g * g, inv_td,
                                include_bound ? &bound_sum : nullptr, bound, inv_bound, dpick);
    loss.place = head_loss_terms(place_maps, places, targets.place, active, p * p, inv_td,
                                 include_bound ? &bound_sum : nullptr, bound, inv_bound, dplace);
    loss.bound = bound_sum;

    auto [dlatent_place, denc] = net.place_maps_backward(place_cache, dplace);
    (void)denc;  // conditioning is an input, not a parameter path
    nn::Tensor dlatent = net.pick_maps_backward(pick_cache, dpick);
    for (std::size_t i = 0; i < dlatent.values.size(); ++i)
        dlatent.values[i] += dlatent_place.values[i];
    net.encode_backward(enc_cache, dlatent);
    return loss;
}

void polyak_update(nn::ParamRegistry<float>& target, const nn::ParamRegistry<float>& online,
                   double tau) {
    if (target.entries.size() != online.entries.size())
        throw std::invalid_argument("polyak_update: registry size mismatch");
    for (std::size_t k = 0; k < target.entries.size(); ++k) {
        nn::Tensor& t = *target.entries[k].tensor;
        const nn::Tensor& o = *online.entries[k].tensor;
        if (target.entries[k].name != online.entries[k].name || t.shape != o.shape)
            throw std::invalid_argument("polyak_update: parameter mismatch at " +
                                        target.entries[k].name);
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            t.values[i] = static_cast<float>(tau * double(o.values[i]) +
                                            (1.0 - tau) * double(t.values[i]));
        }
    }
}

int pixel_pick_adapter(const sim::ClothState& state, int cell, int grid_cells,
                       double workspace_side, double grasp_radius) {
    if (cell < 0 || cell >= grid_cells * grid_cells)
        throw std::invalid_argument("pixel_pick_adapter: cell out of range");
    const double cx = (cell / grid_cells + 0.5) / grid_cells * workspace_side;
    const double cy = (cell % grid_cells + 0.5) / grid_cells * workspace_side;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        const double dx = state.positions[i].x - cx;
        const double dy = state.positions[i].y - cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best_d <= grasp_radius ? best : -1;
}

void save_agent(const std::string& path, const QNetwork& online, const AgentConfig& cfg,
                const features::NormStats& stats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    nn::write_checkpoint_tensors(out, online.params);
    io::write_magic(out, kAgentSectionMagic);
    io::write_le<std::uint32_t>(out, online.cfg.grid_side);
    io::write_le<std::uint32_t>(out, online.cfg.place_side);
    io::write_le<std::uint32_t>(out, online.cfg.latent);
    io::write_le<std::uint32_t>(out, online.cfg.objectives);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.pick_mode));
    io::write_le<std::uint32_t>(out, cfg.objective_count);
    io::write_le<double>(out, cfg.gamma);
    io::write_le<double>(out, cfg.tau);
    io::write_le<double>(out, cfg.r_max);
    io::write_le<double>(out, cfg.termination_fraction);
    io::write_le<double>(out, cfg.miss_penalty);
    for (double v : stats.mean) io::write_le<double>(out, v);
    for (double v : stats.stddev) io::write_le<double>(out, v);
    if (!out) throw IoError("write failed for " + path);
}

AgentCheckpoint load_agent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const std::vector<nn::NamedTensor> table = nn::read_checkpoint_tensors(in);
    io::expect_magic(in, kAgentSectionMagic, "agent checkpoint section");

    AgentCheckpoint ck;
    ck.net_cfg.grid_side = static_cast<int>(io::read_le<std::uint32_t>(in));
    ck.net_cfg.place_side = static_cast<int>(io::read_le<std::uint32_t>(in));
    ck.net_cfg.latent = static_cast<int>(io::read_le<std::uint32_t>(in));
    ck.net_cfg.objectives = static_cast<int>(io::read_le<std::uint32_t>(in));
    ck.cfg.pick_mode = static_cast<PickMode>(io::read_le<std::uint8_t>(in));
    ck.cfg.objective_count = static_cast<int>(io::read_le<std::uint32_t>(in));
    ck.cfg.gamma = io::read_le<double>(in);
    ck.cfg.tau = io::read_le<double>(in);
    ck.cfg.r_max = io::read_le<double>(in);
    ck.cfg.termination_fraction = io::read_le<double>(in);
    ck.cfg.miss_penalty = io::read_le<double>(in);
    for (double& v : ck.stats.mean) v = io::read_le<double>(in);
    for (double& v : ck.stats.stddev) v = io::read_le<double>(in);

    ck.online = std::make_unique<QNetwork>(ck.net_cfg, 0);
    nn::load_into_registry(table, ck.online->params);
    return ck;
}

}  // namespace clothrl::agent
