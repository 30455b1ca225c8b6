#include "clothrl/distill/labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "clothrl/nn/tensor.hpp"
#include "clothrl/pipeline/dataset.hpp"
#include "clothrl/pipeline/transition.hpp"
#include "clothrl/util/binary_io.hpp"
#include "clothrl/util/parallel.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::distill {

namespace {

// Stream tags for pair sampling and per-pair appearance jitter.
constexpr std::uint64_t kSampleStream = 0xd15c;
constexpr std::uint64_t kJitterStream = 0xc7e0;

// Nodes within this margin of the nearest-node distance compete for a pixel,
// and any node projecting within one pixel of the center always competes, so
// a buried layer's value is never lost at its own pixel; the max keeps it
// graspable through the layer on top.
constexpr double kStackTolPx = 0.5;
constexpr double kMinReachPx = 1.0;

}  // namespace

TeacherMaps teacher_maps(agent::QFunction& q, const sim::ClothState& state) {
    const int g = q.grid_side();
    const int p = q.place_side();
    const std::vector<float> packed = pipeline::pack_positions(state);
    const std::vector<const std::vector<float>*> one{&packed};
    TeacherMaps out;
    nn::Tensor pick = q.pick_q(one);
    out.pick.assign(pick.values.begin(), pick.values.begin() + std::size_t(g) * g);
    out.pick_index = agent::argmax_index(out.pick.data(), g * g);
    nn::Tensor place = q.place_q(one, {out.pick_index});
    out.place.assign(place.values.begin(), place.values.begin() + std::size_t(p) * p);
    return out;
}

LabelMaps project_labels(const sim::ClothState& state, const std::vector<float>& pick_map,
                         const std::vector<float>& place_map, int place_side,
                         const sim::SimParams& params, const RenderConfig& cfg,
                         const std::vector<std::uint8_t>& silhouette) {
    const int g = state.grid_side;
    const int n = g * g;
    if (int(pick_map.size()) != n) throw std::invalid_argument("pick map does not match grid");
    if (int(place_map.size()) != place_side * place_side)
        throw std::invalid_argument("place map does not match place grid");
    if (silhouette.size() != std::size_t(cfg.height) * cfg.width)
        throw std::invalid_argument("silhouette does not match render size");

    LabelMaps out;
    out.height = cfg.height;
    out.width = cfg.width;
    const std::size_t px = std::size_t(cfg.height) * cfg.width;
    out.pick.assign(px, 0.0f);
    out.place.assign(px, 0.0f);
    out.pick_mask.assign(px, 0);
    out.place_mask.assign(px, 0);

    const double ws = params.workspace_side;
    std::vector<double> nr(n), nc(n);
    for (int i = 0; i < n; ++i) {
        nr[i] = proj_row(state.positions[i].x, ws, cfg);
        nc[i] = proj_col(state.positions[i].y, ws, cfg);
    }

    for (int v = 0; v < cfg.height; ++v) {
        for (int u = 0; u < cfg.width; ++u) {
            const std::size_t i = std::size_t(v) * cfg.width + u;
            if (!in_workspace(v, u, cfg)) continue;
            out.place_mask[i] = 1;

            // Map rows follow x, columns follow y, as in the place grid.
            const Vec2 w = pixel_center(v, u, ws, cfg);
            const double xf = std::clamp(w.x / ws * place_side - 0.5, 0.0, double(place_side - 1));
            const double yf = std::clamp(w.y / ws * place_side - 0.5, 0.0, double(place_side - 1));
            const int x0 = int(xf), y0 = int(yf);
            const int x1 = std::min(x0 + 1, place_side - 1);
            const int y1 = std::min(y0 + 1, place_side - 1);
            const double fx = xf - x0, fy = yf - y0;
            out.place[i] = float((1 - fx) * ((1 - fy) * place_map[x0 * place_side + y0] +
                                             fy * place_map[x0 * place_side + y1]) +
                                 fx * ((1 - fy) * place_map[x1 * place_side + y0] +
                                       fy * place_map[x1 * place_side + y1]));

            if (!silhouette[i]) continue;
            out.pick_mask[i] = 1;
            const double pr = v + 0.5, pc = u + 0.5;
            double d2min = std::numeric_limits<double>::infinity();
            for (int k = 0; k < n; ++k) {
                const double dr = nr[k] - pr, dc = nc[k] - pc;
                d2min = std::min(d2min, dr * dr + dc * dc);
            }
            const double thr = std::max(std::sqrt(d2min) + kStackTolPx, kMinReachPx);
            const double thr2 = thr * thr;
            float best = -std::numeric_limits<float>::infinity();
            for (int k = 0; k < n; ++k) {
                const double dr = nr[k] - pr, dc = nc[k] - pc;
                if (dr * dr + dc * dc <= thr2) best = std::max(best, pick_map[k]);
            }
            out.pick[i] = best;
        }
    }
    return out;
}

double projection_round_trip_mse(const sim::ClothState& state, const std::vector<float>& pick_map,
                                 const std::vector<float>& place_map, int place_side,
                                 const sim::SimParams& params, const RenderConfig& cfg) {
    const auto scene = render_scene(state, params, cfg);
    const LabelMaps maps =
        project_labels(state, pick_map, place_map, place_side, params, cfg, scene.silhouette);
    const double ws = params.workspace_side;
    double se = 0.0;
    std::int64_t cnt = 0;

    const int g = state.grid_side;
    for (int k = 0; k < g * g; ++k) {
        const int v = int(std::floor(proj_row(state.positions[k].x, ws, cfg)));
        const int u = int(std::floor(proj_col(state.positions[k].y, ws, cfg)));
        if (v < 0 || v >= cfg.height || u < 0 || u >= cfg.width) continue;
        const std::size_t i = std::size_t(v) * cfg.width + u;
        if (!maps.pick_mask[i]) continue;
        const double d = double(maps.pick[i]) - double(pick_map[k]);
        se += d * d;
        ++cnt;
    }
    for (int r = 0; r < place_side; ++r) {
        for (int c = 0; c < place_side; ++c) {
            const double x = (r + 0.5) / place_side * ws;
            const double y = (c + 0.5) / place_side * ws;
            const int v = int(std::floor(proj_row(x, ws, cfg)));
            const int u = int(std::floor(proj_col(y, ws, cfg)));
            if (v < 0 || v >= cfg.height || u < 0 || u >= cfg.width) continue;
            const std::size_t i = std::size_t(v) * cfg.width + u;
            if (!maps.place_mask[i]) continue;
            const double d = double(maps.place[i]) - double(place_map[r * place_side + c]);
            se += d * d;
            ++cnt;
        }
    }
    return cnt == 0 ? 0.0 : se / double(cnt);
}

// ---------------------------------------------------------------------------
// Pair file

std::size_t distill_record_size(int height, int width) {
    const std::size_t px = std::size_t(height) * width;
    return px * (5 * sizeof(float) + 2);
}

void write_distill_header(std::ostream& out, const DistillHeader& header) {
    header.render.validate();
    io::write_magic(out, kDistillMagic);
    io::write_le<std::uint32_t>(out, kDistillVersion);
    io::write_le<std::int32_t>(out, header.height);
    io::write_le<std::int32_t>(out, header.width);
    io::write_le<std::uint64_t>(out, header.count);
    write_render_config(out, header.render);
}

DistillHeader read_distill_header(std::istream& in) {
    io::expect_magic(in, kDistillMagic, "distill file");
    if (io::read_le<std::uint32_t>(in) != kDistillVersion)
        throw IoError("unsupported distill file version");
    DistillHeader h;
    h.height = io::read_le<std::int32_t>(in);
    h.width = io::read_le<std::int32_t>(in);
    h.count = io::read_le<std::uint64_t>(in);
    h.render = read_render_config(in);
    if (h.height != h.render.height || h.width != h.render.width)
        throw IoError("distill header size does not match its render config");
    return h;
}

DistillHeader read_distill_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_distill_header(in);
}

void append_distill_pair(std::ostream& out, const DistillPair& pair) {
    const std::size_t px = std::size_t(pair.obs.height) * pair.obs.width;
    io::write_array_le(out, pair.obs.chw.data(), 3 * px);
    io::write_array_le(out, pair.labels.pick.data(), px);
    io::write_array_le(out, pair.labels.place.data(), px);
    io::write_array_le(out, pair.labels.pick_mask.data(), px);
    io::write_array_le(out, pair.labels.place_mask.data(), px);
}

DistillReader::DistillReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path);
    header_ = read_distill_header(in_);
    record_bytes_ = distill_record_size(header_.height, header_.width);
    data_begin_ = in_.tellg();
    in_.seekg(0, std::ios::end);
    const std::streamoff size = in_.tellg();
    if (size != data_begin_ + std::streamoff(header_.count * record_bytes_))
        throw IoError("distill file size does not match its header");
}

DistillPair DistillReader::read(std::uint64_t index) {
    if (index >= header_.count) throw IoError("distill record index out of range");
    in_.clear();
    in_.seekg(data_begin_ + std::streamoff(index * record_bytes_));
    const std::size_t px = std::size_t(header_.height) * header_.width;
    DistillPair p;
    p.obs.height = header_.height;
    p.obs.width = header_.width;
    p.obs.chw.resize(3 * px);
    p.labels.height = header_.height;
    p.labels.width = header_.width;
    p.labels.pick.resize(px);
    p.labels.place.resize(px);
    p.labels.pick_mask.resize(px);
    p.labels.place_mask.resize(px);
    io::read_array_le(in_, p.obs.chw.data(), 3 * px);
    io::read_array_le(in_, p.labels.pick.data(), px);
    io::read_array_le(in_, p.labels.place.data(), px);
    io::read_array_le(in_, p.labels.pick_mask.data(), px);
    io::read_array_le(in_, p.labels.place_mask.data(), px);

    for (float v : p.obs.chw) {
        if (!(v >= 0.0f && v <= 1.0f)) throw IoError("observation value outside [0, 1]");
    }
    for (std::size_t i = 0; i < px; ++i) {
        if (p.labels.pick_mask[i] > 1 || p.labels.place_mask[i] > 1)
            throw IoError("mask value outside {0, 1}");
        if (p.labels.pick_mask[i] && !p.labels.place_mask[i])
            throw IoError("pick mask leaves the workspace mask");
        if (p.labels.pick_mask[i] && !std::isfinite(p.labels.pick[i]))
            throw IoError("non-finite pick label on a valid pixel");
        if (p.labels.place_mask[i] && !std::isfinite(p.labels.place[i]))
            throw IoError("non-finite place label on a valid pixel");
    }
    return p;
}

namespace {

RenderConfig jittered(const RenderConfig& cfg, std::uint64_t seed, std::uint64_t pair_index) {
    if (cfg.color_jitter <= 0.0) return cfg;
    Rng rng(derive_seed(seed, kJitterStream + pair_index));
    RenderConfig c = cfg;
    const double j = cfg.color_jitter;
    for (double& v : c.background) v = std::clamp(v + rng.uniform(-j, j), 0.0, 1.0);
    for (double& v : c.cloth) v = std::clamp(v + rng.uniform(-j, j), 0.0, 1.0);
    return c;
}

}  // namespace

DistillGenReport generate_distill_dataset(const DistillGenConfig& cfg,
                                          const std::string& teacher_checkpoint,
                                          const std::string& out_path) {
    cfg.render.validate();
    if (cfg.state_files.empty()) throw std::invalid_argument("no state files given");

    agent::AgentCheckpoint teacher = agent::load_agent(teacher_checkpoint);
    int grid_side = 0;
    sim::SimParams params;
    std::vector<std::vector<float>> states;
    for (const std::string& file : cfg.state_files) {
        pipeline::DatasetHeader h = pipeline::read_dataset_header(file);
        if (grid_side == 0) {
            grid_side = h.grid_side;
            params = h.params;
        } else if (h.grid_side != grid_side) {
            throw std::invalid_argument("state files disagree on grid side");
        }
        for (std::uint64_t first = 0; first < h.record_count; first += 2048) {
            const std::int64_t n =
                std::int64_t(std::min<std::uint64_t>(2048, h.record_count - first));
            for (auto& t : pipeline::read_dataset(file, nullptr, first, n)) {
                states.push_back(std::move(t.state));
            }
        }
    }
    if (states.empty()) throw std::invalid_argument("state files contain no records");
    if (grid_side != teacher.net_cfg.grid_side)
        throw std::invalid_argument("teacher grid side does not match the state files");

    const std::uint64_t n_src = states.size();
    std::vector<std::uint64_t> indices(cfg.count);
    if (cfg.count <= n_src) {
        std::vector<std::uint64_t> pool(n_src);
        std::iota(pool.begin(), pool.end(), std::uint64_t(0));
        Rng rng(derive_seed(cfg.seed, kSampleStream));
        for (std::uint64_t i = 0; i < cfg.count; ++i) {
            std::swap(pool[i], pool[i + rng.uniform_index(n_src - i)]);
            indices[i] = pool[i];
        }
    } else {
        for (std::uint64_t i = 0; i < cfg.count; ++i) indices[i] = i % n_src;
    }

    agent::NetworkQFunction qf(*teacher.online, teacher.stats, params.workspace_side,
                               teacher.cfg.pick_mode);
    const int place_side = teacher.online->cfg.place_side;

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot open " + out_path);
    DistillHeader header;
    header.height = cfg.render.height;
    header.width = cfg.render.width;
    header.count = cfg.count;
    header.render = cfg.render;
    write_distill_header(out, header);

    const std::uint64_t noise_pairs = std::min<std::uint64_t>(cfg.count, 32);
    std::vector<double> noise(noise_pairs, 0.0);
    const std::size_t rec = distill_record_size(cfg.render.height, cfg.render.width);
    const std::uint64_t chunk = 128;
    for (std::uint64_t base = 0; base < cfg.count; base += chunk) {
        const std::uint64_t n = std::min(chunk, cfg.count - base);
        std::vector<std::string> bytes(n);
        parallel_for(std::size_t(n), [&](std::size_t k) {
            const std::uint64_t pi = base + k;
            const sim::ClothState state =
                pipeline::unpack_positions(states[indices[pi]], grid_side);
            const RenderConfig rc = jittered(cfg.render, cfg.seed, pi);
            const RenderResult scene = render_scene(state, params, rc);
            const TeacherMaps maps = teacher_maps(qf, state);
            DistillPair pair;
            pair.obs = scene.image;
            pair.labels = project_labels(state, maps.pick, maps.place, place_side, params, rc,
                                         scene.silhouette);
            std::ostringstream buf;
            append_distill_pair(buf, pair);
            bytes[k] = std::move(buf).str();
            if (pi < noise_pairs) {
                noise[pi] = projection_round_trip_mse(state, maps.pick, maps.place, place_side,
                                                      params, rc);
            }
        });
        for (std::uint64_t k = 0; k < n; ++k) {
            if (bytes[k].size() != rec) throw IoError("distill record size drifted");
            out.write(bytes[k].data(), std::streamsize(rec));
        }
    }
    if (!out) throw IoError("short write to " + out_path);
    out.close();

    DistillGenReport report;
    report.pairs = cfg.count;
    report.source_states = n_src;
    report.projection_noise_mse =
        noise_pairs == 0
            ? 0.0
            : std::accumulate(noise.begin(), noise.end(), 0.0) / double(noise_pairs);
    return report;
}

}  // namespace clothrl::distill
