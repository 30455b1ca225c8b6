#include "clothrl/distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "clothrl/nn/checkpoint.hpp"
#include "clothrl/nn/optimizer.hpp"
#include "clothrl/pipeline/rollout.hpp"
#include "clothrl/util/binary_io.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::distill {

namespace {

constexpr std::uint64_t kSplitStream = 0xd511;
constexpr std::uint64_t kEpochStream = 0xd5e0;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Batch {
    nn::Tensor x;       // (B, 3, H, W)
    nn::Tensor labels;  // (B, 2, H, W)
    nn::Tensor mask;    // (B, 2, H, W), 0/1
};

Batch load_batch(DistillReader& reader, const std::vector<std::uint64_t>& indices,
                 std::size_t first, std::size_t count) {
    const int h = reader.header().height;
    const int w = reader.header().width;
    const std::size_t px = std::size_t(h) * w;
    const int b = int(count);
    Batch out{nn::Tensor({b, 3, h, w}), nn::Tensor({b, 2, h, w}), nn::Tensor({b, 2, h, w})};
    for (std::size_t k = 0; k < count; ++k) {
        DistillPair pair = reader.read(indices[first + k]);
        std::copy(pair.obs.chw.begin(), pair.obs.chw.end(), out.x.values.begin() + k * 3 * px);
        float* lab = out.labels.values.data() + k * 2 * px;
        float* msk = out.mask.values.data() + k * 2 * px;
        std::copy(pair.labels.pick.begin(), pair.labels.pick.end(), lab);
        std::copy(pair.labels.place.begin(), pair.labels.place.end(), lab + px);
        for (std::size_t i = 0; i < px; ++i) {
            msk[i] = float(pair.labels.pick_mask[i]);
            msk[px + i] = float(pair.labels.place_mask[i]);
        }
    }
    return out;
}

// Returns (sum of masked squared errors, mask pixel count) and optionally the
// loss gradient d(se/masksum)/d(out).
std::pair<double, double> masked_se(const nn::Tensor& out, const Batch& batch,
                                    nn::Tensor* dout) {
    double se = 0.0, msum = 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double m = batch.mask.values[i];
        const double d = double(out.values[i]) - double(batch.labels.values[i]);
        se += m * d * d;
        msum += m;
    }
    if (dout) {
        *dout = nn::Tensor(out.shape);
        const double scale = msum > 0.0 ? 2.0 / msum : 0.0;
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            dout->values[i] =
                float(scale * batch.mask.values[i] *
                      (double(out.values[i]) - double(batch.labels.values[i])));
        }
    }
    return {se, msum};
}

}  // namespace

void DistillTrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(train_split > 0.0 && train_split < 1.0))
        throw std::invalid_argument("train split must lie in (0, 1)");
}

void write_distill_metrics_header(const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "epoch,train_mse,val_mse\n";
}

void append_distill_metrics_row(const std::string& path, const DistillEpochRow& row) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot open " + path + " for appending");
    os << row.epoch << ',' << row.train_mse << ',' << row.val_mse << '\n';
}

double student_masked_mse(StudentNet& net, DistillReader& reader,
                          const std::vector<std::uint64_t>& indices, int batch_size) {
    double se = 0.0, msum = 0.0;
    for (std::size_t first = 0; first < indices.size(); first += std::size_t(batch_size)) {
        const std::size_t n = std::min(std::size_t(batch_size), indices.size() - first);
        Batch batch = load_batch(reader, indices, first, n);
        const nn::Tensor out = net.forward(batch.x);
        const auto [bse, bmsum] = masked_se(out, batch, nullptr);
        se += bse;
        msum += bmsum;
    }
    return msum > 0.0 ? se / msum : kNan;
}

DistillTrainResult train_student(const std::string& data_path, const DistillTrainConfig& tc,
                                 StudentNet& net, const std::string& metrics_csv) {
    tc.validate();
    DistillReader reader(data_path);
    const std::uint64_t n = reader.header().count;
    if (n == 0) throw IoError("distill file has no pairs");
    if (reader.header().height != net.cfg.height || reader.header().width != net.cfg.width)
        throw std::invalid_argument("student input shape does not match the pair file");

    std::vector<std::uint64_t> order(n);
    std::iota(order.begin(), order.end(), std::uint64_t(0));
    Rng split_rng(derive_seed(tc.seed, kSplitStream));
    for (std::uint64_t i = 0; i + 1 < n; ++i) {
        std::swap(order[i], order[i + split_rng.uniform_index(n - i)]);
    }
    const std::uint64_t train_n = std::max<std::uint64_t>(1, std::uint64_t(tc.train_split * n));
    std::vector<std::uint64_t> train(order.begin(), order.begin() + train_n);
    std::vector<std::uint64_t> val(order.begin() + train_n, order.end());
    if (tc.val_cap > 0 && val.size() > std::size_t(tc.val_cap)) val.resize(tc.val_cap);

    nn::OptimizerConfig oc;
    oc.flavor = nn::OptimizerFlavor::Adam;
    oc.lr = tc.lr;
    nn::OptimizerState opt;

    if (!metrics_csv.empty()) write_distill_metrics_header(metrics_csv);
    DistillTrainResult result;
    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        Rng erng(derive_seed(tc.seed, kEpochStream + std::uint64_t(epoch)));
        for (std::size_t i = 0; i + 1 < train.size(); ++i) {
            std::swap(train[i], train[i + erng.uniform_index(train.size() - i)]);
        }
        double se = 0.0, msum = 0.0;
        for (std::size_t first = 0; first < train.size(); first += std::size_t(tc.batch_size)) {
            const std::size_t bn = std::min(std::size_t(tc.batch_size), train.size() - first);
            Batch batch = load_batch(reader, train, first, bn);
            StudentNet::Cache cache;
            const nn::Tensor out = net.forward(batch.x, &cache);
            nn::Tensor dout;
            const auto [bse, bmsum] = masked_se(out, batch, &dout);
            se += bse;
            msum += bmsum;
            if (bmsum == 0.0) continue;
            net.params.zero_grad();
            net.backward(cache, dout);
            nn::optimizer_step(net.params, opt, oc);
        }
        DistillEpochRow row;
        row.epoch = epoch;
        row.train_mse = msum > 0.0 ? se / msum : kNan;
        row.val_mse = val.empty() ? kNan : student_masked_mse(net, reader, val, tc.batch_size);
        result.metrics.push_back(row);
        if (!metrics_csv.empty()) append_distill_metrics_row(metrics_csv, row);
    }
    return result;
}

void save_student(const std::string& path, const StudentNet& net, const RenderConfig& render) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    nn::write_checkpoint_tensors(out, net.params);
    io::write_magic(out, kStudentSectionMagic);
    io::write_le<std::uint32_t>(out, net.cfg.height);
    io::write_le<std::uint32_t>(out, net.cfg.width);
    write_render_config(out, render);
    if (!out) throw IoError("write failed for " + path);
}

StudentCheckpoint load_student(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const std::vector<nn::NamedTensor> table = nn::read_checkpoint_tensors(in);
    io::expect_magic(in, kStudentSectionMagic, "student checkpoint section");
    StudentCheckpoint ck;
    ck.cfg.height = int(io::read_le<std::uint32_t>(in));
    ck.cfg.width = int(io::read_le<std::uint32_t>(in));
    ck.render = read_render_config(in);
    ck.net = std::make_unique<StudentNet>(ck.cfg, 0);
    nn::load_into_registry(table, ck.net->params);
    return ck;
}

StudentDecision student_decision(const std::vector<float>& maps,
                                 const std::vector<std::uint8_t>& pick_mask,
                                 const std::vector<std::uint8_t>& place_mask,
                                 const sim::ClothState& state, const sim::SimParams& params,
                                 const RenderConfig& cfg) {
    const std::size_t px = std::size_t(cfg.height) * cfg.width;
    if (maps.size() != 2 * px || pick_mask.size() != px || place_mask.size() != px)
        throw std::invalid_argument("student maps do not match the render size");

    const auto masked_argmax = [px](const float* ch, const std::vector<std::uint8_t>& mask) {
        std::ptrdiff_t best = -1;
        for (std::size_t i = 0; i < px; ++i) {
            if (!mask[i]) continue;
            if (best < 0 || ch[i] > ch[best]) best = std::ptrdiff_t(i);
        }
        return best;
    };

    const std::ptrdiff_t pick_px = masked_argmax(maps.data(), pick_mask);
    if (pick_px < 0) throw std::invalid_argument("empty cloth silhouette");
    const std::ptrdiff_t place_px = masked_argmax(maps.data() + px, place_mask);
    if (place_px < 0) throw std::invalid_argument("empty workspace mask");

    StudentDecision d;
    d.pick_pixel = int(pick_px);
    d.place_pixel = int(place_px);

    const double ws = params.workspace_side;
    const Vec2 pick_pos =
        pixel_center(int(pick_px) / cfg.width, int(pick_px) % cfg.width, ws, cfg);
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        const double dx = state.positions[i].x - pick_pos.x;
        const double dy = state.positions[i].y - pick_pos.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
            best_d2 = d2;
            d.pick_node = int(i);
        }
    }
    if (!std::isfinite(best_d2)) throw std::invalid_argument("state has no nodes");

    const Vec2 place_pos =
        pixel_center(int(place_px) / cfg.width, int(place_px) % cfg.width, ws, cfg);
    d.place_x = std::clamp(place_pos.x / ws, 0.0, 1.0);
    d.place_y = std::clamp(place_pos.y / ws, 0.0, 1.0);
    return d;
}

namespace {

StudentDecision decide(StudentNet& net, const sim::ClothState& state,
                       const sim::SimParams& params, const RenderConfig& cfg) {
    const RenderResult scene = render_scene(state, params, cfg);
    const std::size_t px = std::size_t(cfg.height) * cfg.width;
    nn::Tensor x({1, 3, cfg.height, cfg.width});
    std::copy(scene.image.chw.begin(), scene.image.chw.end(), x.values.begin());
    const nn::Tensor out = net.forward(x);
    std::vector<float> maps(out.values.begin(), out.values.end());
    std::vector<std::uint8_t> pick_mask(px, 0), place_mask(px, 0);
    for (int v = 0; v < cfg.height; ++v) {
        for (int u = 0; u < cfg.width; ++u) {
            const std::size_t i = std::size_t(v) * cfg.width + u;
            place_mask[i] = in_workspace(v, u, cfg) ? 1 : 0;
            pick_mask[i] = place_mask[i] && scene.silhouette[i] ? 1 : 0;
        }
    }
    return student_decision(maps, pick_mask, place_mask, state, params, cfg);
}

}  // namespace

sim::PickPlaceAction student_action(StudentNet& net, const sim::ClothState& state,
                                    const sim::SimParams& params, const RenderConfig& cfg) {
    const StudentDecision d = decide(net, state, params, cfg);
    return sim::PickPlaceAction::make(d.pick_node, d.place_x, d.place_y);
}

StudentPolicy::StudentPolicy(StudentNet& net, const RenderConfig& render,
                             const sim::SimParams& params, int place_side)
    : net_(net), render_(render), params_(params), place_side_(place_side) {
    render_.validate();
    if (place_side_ < 1) throw std::invalid_argument("place side must be positive");
}

eval::PolicyDecision StudentPolicy::act(const sim::ClothState& state, std::uint64_t episode_seed,
                                        int step) {
    (void)episode_seed;
    (void)step;
    const StudentDecision d = decide(net_, state, params_, render_);
    const double ws = params_.workspace_side;
    return {d.pick_node,
            pipeline::cell_of_position(d.place_x * ws, d.place_y * ws, place_side_, ws)};
}

std::size_t StudentPolicy::parameter_count() const {
    return std::size_t(net_.params.total_params());
}

}  // namespace clothrl::distill
