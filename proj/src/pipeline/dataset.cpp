#include "clothrl/pipeline/dataset.hpp"

#include <cmath>
#include <fstream>

#include "clothrl/rewards/objectives.hpp"
#include "clothrl/util/binary_io.hpp"

namespace clothrl::pipeline {

namespace {

void write_params(std::ostream& os, const sim::SimParams& p) {
    io::write_le<double>(os, p.rest_length);
    io::write_le<double>(os, p.k_structural);
    io::write_le<double>(os, p.k_shear);
    io::write_le<double>(os, p.k_bend);
    io::write_le<double>(os, p.damping);
    io::write_le<double>(os, p.spring_damping);
    io::write_le<double>(os, p.gravity);
    io::write_le<double>(os, p.ground_friction);
    io::write_le<double>(os, p.dt);
    io::write_le<std::uint32_t>(os, p.substeps);
    io::write_le<double>(os, p.cloth_side);
    io::write_le<double>(os, p.workspace_side);
    io::write_le<double>(os, p.lift_height);
    io::write_le<double>(os, p.carry_speed);
    io::write_le<std::uint32_t>(os, p.settle_steps);
    io::write_le<double>(os, p.grasp_radius);
}

sim::SimParams read_params(std::istream& is) {
    sim::SimParams p;
    p.rest_length = io::read_le<double>(is);
    p.k_structural = io::read_le<double>(is);
    p.k_shear = io::read_le<double>(is);
    p.k_bend = io::read_le<double>(is);
    p.damping = io::read_le<double>(is);
    p.spring_damping = io::read_le<double>(is);
    p.gravity = io::read_le<double>(is);
    p.ground_friction = io::read_le<double>(is);
    p.dt = io::read_le<double>(is);
    p.substeps = static_cast<int>(io::read_le<std::uint32_t>(is));
    p.cloth_side = io::read_le<double>(is);
    p.workspace_side = io::read_le<double>(is);
    p.lift_height = io::read_le<double>(is);
    p.carry_speed = io::read_le<double>(is);
    p.settle_steps = static_cast<int>(io::read_le<std::uint32_t>(is));
    p.grasp_radius = io::read_le<double>(is);
    return p;
}

void write_header(std::ostream& os, const DatasetHeader& h) {
    io::write_magic(os, kDatasetMagic);
    io::write_le<std::uint32_t>(os, kDatasetVersion);
    io::write_le<std::uint32_t>(os, h.grid_side);
    io::write_le<std::uint32_t>(os, h.place_side);
    io::write_le<std::uint32_t>(os, h.objective_count);
    io::write_le<std::uint64_t>(os, h.record_count);
    write_params(os, h.params);
}

DatasetHeader read_header(std::istream& is) {
    io::expect_magic(is, kDatasetMagic, "dataset");
    const auto version = io::read_le<std::uint32_t>(is);
    if (version != kDatasetVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    DatasetHeader h;
    h.grid_side = static_cast<int>(io::read_le<std::uint32_t>(is));
    h.place_side = static_cast<int>(io::read_le<std::uint32_t>(is));
    h.objective_count = static_cast<int>(io::read_le<std::uint32_t>(is));
    h.record_count = io::read_le<std::uint64_t>(is);
    h.params = read_params(is);
    if (h.grid_side <= 0 || h.place_side <= 0 || h.objective_count != rewards::kObjectiveCount)
        throw IoError("corrupt dataset header");
    return h;
}

constexpr std::size_t kHeaderBytes = 4 + 4 + 3 * 4 + 8 + 14 * 8 + 2 * 4;

void write_record(std::ostream& os, const Transition& t) {
    io::write_array_le(os, t.state.data(), t.state.size());
    io::write_array_le(os, t.next_state.data(), t.next_state.size());
    io::write_le<std::int32_t>(os, t.pick);
    io::write_le<std::int32_t>(os, t.place);
    io::write_array_le(os, t.reward.data(), t.reward.size());
    io::write_le<std::uint8_t>(os, t.done);
    io::write_le<std::uint8_t>(os, t.redirected);
}

Transition read_record(std::istream& is, int grid_side) {
    Transition t;
    const std::size_t n = std::size_t(3) * grid_side * grid_side;
    t.state.resize(n);
    t.next_state.resize(n);
    io::read_array_le(is, t.state.data(), n);
    io::read_array_le(is, t.next_state.data(), n);
    t.pick = io::read_le<std::int32_t>(is);
    t.place = io::read_le<std::int32_t>(is);
    io::read_array_le(is, t.reward.data(), t.reward.size());
    t.done = io::read_le<std::uint8_t>(is);
    t.redirected = io::read_le<std::uint8_t>(is);
    return t;
}

}  // namespace

std::size_t record_size(int grid_side) {
    return std::size_t(2) * 3 * grid_side * grid_side * 4 + 2 * 4 + 9 * 4 + 2;
}

void validate_transition(const Transition& t, const DatasetHeader& h) {
    const std::size_t n = std::size_t(3) * h.grid_side * h.grid_side;
    if (t.state.size() != n || t.next_state.size() != n)
        throw IoError("transition has wrong state size");
    if (t.pick < 0 || t.pick >= h.grid_side * h.grid_side)
        throw IoError("transition pick index out of range");
    if (t.place < 0 || t.place >= h.place_side * h.place_side)
        throw IoError("transition place index out of range");
    for (float v : t.state)
        if (!std::isfinite(v)) throw IoError("non-finite position in transition state");
    for (float v : t.next_state)
        if (!std::isfinite(v)) throw IoError("non-finite position in transition next state");
    for (std::size_t j = 0; j < t.reward.size(); ++j) {
        const float r = t.reward[j];
        const bool miss = j == 0 && r == -10.0f;  // pixel-mode penalty
        if (!miss && !(r >= 0.0f && r <= static_cast<float>(rewards::kRewardMax) + 1e-4f))
            throw IoError("transition reward outside [0, 50]");
    }
    if (t.done > 1 || t.redirected > 1) throw IoError("transition flags must be 0/1");
}

void write_dataset(const std::string& path, DatasetHeader header,
                   const std::vector<Transition>& records) {
    header.record_count = records.size();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_header(out, header);
    for (const Transition& t : records) {
        validate_transition(t, header);
        write_record(out, t);
    }
    if (!out) throw IoError("write failed for " + path);
}

DatasetHeader read_dataset_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_header(in);
}

std::vector<Transition> read_dataset(const std::string& path, DatasetHeader* header,
                                     std::uint64_t first, std::int64_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const DatasetHeader h = read_header(in);
    if (header != nullptr) *header = h;
    if (first > h.record_count) throw IoError("record range starts past the end");
    const std::uint64_t avail = h.record_count - first;
    const std::uint64_t n =
        count < 0 ? avail : std::min<std::uint64_t>(avail, static_cast<std::uint64_t>(count));
    if (first > 0) {
        in.seekg(static_cast<std::streamoff>(kHeaderBytes + first * record_size(h.grid_side)));
        if (!in) throw IoError("seek failed in " + path);
    }
    std::vector<Transition> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        out.push_back(read_record(in, h.grid_side));
        validate_transition(out.back(), h);
    }
    return out;
}

}  // namespace clothrl::pipeline
