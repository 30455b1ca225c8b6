#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "clothrl/agent/agent.hpp"
#include "clothrl/distill/render.hpp"
#include "clothrl/sim/types.hpp"

namespace clothrl::distill {

// Dense supervision maps at image resolution. The pick mask is the cloth
// silhouette inside the workspace square, the place mask the whole square;
// label values outside their mask are zero.
struct LabelMaps {
    int height = 0;
    int width = 0;
    std::vector<float> pick;
    std::vector<float> place;
    std::vector<std::uint8_t> pick_mask;
    std::vector<std::uint8_t> place_mask;
};

// Flatten-channel maps of a loaded Q-function: the pick map, the greedy pick
// under it, and the place map conditioned on that pick.
struct TeacherMaps {
    std::vector<float> pick;   // G*G
    std::vector<float> place;  // P*P
    int pick_index = 0;
};

TeacherMaps teacher_maps(agent::QFunction& q, const sim::ClothState& state);

// Each silhouette pixel takes the Q value of its nearest node in projection;
// nodes whose projections coincide within half a pixel compete by max, so
// values of buried layers surface through the pixel on top. The place map is
// bilinearly interpolated between cell centers over the workspace square.
LabelMaps project_labels(const sim::ClothState& state, const std::vector<float>& pick_map,
                         const std::vector<float>& place_map, int place_side,
                         const sim::SimParams& params, const RenderConfig& cfg,
                         const std::vector<std::uint8_t>& silhouette);

// Reads the projected maps back at node projections and cell centers and
// returns the mean squared recovery error. The student's validation loss
// cannot beat this projection floor; it is reported, never asserted.
double projection_round_trip_mse(const sim::ClothState& state, const std::vector<float>& pick_map,
                                 const std::vector<float>& place_map, int place_side,
                                 const sim::SimParams& params, const RenderConfig& cfg);

// ---------------------------------------------------------------------------
// Pair file

inline constexpr char kDistillMagic[4] = {'C', 'L', 'D', 'S'};
inline constexpr std::uint32_t kDistillVersion = 1;

struct DistillHeader {
    int height = 0;
    int width = 0;
    std::uint64_t count = 0;
    RenderConfig render;
};

struct DistillPair {
    Observation obs;
    LabelMaps labels;
};

// Bytes per record: observation and both label maps as f32, both masks as u8.
std::size_t distill_record_size(int height, int width);

void write_distill_header(std::ostream& out, const DistillHeader& header);
DistillHeader read_distill_header(std::istream& in);
DistillHeader read_distill_header(const std::string& path);

void append_distill_pair(std::ostream& out, const DistillPair& pair);

// Validating random-access reader over one open file; not safe to share
// across threads.
class DistillReader {
public:
    explicit DistillReader(const std::string& path);
    const DistillHeader& header() const { return header_; }
    DistillPair read(std::uint64_t index);

private:
    std::ifstream in_;
    DistillHeader header_;
    std::size_t record_bytes_ = 0;
    std::streamoff data_begin_ = 0;
};

struct DistillGenConfig {
    std::vector<std::string> state_files;  // transition files; every s_t is a candidate
    std::uint64_t count = 10000;           // paper-scale runs use 100000
    std::uint64_t seed = 0;
    RenderConfig render;
};

struct DistillGenReport {
    std::uint64_t pairs = 0;
    std::uint64_t source_states = 0;
    double projection_noise_mse = 0.0;  // round-trip floor over a small subsample
};

// Samples states, renders and labels them with the checkpointed teacher, and
// writes the pair file. Output bytes depend only on the config, the teacher
// and the sources, not on the worker count.
DistillGenReport generate_distill_dataset(const DistillGenConfig& cfg,
                                          const std::string& teacher_checkpoint,
                                          const std::string& out_path);

}  // namespace clothrl::distill
