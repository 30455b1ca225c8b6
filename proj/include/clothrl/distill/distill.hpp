#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "clothrl/distill/labels.hpp"
#include "clothrl/distill/render.hpp"
#include "clothrl/distill/student.hpp"
#include "clothrl/eval/evaluate.hpp"
#include "clothrl/sim/types.hpp"

namespace clothrl::distill {

struct DistillTrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double lr = 1e-3;
    double train_split = 0.8;
    int val_cap = 512;  // validation pairs scored per epoch; <= 0 scores all
    std::uint64_t seed = 0;

    void validate() const;
};

struct DistillEpochRow {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

void write_distill_metrics_header(const std::string& path);
void append_distill_metrics_row(const std::string& path, const DistillEpochRow& row);

// Mask-weighted mean squared error of the student against the stored labels
// over the given records: sum of masked squared errors on both channels over
// the sum of mask pixels.
double student_masked_mse(StudentNet& net, DistillReader& reader,
                          const std::vector<std::uint64_t>& indices, int batch_size);

struct DistillTrainResult {
    std::vector<DistillEpochRow> metrics;
};

// Adam on the masked L2 loss over a shuffled 80/20 split of the pair file.
// Pairs are streamed from disk per batch; one optimizer step per batch, one
// metrics row per epoch.
DistillTrainResult train_student(const std::string& data_path, const DistillTrainConfig& tc,
                                 StudentNet& net, const std::string& metrics_csv);

inline constexpr char kStudentSectionMagic[4] = {'D', 'S', 'T', 'C'};

struct StudentCheckpoint {
    StudentConfig cfg;
    RenderConfig render;
    std::unique_ptr<StudentNet> net;
};

// Tensor table of the student followed by a "DSTC" section holding the input
// shape and the render config the labels were generated with.
void save_student(const std::string& path, const StudentNet& net, const RenderConfig& render);
StudentCheckpoint load_student(const std::string& path);

struct StudentDecision {
    int pick_node = 0;
    int pick_pixel = 0;   // flat image index of the chosen pick pixel
    int place_pixel = 0;  // flat image index of the chosen place pixel
    double place_x = 0.0;  // normalized workspace coordinates
    double place_y = 0.0;
};

// Argmax of the pick channel inside the cloth silhouette, resolved to the
// node nearest the chosen pixel; argmax of the place channel inside the
// workspace, as normalized coordinates. Ties break to the lowest flat index.
// Throws std::invalid_argument when the silhouette is empty.
StudentDecision student_decision(const std::vector<float>& maps,
                                 const std::vector<std::uint8_t>& pick_mask,
                                 const std::vector<std::uint8_t>& place_mask,
                                 const sim::ClothState& state, const sim::SimParams& params,
                                 const RenderConfig& cfg);

// Renders the state, runs the student, and extracts the action.
sim::PickPlaceAction student_action(StudentNet& net, const sim::ClothState& state,
                                    const sim::SimParams& params, const RenderConfig& cfg);

// Evaluation adapter; emits node picks, so evaluate() must run with node
// pick mode. The place position is snapped to the configured place grid.
class StudentPolicy : public eval::Policy {
public:
    StudentPolicy(StudentNet& net, const RenderConfig& render, const sim::SimParams& params,
                  int place_side);
    eval::PolicyDecision act(const sim::ClothState& state, std::uint64_t episode_seed,
                             int step) override;
    std::size_t parameter_count() const override;

private:
    StudentNet& net_;
    RenderConfig render_;
    sim::SimParams params_;
    int place_side_;
};

}  // namespace clothrl::distill
