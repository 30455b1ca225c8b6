#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "clothrl/sim/types.hpp"

namespace clothrl::distill {

// Top-down synthetic camera. The workspace square occupies the image minus a
// margin of background on each side; an optional outline ring sits just
// outside the square. Cloth quads are painted back-to-front by height and
// shaded with a Lambert term plus a height brightness gain.
struct RenderConfig {
    int height = 128;
    int width = 128;
    int margin_px = 6;  // background frame around the workspace square
    int border_px = 2;  // outline thickness inside the margin; 0 disables
    std::array<double, 3> background{0.23, 0.25, 0.28};
    std::array<double, 3> border{0.62, 0.62, 0.60};
    std::array<double, 3> cloth{0.88, 0.82, 0.30};
    std::array<double, 3> light{0.35, 0.25, 0.90};  // direction, normalized at use
    double ambient = 0.55;
    double diffuse = 0.45;
    double height_gain = 1.5;   // extra brightness per meter of quad height
    double color_jitter = 0.0;  // appearance randomization amplitude in pair generation

    void validate() const;
    bool operator==(const RenderConfig&) const = default;
};

// (3, H, W) image, values in [0, 1]. Row index follows scene x, column
// follows scene y, matching the place-grid convention.
struct Observation {
    int height = 0;
    int width = 0;
    std::vector<float> chw;

    float& at(int c, int v, int u) { return chw[(std::size_t(c) * height + v) * width + u]; }
    float at(int c, int v, int u) const { return chw[(std::size_t(c) * height + v) * width + u]; }
};

struct RenderResult {
    Observation image;
    std::vector<std::uint8_t> silhouette;  // H*W, 1 where a cloth quad covers the pixel
};

// Continuous pixel coordinates of a scene position; a pixel index v covers
// [v, v+1) so the pixel containing x is floor(proj_row(x)).
double proj_row(double x, double workspace_side, const RenderConfig& cfg);
double proj_col(double y, double workspace_side, const RenderConfig& cfg);
// Scene position of a pixel center.
Vec2 pixel_center(int v, int u, double workspace_side, const RenderConfig& cfg);
// True when the pixel lies in the workspace square.
bool in_workspace(int v, int u, const RenderConfig& cfg);

// A state with no nodes renders background and outline only.
RenderResult render_scene(const sim::ClothState& state, const sim::SimParams& params,
                          const RenderConfig& cfg);
Observation render_observation(const sim::ClothState& state, const sim::SimParams& params,
                               const RenderConfig& cfg);

// Binary PPM (P6), 8 bits per channel.
void write_ppm(const std::string& path, const Observation& obs);

// Fixed-order little-endian serialization, shared by the pair file header
// and the student checkpoint.
void write_render_config(std::ostream& out, const RenderConfig& cfg);
RenderConfig read_render_config(std::istream& in);

}  // namespace clothrl::distill
