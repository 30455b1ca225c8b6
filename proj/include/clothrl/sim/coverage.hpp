#pragma once

#include "clothrl/sim/types.hpp"

namespace clothrl::sim {

// Fraction of the workspace ground plane covered by the cloth's vertical
// projection. Each cloth quad is split into two triangles and rasterized onto
// a resolution x resolution cell grid; a cell counts when its center falls
// inside a triangle. resolution must be >= 32.
double coverage(const ClothState& state, double workspace_side, int resolution = 200);

// Analytic coverage of a flat axis-aligned cloth, (cloth_side/workspace_side)^2.
double flat_coverage(const SimParams& params);

}  // namespace clothrl::sim
