#include "clothrl/sim/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace clothrl::sim {

namespace {

inline bool point_in_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    constexpr double eps = 1e-12;
    const double s1 = cross2(a, b, p);
    const double s2 = cross2(b, c, p);
    const double s3 = cross2(c, a, p);
    return (s1 >= -eps && s2 >= -eps && s3 >= -eps) || (s1 <= eps && s2 <= eps && s3 <= eps);
}

void rasterize_triangle(const Vec2& a, const Vec2& b, const Vec2& c, double cell, int res,
                        std::vector<std::uint8_t>& grid) {
    const double min_x = std::min({a.x, b.x, c.x});
    const double max_x = std::max({a.x, b.x, c.x});
    const double min_y = std::min({a.y, b.y, c.y});
    const double max_y = std::max({a.y, b.y, c.y});
    int i0 = std::max(0, static_cast<int>(std::floor(min_x / cell - 0.5)));
    int i1 = std::min(res - 1, static_cast<int>(std::ceil(max_x / cell)));
    int j0 = std::max(0, static_cast<int>(std::floor(min_y / cell - 0.5)));
    int j1 = std::min(res - 1, static_cast<int>(std::ceil(max_y / cell)));
    for (int i = i0; i <= i1; ++i) {
        const double cx = (i + 0.5) * cell;
        for (int j = j0; j <= j1; ++j) {
            std::uint8_t& occ = grid[static_cast<std::size_t>(i) * res + j];
            if (occ) continue;
            const double cy = (j + 0.5) * cell;
            if (point_in_triangle(Vec2{cx, cy}, a, b, c)) occ = 1;
        }
    }
}

}  // namespace

double coverage(const ClothState& state, double workspace_side, int resolution) {
    if (resolution < 32) throw std::invalid_argument("coverage resolution must be >= 32");
    const int g = state.grid_side;
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(resolution) * resolution, 0);
    const double cell = workspace_side / resolution;
    auto xy = [&](int r, int c) {
        const Vec3& p = state.at(r, c);
        return Vec2{p.x, p.y};
    };
    for (int r = 0; r + 1 < g; ++r) {
        for (int c = 0; c + 1 < g; ++c) {
            const Vec2 p00 = xy(r, c);
            const Vec2 p10 = xy(r + 1, c);
            const Vec2 p11 = xy(r + 1, c + 1);
            const Vec2 p01 = xy(r, c + 1);
            rasterize_triangle(p00, p10, p11, cell, resolution, grid);
            rasterize_triangle(p00, p11, p01, cell, resolution, grid);
        }
    }
    std::size_t occupied = 0;
    for (std::uint8_t v : grid) occupied += v;
    return static_cast<double>(occupied) / (static_cast<double>(resolution) * resolution);
}

double flat_coverage(const SimParams& params) {
    const double ratio = params.cloth_side / params.workspace_side;
    return ratio * ratio;
}

}  // namespace clothrl::sim
