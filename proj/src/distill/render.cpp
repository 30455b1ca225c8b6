#include "clothrl/distill/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "clothrl/util/binary_io.hpp"

namespace clothrl::distill {

namespace {

bool color_ok(const std::array<double, 3>& c) {
    for (double v : c) {
        if (!(v >= 0.0 && v <= 1.0)) return false;
    }
    return true;
}

struct Px {
    double r, c;  // continuous pixel coordinates
};

double edge(const Px& a, const Px& b, const Px& p) {
    return (b.r - a.r) * (p.c - a.c) - (b.c - a.c) * (p.r - a.r);
}

struct Shaded {
    float rgb[3];
};

}  // namespace

void RenderConfig::validate() const {
    if (height < 16 || width < 16) throw std::invalid_argument("render size too small");
    if (margin_px < 0 || 2 * margin_px >= std::min(height, width) - 8)
        throw std::invalid_argument("margin leaves no workspace area");
    if (border_px < 0 || border_px > margin_px)
        throw std::invalid_argument("border must fit inside the margin");
    if (!color_ok(background) || !color_ok(border) || !color_ok(cloth))
        throw std::invalid_argument("colors must lie in [0, 1]");
    const double ll = light[0] * light[0] + light[1] * light[1] + light[2] * light[2];
    if (!(ll > 1e-12)) throw std::invalid_argument("light direction must be non-zero");
    if (!(ambient >= 0.0) || !(diffuse >= 0.0) || !(ambient + diffuse <= 2.0))
        throw std::invalid_argument("bad shading coefficients");
    if (!(height_gain >= 0.0)) throw std::invalid_argument("height_gain must be >= 0");
    if (!(color_jitter >= 0.0 && color_jitter <= 0.5))
        throw std::invalid_argument("color_jitter must lie in [0, 0.5]");
}

double proj_row(double x, double workspace_side, const RenderConfig& cfg) {
    return cfg.margin_px + x / workspace_side * (cfg.height - 2 * cfg.margin_px);
}

double proj_col(double y, double workspace_side, const RenderConfig& cfg) {
    return cfg.margin_px + y / workspace_side * (cfg.width - 2 * cfg.margin_px);
}

Vec2 pixel_center(int v, int u, double workspace_side, const RenderConfig& cfg) {
    const double x =
        (v + 0.5 - cfg.margin_px) / (cfg.height - 2 * cfg.margin_px) * workspace_side;
    const double y = (u + 0.5 - cfg.margin_px) / (cfg.width - 2 * cfg.margin_px) * workspace_side;
    return {x, y};
}

bool in_workspace(int v, int u, const RenderConfig& cfg) {
    return v >= cfg.margin_px && v < cfg.height - cfg.margin_px && u >= cfg.margin_px &&
           u < cfg.width - cfg.margin_px;
}

RenderResult render_scene(const sim::ClothState& state, const sim::SimParams& params,
                          const RenderConfig& cfg) {
    cfg.validate();
    RenderResult out;
    out.image.height = cfg.height;
    out.image.width = cfg.width;
    out.image.chw.assign(std::size_t(3) * cfg.height * cfg.width, 0.0f);
    out.silhouette.assign(std::size_t(cfg.height) * cfg.width, 0);

    for (int c = 0; c < 3; ++c) {
        std::fill_n(out.image.chw.begin() + std::size_t(c) * cfg.height * cfg.width,
                    std::size_t(cfg.height) * cfg.width, float(cfg.background[c]));
    }
    if (cfg.border_px > 0) {
        const int lo = cfg.margin_px - cfg.border_px;
        const int hi_v = cfg.height - cfg.margin_px + cfg.border_px;
        const int hi_u = cfg.width - cfg.margin_px + cfg.border_px;
        for (int v = lo; v < hi_v; ++v) {
            for (int u = lo; u < hi_u; ++u) {
                if (in_workspace(v, u, cfg)) continue;
                for (int c = 0; c < 3; ++c) out.image.at(c, v, u) = float(cfg.border[c]);
            }
        }
    }

    const int g = state.grid_side;
    if (g < 2 || state.positions.empty()) return out;

    const int quads = (g - 1) * (g - 1);
    std::vector<int> order(quads);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> qz(quads);
    for (int q = 0; q < quads; ++q) {
        const int r = q / (g - 1), c = q % (g - 1);
        const int n00 = r * g + c;
        qz[q] = 0.25 * (state.positions[n00].z + state.positions[n00 + 1].z +
                        state.positions[n00 + g].z + state.positions[n00 + g + 1].z);
    }
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return qz[a] != qz[b] ? qz[a] < qz[b] : a < b; });

    double lx = cfg.light[0], ly = cfg.light[1], lz = cfg.light[2];
    const double ln = std::sqrt(lx * lx + ly * ly + lz * lz);
    lx /= ln;
    ly /= ln;
    lz /= ln;

    const double ws = params.workspace_side;
    auto paint = [&](const Vec3& p0, const Vec3& p1, const Vec3& p2, double mean_z) {
        const double ax = p1.x - p0.x, ay = p1.y - p0.y, az = p1.z - p0.z;
        const double bx = p2.x - p0.x, by = p2.y - p0.y, bz = p2.z - p0.z;
        double nx = ay * bz - az * by, ny = az * bx - ax * bz, nz = ax * by - ay * bx;
        const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
        double lambert = 0.0;
        if (nn > 1e-14) lambert = std::abs((nx * lx + ny * ly + nz * lz) / nn);
        const double bright =
            std::clamp(cfg.ambient + cfg.diffuse * lambert + cfg.height_gain * mean_z, 0.0, 1.3);
        Shaded sh;
        for (int c = 0; c < 3; ++c) sh.rgb[c] = float(std::clamp(cfg.cloth[c] * bright, 0.0, 1.0));

        Px a{proj_row(p0.x, ws, cfg), proj_col(p0.y, ws, cfg)};
        Px b{proj_row(p1.x, ws, cfg), proj_col(p1.y, ws, cfg)};
        Px d{proj_row(p2.x, ws, cfg), proj_col(p2.y, ws, cfg)};
        if (edge(a, b, d) < 0.0) std::swap(b, d);
        if (edge(a, b, d) < 1e-12) return;  // edge-on, no projected interior
        const int v0 = std::max(0, int(std::floor(std::min({a.r, b.r, d.r}))));
        const int v1 = std::min(cfg.height - 1, int(std::ceil(std::max({a.r, b.r, d.r}))));
        const int u0 = std::max(0, int(std::floor(std::min({a.c, b.c, d.c}))));
        const int u1 = std::min(cfg.width - 1, int(std::ceil(std::max({a.c, b.c, d.c}))));
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                const Px p{v + 0.5, u + 0.5};
                if (edge(a, b, p) < 0.0 || edge(b, d, p) < 0.0 || edge(d, a, p) < 0.0) continue;
                for (int c = 0; c < 3; ++c) out.image.at(c, v, u) = sh.rgb[c];
                out.silhouette[std::size_t(v) * cfg.width + u] = 1;
            }
        }
    };

    for (int q : order) {
        const int r = q / (g - 1), c = q % (g - 1);
        const Vec3& p00 = state.positions[r * g + c];
        const Vec3& p01 = state.positions[r * g + c + 1];
        const Vec3& p10 = state.positions[(r + 1) * g + c];
        const Vec3& p11 = state.positions[(r + 1) * g + c + 1];
        paint(p00, p01, p11, qz[q]);
        paint(p00, p11, p10, qz[q]);
    }
    return out;
}

Observation render_observation(const sim::ClothState& state, const sim::SimParams& params,
                               const RenderConfig& cfg) {
    return render_scene(state, params, cfg).image;
}

void write_render_config(std::ostream& out, const RenderConfig& cfg) {
    io::write_le<std::int32_t>(out, cfg.height);
    io::write_le<std::int32_t>(out, cfg.width);
    io::write_le<std::int32_t>(out, cfg.margin_px);
    io::write_le<std::int32_t>(out, cfg.border_px);
    for (const auto* arr : {&cfg.background, &cfg.border, &cfg.cloth, &cfg.light}) {
        for (double v : *arr) io::write_le<double>(out, v);
    }
    io::write_le<double>(out, cfg.ambient);
    io::write_le<double>(out, cfg.diffuse);
    io::write_le<double>(out, cfg.height_gain);
    io::write_le<double>(out, cfg.color_jitter);
}

RenderConfig read_render_config(std::istream& in) {
    RenderConfig cfg;
    cfg.height = io::read_le<std::int32_t>(in);
    cfg.width = io::read_le<std::int32_t>(in);
    cfg.margin_px = io::read_le<std::int32_t>(in);
    cfg.border_px = io::read_le<std::int32_t>(in);
    for (auto* arr : {&cfg.background, &cfg.border, &cfg.cloth, &cfg.light}) {
        for (double& v : *arr) v = io::read_le<double>(in);
    }
    cfg.ambient = io::read_le<double>(in);
    cfg.diffuse = io::read_le<double>(in);
    cfg.height_gain = io::read_le<double>(in);
    cfg.color_jitter = io::read_le<double>(in);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("bad stored render config: ") + e.what());
    }
    return cfg;
}

void write_ppm(const std::string& path, const Observation& obs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    out << "P6\n" << obs.width << " " << obs.height << "\n255\n";
    std::vector<unsigned char> row(std::size_t(obs.width) * 3);
    for (int v = 0; v < obs.height; ++v) {
        for (int u = 0; u < obs.width; ++u) {
            for (int c = 0; c < 3; ++c) {
                const float x = std::clamp(obs.at(c, v, u), 0.0f, 1.0f);
                row[std::size_t(u) * 3 + c] = static_cast<unsigned char>(std::lround(x * 255.0f));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!out) throw IoError("short write to " + path);
}

}  // namespace clothrl::distill
