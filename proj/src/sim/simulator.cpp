#include "clothrl/sim/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "clothrl/sim/coverage.hpp"

namespace clothrl::sim {

SimParams SimParams::for_grid(int grid_side) {
    SimParams p;
    if (grid_side < 1) throw std::invalid_argument("grid_side must be >= 1");
    p.rest_length = grid_side > 1 ? p.cloth_side / (grid_side - 1) : p.cloth_side;
    if (grid_side != 16 && grid_side > 1) {
        // Total cloth weight grows with G^2 (unit particle mass) while the
        // admissible stretch shrinks with 1/G, so stiffness scales ~G^3 and
        // the stable timestep with 1/sqrt(k).
        const double s = static_cast<double>(grid_side) / 16.0;
        p.k_structural *= s * s * s;
        p.k_shear *= s * s * s;
        p.k_bend *= s * s * s;
        p.spring_damping *= s;
        p.dt /= s * std::sqrt(s);
        p.settle_steps = static_cast<int>(p.settle_steps * s * std::sqrt(s));
        p.grasp_radius = 1.5 * p.rest_length;
    }
    p.validate();
    return p;
}

void SimParams::validate() const {
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    if (k_structural <= 0.0 || k_shear <= 0.0 || k_bend <= 0.0)
        throw std::invalid_argument("spring stiffnesses must be positive");
    if (!(cloth_side < workspace_side))
        throw std::invalid_argument("cloth_side must be smaller than workspace_side");
    if (lift_height <= 0.0) throw std::invalid_argument("lift_height must be positive");
    if (ground_friction < 0.0 || ground_friction > 1.0)
        throw std::invalid_argument("ground_friction must be in [0, 1]");
}

std::vector<Spring> build_springs(int grid_side) {
    const int g = grid_side;
    std::vector<Spring> springs;
    springs.reserve(static_cast<std::size_t>(6 * g * g));
    auto idx = [g](int r, int c) { return r * g + c; };
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            if (c + 1 < g) springs.push_back({idx(r, c), idx(r, c + 1), SpringType::Structural});
            if (r + 1 < g) springs.push_back({idx(r, c), idx(r + 1, c), SpringType::Structural});
            if (r + 1 < g && c + 1 < g) {
                springs.push_back({idx(r, c), idx(r + 1, c + 1), SpringType::Shear});
                springs.push_back({idx(r, c + 1), idx(r + 1, c), SpringType::Shear});
            }
            if (c + 2 < g) springs.push_back({idx(r, c), idx(r, c + 2), SpringType::Bend});
            if (r + 2 < g) springs.push_back({idx(r, c), idx(r + 2, c), SpringType::Bend});
        }
    }
    return springs;
}

double spring_rest_length(SpringType type, double rest_length) {
    switch (type) {
        case SpringType::Structural: return rest_length;
        case SpringType::Shear: return rest_length * 1.4142135623730951;
        case SpringType::Bend: return rest_length * 2.0;
    }
    return rest_length;
}

double spring_stiffness(SpringType type, const SimParams& params) {
    switch (type) {
        case SpringType::Structural: return params.k_structural;
        case SpringType::Shear: return params.k_shear;
        case SpringType::Bend: return params.k_bend;
    }
    return params.k_structural;
}

Vec3 spring_force_on_a(const Vec3& pa, const Vec3& pb, double rest, double stiffness) {
    const Vec3 d = pb - pa;
    const double len = d.norm();
    if (len < 1e-12) return Vec3{};
    return d * (stiffness * (len - rest) / len);
}

void step_physics_inplace(ClothState& state, const SimParams& params,
                          const std::vector<Spring>& springs,
                          const std::optional<Pin>& pin, std::vector<Vec3>& forces) {
    const std::size_t n = state.positions.size();
    forces.assign(n, Vec3{});

    const double rl = params.rest_length;
    const double c_ax = params.spring_damping;
    for (const Spring& s : springs) {
        const Vec3& pa = state.positions[s.a];
        const Vec3& pb = state.positions[s.b];
        const Vec3 d = pb - pa;
        const double len = d.norm();
        if (len < 1e-12) continue;
        const double inv_len = 1.0 / len;
        const double rest = spring_rest_length(s.type, rl);
        const double k = spring_stiffness(s.type, params);
        const Vec3 dir = d * inv_len;
        const double vrel = (state.velocities[s.b] - state.velocities[s.a]).dot(dir);
        const double mag = k * (len - rest) + c_ax * vrel;
        const Vec3 f = dir * mag;
        forces[s.a] += f;
        forces[s.b] -= f;
    }

    for (std::size_t i = 0; i < n; ++i) {
        forces[i].z -= params.gravity;
        forces[i] -= state.velocities[i] * params.damping;
        if (!forces[i].finite()) throw SimInstabilityError(static_cast<int>(i));
    }

    const double dt = params.dt;
    const double keep_tangential = 1.0 - params.ground_friction;
    for (std::size_t i = 0; i < n; ++i) {
        Vec3& v = state.velocities[i];
        Vec3& p = state.positions[i];
        v += forces[i] * dt;
        p += v * dt;
        if (p.z < 0.0) {
            p.z = 0.0;
            if (v.z < 0.0) v.z = 0.0;
            v.x *= keep_tangential;
            v.y *= keep_tangential;
        }
    }

    if (pin) {
        state.positions[pin->node] = pin->target;
        state.velocities[pin->node] = Vec3{};
    }
}

ClothState step_physics(const ClothState& state, const SimParams& params,
                        const std::optional<Pin>& pin) {
    ClothState next = state;
    std::vector<Vec3> forces;
    const auto springs = build_springs(state.grid_side);
    step_physics_inplace(next, params, springs, pin, forces);
    return next;
}

GraspRecord resolve_grasp(const ClothState& state, int requested, double radius) {
    if (requested < 0 || requested >= state.node_count())
        throw std::invalid_argument("resolve_grasp: node index out of range");
    if (radius <= 0.0) return GraspRecord{requested, requested, false};
    constexpr double kHeightTol = 1e-4;
    const Vec3& rp = state.positions[requested];
    const double r2 = radius * radius;
    int best = requested;
    double best_z = rp.z;
    // Ascending scan: among candidates of equal height the lowest index wins.
    for (int i = 0; i < state.node_count(); ++i) {
        const Vec3& p = state.positions[i];
        const double dx = p.x - rp.x;
        const double dy = p.y - rp.y;
        if (dx * dx + dy * dy > r2) continue;
        if (p.z > best_z + kHeightTol) {
            best = i;
            best_z = p.z;
        }
    }
    return GraspRecord{requested, best, best != requested};
}

namespace {

// Drags the pin target along a straight segment at carry_speed, one substep of
// travel at a time, then holds it for hold_substeps relaxation substeps.
void run_pinned_phase(ClothState& state, const SimParams& params,
                      const std::vector<Spring>& springs, int node, const Vec3& from,
                      const Vec3& to, int hold_substeps, std::vector<Vec3>& forces) {
    const double dist = (to - from).norm();
    const double step_len = params.carry_speed * params.dt;
    const int travel_steps = dist > 1e-12 ? static_cast<int>(std::ceil(dist / step_len)) : 0;
    for (int i = 1; i <= travel_steps; ++i) {
        const double t = std::min(1.0, (i * step_len) / dist);
        const Vec3 target = from + (to - from) * t;
        step_physics_inplace(state, params, springs, Pin{node, target}, forces);
    }
    for (int i = 0; i < hold_substeps; ++i) {
        step_physics_inplace(state, params, springs, Pin{node, to}, forces);
    }
}

}  // namespace

std::pair<ClothState, GraspRecord> execute_pick_place(const ClothState& state,
                                                      const PickPlaceAction& action,
                                                      const SimParams& params) {
    const GraspRecord grasp = resolve_grasp(state, action.pick, params.grasp_radius);
    ClothState work = state;
    const auto springs = build_springs(state.grid_side);
    std::vector<Vec3> forces;

    const Vec3 start = work.positions[grasp.grasped_node];
    const Vec3 lifted{start.x, start.y, params.lift_height};
    run_pinned_phase(work, params, springs, grasp.grasped_node, start, lifted, params.substeps,
                     forces);

    const double px = clamp01(action.place.x) * params.workspace_side;
    const double py = clamp01(action.place.y) * params.workspace_side;
    const Vec3 placed{px, py, params.lift_height};
    run_pinned_phase(work, params, springs, grasp.grasped_node, lifted, placed, params.substeps,
                     forces);

    // Placing lowers the grasped node to the surface before letting go, the
    // way a gripper sets fabric down rather than dropping it from carry
    // height.
    const Vec3 set_down{px, py, 0.0};
    run_pinned_phase(work, params, springs, grasp.grasped_node, placed, set_down, 0, forces);

    for (int i = 0; i < params.settle_steps; ++i) {
        step_physics_inplace(work, params, springs, std::nullopt, forces);
    }
    return {std::move(work), grasp};
}

ClothState make_flat_state(int grid_side, const SimParams& params, const Vec2& center,
                           double rotation) {
    ClothState state;
    state.grid_side = grid_side;
    state.positions.resize(static_cast<std::size_t>(grid_side) * grid_side);
    state.velocities.assign(state.positions.size(), Vec3{});
    const double spacing = grid_side > 1 ? params.cloth_side / (grid_side - 1) : 0.0;
    const double half = params.cloth_side / 2.0;
    const double cr = std::cos(rotation);
    const double sr = std::sin(rotation);
    for (int r = 0; r < grid_side; ++r) {
        for (int c = 0; c < grid_side; ++c) {
            const double u = r * spacing - half;
            const double v = c * spacing - half;
            state.positions[state.index(r, c)] =
                Vec3{center.x + cr * u - sr * v, center.y + sr * u + cr * v, 0.0};
        }
    }
    return state;
}

ClothState make_flat_centered_state(int grid_side, const SimParams& params) {
    const double mid = params.workspace_side / 2.0;
    return make_flat_state(grid_side, params, Vec2{mid, mid}, 0.0);
}

Vec2 centroid_xy(const ClothState& state) {
    Vec2 c;
    for (const Vec3& p : state.positions) {
        c.x += p.x;
        c.y += p.y;
    }
    const double n = static_cast<double>(state.positions.size());
    return Vec2{c.x / n, c.y / n};
}

void check_valid(const ClothState& state) {
    const std::size_t n = static_cast<std::size_t>(state.grid_side) * state.grid_side;
    if (state.positions.size() != n || state.velocities.size() != n)
        throw std::invalid_argument("cloth state arrays do not match grid_side");
    for (std::size_t i = 0; i < n; ++i) {
        if (!state.positions[i].finite() || !state.velocities[i].finite())
            throw std::invalid_argument("non-finite cloth state at node " + std::to_string(i));
        if (state.positions[i].z < -1e-6)
            throw std::invalid_argument("ground penetration at node " + std::to_string(i));
    }
}

ClothState generate_crumpled_state(std::uint64_t seed, int grid_side, const SimParams& params,
                                   int max_drops) {
    if (max_drops < 1) throw std::invalid_argument("max_drops must be >= 1");
    Rng rng(derive_seed(seed, 0x3c5bu));

    const double margin = params.cloth_side * 0.7072 + 0.02;
    const double w = params.workspace_side;
    const Vec2 center{rng.uniform(margin, w - margin), rng.uniform(margin, w - margin)};
    const double rotation = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    ClothState state = make_flat_state(grid_side, params, center, rotation);

    // Wadding motion: repeatedly grab one of the outermost nodes and drop it
    // near the centroid, folding the spread-out fabric onto the pile. Uniform
    // picks would only shuffle the top layers around the anchored base. The
    // drop count is drawn from the upper half of [1, max_drops]; shallow
    // one-fold states otherwise dominate the distribution.
    const int lo = std::max(1, max_drops / 2);
    const int drops =
        lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_drops - lo + 1)));
    std::vector<int> order(state.node_count());
    for (int d = 0; d < drops; ++d) {
        const Vec2 centroid = centroid_xy(state);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const Vec3& pa = state.positions[a];
            const Vec3& pb = state.positions[b];
            const double da = (pa.x - centroid.x) * (pa.x - centroid.x) +
                              (pa.y - centroid.y) * (pa.y - centroid.y);
            const double db = (pb.x - centroid.x) * (pb.x - centroid.x) +
                              (pb.y - centroid.y) * (pb.y - centroid.y);
            return da > db || (da == db && a < b);
        });
        const int rim = std::max<int>(1, state.node_count() / 5);
        const int node = order[static_cast<std::size_t>(rng.uniform_index(rim))];
        const double ox = rng.uniform(-0.07, 0.07);
        const double oy = rng.uniform(-0.07, 0.07);
        const double px = std::clamp(centroid.x / w + ox, 0.15, 0.85);
        const double py = std::clamp(centroid.y / w + oy, 0.15, 0.85);
        auto [next, grasp] = execute_pick_place(state, PickPlaceAction::make(node, px, py), params);
        (void)grasp;
        state = std::move(next);
    }
    return state;
}

double total_energy(const ClothState& state, const SimParams& params,
                    const std::vector<Spring>& springs) {
    double e = 0.0;
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        e += 0.5 * state.velocities[i].norm2();
        e += params.gravity * state.positions[i].z;
    }
    for (const Spring& s : springs) {
        const double len = (state.positions[s.b] - state.positions[s.a]).norm();
        const double rest = spring_rest_length(s.type, params.rest_length);
        const double k = spring_stiffness(s.type, params);
        const double stretch = len - rest;
        e += 0.5 * k * stretch * stretch;
    }
    return e;
}

}  // namespace clothrl::sim
