#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "clothrl/features/state_image.hpp"
#include "clothrl/sim/simulator.hpp"
#include "clothrl/util/rng.hpp"

using namespace clothrl;
using namespace clothrl::features;

namespace {

std::function<bool(sim::ClothState&)> vector_source(const std::vector<sim::ClothState>& states) {
    auto idx = std::make_shared<std::size_t>(0);
    return [&states, idx](sim::ClothState& out) {
        if (*idx >= states.size()) return false;
        out = states[(*idx)++];
        return true;
    };
}

}  // namespace

TEST_CASE("to_state_image layout") {
    const auto params = sim::SimParams::for_grid(16);
    const auto flat = sim::make_flat_centered_state(16, params);
    const auto img = to_state_image(flat);
    REQUIRE(img.side() == 18);
    REQUIRE(img.pixels.size() == 3u * 18 * 18);

    SUBCASE("interior equals particle coordinates") {
        for (int r = 0; r < 16; ++r) {
            for (int c = 0; c < 16; ++c) {
                const Vec3& p = flat.at(r, c);
                CHECK(img.at(0, r + 1, c + 1) == static_cast<float>(p.x));
                CHECK(img.at(1, r + 1, c + 1) == static_cast<float>(p.y));
                CHECK(img.at(2, r + 1, c + 1) == static_cast<float>(p.z));
            }
        }
    }

    SUBCASE("flat cloth gives ramps and a zero height channel") {
        const float step = static_cast<float>(params.cloth_side / 15);
        for (int r = 1; r < 16; ++r) {
            CHECK(img.at(0, r + 1, 5) - img.at(0, r, 5) == doctest::Approx(step).epsilon(1e-5));
            CHECK(img.at(1, r + 1, 5) == img.at(1, r, 5));
        }
        for (int c = 1; c < 16; ++c) {
            CHECK(img.at(1, 5, c + 1) - img.at(1, 5, c) == doctest::Approx(step).epsilon(1e-5));
        }
        for (int r = 1; r <= 16; ++r) {
            for (int c = 1; c <= 16; ++c) CHECK(img.at(2, r, c) == 0.0f);
        }
    }

    SUBCASE("border ring is zero for arbitrary states") {
        const auto s = sim::generate_crumpled_state(3, 16, params, 4);
        const auto im = to_state_image(s);
        const int n = im.side();
        for (int ch = 0; ch < 3; ++ch) {
            for (int i = 0; i < n; ++i) {
                CHECK(im.at(ch, 0, i) == 0.0f);
                CHECK(im.at(ch, n - 1, i) == 0.0f);
                CHECK(im.at(ch, i, 0) == 0.0f);
                CHECK(im.at(ch, i, n - 1) == 0.0f);
            }
        }
    }

    SUBCASE("translation shifts interior pixels only") {
        auto moved = flat;
        for (auto& p : moved.positions) {
            p.x += 0.05;
            p.z += 0.01;
        }
        const auto im2 = to_state_image(moved);
        for (int r = 1; r <= 16; ++r) {
            for (int c = 1; c <= 16; ++c) {
                CHECK(im2.at(0, r, c) == doctest::Approx(img.at(0, r, c) + 0.05f).epsilon(1e-6));
                CHECK(im2.at(1, r, c) == img.at(1, r, c));
                CHECK(im2.at(2, r, c) == doctest::Approx(img.at(2, r, c) + 0.01f).epsilon(1e-6));
            }
        }
    }

    SUBCASE("G=40 interior holds 4800 values") {
        const auto p40 = sim::SimParams::for_grid(40);
        const auto im40 = to_state_image(sim::make_flat_centered_state(40, p40));
        CHECK(im40.side() == 42);
        CHECK(im40.pixels.size() == 3u * 42 * 42);
        CHECK(40 * 40 * 3 == 4800);
    }
}

TEST_CASE("normalize") {
    const auto params = sim::SimParams::for_grid(16);
    const auto img = to_state_image(sim::generate_crumpled_state(9, 16, params, 3));

    SUBCASE("identity stats") {
        const auto out = normalize(img, NormStats{});
        for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(out.pixels[i] == img.pixels[i]);
    }

    SUBCASE("image equal to the mean maps to zero") {
        NormStats stats;
        stats.mean = {0.3, -0.2, 0.7};
        stats.stddev = {2.0, 0.5, 1.0};
        auto constant = img;
        for (int ch = 0; ch < 3; ++ch) {
            for (int i = 0; i < constant.plane(); ++i) {
                constant.pixels[ch * constant.plane() + i] = static_cast<float>(stats.mean[ch]);
            }
        }
        const auto out = normalize(constant, stats);
        for (float v : out.pixels) CHECK(v == doctest::Approx(0.0).epsilon(1e-7));
    }

    SUBCASE("round trip recovers the original") {
        NormStats stats;
        stats.mean = {0.35, 0.35, 0.01};
        stats.stddev = {0.12, 0.09, 0.004};
        const auto out = normalize(img, stats);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            const int ch = static_cast<int>(i) / img.plane();
            const double back = static_cast<double>(out.pixels[i]) * stats.stddev[ch] + stats.mean[ch];
            CHECK(back == doctest::Approx(img.pixels[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("compute_norm_stats") {
    const auto params = sim::SimParams::for_grid(16);

    SUBCASE("empty source throws") {
        CHECK_THROWS_AS(compute_norm_stats([](sim::ClothState&) { return false; }),
                        std::invalid_argument);
    }

    SUBCASE("constant state clamps std to the floor") {
        sim::ClothState s;
        s.grid_side = 2;
        s.positions.assign(4, Vec3{0.5, 0.5, 0.0});
        s.velocities.assign(4, Vec3{});
        const auto stats = compute_norm_stats(vector_source({s}));
        CHECK(stats.mean[0] == doctest::Approx(0.5));
        CHECK(stats.stddev[0] == doctest::Approx(1e-8));
        CHECK(stats.stddev[2] == doctest::Approx(1e-8));
    }

    SUBCASE("two-point statistics") {
        sim::ClothState a, b;
        a.grid_side = b.grid_side = 1;
        a.positions = {Vec3{0, 0, 0}};
        b.positions = {Vec3{2, 2, 2}};
        a.velocities = b.velocities = {Vec3{}};
        const auto stats = compute_norm_stats(vector_source({a, b}));
        for (int ch = 0; ch < 3; ++ch) {
            CHECK(stats.mean[ch] == doctest::Approx(1.0));
            CHECK(stats.stddev[ch] == doctest::Approx(1.0));
        }
    }

    SUBCASE("matches a two-pass oracle on random states") {
        std::vector<sim::ClothState> states;
        Rng rng(77);
        for (int i = 0; i < 200; ++i) {
            sim::ClothState s;
            s.grid_side = 4;
            for (int n = 0; n < 16; ++n) {
                s.positions.push_back(
                    Vec3{rng.uniform(0.0, 0.7), rng.uniform(0.0, 0.7), rng.uniform(0.0, 0.1)});
                s.velocities.push_back(Vec3{});
            }
            states.push_back(std::move(s));
        }
        const auto stats = compute_norm_stats(vector_source(states));
        for (int ch = 0; ch < 3; ++ch) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& s : states) {
                for (const auto& p : s.positions) {
                    sum += (ch == 0 ? p.x : ch == 1 ? p.y : p.z);
                    ++n;
                }
            }
            const double mean = sum / n;
            double var = 0.0;
            for (const auto& s : states) {
                for (const auto& p : s.positions) {
                    const double v = (ch == 0 ? p.x : ch == 1 ? p.y : p.z) - mean;
                    var += v * v;
                }
            }
            var /= n;
            CHECK(stats.mean[ch] == doctest::Approx(mean).epsilon(1e-6));
            CHECK(stats.stddev[ch] == doctest::Approx(std::sqrt(var)).epsilon(1e-6));
        }
    }
}

TEST_CASE("distinct states give distinct images") {
    const auto params = sim::SimParams::for_grid(16);
    const auto a = sim::generate_crumpled_state(1, 16, params, 3);
    const auto b = sim::generate_crumpled_state(2, 16, params, 3);
    const auto ia = to_state_image(a);
    const auto ib = to_state_image(b);
    bool differ = false;
    for (std::size_t i = 0; i < ia.pixels.size(); ++i) {
        if (ia.pixels[i] != ib.pixels[i]) {
            differ = true;
            break;
        }
    }
    CHECK(differ);
}
