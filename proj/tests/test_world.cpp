#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "stillbench/world.hpp"

using namespace sb;

namespace {

WorldSpec small_spec(double rho_bg = 0.0, double rho_fg = 0.0, std::uint64_t seed = 1) {
    WorldSpec spec;
    spec.train_size = 120;
    spec.val_size = 24;
    spec.test_size = 48;
    spec.rho_bg = rho_bg;
    spec.rho_fg = rho_fg;
    spec.master_seed = seed;
    return spec;
}

// upper critical value of chi-square at p=0.01 for df=25 (6x6 table)
constexpr double kChi2Crit25 = 44.314;

double chi2_independence(const std::vector<std::vector<std::size_t>>& table) {
    const std::size_t R = table.size(), C = table[0].size();
    std::vector<double> row(R, 0), col(C, 0);
    double total = 0;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            row[r] += table[r][c];
            col[c] += table[r][c];
            total += table[r][c];
        }
    double stat = 0;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            const double expect = row[r] * col[c] / total;
            if (expect > 0) {
                const double d = table[r][c] - expect;
                stat += d * d / expect;
            }
        }
    return stat;
}

}  // namespace

TEST_CASE("motion program geometry") {
    WorldSpec spec = small_spec();
    Rng rng(5);
    const MotionJitter j = draw_motion_jitter(rng, spec);

    SECTION("expand-contract returns to its start scale") {
        const SpritePose first = motion_program(5, 0, spec, j);
        const SpritePose last = motion_program(5, spec.frames - 1, spec, j);
        CHECK(first.scale == Catch::Approx(last.scale).margin(1e-9));
    }
    SECTION("translate-right center-x strictly increases") {
        double prev = -1e9;
        for (std::size_t t = 0; t < spec.frames; ++t) {
            const SpritePose p = motion_program(0, t, spec, j);
            CHECK(p.cx > prev);
            prev = p.cx;
        }
    }
    SECTION("circular orbit keeps constant distance from its center") {
        const double ocx = spec.width / 2.0 + j.dx, ocy = spec.height / 2.0 + j.dy;
        double r0 = -1;
        for (std::size_t t = 0; t < spec.frames; ++t) {
            const SpritePose p = motion_program(3, t, spec, j);
            const double r = std::hypot(p.cx - ocx, p.cy - ocy);
            if (r0 < 0) r0 = r;
            CHECK(r == Catch::Approx(r0).margin(0.5));
        }
    }
    SECTION("unknown class is a config error") {
        CHECK_THROWS_AS(motion_program(6, 0, spec, j), std::invalid_argument);
        CHECK_THROWS_AS(motion_program(0, spec.frames, spec, j), std::invalid_argument);
    }
}

TEST_CASE("motion programs are pairwise distinguishable") {
    WorldSpec spec = small_spec();
    Rng rng(7);
    const MotionJitter j = draw_motion_jitter(rng, spec);
    for (std::size_t a = 0; a < kMotionProgramCount; ++a)
        for (std::size_t b = a + 1; b < kMotionProgramCount; ++b) {
            std::size_t differing = 0;
            for (std::size_t t = 0; t < spec.frames; ++t) {
                const SpritePose pa = motion_program(a, t, spec, j);
                const SpritePose pb = motion_program(b, t, spec, j);
                if (std::hypot(pa.cx - pb.cx, pa.cy - pb.cy) > 1.0 ||
                    std::abs(pa.scale - pb.scale) > 0.5)
                    ++differing;
            }
            INFO("programs " << motion_program_name(a) << " vs " << motion_program_name(b));
            CHECK(differing * 4 >= spec.frames);  // at least 25% of positions
        }
}

TEST_CASE("rasterized mask area matches analytic shape area") {
    SpritePose pose;
    pose.cx = 32;
    pose.cy = 32;
    pose.scale = 9;
    pose.rotation = 0.3;
    for (std::size_t app = 0; app < kAppearanceCount; ++app) {
        RasterResult res = rasterize(pose, app, 64, 64);
        double count = 0;
        for (std::size_t i = 0; i < res.mask.numel(); ++i) count += res.mask[i];
        const double analytic = appearance_area(app, pose.scale);
        INFO("shape " << appearance_name(app));
        CHECK(count == Catch::Approx(analytic).epsilon(0.10));
    }
}

TEST_CASE("rasterize support and determinism") {
    SpritePose pose;
    pose.cx = 10;
    pose.cy = 12;
    pose.scale = 4;
    RasterResult a = rasterize(pose, 0, 32, 32);
    SECTION("mask is zero outside the sprite bounding box") {
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x) {
                const bool outside = std::abs(x + 0.5 - pose.cx) > pose.scale + 1 ||
                                     std::abs(y + 0.5 - pose.cy) > pose.scale + 1;
                if (outside) CHECK(a.mask[y * 32 + x] == 0.0);
            }
    }
    SECTION("mask values are exactly binary") {
        for (std::size_t i = 0; i < a.mask.numel(); ++i)
            CHECK((a.mask[i] == 0.0 || a.mask[i] == 1.0));
    }
    SECTION("same pose twice is identical") {
        RasterResult b = rasterize(pose, 0, 32, 32);
        for (std::size_t i = 0; i < a.mask.numel(); ++i) CHECK(a.mask[i] == b.mask[i]);
        for (std::size_t i = 0; i < a.patch.numel(); ++i) CHECK(a.patch[i] == b.patch[i]);
    }
    SECTION("degenerate scale is clamped with a warning") {
        SpritePose bad = pose;
        bad.scale = -1.0;
        RasterResult r = rasterize(bad, 2, 32, 32);
        CHECK(r.warnings.size() == 1);
        double count = 0;
        for (std::size_t i = 0; i < r.mask.numel(); ++i) count += r.mask[i];
        CHECK(count > 0);
    }
}

TEST_CASE("world generation bias knobs") {
    SECTION("rho_bg=1 aligns every background with the class") {
        WorldData w = generate_world(small_spec(1.0, 0.0));
        for (const auto& c : w.train) CHECK(c.bg_family == c.label);
    }
    SECTION("rho_bg=0 leaves label and background independent") {
        WorldSpec spec = small_spec(0.0, 0.0);
        spec.train_size = 600;
        WorldData w = generate_world(spec);
        std::vector<std::vector<std::size_t>> table(6, std::vector<std::size_t>(6, 0));
        for (const auto& c : w.train) ++table[c.label][c.bg_family];
        CHECK(chi2_independence(table) < kChi2Crit25);
    }
    SECTION("rho_bg=0.9 alignment fraction matches binomial expectation") {
        WorldSpec spec = small_spec(0.9, 0.0);
        spec.train_size = 600;
        WorldData w = generate_world(spec);
        double aligned = 0;
        for (const auto& c : w.train)
            if (c.bg_family == c.label) aligned += 1;
        CHECK(aligned / 600.0 == Catch::Approx(0.9 + 0.1 / 6.0).margin(0.03));
    }
}

TEST_CASE("world structural invariants") {
    WorldSpec spec = small_spec(0.5, 0.5, 99);
    WorldData w = generate_world(spec);

    SECTION("split sizes are exactly as requested") {
        CHECK(w.train.size() == spec.train_size);
        CHECK(w.val.size() == spec.val_size);
        CHECK(w.test_iid.size() == spec.test_size);
    }
    SECTION("label marginal is uniform within 2%") {
        std::vector<std::size_t> counts(6, 0);
        for (const auto& c : w.train) ++counts[c.label];
        for (std::size_t k = 0; k < 6; ++k)
            CHECK(std::abs(static_cast<double>(counts[k]) - spec.train_size / 6.0) <=
                  0.02 * spec.train_size);
    }
    SECTION("masks are binary and background-only where mask=0") {
        const auto& c = w.train[0];
        const std::size_t T = spec.frames, H = spec.height, W = spec.width;
        for (std::size_t i = 0; i < c.masks.numel(); ++i)
            CHECK((c.masks[i] == 0.0 || c.masks[i] == 1.0));
        // masked-in pixels carry the appearance color exactly
        const Rgb color = appearance_color(c.fg_appearance);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    if (c.masks[(t * H + y) * W + x] == 1.0) {
                        CHECK(c.video[((0 * T + t) * H + y) * W + x] == color.r);
                        CHECK(c.video[((1 * T + t) * H + y) * W + x] == color.g);
                        CHECK(c.video[((2 * T + t) * H + y) * W + x] == color.b);
                    }
    }
    SECTION("regeneration with the same master seed is bit-identical") {
        WorldData w2 = generate_world(spec);
        REQUIRE(w2.train.size() == w.train.size());
        for (std::size_t i = 0; i < w.train.size(); ++i) {
            CHECK(w.train[i].label == w2.train[i].label);
            CHECK(w.train[i].bg_family == w2.train[i].bg_family);
            for (std::size_t j = 0; j < w.train[i].video.numel(); ++j)
                if (w.train[i].video[j] != w2.train[i].video[j]) {
                    FAIL("video bytes differ at clip " << i);
                    break;
                }
        }
    }
    SECTION("invalid class count is a config error") {
        WorldSpec bad = spec;
        bad.classes = 9;
        CHECK_THROWS_AS(generate_world(bad), std::invalid_argument);
    }
}

TEST_CASE("trajectory oracle separates all classes on clean data") {
    WorldSpec spec = small_spec(0.7, 0.7, 1234);
    WorldData w = generate_world(spec);
    TrajectoryOracle oracle(w.train, spec.classes);
    CHECK(oracle.accuracy(w.test_iid) == 1.0);
}
