#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "stillbench/backgrounds.hpp"
#include "stillbench/image.hpp"

using namespace sb;
namespace fs = std::filesystem;

TEST_CASE("straight horizontal stripes") {
    StripeParams p;
    p.theta = 0.0;
    p.bend_amp = 0.0;
    p.width = 4.0;
    p.phase1 = 1.3;
    p.colors[0] = {1, 0, 0};
    p.colors[1] = {0, 0, 1};
    Tensor img = sinusoid_stripes(p, 24, 16);

    SECTION("every row is constant-color") {
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t v = 0; v < 24; ++v)
                for (std::size_t u = 1; u < 16; ++u)
                    CHECK(img[(c * 24 + v) * 16 + u] == img[(c * 24 + v) * 16]);
    }
    SECTION("rows v and v+2w have identical color") {
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t v = 0; v + 8 < 24; ++v)
                CHECK(img[(c * 24 + v) * 16] == img[(c * 24 + v + 8) * 16]);
    }
    SECTION("adjacent stripes differ") {
        bool any_diff = false;
        for (std::size_t v = 0; v + 1 < 24; ++v)
            if (img[v * 16] != img[(v + 1) * 16]) any_diff = true;
        CHECK(any_diff);
    }
}

TEST_CASE("stripe parameter validation") {
    StripeParams p;
    p.width = 1.0;
    p.colors[0] = {1, 0, 0};
    p.colors[1] = {0, 0, 1};
    CHECK_THROWS_AS(sinusoid_stripes(p, 8, 8), std::invalid_argument);
    p.width = 4.0;
    p.colors[1] = {1.0, 0.05, 0.0};  // too close
    CHECK_THROWS_AS(sinusoid_stripes(p, 8, 8), std::invalid_argument);
}

TEST_CASE("sinusoid determinism") {
    StripeParams p;
    p.theta = 0.7;
    p.bend_amp = 3.0;
    p.width = 5.0;
    p.colors[0] = {0.9, 0.2, 0.1};
    p.colors[1] = {0.1, 0.3, 0.8};
    Tensor a = sinusoid_stripes(p, 32, 32);
    Tensor b = sinusoid_stripes(p, 32, 32);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("smooth noise") {
    const Rgb pa{0.1, 0.2, 0.3}, pb{0.9, 0.8, 0.7};
    SECTION("single lattice point gives a constant image") {
        Tensor img = smooth_noise(42, 16, 16, 1, pa, pb, 0);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 1; i < 256; ++i)
                CHECK(img[c * 256 + i] == img[c * 256]);
    }
    SECTION("adjacent pixel differences respect the bilinear slope bound") {
        const std::size_t H = 32, W = 32;
        const int octaves = 3;
        const std::size_t base = 4;
        Tensor img = smooth_noise(43, H, W, octaves, pa, pb, base);
        // per-octave slope per pixel <= amp * n / W; palette span per channel
        double slope = 0.0, amp = 1.0, amp_sum = 0.0;
        for (int o = 0; o < octaves; ++o, amp *= 0.5) {
            slope += amp * static_cast<double>(base << o) / static_cast<double>(W);
            amp_sum += amp;
        }
        const double span = 0.8;  // max palette channel difference
        const double bound = slope / amp_sum * span + 1e-12;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x + 1 < W; ++x)
                    CHECK(std::abs(img[(c * H + y) * W + x + 1] - img[(c * H + y) * W + x]) <=
                          bound);
    }
    SECTION("deterministic per seed") {
        Tensor a = smooth_noise(7, 16, 16, 2, pa, pb);
        Tensor b = smooth_noise(7, 16, 16, 2, pa, pb);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
        Tensor c = smooth_noise(8, 16, 16, 2, pa, pb);
        bool differs = false;
        for (std::size_t i = 0; i < a.numel(); ++i)
            if (a[i] != c[i]) differs = true;
        CHECK(differs);
    }
}

TEST_CASE("bilinear resize of checkerboard at half scale") {
    Tensor board({3, 4, 4});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x)
                board[(c * 4 + y) * 4 + x] = static_cast<double>((x + y) % 2);
    Tensor small = resize_bilinear(board, 2, 2);
    for (std::size_t i = 0; i < small.numel(); ++i)
        CHECK(small[i] == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("center crop of square source is identity") {
    Tensor img({3, 8, 8});
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>(i) / img.numel();
    Tensor crop = center_crop(img, 4, 4);
    REQUIRE(crop.shape() == Shape{3, 8, 8});
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(crop[i] == img[i]);
}

TEST_CASE("image directory pool") {
    const fs::path dir = fs::temp_directory_path() / "sb_pool_test";
    fs::create_directories(dir);
    Tensor red({3, 6, 6});
    for (std::size_t i = 0; i < 36; ++i) red[i] = 1.0;  // R channel, G/B stay 0
    save_ppm((dir / "red.ppm").string(), red);
    std::ofstream((dir / "broken.png").string()) << "not a png";

    SECTION("solid red image stays solid red after resize") {
        auto pool = BackgroundPool::image_dir(dir.string(), 4, 4);
        CHECK(pool.warnings().size() == 1);
        Tensor s = pool.sample(3);
        REQUIRE(s.shape() == Shape{3, 4, 4});
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(s[i] == Catch::Approx(1.0).epsilon(1e-12));
            CHECK(s[16 + i] == Catch::Approx(0.0).margin(1e-12));
            CHECK(s[32 + i] == Catch::Approx(0.0).margin(1e-12));
        }
    }
    SECTION("empty directory is an error") {
        const fs::path empty = fs::temp_directory_path() / "sb_pool_empty";
        fs::create_directories(empty);
        CHECK_THROWS_AS(BackgroundPool::image_dir(empty.string(), 4, 4), std::runtime_error);
        fs::remove_all(empty);
    }
    fs::remove_all(dir);
}

TEST_CASE("pool outputs: dims, range, determinism") {
    auto check_pool = [](const BackgroundPool& pool) {
        for (std::size_t i : {0, 1, 17}) {
            Tensor a = pool.sample(i);
            Tensor b = pool.sample(i);
            REQUIRE(a.shape() == Shape{3, pool.height(), pool.width()});
            for (std::size_t j = 0; j < a.numel(); ++j) {
                CHECK(a[j] >= 0.0);
                CHECK(a[j] <= 1.0);
                CHECK(a[j] == b[j]);
            }
        }
    };
    check_pool(BackgroundPool::sinusoid(SinusoidRanges{}, 5, 16, 16));
    check_pool(BackgroundPool::smooth(6, 16, 16));
}

TEST_CASE("png round trip") {
    const fs::path path = fs::temp_directory_path() / "sb_png_test.png";
    Tensor img({3, 5, 7});
    Rng rng(3);
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
    save_png(path.string(), img);
    Tensor back = load_png(path.string());
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(back[i] == Catch::Approx(img[i]).margin(1.0 / 255.0));
    fs::remove(path);
}
