#pragma once

// Background image sources: sinusoid stripe textures, a smooth value-noise
// generator, and a user-supplied image directory. Every pool is immutable
// after construction and sample(i) is fully determined by (pool seed, i).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stillbench/image.hpp"
#include "stillbench/rng.hpp"
#include "stillbench/tensor.hpp"

namespace sb {

struct Rgb {
    double r = 0, g = 0, b = 0;
};

inline double color_distance(const Rgb& a, const Rgb& b) {
    const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

inline Rgb hsv_to_rgb(double h, double s, double v) {
    h -= std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    return Rgb{r + m, g + m, b + m};
}

// ---------------------------------------------------------------------------
// sinusoid stripes
// ---------------------------------------------------------------------------

struct StripeParams {
    double theta = 0.0;       // stripe orientation, radians
    double width = 4.0;       // stripe width, px (> 1)
    double bend_amp = 0.0;    // "S" bend amplitude, px
    double bend_freq = 1.0;   // bend cycles across the image width
    double phase1 = 0.0;      // stripe-coordinate phase
    double phase2 = 0.0;      // bend phase
    Rgb colors[2];

    void validate() const {
        if (width <= 1.0)
            throw std::invalid_argument("StripeParams: stripe width must be > 1 px, got " +
                                        std::to_string(width));
        if (bend_amp < 0.0) throw std::invalid_argument("StripeParams: bend amplitude must be >= 0");
        if (bend_freq <= 0.0) throw std::invalid_argument("StripeParams: bend frequency must be > 0");
        if (color_distance(colors[0], colors[1]) <= 0.1)
            throw std::invalid_argument("StripeParams: stripe colors too close");
    }
};

inline Tensor sinusoid_stripes(const StripeParams& p, std::size_t H, std::size_t W) {
    p.validate();
    Tensor img({3, H, W});
    const double ct = std::cos(p.theta), st = std::sin(p.theta);
    const double two_pi = 2.0 * M_PI;
    for (std::size_t v = 0; v < H; ++v) {
        for (std::size_t u = 0; u < W; ++u) {
            const double uu = static_cast<double>(u), vv = static_cast<double>(v);
            const double across = vv * ct + uu * st;
            const double along = uu * ct - vv * st;
            const double s = across +
                             p.bend_amp * std::sin(two_pi * p.bend_freq * along /
                                                       static_cast<double>(W) +
                                                   p.phase2) +
                             p.phase1 * p.width / two_pi;
            const long band = static_cast<long>(std::floor(s / p.width));
            const Rgb& c = p.colors[((band % 2) + 2) % 2];
            img[(0 * H + v) * W + u] = c.r;
            img[(1 * H + v) * W + u] = c.g;
            img[(2 * H + v) * W + u] = c.b;
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// smooth value noise
// ---------------------------------------------------------------------------

// Multi-octave value noise mapped through a two-color palette. Octave o has
// base_cells * 2^o lattice cells per side and amplitude 2^-o; base_cells = 0
// degenerates to a single lattice value, i.e. a constant image.
inline Tensor smooth_noise(std::uint64_t seed, std::size_t H, std::size_t W, int octaves,
                           const Rgb& palette_a, const Rgb& palette_b,
                           std::size_t base_cells = 4) {
    if (octaves < 1) throw std::invalid_argument("smooth_noise: octaves must be >= 1");
    Rng rng(seed);
    std::vector<double> field(H * W, 0.0);
    double amp = 1.0, amp_sum = 0.0;
    for (int o = 0; o < octaves; ++o, amp *= 0.5) {
        const std::size_t n = base_cells << o;
        amp_sum += amp;
        if (n == 0) {
            const double v = rng.uniform();
            for (double& f : field) f += amp * v;
            continue;
        }
        std::vector<double> lattice((n + 1) * (n + 1));
        for (double& l : lattice) l = rng.uniform();
        for (std::size_t y = 0; y < H; ++y) {
            const double gy = static_cast<double>(y) * n / static_cast<double>(H);
            const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), n - 1);
            const double wy = gy - static_cast<double>(y0);
            for (std::size_t x = 0; x < W; ++x) {
                const double gx = static_cast<double>(x) * n / static_cast<double>(W);
                const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), n - 1);
                const double wx = gx - static_cast<double>(x0);
                const double v00 = lattice[y0 * (n + 1) + x0];
                const double v01 = lattice[y0 * (n + 1) + x0 + 1];
                const double v10 = lattice[(y0 + 1) * (n + 1) + x0];
                const double v11 = lattice[(y0 + 1) * (n + 1) + x0 + 1];
                field[y * W + x] += amp * ((1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                           wy * ((1 - wx) * v10 + wx * v11));
            }
        }
    }
    Tensor img({3, H, W});
    for (std::size_t i = 0; i < H * W; ++i) {
        const double t = field[i] / amp_sum;
        img[0 * H * W + i] = palette_a.r + t * (palette_b.r - palette_a.r);
        img[1 * H * W + i] = palette_a.g + t * (palette_b.g - palette_a.g);
        img[2 * H * W + i] = palette_a.b + t * (palette_b.b - palette_a.b);
    }
    return img;
}

// ---------------------------------------------------------------------------
// pools
// ---------------------------------------------------------------------------

// Parameter ranges the sinusoid pool draws from. Orientation comes from a
// set of bands so a pool can cover either one family's band or the
// complement of all families' bands.
struct SinusoidRanges {
    std::vector<std::pair<double, double>> theta_bands{{0.0, M_PI}};
    double width_lo = 3.0, width_hi = 10.0;
    double amp_lo = 0.0, amp_hi = 6.0;
    double freq_lo = 0.5, freq_hi = 2.0;
    // hue bands for the stripe colors; the full circle keeps the default
    // uniform-RGB-cube draw, anything narrower draws via HSV
    std::vector<std::pair<double, double>> hue_bands{{0.0, 1.0}};
};

class BackgroundPool {
public:
    enum class Kind { sinusoid, image_dir, smooth_noise };

    static BackgroundPool sinusoid(SinusoidRanges ranges, std::uint64_t seed, std::size_t H,
                                   std::size_t W) {
        if (ranges.theta_bands.empty())
            throw std::invalid_argument("BackgroundPool: sinusoid pool needs orientation bands");
        if (ranges.hue_bands.empty())
            throw std::invalid_argument("BackgroundPool: sinusoid pool needs hue bands");
        BackgroundPool p(Kind::sinusoid, seed, H, W);
        p.ranges_ = std::move(ranges);
        return p;
    }

    static BackgroundPool smooth(std::uint64_t seed, std::size_t H, std::size_t W,
                                 int octaves = 3, std::size_t base_cells = 4) {
        BackgroundPool p(Kind::smooth_noise, seed, H, W);
        p.octaves_ = octaves;
        p.base_cells_ = base_cells;
        return p;
    }

    static BackgroundPool image_dir(const std::string& path, std::size_t H, std::size_t W,
                                    bool randomized = false, std::uint64_t seed = 0) {
        BackgroundPool p(Kind::image_dir, seed, H, W);
        p.randomized_ = randomized;
        std::vector<std::string> files;
        if (!std::filesystem::is_directory(path))
            throw std::runtime_error("BackgroundPool: " + path + " is not a directory");
        for (const auto& e : std::filesystem::directory_iterator(path)) {
            if (!e.is_regular_file()) continue;
            const std::string ext = e.path().extension().string();
            if (ext == ".png" || ext == ".PNG" || ext == ".ppm" || ext == ".PPM")
                files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        for (const std::string& f : files) {
            try {
                Tensor img = load_image(f);
                p.images_.push_back(resize_bilinear(center_crop(img, H, W), H, W));
            } catch (const std::exception& e) {
                p.warnings_.push_back("skipped " + f + ": " + e.what());
            }
        }
        if (p.images_.empty())
            throw std::runtime_error("BackgroundPool: no decodable images in " + path);
        return p;
    }

    Kind kind() const { return kind_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    std::size_t image_count() const { return images_.size(); }

    Tensor sample(std::size_t i) const {
        switch (kind_) {
            case Kind::sinusoid: {
                Rng rng = Rng(seed_).derive(i);
                return sinusoid_stripes(draw_stripe_params(rng), height_, width_);
            }
            case Kind::smooth_noise: {
                Rng rng = Rng(seed_).derive(i);
                const Rgb a = draw_color(rng);
                Rgb b = draw_color(rng);
                while (color_distance(a, b) <= 0.1) b = draw_color(rng);
                const std::uint64_t field_seed = rng.next_u64();
                return smooth_noise(field_seed, height_, width_, octaves_, a, b, base_cells_);
            }
            case Kind::image_dir: {
                if (randomized_) {
                    Rng rng = Rng(seed_).derive(i);
                    return images_[rng.uniform_int(images_.size())];
                }
                return images_[i % images_.size()];
            }
        }
        throw std::logic_error("BackgroundPool: unreachable");
    }

private:
    BackgroundPool(Kind kind, std::uint64_t seed, std::size_t H, std::size_t W)
        : kind_(kind), seed_(seed), height_(H), width_(W) {}

    static Rgb draw_color(Rng& rng) { return Rgb{rng.uniform(), rng.uniform(), rng.uniform()}; }

    StripeParams draw_stripe_params(Rng& rng) const {
        StripeParams p;
        const auto& band = ranges_.theta_bands[rng.uniform_int(ranges_.theta_bands.size())];
        p.theta = rng.uniform(band.first, band.second);
        p.width = rng.uniform(ranges_.width_lo, ranges_.width_hi);
        p.bend_amp = rng.uniform(ranges_.amp_lo, ranges_.amp_hi);
        p.bend_freq = rng.uniform(ranges_.freq_lo, ranges_.freq_hi);
        p.phase1 = rng.uniform(0.0, 2.0 * M_PI);
        p.phase2 = rng.uniform(0.0, 2.0 * M_PI);
        const bool full_hue = ranges_.hue_bands.size() == 1 &&
                              ranges_.hue_bands[0].first == 0.0 &&
                              ranges_.hue_bands[0].second == 1.0;
        const auto draw = [&](Rng& r) {
            if (full_hue) return draw_color(r);
            const auto& hb = ranges_.hue_bands[r.uniform_int(ranges_.hue_bands.size())];
            return hsv_to_rgb(r.uniform(hb.first, hb.second), r.uniform(0.6, 1.0),
                              r.uniform(0.4, 1.0));
        };
        p.colors[0] = draw(rng);
        p.colors[1] = draw(rng);
        while (color_distance(p.colors[0], p.colors[1]) <= 0.1) p.colors[1] = draw(rng);
        return p;
    }

    Kind kind_;
    std::uint64_t seed_;
    std::size_t height_, width_;
    SinusoidRanges ranges_;
    int octaves_ = 3;
    std::size_t base_cells_ = 4;
    bool randomized_ = false;
    std::vector<Tensor> images_;
    std::vector<std::string> warnings_;
};

}  // namespace sb
