#pragma once

// Procedural generator of tiny labeled videos. The action class is defined
// purely by the sprite's motion program; background texture family and
// sprite appearance can be spuriously correlated with the class at
// controllable strengths rho_bg and rho_fg.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "stillbench/backgrounds.hpp"
#include "stillbench/rng.hpp"
#include "stillbench/tensor.hpp"

namespace sb {

struct WorldSpec {
    std::size_t classes = 6;
    std::size_t channels = 3;
    std::size_t frames = 8;
    std::size_t height = 32;
    std::size_t width = 32;
    double rho_bg = 0.0;  // P(background family == class family)
    double rho_fg = 0.0;  // P(sprite appearance == class appearance)
    std::size_t train_size = 600;
    std::size_t val_size = 120;
    std::size_t test_size = 120;
    std::uint64_t master_seed = 0;

    void validate() const {
        if (classes < 2 || classes > 6)
            throw std::invalid_argument("WorldSpec: classes must be in [2, 6] (" +
                                        std::to_string(classes) +
                                        " requested, 6 motion programs available)");
        if (rho_bg < 0.0 || rho_bg > 1.0 || rho_fg < 0.0 || rho_fg > 1.0)
            throw std::invalid_argument("WorldSpec: rho values must be in [0, 1]");
        if (frames < 1) throw std::invalid_argument("WorldSpec: frames must be >= 1");
        if (train_size < classes || val_size < classes || test_size < classes)
            throw std::invalid_argument("WorldSpec: every split must cover all classes");
    }
};

struct LabeledClip {
    Tensor video;  // [3 x T x H x W]
    Tensor masks;  // [T x H x W], values exactly 0 or 1
    std::size_t label = 0;
    std::size_t bg_family = 0;
    std::size_t fg_appearance = 0;
    std::uint64_t seed = 0;
    std::size_t id = 0;
    std::vector<std::string> warnings;
};

struct WorldData {
    WorldSpec spec;
    std::vector<LabeledClip> train, val, test_iid;
};

// ---------------------------------------------------------------------------
// motion programs
// ---------------------------------------------------------------------------

struct SpritePose {
    double cx = 0, cy = 0;
    double scale = 4;     // shape size parameter, px
    double rotation = 0;  // radians
};

// Per-clip randomness that perturbs a motion program without changing its
// identity: small start offset, speed factor, and a base scale.
struct MotionJitter {
    double dx = 0, dy = 0;
    double speed = 1.0;
    double base_scale = 5.0;
    double rotation = 0.0;
    double phase = 0.0;  // small, so class centroids stay informative
};

inline MotionJitter draw_motion_jitter(Rng& rng, const WorldSpec& spec) {
    MotionJitter j;
    j.dx = rng.uniform(-2.0, 2.0);
    j.dy = rng.uniform(-2.0, 2.0);
    j.speed = rng.uniform(0.9, 1.1);
    // sprite covers roughly 8-25% of the frame across shapes
    const double area = rng.uniform(0.10, 0.20) * static_cast<double>(spec.height * spec.width);
    j.base_scale = std::sqrt(area / M_PI);
    j.rotation = rng.uniform(0.0, 2.0 * M_PI);
    j.phase = rng.uniform(-0.3, 0.3);
    return j;
}

constexpr std::size_t kMotionProgramCount = 6;

inline const char* motion_program_name(std::size_t cls) {
    switch (cls) {
        case 0: return "translate-right";
        case 1: return "translate-left";
        case 2: return "vertical-bounce";
        case 3: return "circular-orbit";
        case 4: return "horizontal-oscillation";
        case 5: return "expand-contract";
    }
    throw std::invalid_argument("motion_program_name: unknown class " + std::to_string(cls));
}

inline SpritePose motion_program(std::size_t cls, std::size_t t, const WorldSpec& spec,
                                 const MotionJitter& j) {
    if (cls >= kMotionProgramCount)
        throw std::invalid_argument("motion_program: unknown class " + std::to_string(cls));
    if (t >= spec.frames)
        throw std::invalid_argument("motion_program: frame index " + std::to_string(t) +
                                    " out of range");
    const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);
    const double T = static_cast<double>(spec.frames);
    const double tt = static_cast<double>(t);
    const double span = T > 1 ? T - 1 : 1;
    const double margin = j.base_scale + 2.0;

    SpritePose pose;
    pose.scale = j.base_scale;
    pose.rotation = j.rotation;
    pose.cx = W / 2 + j.dx;
    pose.cy = H / 2 + j.dy;
    const double travel = (W - 2 * margin) * j.speed;
    const double amp = (H / 2 - margin) * j.speed;

    switch (cls) {
        case 0:  // translate-right
            pose.cx = margin + j.dx + travel * tt / span;
            break;
        case 1:  // translate-left
            pose.cx = W - margin + j.dx - travel * tt / span;
            break;
        case 2:  // vertical-bounce: down and back up over the clip
            pose.cy = margin + j.dy + 2 * amp * std::abs(std::sin(M_PI * tt / span));
            break;
        case 3: {  // circular-orbit
            const double r = (std::min(H, W) / 2 - margin) * j.speed;
            const double ang = 2.0 * M_PI * tt / T + j.phase;
            pose.cx = W / 2 + j.dx + r * std::cos(ang);
            pose.cy = H / 2 + j.dy + r * std::sin(ang);
            break;
        }
        case 4:  // horizontal-oscillation: full period, returns to start
            pose.cx = W / 2 + j.dx + amp * std::sin(2.0 * M_PI * tt / span);
            break;
        case 5:  // expand-contract: full scale period over the clip
            pose.scale = j.base_scale * (1.0 + 0.45 * std::sin(2.0 * M_PI * tt / span));
            break;
    }
    // keep the sprite inside the canvas
    pose.cx = std::clamp(pose.cx, pose.scale + 1.0, W - pose.scale - 1.0);
    pose.cy = std::clamp(pose.cy, pose.scale + 1.0, H - pose.scale - 1.0);
    return pose;
}

// ---------------------------------------------------------------------------
// sprite rasterization
// ---------------------------------------------------------------------------

constexpr std::size_t kAppearanceCount = 6;

inline const char* appearance_name(std::size_t id) {
    switch (id) {
        case 0: return "circle";
        case 1: return "square";
        case 2: return "triangle";
        case 3: return "ring";
        case 4: return "cross";
        case 5: return "star";
    }
    throw std::invalid_argument("appearance_name: unknown appearance " + std::to_string(id));
}

inline Rgb appearance_color(std::size_t id) {
    static const Rgb palette[kAppearanceCount] = {
        {0.95, 0.25, 0.20}, {0.20, 0.85, 0.30}, {0.25, 0.40, 0.95},
        {0.95, 0.85, 0.20}, {0.90, 0.30, 0.90}, {0.25, 0.90, 0.90},
    };
    if (id >= kAppearanceCount)
        throw std::invalid_argument("appearance_color: unknown appearance " + std::to_string(id));
    return palette[id];
}

// Analytic area of each shape at size parameter s, used by tests and by the
// world generator to keep sprite coverage in range.
inline double appearance_area(std::size_t id, double s) {
    switch (id) {
        case 0: return M_PI * s * s;                    // circle radius s
        case 1: return 4.0 * s * s * 0.25 * M_PI;       // square sized to circle area
        case 2: return M_PI * s * s;                    // triangle sized to circle area
        case 3: return 0.75 * M_PI * s * s;             // ring, inner radius s/2
        case 4: return 0.5 * M_PI * s * s;              // cross sized to half circle area
        case 5: return (3.0 / 8.0) * M_PI * s * s;      // 4-point star (astroid)
    }
    throw std::invalid_argument("appearance_area: unknown appearance " + std::to_string(id));
}

namespace detail {

// Inside test in sprite-local coordinates (already rotated), size s.
inline bool sprite_inside(std::size_t id, double x, double y, double s) {
    switch (id) {
        case 0:
            return x * x + y * y <= s * s;
        case 1: {
            const double half = s * std::sqrt(M_PI) / 2.0;  // area pi*s^2
            return std::abs(x) <= half && std::abs(y) <= half;
        }
        case 2: {
            // equilateral triangle, centroid at origin, area pi*s^2
            const double side = std::sqrt(4.0 * M_PI / std::sqrt(3.0)) * s;
            const double h = side * std::sqrt(3.0) / 2.0;
            const double top = -2.0 * h / 3.0;
            if (y < top || y > h / 3.0) return false;
            const double half_w = (y - top) / std::sqrt(3.0);
            return std::abs(x) <= half_w;
        }
        case 3: {
            const double r2 = x * x + y * y;
            return r2 <= s * s && r2 >= 0.25 * s * s;
        }
        case 4: {
            // plus sign: two 2s-long bars; 8sw - 4w^2 = pi*s^2/2 gives
            // half-width w = s*(1 - sqrt(1 - pi/8)) for area pi*s^2/2
            const double half_w = s * (1.0 - std::sqrt(1.0 - M_PI / 8.0));
            return (std::abs(x) <= s && std::abs(y) <= half_w) ||
                   (std::abs(y) <= s && std::abs(x) <= half_w);
        }
        case 5: {
            // astroid |x|^(2/3) + |y|^(2/3) <= s^(2/3), area 3*pi*s^2/8
            return std::pow(std::abs(x), 2.0 / 3.0) + std::pow(std::abs(y), 2.0 / 3.0) <=
                   std::pow(s, 2.0 / 3.0);
        }
    }
    return false;
}

}  // namespace detail

struct RasterResult {
    Tensor patch;  // [3 x H x W], sprite color where mask=1, 0 elsewhere
    Tensor mask;   // [H x W], exactly 0/1
    std::vector<std::string> warnings;
};

inline RasterResult rasterize(const SpritePose& pose, std::size_t appearance, std::size_t H,
                              std::size_t W) {
    if (appearance >= kAppearanceCount)
        throw std::invalid_argument("rasterize: unknown appearance " + std::to_string(appearance));
    RasterResult res;
    double s = pose.scale;
    if (s <= 0.0) {
        s = 2.0;
        res.warnings.push_back("rasterize: degenerate scale clamped to 2 px");
    }
    res.patch = Tensor({3, H, W});
    res.mask = Tensor({H, W});
    const Rgb color = appearance_color(appearance);
    const double cr = std::cos(-pose.rotation), sr = std::sin(-pose.rotation);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            // pixel center, rotated into sprite-local frame
            const double px = static_cast<double>(x) + 0.5 - pose.cx;
            const double py = static_cast<double>(y) + 0.5 - pose.cy;
            const double lx = px * cr - py * sr;
            const double ly = px * sr + py * cr;
            if (detail::sprite_inside(appearance, lx, ly, s)) {
                res.mask[y * W + x] = 1.0;
                res.patch[(0 * H + y) * W + x] = color.r;
                res.patch[(1 * H + y) * W + x] = color.g;
                res.patch[(2 * H + y) * W + x] = color.b;
            }
        }
    return res;
}

// ---------------------------------------------------------------------------
// texture families and world generation
// ---------------------------------------------------------------------------

// Family f draws stripe orientations from the first half of its slice of
// [0, pi) and stripe hues from the first half of its slice of the hue
// circle; the second half of every slice is reserved for disjoint
// out-of-distribution pools. The hue band is what makes the family an
// easy static cue for a small network.
inline SinusoidRanges world_family_ranges(const WorldSpec& spec, std::size_t family) {
    if (family >= spec.classes)
        throw std::invalid_argument("world_family_ranges: family " + std::to_string(family) +
                                    " out of range");
    const double slice = M_PI / static_cast<double>(spec.classes);
    const double hslice = 1.0 / static_cast<double>(spec.classes);
    SinusoidRanges r;
    const double lo = slice * static_cast<double>(family);
    r.theta_bands = {{lo, lo + slice / 2.0}};
    const double hlo = hslice * static_cast<double>(family);
    r.hue_bands = {{hlo, hlo + hslice / 2.0}};
    return r;
}

// Orientation and hue bands never used by any world family; a sinusoid
// pool over these bands is texture- and color-disjoint from every
// training background.
inline SinusoidRanges world_complement_ranges(const WorldSpec& spec) {
    const double slice = M_PI / static_cast<double>(spec.classes);
    const double hslice = 1.0 / static_cast<double>(spec.classes);
    SinusoidRanges r;
    r.theta_bands.clear();
    r.hue_bands.clear();
    for (std::size_t f = 0; f < spec.classes; ++f) {
        const double lo = slice * static_cast<double>(f) + slice / 2.0;
        r.theta_bands.push_back({lo, lo + slice / 2.0});
        const double hlo = hslice * static_cast<double>(f) + hslice / 2.0;
        r.hue_bands.push_back({hlo, hlo + hslice / 2.0});
    }
    return r;
}

inline BackgroundPool world_family_pool(const WorldSpec& spec, std::size_t family) {
    Rng seeder = Rng(spec.master_seed).derive(0x9bf00d5eULL + family);
    return BackgroundPool::sinusoid(world_family_ranges(spec, family), seeder.next_u64(),
                                    spec.height, spec.width);
}

namespace detail {

inline LabeledClip generate_clip(const WorldSpec& spec, const std::vector<BackgroundPool>& pools,
                                 std::uint64_t clip_stream, std::size_t id, std::size_t label) {
    Rng rng = Rng(spec.master_seed).derive(clip_stream);
    LabeledClip clip;
    clip.id = id;
    clip.seed = clip_stream;
    clip.label = label;
    clip.bg_family =
        rng.bernoulli(spec.rho_bg) ? clip.label : rng.uniform_int(spec.classes);
    clip.fg_appearance =
        rng.bernoulli(spec.rho_fg) ? clip.label : rng.uniform_int(spec.classes);
    const MotionJitter jitter = draw_motion_jitter(rng, spec);
    const Tensor bg = pools[clip.bg_family].sample(rng.next_u64() & 0xffffff);

    const std::size_t T = spec.frames, H = spec.height, W = spec.width;
    clip.video = Tensor({3, T, H, W});
    clip.masks = Tensor({T, H, W});
    for (std::size_t t = 0; t < T; ++t) {
        const SpritePose pose = motion_program(clip.label, t, spec, jitter);
        RasterResult ras = rasterize(pose, clip.fg_appearance, H, W);
        for (auto& w : ras.warnings) clip.warnings.push_back(std::move(w));
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double m = ras.mask[y * W + x];
                clip.masks[(t * H + y) * W + x] = m;
                for (std::size_t c = 0; c < 3; ++c)
                    clip.video[((c * T + t) * H + y) * W + x] =
                        m > 0.5 ? ras.patch[(c * H + y) * W + x] : bg[(c * H + y) * W + x];
            }
    }
    return clip;
}

}  // namespace detail

// Labels are stratified (balanced counts, seeded shuffle) so the label
// marginal is uniform by construction; everything else about a clip comes
// from its own derived stream, so generation order does not matter.
inline std::vector<LabeledClip> generate_split(const WorldSpec& spec,
                                               const std::vector<BackgroundPool>& pools,
                                               std::size_t count, std::uint64_t split_tag,
                                               std::size_t id_base, std::size_t threads = 1) {
    std::vector<std::size_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = i % spec.classes;
    Rng shuffle_rng = Rng(spec.master_seed).derive(split_tag);
    for (std::size_t i = count; i > 1; --i)
        std::swap(labels[i - 1], labels[shuffle_rng.uniform_int(i)]);

    std::vector<LabeledClip> clips(count);
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < count; i += step)
            clips[i] = detail::generate_clip(spec, pools, split_tag ^ (0x517e00ULL + i),
                                             id_base + i, labels[i]);
    };
    if (threads <= 1) {
        work(0, 1);
    } else {
        // each clip draws only from its own derived stream, so interleaved
        // workers produce the same bits as the serial loop
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < threads; ++w) workers.emplace_back(work, w, threads);
        for (auto& t : workers) t.join();
    }
    return clips;
}

inline WorldData generate_world(const WorldSpec& spec, std::size_t threads = 1) {
    spec.validate();
    std::vector<BackgroundPool> pools;
    for (std::size_t f = 0; f < spec.classes; ++f) pools.push_back(world_family_pool(spec, f));

    WorldData data;
    data.spec = spec;
    data.train = generate_split(spec, pools, spec.train_size, 0x7261494eULL, 0, threads);
    data.val = generate_split(spec, pools, spec.val_size, 0x76614cULL, spec.train_size, threads);
    data.test_iid = generate_split(spec, pools, spec.test_size, 0x74657374ULL,
                                   spec.train_size + spec.val_size, threads);
    return data;
}

// ---------------------------------------------------------------------------
// trajectory oracle: nearest-centroid on mask-derived motion features.
// Independent of any trained network; it reads only the masks.
// ---------------------------------------------------------------------------

// Per-frame sprite center and size from the mask, centered over time:
// (dcx_t, dcy_t, dsize_t) for every frame.
inline std::vector<double> trajectory_features(const Tensor& masks) {
    const std::size_t T = masks.dim(0), H = masks.dim(1), W = masks.dim(2);
    std::vector<double> cx(T), cy(T), sz(T);
    for (std::size_t t = 0; t < T; ++t) {
        double sx = 0, sy = 0, n = 0;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                if (masks[(t * H + y) * W + x] > 0.5) {
                    sx += static_cast<double>(x);
                    sy += static_cast<double>(y);
                    n += 1.0;
                }
        cx[t] = n > 0 ? sx / n : 0.0;
        cy[t] = n > 0 ? sy / n : 0.0;
        sz[t] = std::sqrt(n);
    }
    auto center = [](std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double& x : v) x -= mean;
    };
    center(cx);
    center(cy);
    center(sz);
    std::vector<double> feat;
    feat.reserve(3 * T);
    feat.insert(feat.end(), cx.begin(), cx.end());
    feat.insert(feat.end(), cy.begin(), cy.end());
    feat.insert(feat.end(), sz.begin(), sz.end());
    return feat;
}

class TrajectoryOracle {
public:
    TrajectoryOracle(const std::vector<LabeledClip>& train, std::size_t classes)
        : classes_(classes) {
        if (train.empty()) throw std::invalid_argument("TrajectoryOracle: empty training set");
        const std::size_t dim = trajectory_features(train[0].masks).size();
        centroids_.assign(classes, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(classes, 0);
        for (const LabeledClip& c : train) {
            const auto f = trajectory_features(c.masks);
            for (std::size_t i = 0; i < dim; ++i) centroids_[c.label][i] += f[i];
            ++counts[c.label];
        }
        for (std::size_t k = 0; k < classes; ++k) {
            if (counts[k] == 0)
                throw std::invalid_argument("TrajectoryOracle: class " + std::to_string(k) +
                                            " unrepresented");
            for (double& v : centroids_[k]) v /= static_cast<double>(counts[k]);
        }
    }

    std::size_t classify(const Tensor& masks) const {
        const auto f = trajectory_features(masks);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < classes_; ++k) {
            double d = 0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double diff = f[i] - centroids_[k][i];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return best;
    }

    double accuracy(const std::vector<LabeledClip>& clips) const {
        if (clips.empty()) return 0.0;
        std::size_t correct = 0;
        for (const LabeledClip& c : clips)
            if (classify(c.masks) == c.label) ++correct;
        return static_cast<double>(correct) / static_cast<double>(clips.size());
    }

private:
    std::size_t classes_;
    std::vector<std::vector<double>> centroids_;
};

}  // namespace sb
