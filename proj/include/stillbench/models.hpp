#pragma once

// The two network families: a 2D still-frame classifier and a temporal
// clip classifier whose temporal reasoning comes from channel time-shifts
// inside an otherwise 2D encoder.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "stillbench/rng.hpp"
#include "stillbench/tensor.hpp"

namespace sb {

// ---------------------------------------------------------------------------
// temporal shift: first floor(f*C) channels move +1 in time, the next equal
// group moves -1, the rest stay. Vacated slots are zero-filled; the shift is
// linear, so backward is the opposite shift.
// ---------------------------------------------------------------------------

namespace detail {

// dst[n,t,c] += src[n,t-dt,c] for c in [c_lo, c_hi); out-of-range source
// frames contribute nothing (zero-fill).
inline void shift_accum(const double* src, double* dst, std::size_t N, std::size_t T,
                        std::size_t C, std::size_t hw, std::size_t c_lo, std::size_t c_hi,
                        int dt) {
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < T; ++t) {
            const std::ptrdiff_t ts = static_cast<std::ptrdiff_t>(t) - dt;
            if (ts < 0 || ts >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t c = c_lo; c < c_hi; ++c) {
                double* d = dst + ((n * T + t) * C + c) * hw;
                const double* s = src + ((n * T + static_cast<std::size_t>(ts)) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) d[i] += s[i];
            }
        }
}

}  // namespace detail

inline Tensor temporal_shift(Tape* tape, const Tensor& features, double f_shift) {
    if (features.rank() != 5)
        throw std::invalid_argument("temporal_shift: need [N x T x C x H x W], got " +
                                    shape_str(features.shape()));
    const std::size_t N = features.dim(0), T = features.dim(1), C = features.dim(2);
    const std::size_t hw = features.dim(3) * features.dim(4);
    if (T == 0) throw std::invalid_argument("temporal_shift: empty clip (T=0)");
    if (C < 4)
        throw std::invalid_argument("temporal_shift: need at least 4 channels, got " +
                                    std::to_string(C));
    if (f_shift <= 0.0 || f_shift > 0.5)
        throw std::invalid_argument("temporal_shift: shift fraction must be in (0, 0.5]");
    const std::size_t g = static_cast<std::size_t>(f_shift * static_cast<double>(C));

    Tensor out(features.shape());
    detail::shift_accum(features.data(), out.data(), N, T, C, hw, 0, g, +1);
    detail::shift_accum(features.data(), out.data(), N, T, C, hw, g, 2 * g, -1);
    detail::shift_accum(features.data(), out.data(), N, T, C, hw, 2 * g, C, 0);

    if (detail::track(tape, {&features})) {
        out.enable_grad();
        Tensor fc = features, oc = out;
        tape->record([fc, oc, N, T, C, hw, g]() mutable {
            detail::shift_accum(oc.grad(), fc.grad(), N, T, C, hw, 0, g, -1);
            detail::shift_accum(oc.grad(), fc.grad(), N, T, C, hw, g, 2 * g, +1);
            detail::shift_accum(oc.grad(), fc.grad(), N, T, C, hw, 2 * g, C, 0);
        });
    }
    return out;
}

// Mean over the time axis with order-invariant accumulation: per (n, d) the
// T values are sorted before summing, so any frame permutation yields a
// bit-identical result. Gradient is uniform 1/T and unaffected by the sort.
inline Tensor temporal_mean(Tape* tape, const Tensor& a) {
    if (a.rank() != 3)
        throw std::invalid_argument("temporal_mean: need [N x T x D], got " + shape_str(a.shape()));
    const std::size_t N = a.dim(0), T = a.dim(1), D = a.dim(2);
    Tensor out({N, D});
    std::vector<double> vals(T);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t d = 0; d < D; ++d) {
            for (std::size_t t = 0; t < T; ++t) vals[t] = a[(n * T + t) * D + d];
            std::sort(vals.begin(), vals.end());
            double acc = 0.0;
            for (double v : vals) acc += v;
            out[n * D + d] = acc / static_cast<double>(T);
        }
    if (detail::track(tape, {&a})) {
        out.enable_grad();
        Tensor ac = a, oc = out;
        tape->record([ac, oc, N, T, D]() mutable {
            const double inv = 1.0 / static_cast<double>(T);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t d = 0; d < D; ++d)
                        ac.grad()[(n * T + t) * D + d] += oc.grad()[n * D + d] * inv;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// FrameNet: conv/relu/pool stack -> dense -> logits. Final layer zero-init
// so an untrained net is exactly uniform.
// ---------------------------------------------------------------------------

struct FrameNetSpec {
    std::size_t in_channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t classes = 6;
    std::vector<std::size_t> conv_filters{16, 32};
    std::size_t kernel = 3;
    std::size_t hidden = 64;
};

namespace detail {

inline void he_uniform_fill(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
}

inline std::pair<std::size_t, std::size_t> conv_stack_out(std::size_t h, std::size_t w,
                                                          std::size_t n_layers,
                                                          std::size_t kernel) {
    for (std::size_t i = 0; i < n_layers; ++i) {
        h = (h - kernel + 1) / 2;  // valid conv then 2x2 pool
        w = (w - kernel + 1) / 2;
    }
    return {h, w};
}

}  // namespace detail

class FrameNet {
public:
    FrameNet() = default;

    FrameNet(FrameNetSpec spec, Rng rng) : spec_(std::move(spec)) {
        std::size_t c = spec_.in_channels;
        for (std::size_t f : spec_.conv_filters) {
            Tensor w({f, c, spec_.kernel, spec_.kernel}, 0.0, true);
            detail::he_uniform_fill(w, c * spec_.kernel * spec_.kernel, rng);
            conv_w_.push_back(w);
            conv_b_.emplace_back(Shape{f}, 0.0, true);
            c = f;
        }
        auto [oh, ow] = detail::conv_stack_out(spec_.height, spec_.width,
                                               spec_.conv_filters.size(), spec_.kernel);
        feat_dim_ = c * oh * ow;
        dense1_w_ = Tensor({feat_dim_, spec_.hidden}, 0.0, true);
        detail::he_uniform_fill(dense1_w_, feat_dim_, rng);
        dense1_b_ = Tensor({spec_.hidden}, 0.0, true);
        dense2_w_ = Tensor({spec_.hidden, spec_.classes}, 0.0, true);  // zero-init head
        dense2_b_ = Tensor({spec_.classes}, 0.0, true);
    }

    const FrameNetSpec& spec() const { return spec_; }

    Tensor forward(Tape* tape, const Tensor& frames) const {
        if (frames.rank() != 4 || frames.dim(1) != spec_.in_channels ||
            frames.dim(2) != spec_.height || frames.dim(3) != spec_.width)
            throw std::invalid_argument("FrameNet: expected [N x " +
                                        std::to_string(spec_.in_channels) + " x " +
                                        std::to_string(spec_.height) + " x " +
                                        std::to_string(spec_.width) + "], got " +
                                        shape_str(frames.shape()));
        Tensor x = frames;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            x = relu(tape, bias_add_channels(tape, conv2d(tape, x, conv_w_[i]), conv_b_[i]));
            x = maxpool2(tape, x);
        }
        x = x.reshape({frames.dim(0), feat_dim_});
        x = relu(tape, bias_add_rows(tape, matmul(tape, x, dense1_w_), dense1_b_));
        return bias_add_rows(tape, matmul(tape, x, dense2_w_), dense2_b_);
    }

    std::vector<std::pair<std::string, Tensor>> named_params() {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            out.emplace_back("conv" + std::to_string(i) + ".w", conv_w_[i]);
            out.emplace_back("conv" + std::to_string(i) + ".b", conv_b_[i]);
        }
        out.emplace_back("dense1.w", dense1_w_);
        out.emplace_back("dense1.b", dense1_b_);
        out.emplace_back("dense2.w", dense2_w_);
        out.emplace_back("dense2.b", dense2_b_);
        return out;
    }

    std::vector<Tensor> params() {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

private:
    FrameNetSpec spec_;
    std::size_t feat_dim_ = 0;
    std::vector<Tensor> conv_w_, conv_b_;
    Tensor dense1_w_, dense1_b_, dense2_w_, dense2_b_;
};

// ---------------------------------------------------------------------------
// TemporalNet: shared 2D encoder per frame, time-shift layers between conv
// blocks (shift mode) or none (average mode), order-invariant temporal mean,
// dense head.
// ---------------------------------------------------------------------------

enum class TemporalMode { shift, average };

struct TemporalNetSpec {
    std::size_t in_channels = 3;
    std::size_t frames = 8;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t classes = 6;
    std::vector<std::size_t> conv_filters{16, 32};
    std::size_t kernel = 3;
    std::size_t mix_filters = 32;  // 1x1 conv after the last shift
    std::size_t hidden = 64;
    TemporalMode mode = TemporalMode::shift;
    double f_shift = 0.125;
};

class TemporalNet {
public:
    TemporalNet() = default;

    TemporalNet(TemporalNetSpec spec, Rng rng) : spec_(std::move(spec)) {
        if (spec_.f_shift <= 0.0 || spec_.f_shift > 0.5)
            throw std::invalid_argument("TemporalNet: f_shift must be in (0, 0.5]");
        std::size_t c = spec_.in_channels;
        for (std::size_t f : spec_.conv_filters) {
            Tensor w({f, c, spec_.kernel, spec_.kernel}, 0.0, true);
            detail::he_uniform_fill(w, c * spec_.kernel * spec_.kernel, rng);
            conv_w_.push_back(w);
            conv_b_.emplace_back(Shape{f}, 0.0, true);
            c = f;
        }
        mix_w_ = Tensor({spec_.mix_filters, c, 1, 1}, 0.0, true);
        detail::he_uniform_fill(mix_w_, c, rng);
        mix_b_ = Tensor({spec_.mix_filters}, 0.0, true);
        auto [oh, ow] = detail::conv_stack_out(spec_.height, spec_.width,
                                               spec_.conv_filters.size(), spec_.kernel);
        out_h_ = oh;
        out_w_ = ow;
        feat_dim_ = spec_.mix_filters * oh * ow;
        dense1_w_ = Tensor({feat_dim_, spec_.hidden}, 0.0, true);
        detail::he_uniform_fill(dense1_w_, feat_dim_, rng);
        dense1_b_ = Tensor({spec_.hidden}, 0.0, true);
        dense2_w_ = Tensor({spec_.hidden, spec_.classes}, 0.0, true);
        dense2_b_ = Tensor({spec_.classes}, 0.0, true);
    }

    const TemporalNetSpec& spec() const { return spec_; }

    // clips: [N x C x T x H x W]
    Tensor forward(Tape* tape, const Tensor& clips) const {
        if (clips.rank() != 5 || clips.dim(1) != spec_.in_channels ||
            clips.dim(2) != spec_.frames || clips.dim(3) != spec_.height ||
            clips.dim(4) != spec_.width)
            throw std::invalid_argument("TemporalNet: expected [N x " +
                                        std::to_string(spec_.in_channels) + " x " +
                                        std::to_string(spec_.frames) + " x " +
                                        std::to_string(spec_.height) + " x " +
                                        std::to_string(spec_.width) + "], got " +
                                        shape_str(clips.shape()));
        const std::size_t N = clips.dim(0), C = spec_.in_channels, T = spec_.frames;
        const std::size_t H = spec_.height, W = spec_.width;

        // C,T -> T,C permute so frames become the batch axis; input carries
        // no grad so this happens outside the tape
        Tensor frames({N * T, C, H, W});
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t t = 0; t < T; ++t)
                    std::memcpy(frames.data() + ((n * T + t) * C + c) * H * W,
                                clips.data() + ((n * C + c) * T + t) * H * W,
                                H * W * sizeof(double));

        Tensor x = frames;
        std::size_t h = H, w = W;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            x = relu(tape, bias_add_channels(tape, conv2d(tape, x, conv_w_[i]), conv_b_[i]));
            x = maxpool2(tape, x);
            h = (h - spec_.kernel + 1) / 2;
            w = (w - spec_.kernel + 1) / 2;
            if (spec_.mode == TemporalMode::shift) {
                const std::size_t cc = conv_w_[i].dim(0);
                x = temporal_shift(tape, x.reshape({N, T, cc, h, w}), spec_.f_shift)
                        .reshape({N * T, cc, h, w});
            }
        }
        x = relu(tape, bias_add_channels(tape, conv2d(tape, x, mix_w_), mix_b_));
        x = temporal_mean(tape, x.reshape({N, T, feat_dim_}));
        x = relu(tape, bias_add_rows(tape, matmul(tape, x, dense1_w_), dense1_b_));
        return bias_add_rows(tape, matmul(tape, x, dense2_w_), dense2_b_);
    }

    std::vector<std::pair<std::string, Tensor>> named_params() {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            out.emplace_back("conv" + std::to_string(i) + ".w", conv_w_[i]);
            out.emplace_back("conv" + std::to_string(i) + ".b", conv_b_[i]);
        }
        out.emplace_back("mix.w", mix_w_);
        out.emplace_back("mix.b", mix_b_);
        out.emplace_back("dense1.w", dense1_w_);
        out.emplace_back("dense1.b", dense1_b_);
        out.emplace_back("dense2.w", dense2_w_);
        out.emplace_back("dense2.b", dense2_b_);
        return out;
    }

    std::vector<Tensor> params() {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

private:
    TemporalNetSpec spec_;
    std::size_t feat_dim_ = 0, out_h_ = 0, out_w_ = 0;
    std::vector<Tensor> conv_w_, conv_b_;
    Tensor mix_w_, mix_b_;
    Tensor dense1_w_, dense1_b_, dense2_w_, dense2_b_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic "SBCK", u32 version, then per-parameter records of
// (u32 name length, name bytes, u32 ndim, u32 dims..., f64 LE data).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64_le(std::ostream& os, const double* data, std::size_t n) {
    // assumes little-endian host (x86/arm64); static_assert guards the build
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint writer requires a little-endian host");
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            std::vector<std::pair<std::string, Tensor>> params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write("SBCK", 4);
    detail::write_u32(os, 1);
    detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
        detail::write_f64_le(os, t.data(), t.numel());
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline void load_checkpoint(const std::string& path,
                            std::vector<std::pair<std::string, Tensor>> params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SBCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::read_u32(is);
    if (count != params.size())
        throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                                 " parameters, file has " + std::to_string(count));
    for (auto& [name, t] : params) {
        const std::uint32_t nlen = detail::read_u32(is);
        std::string fname(nlen, '\0');
        is.read(fname.data(), nlen);
        if (fname != name)
            throw std::runtime_error("checkpoint: parameter order mismatch, expected " + name +
                                     ", found " + fname);
        const std::uint32_t ndim = detail::read_u32(is);
        Shape shape(ndim);
        for (auto& d : shape) d = detail::read_u32(is);
        if (shape != t.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name + ": expected " +
                                     shape_str(t.shape()) + ", file has " + shape_str(shape));
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
        if (!is) throw std::runtime_error("checkpoint: truncated data for " + name);
    }
}

}  // namespace sb
