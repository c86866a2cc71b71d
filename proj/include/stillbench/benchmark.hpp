#pragma once

// SCUB / SCUF synthesis and the static domain-gap metric.
//
// SCUB keeps the original foreground motion and pastes it onto backgrounds
// from pools that never appear in training; SCUF tiles one random SCUB
// frame so all motion is gone while foreground statics remain.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "stillbench/backgrounds.hpp"
#include "stillbench/frame_training.hpp"
#include "stillbench/world.hpp"

namespace sb {

// ---------------------------------------------------------------------------
// compositing: out_t = m_t * fg_t + (1 - m_t) * bg, pixel-exact select
// ---------------------------------------------------------------------------

inline Tensor composite(const Tensor& video, const Tensor& masks, const Tensor& bg) {
    if (video.rank() != 4)
        throw std::invalid_argument("composite: video must be [C x T x H x W], got " +
                                    shape_str(video.shape()));
    const std::size_t C = video.dim(0), T = video.dim(1), H = video.dim(2), W = video.dim(3);
    if (masks.shape() != Shape{T, H, W})
        throw std::invalid_argument("composite: masks " + shape_str(masks.shape()) +
                                    " do not match video " + shape_str(video.shape()));
    if (bg.shape() != Shape{C, H, W})
        throw std::invalid_argument("composite: background " + shape_str(bg.shape()) +
                                    " does not match video " + shape_str(video.shape()));
    for (std::size_t i = 0; i < masks.numel(); ++i)
        if (masks[i] != 0.0 && masks[i] != 1.0)
            throw std::invalid_argument("composite: non-binary mask value " +
                                        std::to_string(masks[i]));
    Tensor out(video.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < H * W; ++i) {
                const std::size_t vi = (c * T + t) * H * W + i;
                out[vi] = masks[t * H * W + i] == 1.0 ? video[vi] : bg[c * H * W + i];
            }
    return out;
}

// Soft mattes from external sources are snapped to {0, 1} before Eq-style
// compositing; the caller gets a warning when anything was fractional.
inline Tensor binarize_masks(const Tensor& masks, std::vector<std::string>* warnings) {
    Tensor out(masks.shape());
    bool fractional = false;
    for (std::size_t i = 0; i < masks.numel(); ++i) {
        if (masks[i] != 0.0 && masks[i] != 1.0) fractional = true;
        out[i] = masks[i] > 0.5 ? 1.0 : 0.0;
    }
    if (fractional && warnings)
        warnings->push_back("binarize_masks: fractional mask values thresholded at 0.5");
    return out;
}

// ---------------------------------------------------------------------------
// benchmark sets
// ---------------------------------------------------------------------------

struct SynthesisSpec {
    std::size_t backgrounds_per_source = 5;  // m
    std::vector<std::pair<std::string, BackgroundPool>> pools;
    std::uint64_t seed = 0;

    void validate() const {
        if (backgrounds_per_source < 1)
            throw std::invalid_argument("SynthesisSpec: m must be >= 1");
        if (pools.empty()) throw std::invalid_argument("SynthesisSpec: no background pools");
        for (std::size_t i = 0; i < pools.size(); ++i)
            for (std::size_t j = i + 1; j < pools.size(); ++j)
                if (pools[i].first == pools[j].first)
                    throw std::invalid_argument("SynthesisSpec: duplicate pool name " +
                                                pools[i].first);
    }
};

enum class BenchmarkKind { SCUB, SCUF };

struct BenchClip {
    Tensor video;  // [3 x T x H x W]
    std::size_t label = 0;
    std::size_t source_clip = 0;
    std::uint64_t background_id = 0;
};

struct BenchmarkSet {
    std::string name;
    BenchmarkKind kind = BenchmarkKind::SCUB;
    std::string pool;
    std::vector<BenchClip> clips;
};

inline std::vector<BenchmarkSet> build_scub(const std::vector<LabeledClip>& clips,
                                            const SynthesisSpec& spec) {
    spec.validate();
    if (clips.empty()) throw std::invalid_argument("build_scub: no source clips");
    std::vector<BenchmarkSet> sets;
    for (std::size_t pi = 0; pi < spec.pools.size(); ++pi) {
        const auto& [pool_name, pool] = spec.pools[pi];
        BenchmarkSet set;
        set.kind = BenchmarkKind::SCUB;
        set.pool = pool_name;
        set.name = "SCUB-" + pool_name;
        set.clips.reserve(clips.size() * spec.backgrounds_per_source);
        for (const LabeledClip& src : clips) {
            Rng rng = Rng(spec.seed).derive(pi * 0x10001ULL + src.id);
            for (std::size_t r = 0; r < spec.backgrounds_per_source; ++r) {
                BenchClip bc;
                bc.background_id = rng.next_u64() & 0xffffffULL;
                bc.video = composite(src.video, src.masks, pool.sample(bc.background_id));
                bc.label = src.label;
                bc.source_clip = src.id;
                set.clips.push_back(std::move(bc));
            }
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

// Accepts a SCUF set too: with all frames already identical, re-tiling is
// the identity, so repeated application is idempotent.
inline BenchmarkSet build_scuf(const BenchmarkSet& scub, std::uint64_t seed) {
    BenchmarkSet out;
    out.kind = BenchmarkKind::SCUF;
    out.pool = scub.pool;
    out.name = "SCUF-" + scub.pool;
    out.clips.reserve(scub.clips.size());
    for (std::size_t i = 0; i < scub.clips.size(); ++i) {
        const BenchClip& src = scub.clips[i];
        const std::size_t C = src.video.dim(0), T = src.video.dim(1);
        const std::size_t hw = src.video.dim(2) * src.video.dim(3);
        Rng rng = Rng(seed).derive(i);
        const std::size_t pick = rng.uniform_int(T);
        BenchClip bc;
        bc.video = Tensor(src.video.shape());
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t)
                std::copy(src.video.data() + (c * T + pick) * hw,
                          src.video.data() + (c * T + pick + 1) * hw,
                          bc.video.data() + (c * T + t) * hw);
        bc.label = src.label;
        bc.source_clip = src.source_clip;
        bc.background_id = src.background_id;
        out.clips.push_back(std::move(bc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// domain gap of static features
// ---------------------------------------------------------------------------

struct DomainGapReport {
    double acc_old = 0.0;
    double acc_new = 0.0;
    double gap = 0.0;  // ln(acc_old / acc_new); +inf sentinel when acc_new = 0
};

inline double gap_from_accuracies(double acc_old, double acc_new) {
    if (acc_new <= 0.0) return std::numeric_limits<double>::infinity();
    return std::log(acc_old / acc_new);
}

// Average-over-time frame of a clip; this is all the probe ever sees.
inline Tensor time_average_frame(const Tensor& video) {
    const std::size_t C = video.dim(0), T = video.dim(1), hw = video.dim(2) * video.dim(3);
    Tensor frame({C, video.dim(2), video.dim(3)});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < hw; ++i)
                frame[c * hw + i] += video[(c * T + t) * hw + i] / static_cast<double>(T);
    return frame;
}

struct DomainGapProbeConfig {
    FrameNetSpec net;
    FrameTrainConfig train;
    std::uint64_t seed = 0;
};

inline DomainGapReport domain_gap(const std::vector<LabeledClip>& train_clips,
                                  const std::vector<LabeledClip>& test_iid,
                                  const BenchmarkSet& synthesized,
                                  const DomainGapProbeConfig& cfg) {
    std::vector<Tensor> train_frames;
    std::vector<std::size_t> train_labels;
    for (const auto& c : train_clips) {
        train_frames.push_back(time_average_frame(c.video));
        train_labels.push_back(c.label);
    }
    Rng rng(cfg.seed);
    FrameNet probe(cfg.net, rng.derive(1));
    train_frame_net(probe, train_frames, train_labels, cfg.train, rng.derive(2));

    std::vector<Tensor> old_frames;
    std::vector<std::size_t> old_labels;
    for (const auto& c : test_iid) {
        old_frames.push_back(time_average_frame(c.video));
        old_labels.push_back(c.label);
    }
    std::vector<Tensor> new_frames;
    std::vector<std::size_t> new_labels;
    for (const auto& c : synthesized.clips) {
        new_frames.push_back(time_average_frame(c.video));
        new_labels.push_back(c.label);
    }

    DomainGapReport report;
    report.acc_old = frame_accuracy(probe, old_frames, old_labels);
    report.acc_new = frame_accuracy(probe, new_frames, new_labels);
    report.gap = gap_from_accuracies(report.acc_old, report.acc_new);
    return report;
}

}  // namespace sb
