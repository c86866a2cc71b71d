#pragma once

// StillMix and the baseline video augmentations, all behind one Augmentor
// interface. StillMix: train a 2D reference network on random single
// frames, bank the frames it classifies most confidently (p > tau), then
// mix banked frames into training clips with a Beta-distributed weight
// while keeping the original label.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stillbench/benchmark.hpp"
#include "stillbench/frame_training.hpp"
#include "stillbench/world.hpp"

namespace sb {

// ---------------------------------------------------------------------------
// frame extraction and scoring
// ---------------------------------------------------------------------------

inline Tensor extract_frame(const Tensor& video, std::size_t t) {
    const std::size_t C = video.dim(0), T = video.dim(1), hw = video.dim(2) * video.dim(3);
    if (t >= T) throw std::invalid_argument("extract_frame: frame index out of range");
    Tensor frame({C, video.dim(2), video.dim(3)});
    for (std::size_t c = 0; c < C; ++c)
        std::copy(video.data() + (c * T + t) * hw, video.data() + (c * T + t + 1) * hw,
                  frame.data() + c * hw);
    return frame;
}

// max_k P(y=k | frame) for a batch of frames
inline std::vector<double> frame_confidences(const FrameNet& net,
                                             const std::vector<Tensor>& frames,
                                             std::size_t batch_size = 32) {
    std::vector<double> conf(frames.size());
    const std::size_t K = net.spec().classes;
    for (std::size_t start = 0; start < frames.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, frames.size());
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        const auto probs = softmax(net.forward(nullptr, stack_frames(frames, idx)));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double best = 0.0;
            for (std::size_t k = 0; k < K; ++k) best = std::max(best, probs[i * K + k]);
            conf[start + i] = best;
        }
    }
    return conf;
}

// ---------------------------------------------------------------------------
// reference network training: one random frame per video per epoch
// ---------------------------------------------------------------------------

inline std::vector<double> train_reference(FrameNet& net, const std::vector<LabeledClip>& train,
                                           const FrameTrainConfig& cfg, Rng rng) {
    if (train.empty()) throw std::invalid_argument("train_reference: empty training set");
    auto params = net.params();
    SgdState opt(cfg.learning_rate, cfg.momentum);
    std::vector<double> curve;
    const std::size_t T = train[0].video.dim(1);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.derive(epoch);
        std::vector<Tensor> frames;
        frames.reserve(train.size());
        std::vector<std::size_t> labels(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            frames.push_back(extract_frame(train[i].video, erng.uniform_int(T)));
            labels[i] = train[i].label;
        }
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[erng.uniform_int(i)]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
            Tensor batch = stack_frames(frames, idx);
            std::vector<std::size_t> batch_labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = labels[idx[i]];
            for (auto& p : params) p.zero_grad();
            Tape tape;
            Tensor loss = softmax_cross_entropy(&tape, net.forward(&tape, batch), batch_labels);
            if (!loss.all_finite())
                throw std::runtime_error("train_reference: non-finite loss at epoch " +
                                         std::to_string(epoch));
            loss_sum += loss[0];
            ++batches;
            tape.backward(loss);
            sgd_step(params, opt);
        }
        curve.push_back(loss_sum / static_cast<double>(batches ? batches : 1));
    }
    return curve;
}

// ---------------------------------------------------------------------------
// frame bank
// ---------------------------------------------------------------------------

struct FrameBankEntry {
    Tensor frame;  // [3 x H x W]
    std::size_t source_clip = 0;
    std::size_t frame_index = 0;
    double confidence = 0.0;
};

struct FrameBank {
    std::vector<FrameBankEntry> entries;
    double tau = 0.8;
    std::size_t capacity = 256;
    std::vector<std::string> warnings;
};

// Which frame indices enter the bank: everything with p > tau, then a seeded
// subsample when more than `capacity` frames qualify.
inline std::vector<std::size_t> select_bank_indices(const std::vector<double>& conf, double tau,
                                                    std::size_t capacity, std::uint64_t seed,
                                                    std::vector<std::string>* warnings) {
    if (capacity < 1) throw std::invalid_argument("build_bank: capacity must be >= 1");
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("build_bank: tau must be in [0, 1]");
    std::vector<std::size_t> passing;
    for (std::size_t i = 0; i < conf.size(); ++i)
        if (conf[i] > tau) passing.push_back(i);
    if (passing.empty())
        throw std::runtime_error("build_bank: no frame exceeds tau=" + std::to_string(tau) +
                                 "; decrease tau");
    if (passing.size() > capacity) {
        Rng rng(seed);
        for (std::size_t i = passing.size(); i > 1; --i)
            std::swap(passing[i - 1], passing[rng.uniform_int(i)]);
        passing.resize(capacity);
        std::sort(passing.begin(), passing.end());
    } else if (passing.size() < capacity && warnings) {
        warnings->push_back("build_bank: only " + std::to_string(passing.size()) +
                            " frames exceed tau, capacity is " + std::to_string(capacity));
    }
    return passing;
}

inline FrameBank build_bank(const FrameNet& reference, const std::vector<LabeledClip>& train,
                            double tau, std::size_t capacity, std::uint64_t seed) {

    FrameBank bank;
    bank.tau = tau;
    bank.capacity = capacity;

    std::vector<Tensor> frames;
    std::vector<std::pair<std::size_t, std::size_t>> origin;  // (clip id, frame index)
    for (const LabeledClip& clip : train) {
        const std::size_t T = clip.video.dim(1);
        for (std::size_t t = 0; t < T; ++t) {
            frames.push_back(extract_frame(clip.video, t));
            origin.emplace_back(clip.id, t);
        }
    }
    const auto conf = frame_confidences(reference, frames);

    std::vector<std::size_t> passing;
    for (std::size_t i = 0; i < conf.size(); ++i)
        if (conf[i] > tau) passing.push_back(i);
    for (std::size_t i : select_bank_indices(conf, tau, capacity, seed, &bank.warnings))
        bank.entries.push_back({frames[i], origin[i].first, origin[i].second, conf[i]});
    return bank;
}

// ---------------------------------------------------------------------------
// augmentation primitives
// ---------------------------------------------------------------------------

struct AugmentedSample {
    Tensor video;  // [3 x T x H x W]
    Tensor label;  // [K], nonnegative mixture summing to 1
};

inline Tensor one_hot_label(std::size_t y, std::size_t K) {
    Tensor label({K});
    if (y >= K) throw std::invalid_argument("one_hot_label: class out of range");
    label[y] = 1.0;
    return label;
}

// lambda * video + (1 - lambda) * Tile(frame, T), elementwise
inline Tensor stillmix_blend(const Tensor& video, const Tensor& frame, double lambda) {
    const std::size_t C = video.dim(0), T = video.dim(1), hw = video.dim(2) * video.dim(3);
    if (frame.rank() != 3 || frame.dim(0) != C || frame.numel() != C * hw)
        throw std::invalid_argument("stillmix: frame " + shape_str(frame.shape()) +
                                    " does not match video " + shape_str(video.shape()));
    Tensor out(video.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t vi = (c * T + t) * hw + i;
                out[vi] = lambda * video[vi] + (1.0 - lambda) * frame[c * hw + i];
            }
    return out;
}

inline AugmentedSample stillmix(const Tensor& video, std::size_t label, std::size_t K,
                                const FrameBank& bank, double alpha, double beta, Rng& rng) {
    if (bank.entries.empty()) throw std::runtime_error("stillmix: empty frame bank");
    const double lambda = rng.beta(alpha, beta);
    const FrameBankEntry& z = bank.entries[rng.uniform_int(bank.entries.size())];
    AugmentedSample out;
    out.video = stillmix_blend(video, z.frame, lambda);
    out.label = one_hot_label(label, K);  // the static clip carries no motion
    return out;
}

inline AugmentedSample mixup_blend(const Tensor& a, std::size_t ya, const Tensor& b,
                                   std::size_t yb, std::size_t K, double lambda) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mixup: shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()) + " differ");
    AugmentedSample out;
    out.video = Tensor(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i)
        out.video[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    out.label = Tensor({K});
    out.label[ya] += lambda;
    out.label[yb] += 1.0 - lambda;
    return out;
}

inline AugmentedSample mixup(const Tensor& a, std::size_t ya, const Tensor& b, std::size_t yb,
                             std::size_t K, double alpha, double beta, Rng& rng) {
    return mixup_blend(a, ya, b, yb, K, rng.beta(alpha, beta));
}

inline AugmentedSample videomix(const Tensor& a, std::size_t ya, const Tensor& b, std::size_t yb,
                                std::size_t K, double frac_lo, double frac_hi, Rng& rng) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("videomix: shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()) + " differ");
    const std::size_t C = a.dim(0), T = a.dim(1), H = a.dim(2), W = a.dim(3);
    const std::size_t bw = static_cast<std::size_t>(rng.uniform(frac_lo, frac_hi) * W);
    const std::size_t bh = static_cast<std::size_t>(rng.uniform(frac_lo, frac_hi) * H);
    const std::size_t x0 = bw < W ? rng.uniform_int(W - bw + 1) : 0;
    const std::size_t y0 = bh < H ? rng.uniform_int(H - bh + 1) : 0;
    AugmentedSample out;
    out.video = a.clone();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t y = y0; y < y0 + bh; ++y)
                for (std::size_t x = x0; x < x0 + bw; ++x)
                    out.video[((c * T + t) * H + y) * W + x] = b[((c * T + t) * H + y) * W + x];
    const double lambda =
        1.0 - static_cast<double>(bw * bh) / static_cast<double>(H * W);
    out.label = Tensor({K});
    out.label[ya] += lambda;
    out.label[yb] += 1.0 - lambda;
    return out;
}

inline AugmentedSample background_erase(const Tensor& video, std::size_t label, std::size_t K,
                                        double mu_lo, double mu_hi, Rng& rng,
                                        std::vector<std::string>* warnings = nullptr) {
    const std::size_t C = video.dim(0), T = video.dim(1), hw = video.dim(2) * video.dim(3);
    AugmentedSample out;
    out.label = one_hot_label(label, K);
    if (T < 2) {
        if (warnings) warnings->push_back("be: single-frame clip, no-op");
        out.video = video.clone();
        return out;
    }
    const std::size_t k = rng.uniform_int(T);
    const double mu = rng.uniform(mu_lo, mu_hi);
    out.video = Tensor(video.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < hw; ++i)
                out.video[(c * T + t) * hw + i] = (1.0 - mu) * video[(c * T + t) * hw + i] +
                                                  mu * video[(c * T + k) * hw + i];
    return out;
}

inline AugmentedSample background_swap(const Tensor& video, const Tensor& masks, std::size_t label,
                                       std::size_t K, const Tensor& background) {
    AugmentedSample out;
    out.video = composite(video, masks, background);
    out.label = one_hot_label(label, K);
    return out;
}

// ---------------------------------------------------------------------------
// the augmentor
// ---------------------------------------------------------------------------

enum class AugMethod { none, stillmix, mixup, videomix, be, bgswap };

inline const char* aug_method_name(AugMethod m) {
    switch (m) {
        case AugMethod::none: return "none";
        case AugMethod::stillmix: return "stillmix";
        case AugMethod::mixup: return "mixup";
        case AugMethod::videomix: return "videomix";
        case AugMethod::be: return "be";
        case AugMethod::bgswap: return "bgswap";
    }
    throw std::logic_error("aug_method_name: unreachable");
}

inline AugMethod aug_method_from_string(const std::string& s) {
    if (s == "none") return AugMethod::none;
    if (s == "stillmix") return AugMethod::stillmix;
    if (s == "mixup") return AugMethod::mixup;
    if (s == "videomix") return AugMethod::videomix;
    if (s == "be") return AugMethod::be;
    if (s == "bgswap") return AugMethod::bgswap;
    throw std::invalid_argument("unknown augmentation method: " + s);
}

struct AugmentorConfig {
    AugMethod method = AugMethod::none;
    double p_aug = 0.5;
    double alpha = 2.0, beta = 2.0;
    double tau = 0.8;
    std::size_t bank_capacity = 256;
    double be_mu_lo = 0.0, be_mu_hi = 0.3;
    double videomix_frac_lo = 0.25, videomix_frac_hi = 0.75;

    void validate() const {
        if (p_aug < 0.0 || p_aug > 1.0)
            throw std::invalid_argument("AugmentorConfig: p_aug must be in [0, 1]");
        if (alpha <= 0.0 || beta <= 0.0)
            throw std::invalid_argument("AugmentorConfig: Beta parameters must be positive");
        if (tau < 0.0 || tau > 1.0)
            throw std::invalid_argument("AugmentorConfig: tau must be in [0, 1]");
        if (be_mu_lo < 0.0 || be_mu_hi > 1.0 || be_mu_lo > be_mu_hi)
            throw std::invalid_argument("AugmentorConfig: bad BE mu range");
        if (videomix_frac_lo < 0.0 || videomix_frac_hi > 1.0 ||
            videomix_frac_lo > videomix_frac_hi)
            throw std::invalid_argument("AugmentorConfig: bad VideoMix box range");
    }
};

// Draws a random peer training sample (for mixup/videomix) or a random
// background image (for bgswap); both must be deterministic in the Rng.
using PeerSampler = std::function<const LabeledClip&(Rng&)>;
using BackgroundSampler = std::function<Tensor(Rng&)>;

class Augmentor {
public:
    Augmentor(AugmentorConfig config, std::size_t classes,
              std::shared_ptr<const FrameBank> bank = nullptr, PeerSampler peers = nullptr,
              BackgroundSampler backgrounds = nullptr)
        : config_(config), classes_(classes), bank_(std::move(bank)), peers_(std::move(peers)),
          backgrounds_(std::move(backgrounds)) {
        config_.validate();
        // resources are checked here so failures cannot surface mid-training
        switch (config_.method) {
            case AugMethod::stillmix:
                if (!bank_ || bank_->entries.empty())
                    throw std::invalid_argument("Augmentor: stillmix needs a non-empty frame bank");
                break;
            case AugMethod::mixup:
            case AugMethod::videomix:
                if (!peers_)
                    throw std::invalid_argument("Augmentor: " +
                                                std::string(aug_method_name(config_.method)) +
                                                " needs a peer sampler");
                break;
            case AugMethod::bgswap:
                if (!backgrounds_)
                    throw std::invalid_argument("Augmentor: bgswap needs a background sampler");
                break;
            case AugMethod::none:
            case AugMethod::be:
                break;
        }
    }

    const AugmentorConfig& config() const { return config_; }

    AugmentedSample apply(const LabeledClip& sample, Rng& rng) const {
        if (!rng.bernoulli(config_.p_aug) || config_.method == AugMethod::none) {
            AugmentedSample out;
            out.video = sample.video;
            out.label = one_hot_label(sample.label, classes_);
            return out;
        }
        switch (config_.method) {
            case AugMethod::stillmix:
                return stillmix(sample.video, sample.label, classes_, *bank_, config_.alpha,
                                config_.beta, rng);
            case AugMethod::mixup: {
                const LabeledClip& peer = peers_(rng);
                return mixup(sample.video, sample.label, peer.video, peer.label, classes_,
                             config_.alpha, config_.beta, rng);
            }
            case AugMethod::videomix: {
                const LabeledClip& peer = peers_(rng);
                return videomix(sample.video, sample.label, peer.video, peer.label, classes_,
                                config_.videomix_frac_lo, config_.videomix_frac_hi, rng);
            }
            case AugMethod::be:
                return background_erase(sample.video, sample.label, classes_, config_.be_mu_lo,
                                        config_.be_mu_hi, rng);
            case AugMethod::bgswap: {
                if (sample.masks.numel() == 0)
                    throw std::invalid_argument("Augmentor: bgswap sample has no masks");
                return background_swap(sample.video, sample.masks, sample.label, classes_,
                                       backgrounds_(rng));
            }
            case AugMethod::none:
                break;
        }
        throw std::logic_error("Augmentor: unreachable");
    }

private:
    AugmentorConfig config_;
    std::size_t classes_;
    std::shared_ptr<const FrameBank> bank_;
    PeerSampler peers_;
    BackgroundSampler backgrounds_;
};

}  // namespace sb
