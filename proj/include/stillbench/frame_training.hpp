#pragma once

// Minibatch SGD over still frames, shared by the reference network and the
// static domain-gap probe.

#include <cstdint>
#include <vector>

#include "stillbench/models.hpp"
#include "stillbench/rng.hpp"
#include "stillbench/tensor.hpp"

namespace sb {

inline Tensor stack_frames(const std::vector<Tensor>& frames, const std::vector<std::size_t>& idx) {
    const Tensor& first = frames[idx[0]];
    Tensor batch({idx.size(), first.dim(0), first.dim(1), first.dim(2)});
    const std::size_t stride = first.numel();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(frames[idx[i]].data(), frames[idx[i]].data() + stride,
                  batch.data() + i * stride);
    return batch;
}

struct FrameTrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double learning_rate = 0.02;  // 0.05 is unstable with momentum 0.9
    double momentum = 0.9;
};

// Returns the per-epoch mean training loss.
inline std::vector<double> train_frame_net(FrameNet& net, const std::vector<Tensor>& frames,
                                           const std::vector<std::size_t>& labels,
                                           const FrameTrainConfig& cfg, Rng rng) {
    if (frames.empty() || frames.size() != labels.size())
        throw std::invalid_argument("train_frame_net: empty or mismatched training data");
    auto params = net.params();
    SgdState opt(cfg.learning_rate, cfg.momentum);
    std::vector<double> curve;
    std::vector<std::size_t> order(frames.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.derive(epoch);
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
                throw std::runtime_error("train_frame_net: non-finite loss at epoch " +
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

inline std::vector<std::size_t> predict_frames(const FrameNet& net,
                                               const std::vector<Tensor>& frames,
                                               std::size_t batch_size = 32) {
    std::vector<std::size_t> preds(frames.size());
    const std::size_t K = net.spec().classes;
    for (std::size_t start = 0; start < frames.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, frames.size());
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Tensor logits = net.forward(nullptr, stack_frames(frames, idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (logits[i * K + k] > logits[i * K + best]) best = k;
            preds[start + i] = best;
        }
    }
    return preds;
}

inline double frame_accuracy(const FrameNet& net, const std::vector<Tensor>& frames,
                             const std::vector<std::size_t>& labels) {
    const auto preds = predict_frames(net, frames);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    return frames.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(frames.size());
}

}  // namespace sb
