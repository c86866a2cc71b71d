#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "stillbench/models.hpp"
#include "stillbench/rng.hpp"

using namespace sb;

namespace {
Tensor random_clip(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
    return t;
}
}  // namespace

TEST_CASE("untrained FrameNet is exactly uniform") {
    FrameNetSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.classes = 4;
    FrameNet net(spec, Rng(3));
    Rng rng(5);
    Tensor frames = random_clip({2, 3, 16, 16}, rng);
    Tensor logits = net.forward(nullptr, frames);
    auto probs = softmax(logits);
    for (double p : probs) CHECK(p == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("duplicate frames produce identical logit rows") {
    FrameNetSpec spec;
    spec.height = 16;
    spec.width = 16;
    FrameNet net(spec, Rng(7));
    // train the head a little so logits are nonzero
    auto params = net.params();
    Rng prng(9);
    for (auto& p : params)
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] += prng.uniform(-0.1, 0.1);

    Rng rng(11);
    Tensor one = random_clip({1, 3, 16, 16}, rng);
    Tensor batch({3, 3, 16, 16});
    for (std::size_t n = 0; n < 3; ++n)
        std::copy(one.data(), one.data() + one.numel(), batch.data() + n * one.numel());
    Tensor logits = net.forward(nullptr, batch);
    const std::size_t K = logits.dim(1);
    for (std::size_t n = 1; n < 3; ++n)
        for (std::size_t k = 0; k < K; ++k) CHECK(logits[n * K + k] == logits[k]);
}

TEST_CASE("temporal_shift index bookkeeping") {
    SECTION("T=3 forward-shifted channel (a,b,c) -> (0,a,b)") {
        // C=8, f=1/8 -> one +1 channel (c=0), one -1 channel (c=1)
        Tensor x({1, 3, 8, 1, 1});
        for (std::size_t t = 0; t < 3; ++t) {
            x[(t * 8 + 0)] = static_cast<double>(t + 1);  // a,b,c = 1,2,3
            x[(t * 8 + 1)] = static_cast<double>(10 * (t + 1));
        }
        Tensor y = temporal_shift(nullptr, x, 0.125);
        CHECK(y[(0 * 8 + 0)] == 0.0);
        CHECK(y[(1 * 8 + 0)] == 1.0);
        CHECK(y[(2 * 8 + 0)] == 2.0);
        // backward-shifted channel (10,20,30) -> (20,30,0)
        CHECK(y[(0 * 8 + 1)] == 20.0);
        CHECK(y[(1 * 8 + 1)] == 30.0);
        CHECK(y[(2 * 8 + 1)] == 0.0);
    }
    SECTION("T=1: shifted groups become all zeros") {
        Tensor x({1, 1, 8, 2, 2}, 1.0);
        Tensor y = temporal_shift(nullptr, x, 0.125);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(y[0 * 4 + i] == 0.0);  // +1 group, nothing to shift from
            CHECK(y[1 * 4 + i] == 0.0);  // -1 group
            CHECK(y[2 * 4 + i] == 1.0);  // untouched group
        }
    }
    SECTION("constant-in-time input: only boundary frames change") {
        Rng rng(13);
        Tensor x({1, 4, 8, 2, 2});
        for (std::size_t c = 0; c < 8; ++c)
            for (std::size_t i = 0; i < 4; ++i) {
                const double v = rng.uniform();
                for (std::size_t t = 0; t < 4; ++t) x[(t * 8 + c) * 4 + i] = v;
            }
        Tensor y = temporal_shift(nullptr, x, 0.125);
        for (std::size_t c = 0; c < 8; ++c)
            for (std::size_t t = 1; t + 1 < 4; ++t)
                for (std::size_t i = 0; i < 4; ++i)
                    CHECK(y[(t * 8 + c) * 4 + i] == x[(t * 8 + c) * 4 + i]);
    }
    SECTION("too few channels") {
        Tensor x({1, 2, 3, 2, 2});
        CHECK_THROWS_AS(temporal_shift(nullptr, x, 0.125), std::invalid_argument);
    }
}

TEST_CASE("temporal_shift is linear") {
    Rng rng(17);
    Tensor x = random_clip({2, 4, 8, 3, 3}, rng);
    Tensor y = random_clip({2, 4, 8, 3, 3}, rng);
    const double a = 0.375, b = -1.5;
    Tensor combo(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) combo[i] = a * x[i] + b * y[i];
    Tensor sc = temporal_shift(nullptr, combo, 0.25);
    Tensor sx = temporal_shift(nullptr, x, 0.25);
    Tensor sy = temporal_shift(nullptr, y, 0.25);
    for (std::size_t i = 0; i < sc.numel(); ++i)
        CHECK(sc[i] == Catch::Approx(a * sx[i] + b * sy[i]).margin(1e-12));
}

TEST_CASE("average-mode TemporalNet is frame-permutation invariant") {
    TemporalNetSpec spec;
    spec.frames = 4;
    spec.height = 16;
    spec.width = 16;
    spec.mode = TemporalMode::average;
    TemporalNet net(spec, Rng(19));
    auto params = net.params();
    Rng prng(21);
    for (auto& p : params)
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] += prng.uniform(-0.1, 0.1);

    Rng rng(23);
    Tensor clip = random_clip({1, 3, 4, 16, 16}, rng);
    Tensor permuted(clip.shape());
    const std::size_t perm[4] = {2, 0, 3, 1};
    const std::size_t hw = 16 * 16;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 4; ++t)
            std::copy(clip.data() + (c * 4 + perm[t]) * hw, clip.data() + (c * 4 + perm[t] + 1) * hw,
                      permuted.data() + (c * 4 + t) * hw);

    Tensor l1 = net.forward(nullptr, clip);
    Tensor l2 = net.forward(nullptr, permuted);
    for (std::size_t i = 0; i < l1.numel(); ++i) CHECK(l1[i] == l2[i]);
}

TEST_CASE("video_forward gradient on a micro clip") {
    TemporalNetSpec spec;
    spec.frames = 3;
    spec.height = 10;
    spec.width = 10;
    spec.classes = 3;
    spec.conv_filters = {4, 8};
    spec.mix_filters = 8;
    spec.hidden = 8;
    TemporalNet net(spec, Rng(29));
    auto params = net.params();
    Rng prng(31);
    for (auto& p : params)
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] += prng.uniform(-0.2, 0.2);

    Rng rng(37);
    Tensor clip = random_clip({1, 3, 3, 10, 10}, rng);
    std::vector<std::size_t> label{1};

    Tape tape;
    Tensor loss = softmax_cross_entropy(&tape, net.forward(&tape, clip), label);
    tape.backward(loss);
    auto fwd = [&]() { return softmax_cross_entropy(nullptr, net.forward(nullptr, clip), label)[0]; };
    auto res = sbtest::gradcheck(fwd, params);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
    FrameNetSpec spec;
    spec.height = 16;
    spec.width = 16;
    FrameNet a(spec, Rng(41));
    FrameNet b(spec, Rng(42));

    const std::string path = (std::filesystem::temp_directory_path() / "sb_ckpt_test.sbck").string();
    save_checkpoint(path, a.named_params());
    load_checkpoint(path, b.named_params());

    auto pa = a.params(), pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].numel(); ++j) CHECK(pa[i][j] == pb[i][j]);

    Rng rng(43);
    Tensor frames = random_clip({2, 3, 16, 16}, rng);
    Tensor la = a.forward(nullptr, frames);
    Tensor lb = b.forward(nullptr, frames);
    for (std::size_t i = 0; i < la.numel(); ++i) CHECK(la[i] == lb[i]);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects mismatched models") {
    FrameNetSpec small;
    small.height = 16;
    small.width = 16;
    FrameNetSpec big;
    big.height = 32;
    big.width = 32;
    FrameNet a(small, Rng(1));
    FrameNet b(big, Rng(2));
    const std::string path = (std::filesystem::temp_directory_path() / "sb_ckpt_bad.sbck").string();
    save_checkpoint(path, a.named_params());
    CHECK_THROWS_AS(load_checkpoint(path, b.named_params()), std::runtime_error);
    std::remove(path.c_str());
}
