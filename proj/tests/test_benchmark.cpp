#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stillbench/benchmark.hpp"

using namespace sb;

namespace {

SynthesisSpec two_pool_spec(const WorldSpec& world, std::size_t m, std::uint64_t seed) {
    SynthesisSpec spec;
    spec.backgrounds_per_source = m;
    spec.seed = seed;
    spec.pools.emplace_back("sinusoid-ood",
                            BackgroundPool::sinusoid(world_complement_ranges(world), seed + 1,
                                                     world.height, world.width));
    spec.pools.emplace_back("noise",
                            BackgroundPool::smooth(seed + 2, world.height, world.width));
    return spec;
}

// max absolute deviation from frame 0; exactly 0 iff all frames are
// bit-identical
double temporal_variance(const Tensor& video) {
    const std::size_t C = video.dim(0), T = video.dim(1), hw = video.dim(2) * video.dim(3);
    double dev = 0.0;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 1; t < T; ++t)
            for (std::size_t i = 0; i < hw; ++i)
                dev = std::max(dev, std::abs(video[(c * T + t) * hw + i] -
                                             video[(c * T + 0) * hw + i]));
    return dev;
}

}  // namespace

TEST_CASE("composite is a pixel-exact select") {
    SECTION("hand example, single channel") {
        Tensor video({1, 1, 2, 2}, {0.2, 0.4, 0.6, 0.8});
        Tensor mask({1, 2, 2}, {1, 0, 0, 1});
        Tensor bg({1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
        Tensor out = composite(video, mask, bg);
        CHECK(out[0] == 0.2);
        CHECK(out[1] == 0.5);
        CHECK(out[2] == 0.5);
        CHECK(out[3] == 0.8);
    }
    SECTION("mask of ones returns the original bit-exactly") {
        Rng rng(3);
        Tensor video({3, 2, 4, 4});
        for (std::size_t i = 0; i < video.numel(); ++i) video[i] = rng.uniform();
        Tensor mask({2, 4, 4}, 1.0);
        Tensor bg({3, 4, 4}, 0.5);
        Tensor out = composite(video, mask, bg);
        for (std::size_t i = 0; i < video.numel(); ++i) CHECK(out[i] == video[i]);
    }
    SECTION("mask of zeros returns the background in every frame") {
        Rng rng(5);
        Tensor video({3, 2, 4, 4}, 0.7);
        Tensor mask({2, 4, 4}, 0.0);
        Tensor bg({3, 4, 4});
        for (std::size_t i = 0; i < bg.numel(); ++i) bg[i] = rng.uniform();
        Tensor out = composite(video, mask, bg);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < 2; ++t)
                for (std::size_t i = 0; i < 16; ++i)
                    CHECK(out[(c * 2 + t) * 16 + i] == bg[c * 16 + i]);
    }
    SECTION("non-binary mask is a validation error") {
        Tensor video({1, 1, 2, 2});
        Tensor mask({1, 2, 2}, {1, 0.5, 0, 1});
        Tensor bg({1, 2, 2});
        CHECK_THROWS_AS(composite(video, mask, bg), std::invalid_argument);
    }
    SECTION("linear in the background on masked-out pixels") {
        Rng rng(7);
        Tensor video({1, 1, 3, 3});
        Tensor mask({1, 3, 3});
        Tensor bg1({1, 3, 3}), bg2({1, 3, 3});
        for (std::size_t i = 0; i < 9; ++i) {
            video[i] = rng.uniform();
            mask[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            bg1[i] = rng.uniform();
            bg2[i] = rng.uniform();
        }
        const double a = 0.3;
        Tensor mix({1, 3, 3});
        for (std::size_t i = 0; i < 9; ++i) mix[i] = a * bg1[i] + (1 - a) * bg2[i];
        Tensor cm = composite(video, mask, mix);
        Tensor c1 = composite(video, mask, bg1);
        Tensor c2 = composite(video, mask, bg2);
        for (std::size_t i = 0; i < 9; ++i)
            if (mask[i] == 0.0)
                CHECK(cm[i] == Catch::Approx(a * c1[i] + (1 - a) * c2[i]).margin(1e-15));
    }
}

TEST_CASE("binarize_masks thresholds softly matted input with a warning") {
    Tensor soft({1, 2, 2}, {0.2, 0.8, 0.0, 1.0});
    std::vector<std::string> warnings;
    Tensor hard = binarize_masks(soft, &warnings);
    CHECK(hard[0] == 0.0);
    CHECK(hard[1] == 1.0);
    CHECK(warnings.size() == 1);
    warnings.clear();
    binarize_masks(hard, &warnings);
    CHECK(warnings.empty());
}

TEST_CASE("SCUB construction") {
    WorldSpec world;
    world.height = 16;
    world.width = 16;
    world.frames = 4;
    world.train_size = 24;
    world.val_size = 6;
    world.test_size = 12;
    world.master_seed = 77;
    WorldData data = generate_world(world);
    SynthesisSpec spec = two_pool_spec(world, 3, 123);

    auto sets = build_scub(data.test_iid, spec);
    REQUIRE(sets.size() == 2);

    SECTION("count = sources x m per pool, labels preserved") {
        for (const auto& set : sets) {
            CHECK(set.clips.size() == data.test_iid.size() * 3);
            for (std::size_t i = 0; i < set.clips.size(); ++i)
                CHECK(set.clips[i].label == data.test_iid[i / 3].label);
        }
    }
    SECTION("foreground pixels preserved bit-exactly") {
        const auto& src = data.test_iid[0];
        const auto& bc = sets[0].clips[0];
        const std::size_t T = world.frames, hw = world.height * world.width;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < hw; ++i)
                    if (src.masks[t * hw + i] == 1.0)
                        CHECK(bc.video[(c * T + t) * hw + i] == src.video[(c * T + t) * hw + i]);
    }
    SECTION("two runs with the same seed assign identical backgrounds") {
        auto sets2 = build_scub(data.test_iid, spec);
        for (std::size_t s = 0; s < sets.size(); ++s)
            for (std::size_t i = 0; i < sets[s].clips.size(); ++i) {
                CHECK(sets[s].clips[i].background_id == sets2[s].clips[i].background_id);
                for (std::size_t j = 0; j < sets[s].clips[i].video.numel(); ++j)
                    if (sets[s].clips[i].video[j] != sets2[s].clips[i].video[j]) {
                        FAIL("video differs at set " << s << " clip " << i);
                        break;
                    }
            }
    }
    SECTION("m=1 with one clip gives exactly one synthetic clip") {
        std::vector<LabeledClip> one{data.test_iid[0]};
        SynthesisSpec s1 = two_pool_spec(world, 1, 5);
        s1.pools.pop_back();
        auto out = build_scub(one, s1);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].clips.size() == 1);
        CHECK(out[0].clips[0].label == one[0].label);
    }
    SECTION("trajectory oracle unaffected by background replacement") {
        TrajectoryOracle oracle(data.train, world.classes);
        // masks are untouched by synthesis, so re-derive them from sources
        double correct = 0;
        for (std::size_t i = 0; i < sets[0].clips.size(); ++i) {
            const auto& src = data.test_iid[sets[0].clips[i].source_clip - world.train_size -
                                            world.val_size];
            if (oracle.classify(src.masks) == sets[0].clips[i].label) correct += 1;
        }
        CHECK(correct / sets[0].clips.size() == oracle.accuracy(data.test_iid));
    }
}

TEST_CASE("SCUF construction") {
    WorldSpec world;
    world.height = 12;
    world.width = 12;
    world.frames = 8;
    world.train_size = 12;
    world.val_size = 6;
    world.test_size = 18;
    world.master_seed = 31;
    WorldData data = generate_world(world);
    SynthesisSpec spec = two_pool_spec(world, 2, 9);
    auto scub = build_scub(data.test_iid, spec)[0];
    BenchmarkSet scuf = build_scuf(scub, 55);

    SECTION("every SCUF clip has zero temporal variance") {
        for (const auto& c : scuf.clips) CHECK(temporal_variance(c.video) == 0.0);
    }
    SECTION("re-tiling keeps temporal variance at zero") {
        BenchmarkSet relabeled = scuf;
        relabeled.kind = BenchmarkKind::SCUB;
        BenchmarkSet twice = build_scuf(relabeled, 56);
        for (const auto& c : twice.clips) CHECK(temporal_variance(c.video) == 0.0);
    }
    SECTION("labels and source ids carried through") {
        for (std::size_t i = 0; i < scuf.clips.size(); ++i) {
            CHECK(scuf.clips[i].label == scub.clips[i].label);
            CHECK(scuf.clips[i].source_clip == scub.clips[i].source_clip);
        }
    }
    SECTION("SCUF frames all come from the source SCUB clip") {
        const auto& sv = scub.clips[0].video;
        const auto& fv = scuf.clips[0].video;
        const std::size_t T = world.frames, hw = world.height * world.width;
        bool matched_any = false;
        for (std::size_t pick = 0; pick < T && !matched_any; ++pick) {
            bool all = true;
            for (std::size_t c = 0; c < 3 && all; ++c)
                for (std::size_t i = 0; i < hw && all; ++i)
                    if (fv[(c * T) * hw + i] != sv[(c * T + pick) * hw + i]) all = false;
            matched_any = all;
        }
        CHECK(matched_any);
    }
    SECTION("repeated application is the identity") {
        BenchmarkSet twice = build_scuf(scuf, 99);
        REQUIRE(twice.clips.size() == scuf.clips.size());
        for (std::size_t i = 0; i < scuf.clips.size(); ++i)
            for (std::size_t k = 0; k < scuf.clips[i].video.numel(); ++k)
                REQUIRE(twice.clips[i].video[k] == scuf.clips[i].video[k]);
    }
}

TEST_CASE("SCUF frame choice is roughly uniform") {
    // chi-square on the chosen frame index across many single-frame probes
    const std::size_t T = 8, n = 4000;
    std::vector<std::size_t> hist(T, 0);
    BenchmarkSet set;
    set.kind = BenchmarkKind::SCUB;
    for (std::size_t i = 0; i < n; ++i) {
        BenchClip bc;
        bc.video = Tensor({1, T, 1, 1});
        for (std::size_t t = 0; t < T; ++t) bc.video[t] = static_cast<double>(t);
        set.clips.push_back(std::move(bc));
    }
    BenchmarkSet scuf = build_scuf(set, 17);
    for (const auto& c : scuf.clips) ++hist[static_cast<std::size_t>(c.video[0])];
    double stat = 0;
    const double expect = static_cast<double>(n) / T;
    for (std::size_t t = 0; t < T; ++t) {
        const double d = hist[t] - expect;
        stat += d * d / expect;
    }
    CHECK(stat < 18.475);  // chi-square df=7 critical value at p=0.01
}

TEST_CASE("domain gap formula") {
    CHECK(gap_from_accuracies(0.8, 0.2) == Catch::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(gap_from_accuracies(0.5, 0.5) == 0.0);
    CHECK(std::isinf(gap_from_accuracies(0.5, 0.0)));
}

TEST_CASE("domain gap is exactly zero against the IID set itself") {
    WorldSpec world;
    world.height = 16;
    world.width = 16;
    world.frames = 4;
    world.train_size = 60;
    world.val_size = 6;
    world.test_size = 24;
    world.rho_bg = 0.9;
    world.master_seed = 404;
    WorldData data = generate_world(world);

    BenchmarkSet self;
    self.kind = BenchmarkKind::SCUB;
    self.name = "self";
    for (const auto& c : data.test_iid) {
        BenchClip bc;
        bc.video = c.video;
        bc.label = c.label;
        bc.source_clip = c.id;
        self.clips.push_back(std::move(bc));
    }

    DomainGapProbeConfig cfg;
    cfg.net.height = 16;
    cfg.net.width = 16;
    cfg.net.classes = world.classes;
    cfg.train.epochs = 4;
    cfg.seed = 11;
    DomainGapReport rep = domain_gap(data.train, data.test_iid, self, cfg);
    CHECK(rep.acc_old == rep.acc_new);
    CHECK(rep.gap == 0.0);
}
