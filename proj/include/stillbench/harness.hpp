#pragma once

// Experiment orchestration: config parsing, main-network training with
// pluggable augmentation, evaluation across IID/SCUB/SCUF splits, cached
// pipeline stages, and report emission.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stillbench/dataset_io.hpp"

namespace sb {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Defaults picked by pilot runs: lr 0.05 with momentum 0.9 is unstable on
// this model family (loss collapses to a constant-logit state), and motion
// features only emerge under mixing augmentation past ~40 epochs.
struct OptimizerConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 16;
    double learning_rate = 0.02;
    double momentum = 0.9;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("optimizer: batch_size must be >= 1");
        if (learning_rate < 0.0) throw std::invalid_argument("optimizer: learning rate < 0");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("optimizer: momentum must be in [0, 1)");
    }
};

struct ExperimentConfig {
    WorldSpec world;
    std::size_t bench_m = 5;
    std::uint64_t bench_seed = 9;
    TemporalNetSpec model;
    std::vector<AugMethod> methods{AugMethod::none};
    AugmentorConfig augmentor;  // method field is overridden per entry of `methods`
    FrameTrainConfig reference;
    FrameTrainConfig probe;
    OptimizerConfig optimizer;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::size_t threads = 1;
    std::string out_dir = "runs/default";

    void validate() const {
        world.validate();
        if (bench_m < 1) throw std::invalid_argument("config: backgrounds_per_source must be >= 1");
        if (methods.empty()) throw std::invalid_argument("config: no methods listed");
        for (std::size_t i = 0; i < methods.size(); ++i)
            for (std::size_t j = i + 1; j < methods.size(); ++j)
                if (methods[i] == methods[j])
                    throw std::invalid_argument("config: duplicate method " +
                                                std::string(aug_method_name(methods[i])));
        augmentor.validate();
        optimizer.validate();
        if (seeds.empty()) throw std::invalid_argument("config: at least one seed required");
        if (model.in_channels != 3 || model.frames != world.frames ||
            model.height != world.height || model.width != world.width ||
            model.classes != world.classes)
            throw std::invalid_argument("config: model dims must match the world");
        if (out_dir.empty()) throw std::invalid_argument("config: out_dir is empty");
    }
};

inline json frame_train_to_json(const FrameTrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"momentum", c.momentum}};
}

inline FrameTrainConfig frame_train_from_json(const json& j, const std::string& where) {
    check_known_keys(j, {"epochs", "batch_size", "learning_rate", "momentum"}, where);
    FrameTrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    return c;
}

inline json experiment_config_to_json(const ExperimentConfig& c) {
    json j;
    j["world"] = world_spec_to_json(c.world);
    j["synthesis"] = {{"backgrounds_per_source", c.bench_m}, {"seed", c.bench_seed}};
    j["model"] = {{"conv_filters", c.model.conv_filters},
                  {"kernel", c.model.kernel},
                  {"mix_filters", c.model.mix_filters},
                  {"hidden", c.model.hidden},
                  {"mode", c.model.mode == TemporalMode::shift ? "shift" : "average"},
                  {"f_shift", c.model.f_shift}};
    json methods = json::array();
    for (AugMethod m : c.methods) methods.push_back(aug_method_name(m));
    j["methods"] = std::move(methods);
    j["augmentor"] = {{"p_aug", c.augmentor.p_aug},
                      {"alpha", c.augmentor.alpha},
                      {"beta", c.augmentor.beta},
                      {"tau", c.augmentor.tau},
                      {"bank_capacity", c.augmentor.bank_capacity},
                      {"be_mu", {c.augmentor.be_mu_lo, c.augmentor.be_mu_hi}},
                      {"videomix_box", {c.augmentor.videomix_frac_lo, c.augmentor.videomix_frac_hi}}};
    j["reference"] = frame_train_to_json(c.reference);
    j["probe"] = frame_train_to_json(c.probe);
    j["optimizer"] = {{"epochs", c.optimizer.epochs},
                      {"batch_size", c.optimizer.batch_size},
                      {"learning_rate", c.optimizer.learning_rate},
                      {"momentum", c.optimizer.momentum}};
    j["seeds"] = c.seeds;
    j["threads"] = c.threads;
    j["out_dir"] = c.out_dir;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
    check_known_keys(j,
                     {"world", "synthesis", "model", "methods", "augmentor", "reference", "probe",
                      "optimizer", "seeds", "threads", "out_dir"},
                     "experiment config");
    ExperimentConfig c;
    if (j.contains("world")) c.world = world_spec_from_json(j.at("world"));
    if (j.contains("synthesis")) {
        const json& s = j.at("synthesis");
        check_known_keys(s, {"backgrounds_per_source", "seed"}, "synthesis");
        c.bench_m = s.value("backgrounds_per_source", c.bench_m);
        c.bench_seed = s.value("seed", c.bench_seed);
    }
    c.model.frames = c.world.frames;
    c.model.height = c.world.height;
    c.model.width = c.world.width;
    c.model.classes = c.world.classes;
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_known_keys(m, {"conv_filters", "kernel", "mix_filters", "hidden", "mode", "f_shift"},
                         "model");
        c.model.conv_filters = m.value("conv_filters", c.model.conv_filters);
        c.model.kernel = m.value("kernel", c.model.kernel);
        c.model.mix_filters = m.value("mix_filters", c.model.mix_filters);
        c.model.hidden = m.value("hidden", c.model.hidden);
        if (m.contains("mode")) {
            const std::string mode = m.at("mode").get<std::string>();
            if (mode == "shift")
                c.model.mode = TemporalMode::shift;
            else if (mode == "average")
                c.model.mode = TemporalMode::average;
            else
                throw std::invalid_argument("model: unknown mode " + mode);
        }
        c.model.f_shift = m.value("f_shift", c.model.f_shift);
    }
    if (j.contains("methods")) {
        c.methods.clear();
        for (const json& m : j.at("methods"))
            c.methods.push_back(aug_method_from_string(m.get<std::string>()));
    }
    if (j.contains("augmentor")) {
        const json& a = j.at("augmentor");
        check_known_keys(a, {"p_aug", "alpha", "beta", "tau", "bank_capacity", "be_mu",
                             "videomix_box"},
                         "augmentor");
        c.augmentor.p_aug = a.value("p_aug", c.augmentor.p_aug);
        c.augmentor.alpha = a.value("alpha", c.augmentor.alpha);
        c.augmentor.beta = a.value("beta", c.augmentor.beta);
        c.augmentor.tau = a.value("tau", c.augmentor.tau);
        c.augmentor.bank_capacity = a.value("bank_capacity", c.augmentor.bank_capacity);
        if (a.contains("be_mu")) {
            const auto r = a.at("be_mu").get<std::vector<double>>();
            if (r.size() != 2) throw std::invalid_argument("augmentor: be_mu must be [lo, hi]");
            c.augmentor.be_mu_lo = r[0];
            c.augmentor.be_mu_hi = r[1];
        }
        if (a.contains("videomix_box")) {
            const auto r = a.at("videomix_box").get<std::vector<double>>();
            if (r.size() != 2)
                throw std::invalid_argument("augmentor: videomix_box must be [lo, hi]");
            c.augmentor.videomix_frac_lo = r[0];
            c.augmentor.videomix_frac_hi = r[1];
        }
    }
    if (j.contains("reference")) c.reference = frame_train_from_json(j.at("reference"), "reference");
    if (j.contains("probe")) c.probe = frame_train_from_json(j.at("probe"), "probe");
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_known_keys(o, {"epochs", "batch_size", "learning_rate", "momentum"}, "optimizer");
        c.optimizer.epochs = o.value("epochs", c.optimizer.epochs);
        c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
        c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
        c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path.string());
    return experiment_config_from_json(json::parse(is));
}

inline std::string fnv1a64_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << h;
    return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) {
    return fnv1a64_hex(experiment_config_to_json(c).dump());
}

// ---------------------------------------------------------------------------
// main-network training
// ---------------------------------------------------------------------------

inline Tensor stack_clips(const std::vector<Tensor>& videos, const std::vector<std::size_t>& idx) {
    const Tensor& first = videos[idx[0]];
    Tensor batch({idx.size(), first.dim(0), first.dim(1), first.dim(2), first.dim(3)});
    const std::size_t stride = first.numel();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(videos[idx[i]].data(), videos[idx[i]].data() + stride,
                  batch.data() + i * stride);
    return batch;
}

// Returns the per-epoch mean training loss. Every sample gets its own
// derived RNG stream keyed by (epoch, clip index), so a parallel data path
// would reproduce these exact augmentations.
inline std::vector<double> train_main(const std::vector<LabeledClip>& train, TemporalNet& net,
                                      const Augmentor& augmentor, const OptimizerConfig& opt,
                                      std::uint64_t seed) {
    if (train.empty()) throw std::invalid_argument("train_main: empty training set");
    opt.validate();
    auto params = net.params();
    SgdState sgd(opt.learning_rate, opt.momentum);
    std::vector<double> curve;
    const std::size_t K = net.spec().classes;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        Rng shuffle_rng = Rng(seed).derive(2 * epoch);
        Rng sample_base = Rng(seed).derive(2 * epoch + 1);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(start + opt.batch_size, order.size());
            const std::size_t n = end - start;
            std::vector<Tensor> videos(n);
            Tensor targets({n, K});
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t clip_idx = order[start + i];
                Rng stream = sample_base.derive(clip_idx);
                AugmentedSample aug = augmentor.apply(train[clip_idx], stream);
                videos[i] = std::move(aug.video);
                for (std::size_t k = 0; k < K; ++k) targets[i * K + k] = aug.label[k];
            }
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = i;
            Tensor batch = stack_clips(videos, idx);

            for (auto& p : params) p.zero_grad();
            Tape tape;
            Tensor loss = softmax_cross_entropy(&tape, net.forward(&tape, batch), targets);
            if (!loss.all_finite())
                throw std::runtime_error(
                    "train_main: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches) + " (lr=" + std::to_string(opt.learning_rate) +
                    ", last finite epoch mean=" +
                    (curve.empty() ? std::string("none") : std::to_string(curve.back())) + ")");
            loss_sum += loss[0];
            ++batches;
            tape.backward(loss);
            sgd_step(params, sgd);
        }
        curve.push_back(loss_sum / static_cast<double>(batches ? batches : 1));
    }
    return curve;
}

inline std::vector<std::size_t> predict_clips(const TemporalNet& net,
                                              const std::vector<Tensor>& videos,
                                              std::size_t batch_size = 16) {
    std::vector<std::size_t> preds(videos.size());
    const std::size_t K = net.spec().classes;
    for (std::size_t start = 0; start < videos.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, videos.size());
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Tensor logits = net.forward(nullptr, stack_clips(videos, idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (logits[i * K + k] > logits[i * K + best]) best = k;
            preds[start + i] = best;
        }
    }
    return preds;
}

inline double clip_accuracy(const TemporalNet& net, const std::vector<Tensor>& videos,
                            const std::vector<std::size_t>& labels) {
    const auto preds = predict_clips(net, videos);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    return videos.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(videos.size());
}

// Top-1 accuracy per split; the IID split is reported as "iid". Empty sets
// are skipped with a warning rather than an error.
inline std::map<std::string, double> evaluate(const TemporalNet& net,
                                              const std::vector<LabeledClip>& iid,
                                              const std::vector<BenchmarkSet>& sets,
                                              std::vector<std::string>* warnings = nullptr) {
    std::map<std::string, double> acc;
    if (iid.empty()) {
        if (warnings) warnings->push_back("evaluate: IID split is empty, skipped");
    } else {
        std::vector<Tensor> videos;
        std::vector<std::size_t> labels;
        for (const auto& c : iid) {
            videos.push_back(c.video);
            labels.push_back(c.label);
        }
        acc["iid"] = clip_accuracy(net, videos, labels);
    }
    for (const BenchmarkSet& set : sets) {
        if (set.clips.empty()) {
            if (warnings) warnings->push_back("evaluate: set " + set.name + " is empty, skipped");
            continue;
        }
        std::vector<Tensor> videos;
        std::vector<std::size_t> labels;
        for (const auto& c : set.clips) {
            videos.push_back(c.video);
            labels.push_back(c.label);
        }
        acc[set.name] = clip_accuracy(net, videos, labels);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct SplitStat {
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;  // sample std; meaningful only when has_std
    bool has_std = false;

    void finalize() {
        mean = 0.0;
        for (double v : per_seed) mean += v;
        if (!per_seed.empty()) mean /= static_cast<double>(per_seed.size());
        has_std = per_seed.size() >= 2;
        stddev = 0.0;
        if (has_std) {
            for (double v : per_seed) stddev += (v - mean) * (v - mean);
            stddev = std::sqrt(stddev / static_cast<double>(per_seed.size() - 1));
        }
    }

    bool operator==(const SplitStat&) const = default;
};

struct MethodReport {
    std::string method;
    std::map<std::string, SplitStat> splits;

    bool operator==(const MethodReport&) const = default;
};

struct GapEntry {
    double acc_old = 0.0;
    double acc_new = 0.0;
    double gap = 0.0;

    bool operator==(const GapEntry&) const = default;
};

struct EvalReport {
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::vector<MethodReport> methods;
    std::map<std::string, GapEntry> domain_gaps;
    std::vector<std::string> warnings;
    double duration_seconds = 0.0;

    bool operator==(const EvalReport& o) const {
        return config_hash == o.config_hash && seeds == o.seeds && methods == o.methods &&
               domain_gaps == o.domain_gaps && warnings == o.warnings;
    }
};

inline json report_to_json(const EvalReport& r) {
    json j;
    j["config_hash"] = r.config_hash;
    j["seeds"] = r.seeds;
    j["duration_seconds"] = r.duration_seconds;
    j["warnings"] = r.warnings;
    json methods = json::array();
    for (const MethodReport& m : r.methods) {
        json splits;
        for (const auto& [name, stat] : m.splits) {
            json s{{"per_seed", stat.per_seed}, {"mean", stat.mean}};
            if (stat.has_std) s["std"] = stat.stddev;
            splits[name] = std::move(s);
        }
        methods.push_back({{"method", m.method}, {"splits", std::move(splits)}});
    }
    j["methods"] = std::move(methods);
    json gaps;
    for (const auto& [name, g] : r.domain_gaps) {
        json e{{"acc_old", g.acc_old}, {"acc_new", g.acc_new}};
        if (std::isinf(g.gap))
            e["gap"] = "inf";
        else
            e["gap"] = g.gap;
        gaps[name] = std::move(e);
    }
    j["domain_gaps"] = std::move(gaps);
    return j;
}

inline EvalReport report_from_json(const json& j) {
    EvalReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.duration_seconds = j.value("duration_seconds", 0.0);
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const json& jm : j.at("methods")) {
        MethodReport m;
        m.method = jm.at("method").get<std::string>();
        for (const auto& [name, js] : jm.at("splits").items()) {
            SplitStat stat;
            stat.per_seed = js.at("per_seed").get<std::vector<double>>();
            stat.finalize();
            m.splits[name] = std::move(stat);
        }
        r.methods.push_back(std::move(m));
    }
    for (const auto& [name, je] : j.at("domain_gaps").items()) {
        GapEntry g;
        g.acc_old = je.at("acc_old").get<double>();
        g.acc_new = je.at("acc_new").get<double>();
        if (je.at("gap").is_string())
            g.gap = std::numeric_limits<double>::infinity();
        else
            g.gap = je.at("gap").get<double>();
        r.domain_gaps[name] = g;
    }
    return r;
}

inline std::string report_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "method,split,seed,accuracy\n";
    os << std::setprecision(17);
    for (const MethodReport& m : r.methods)
        for (const auto& [split, stat] : m.splits)
            for (std::size_t i = 0; i < stat.per_seed.size(); ++i)
                os << m.method << "," << split << "," << r.seeds[i] << "," << stat.per_seed[i]
                   << "\n";
    return os.str();
}

inline std::string report_table(const EvalReport& r) {
    std::vector<std::string> split_names;
    for (const MethodReport& m : r.methods)
        for (const auto& [name, stat] : m.splits)
            if (std::find(split_names.begin(), split_names.end(), name) == split_names.end())
                split_names.push_back(name);
    std::ostringstream os;
    os << std::left << std::setw(12) << "method";
    for (const auto& name : split_names) os << std::setw(24) << name;
    os << "\n";
    os << std::string(12 + 24 * split_names.size(), '-') << "\n";
    for (const MethodReport& m : r.methods) {
        os << std::left << std::setw(12) << m.method;
        for (const auto& name : split_names) {
            auto it = m.splits.find(name);
            std::ostringstream cell;
            if (it == m.splits.end()) {
                cell << "-";
            } else {
                cell << std::fixed << std::setprecision(3) << it->second.mean;
                if (it->second.has_std)
                    cell << " +/- " << std::fixed << std::setprecision(3) << it->second.stddev;
            }
            os << std::setw(24) << cell.str();
        }
        os << "\n";
    }
    if (!r.domain_gaps.empty()) {
        os << "\ndomain gaps (static probe):\n";
        for (const auto& [name, g] : r.domain_gaps) {
            os << "  " << std::left << std::setw(22) << name << "G_scene = ";
            if (std::isinf(g.gap))
                os << "inf";
            else
                os << std::fixed << std::setprecision(3) << g.gap;
            os << "  (acc " << std::fixed << std::setprecision(3) << g.acc_old << " -> "
               << std::setprecision(3) << g.acc_new << ")\n";
        }
    }
    return os.str();
}

inline void emit_report(const EvalReport& r, const fs::path& dir) {
    fs::create_directories(dir);
    atomic_write_text(dir / "report.json", report_to_json(r).dump(2));
    atomic_write_text(dir / "report.csv", report_csv(r));
    atomic_write_text(dir / "report.txt", report_table(r));
}

// ---------------------------------------------------------------------------
// pipeline with content-hash stage caching
// ---------------------------------------------------------------------------

namespace detail {

inline bool stage_cached(const fs::path& hash_file, const std::string& hash) {
    std::ifstream is(hash_file);
    if (!is) return false;
    std::string stored;
    std::getline(is, stored);
    return stored == hash;
}

inline void mark_stage(const fs::path& hash_file, const std::string& hash) {
    atomic_write_text(hash_file, hash);
}

}  // namespace detail

// Out-of-distribution pools for SCUB: sinusoid textures over the orientation
// bands no training family uses, plus a smooth-noise pool (a different
// texture kind entirely).
inline SynthesisSpec ood_synthesis_spec(const WorldSpec& world, std::size_t m,
                                        std::uint64_t seed) {
    SynthesisSpec spec;
    spec.backgrounds_per_source = m;
    spec.seed = seed;
    Rng seeder = Rng(seed).derive(0x00d5eedULL);
    spec.pools.emplace_back("sinusoid-ood",
                            BackgroundPool::sinusoid(world_complement_ranges(world),
                                                     seeder.next_u64(), world.height, world.width));
    spec.pools.emplace_back(
        "smooth", BackgroundPool::smooth(seeder.next_u64(), world.height, world.width));
    return spec;
}

struct PipelineArtifacts {
    WorldData world;
    std::vector<BenchmarkSet> benchmarks;  // SCUB sets then SCUF sets
    std::shared_ptr<FrameBank> bank;       // null unless stillmix is configured
};

// Stage 1: generate (or reload) the world. The dataset always round-trips
// through .sbvd so cached and fresh runs see identical f32-quantized bits.
inline WorldData stage_world(const ExperimentConfig& cfg, const fs::path& out) {
    const fs::path dir = out / "world";
    const std::string hash = fnv1a64_hex(world_spec_to_json(cfg.world).dump());
    if (!detail::stage_cached(dir / ".stage", hash)) {
        fs::create_directories(dir);
        save_world(dir, generate_world(cfg.world, cfg.threads));
        detail::mark_stage(dir / ".stage", hash);
    }
    return load_world(dir);
}

// Stage 2: SCUB per pool, then SCUF from each SCUB set.
inline std::vector<BenchmarkSet> stage_benchmarks(const ExperimentConfig& cfg,
                                                  const WorldData& world, const fs::path& out) {
    const fs::path dir = out / "bench";
    const std::string hash =
        fnv1a64_hex(world_spec_to_json(cfg.world).dump() + "|m=" + std::to_string(cfg.bench_m) +
                    "|seed=" + std::to_string(cfg.bench_seed));
    if (!detail::stage_cached(dir / ".stage", hash)) {
        fs::create_directories(dir);
        SynthesisSpec spec = ood_synthesis_spec(cfg.world, cfg.bench_m, cfg.bench_seed);
        std::vector<BenchmarkSet> sets = build_scub(world.test_iid, spec);
        const std::size_t n_scub = sets.size();
        for (std::size_t i = 0; i < n_scub; ++i)
            sets.push_back(build_scuf(sets[i], cfg.bench_seed ^ 0x5cafULL));
        save_benchmarks(dir, sets);
        detail::mark_stage(dir / ".stage", hash);
    }
    return load_benchmarks(dir);
}

// Stage 3 (stillmix only): train the reference frame network, then build
// and freeze the bank.
inline std::shared_ptr<FrameBank> stage_bank(const ExperimentConfig& cfg, const WorldData& world,
                                             const fs::path& out) {
    const fs::path dir = out / "bank";
    const std::string hash = fnv1a64_hex(
        world_spec_to_json(cfg.world).dump() + "|" + frame_train_to_json(cfg.reference).dump() +
        "|tau=" + std::to_string(cfg.augmentor.tau) +
        "|cap=" + std::to_string(cfg.augmentor.bank_capacity));
    if (!detail::stage_cached(dir / ".stage", hash)) {
        fs::create_directories(dir);
        Rng rng = Rng(cfg.world.master_seed).derive(0x2ef0001ULL);
        FrameNetSpec net_spec;
        net_spec.height = cfg.world.height;
        net_spec.width = cfg.world.width;
        net_spec.classes = cfg.world.classes;
        FrameNet reference(net_spec, rng.derive(0));
        train_reference(reference, world.train, cfg.reference, rng.derive(1));
        save_checkpoint((dir / "reference.sbck").string(), reference.named_params());
        FrameBank bank = build_bank(reference, world.train, cfg.augmentor.tau,
                                    cfg.augmentor.bank_capacity, cfg.world.master_seed ^ 0xbabcULL);
        save_bank(dir, bank, cfg.world.master_seed ^ 0xbabcULL);
        detail::mark_stage(dir / ".stage", hash);
    }
    return std::make_shared<FrameBank>(load_bank(dir));
}

inline Augmentor make_augmentor(const ExperimentConfig& cfg, AugMethod method,
                                std::shared_ptr<const WorldData> world,
                                std::shared_ptr<const FrameBank> bank) {
    AugmentorConfig ac = cfg.augmentor;
    ac.method = method;
    PeerSampler peers = nullptr;
    BackgroundSampler backgrounds = nullptr;
    if (method == AugMethod::mixup || method == AugMethod::videomix) {
        peers = [world](Rng& rng) -> const LabeledClip& {
            return world->train[rng.uniform_int(world->train.size())];
        };
    }
    if (method == AugMethod::bgswap) {
        auto pools = std::make_shared<std::vector<BackgroundPool>>();
        for (std::size_t f = 0; f < world->spec.classes; ++f)
            pools->push_back(world_family_pool(world->spec, f));
        backgrounds = [pools](Rng& rng) {
            const std::size_t family = rng.uniform_int(pools->size());
            Tensor bg = (*pools)[family].sample(rng.next_u64() & 0xffffffULL);
            quantize_f32(bg);  // match the on-disk precision of everything else
            return bg;
        };
    }
    return Augmentor(ac, cfg.world.classes, std::move(bank), std::move(peers),
                     std::move(backgrounds));
}

// Stage 4: per (method, seed) training, cached as SBCK checkpoints.
inline TemporalNet stage_train(const ExperimentConfig& cfg, AugMethod method, std::uint64_t seed,
                               std::shared_ptr<const WorldData> world,
                               std::shared_ptr<const FrameBank> bank, const fs::path& out) {
    const fs::path dir = out / "models";
    fs::create_directories(dir);
    const std::string stem = std::string(aug_method_name(method)) + "-" + std::to_string(seed);
    const fs::path ckpt = dir / (stem + ".sbck");
    json jm = experiment_config_to_json(cfg);
    const std::string hash =
        fnv1a64_hex(jm["world"].dump() + "|" + jm["model"].dump() + "|" + jm["augmentor"].dump() +
                    "|" + jm["optimizer"].dump() + "|" + jm["reference"].dump() + "|method=" +
                    aug_method_name(method) + "|seed=" + std::to_string(seed));
    TemporalNetSpec spec = cfg.model;
    TemporalNet net(spec, Rng(seed).derive(0x3e70001ULL));
    if (detail::stage_cached(dir / (stem + ".stage"), hash)) {
        load_checkpoint(ckpt.string(), net.named_params());
        return net;
    }
    Augmentor augmentor = make_augmentor(cfg, method, world, std::move(bank));
    train_main(world->train, net, augmentor, cfg.optimizer, seed);
    save_checkpoint(ckpt.string(), net.named_params());
    detail::mark_stage(dir / (stem + ".stage"), hash);
    return net;
}

inline EvalReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    atomic_write_text(out / "config.json", experiment_config_to_json(cfg).dump(2));

    EvalReport report;
    report.config_hash = config_hash(cfg);
    report.seeds = cfg.seeds;

    std::string stage = "world";
    try {
        auto world = std::make_shared<const WorldData>(stage_world(cfg, out));

        stage = "benchmarks";
        std::vector<BenchmarkSet> sets = stage_benchmarks(cfg, *world, out);

        stage = "bank";
        std::shared_ptr<FrameBank> bank;
        for (AugMethod m : cfg.methods)
            if (m == AugMethod::stillmix) bank = stage_bank(cfg, *world, out);

        stage = "train";
        fs::create_directories(out / "eval");
        for (AugMethod method : cfg.methods) {
            MethodReport mr;
            mr.method = aug_method_name(method);
            std::map<std::string, SplitStat> splits;
            for (std::uint64_t seed : cfg.seeds) {
                const std::string stem =
                    std::string(aug_method_name(method)) + "-" + std::to_string(seed);
                TemporalNet net = stage_train(cfg, method, seed, world, bank, out);
                auto acc = evaluate(net, world->test_iid, sets, &report.warnings);
                json jacc(acc);
                atomic_write_text(out / "eval" / (stem + ".json"), jacc.dump(2));
                for (const auto& [name, value] : acc) splits[name].per_seed.push_back(value);
            }
            for (auto& [name, stat] : splits) stat.finalize();
            mr.splits = std::move(splits);
            report.methods.push_back(std::move(mr));
        }

        stage = "domain-gap";
        DomainGapProbeConfig probe;
        probe.net.height = cfg.world.height;
        probe.net.width = cfg.world.width;
        probe.net.classes = cfg.world.classes;
        probe.train = cfg.probe;
        probe.seed = cfg.world.master_seed ^ 0x9a9eULL;
        for (const BenchmarkSet& set : sets) {
            if (set.kind != BenchmarkKind::SCUB) continue;
            DomainGapReport g = domain_gap(world->train, world->test_iid, set, probe);
            report.domain_gaps[set.name] = {g.acc_old, g.acc_new, g.gap};
        }
        {
            // self-check: synthesizing nothing must give a gap of exactly 0
            BenchmarkSet self;
            self.name = "iid-self";
            self.kind = BenchmarkKind::SCUB;
            self.pool = "iid";
            for (const LabeledClip& c : world->test_iid)
                self.clips.push_back({c.video, c.label, c.id, 0});
            DomainGapReport g = domain_gap(world->train, world->test_iid, self, probe);
            report.domain_gaps["iid-self"] = {g.acc_old, g.acc_new, g.gap};
        }

        stage = "report";
        report.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        emit_report(report, out);
    } catch (const std::exception& e) {
        throw std::runtime_error("run_experiment: stage \"" + stage + "\" failed: " + e.what() +
                                 " (partial artifacts kept in " + out.string() + ")");
    }
    return report;
}

}  // namespace sb
