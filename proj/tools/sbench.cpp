// sbench: command-line surface for the static-bias laboratory.
//
// Subcommands mirror the pipeline stages: gen-world, build-bench,
// train-ref, build-bank, train, eval, run, report.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "stillbench/harness.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::size_t threads = 0;
};

sb::ExperimentConfig resolve_config(const GlobalOpts& g) {
    sb::ExperimentConfig cfg;
    if (!g.config_path.empty()) cfg = sb::load_experiment_config(g.config_path);
    if (g.seed_set) cfg.seeds = {g.seed};
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.threads > 0) cfg.threads = g.threads;
    cfg.validate();
    return cfg;
}

sb::WorldData require_world(const sb::ExperimentConfig& cfg) {
    const sb::fs::path dir = sb::fs::path(cfg.out_dir) / "world";
    if (!sb::fs::exists(dir / "manifest.json"))
        throw std::runtime_error("no world dataset in " + dir.string() + "; run gen-world first");
    return sb::load_world(dir);
}

sb::FrameNet require_reference(const sb::ExperimentConfig& cfg) {
    const sb::fs::path ckpt = sb::fs::path(cfg.out_dir) / "bank" / "reference.sbck";
    if (!sb::fs::exists(ckpt))
        throw std::runtime_error("no reference network at " + ckpt.string() +
                                 "; run train-ref first");
    sb::FrameNetSpec spec;
    spec.height = cfg.world.height;
    spec.width = cfg.world.width;
    spec.classes = cfg.world.classes;
    sb::FrameNet net(spec, sb::Rng(cfg.world.master_seed).derive(0x2ef0001ULL).derive(0));
    sb::load_checkpoint(ckpt.string(), net.named_params());
    return net;
}

int cmd_gen_world(const GlobalOpts& g) {
    auto cfg = resolve_config(g);
    sb::WorldData world = sb::stage_world(cfg, cfg.out_dir);
    std::cout << "world: " << world.train.size() << " train / " << world.val.size() << " val / "
              << world.test_iid.size() << " test clips in " << cfg.out_dir << "/world\n";
    return 0;
}

int cmd_build_bench(const GlobalOpts& g) {
    auto cfg = resolve_config(g);
    sb::WorldData world = require_world(cfg);
    auto sets = sb::stage_benchmarks(cfg, world, cfg.out_dir);
    for (const auto& s : sets)
        std::cout << s.name << ": " << s.clips.size() << " clips\n";
    return 0;
}

int cmd_train_ref(const GlobalOpts& g) {
    auto cfg = resolve_config(g);
    sb::WorldData world = require_world(cfg);
    const sb::fs::path dir = sb::fs::path(cfg.out_dir) / "bank";
    sb::fs::create_directories(dir);
    sb::Rng rng = sb::Rng(cfg.world.master_seed).derive(0x2ef0001ULL);
    sb::FrameNetSpec spec;
    spec.height = cfg.world.height;
    spec.width = cfg.world.width;
    spec.classes = cfg.world.classes;
    sb::FrameNet reference(spec, rng.derive(0));
    auto curve = sb::train_reference(reference, world.train, cfg.reference, rng.derive(1));
    sb::save_checkpoint((dir / "reference.sbck").string(), reference.named_params());
    std::cout << "reference: " << curve.size() << " epochs, final loss " << curve.back() << "\n";
    return 0;
}

int cmd_build_bank(const GlobalOpts& g) {
    auto cfg = resolve_config(g);
    sb::WorldData world = require_world(cfg);
    sb::FrameNet reference = require_reference(cfg);
    sb::FrameBank bank =
        sb::build_bank(reference, world.train, cfg.augmentor.tau, cfg.augmentor.bank_capacity,
                       cfg.world.master_seed ^ 0xbabcULL);
    sb::save_bank(sb::fs::path(cfg.out_dir) / "bank", bank, cfg.world.master_seed ^ 0xbabcULL);
    std::cout << "bank: " << bank.entries.size() << " frames above tau=" << cfg.augmentor.tau
              << "\n";
    for (const auto& w : bank.warnings) std::cout << "warning: " << w << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& method_name) {
    auto cfg = resolve_config(g);
    const sb::AugMethod method = sb::aug_method_from_string(method_name);
    auto world = std::make_shared<const sb::WorldData>(require_world(cfg));
    std::shared_ptr<sb::FrameBank> bank;
    if (method == sb::AugMethod::stillmix)
        bank = std::make_shared<sb::FrameBank>(
            sb::load_bank(sb::fs::path(cfg.out_dir) / "bank"));
    for (std::uint64_t seed : cfg.seeds) {
        sb::stage_train(cfg, method, seed, world, bank, cfg.out_dir);
        std::cout << "trained " << method_name << " seed " << seed << "\n";
    }
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& method_name) {
    auto cfg = resolve_config(g);
    const sb::AugMethod method = sb::aug_method_from_string(method_name);
    auto world = std::make_shared<const sb::WorldData>(require_world(cfg));
    auto sets = sb::load_benchmarks(sb::fs::path(cfg.out_dir) / "bench");
    sb::fs::create_directories(sb::fs::path(cfg.out_dir) / "eval");
    for (std::uint64_t seed : cfg.seeds) {
        const std::string stem = method_name + "-" + std::to_string(seed);
        const sb::fs::path ckpt = sb::fs::path(cfg.out_dir) / "models" / (stem + ".sbck");
        if (!sb::fs::exists(ckpt))
            throw std::runtime_error("no checkpoint at " + ckpt.string() + "; run train first");
        sb::TemporalNet net(cfg.model, sb::Rng(seed).derive(0x3e70001ULL));
        sb::load_checkpoint(ckpt.string(), net.named_params());
        std::vector<std::string> warnings;
        auto acc = sb::evaluate(net, world->test_iid, sets, &warnings);
        sb::atomic_write_text(sb::fs::path(cfg.out_dir) / "eval" / (stem + ".json"),
                              sb::json(acc).dump(2));
        std::cout << stem << ":";
        for (const auto& [name, value] : acc) std::cout << " " << name << "=" << value;
        std::cout << "\n";
        for (const auto& w : warnings) std::cout << "warning: " << w << "\n";
        (void)method;
    }
    return 0;
}

int cmd_run(const GlobalOpts& g) {
    auto cfg = resolve_config(g);
    sb::EvalReport report = sb::run_experiment(cfg);
    std::cout << sb::report_table(report);
    std::cout << "reports written to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_report(const GlobalOpts& g) {
    auto cfg = resolve_config(g);
    sb::EvalReport report;
    report.config_hash = sb::config_hash(cfg);
    report.seeds = cfg.seeds;
    for (sb::AugMethod method : cfg.methods) {
        sb::MethodReport mr;
        mr.method = sb::aug_method_name(method);
        for (std::uint64_t seed : cfg.seeds) {
            const sb::fs::path file = sb::fs::path(cfg.out_dir) / "eval" /
                                      (mr.method + "-" + std::to_string(seed) + ".json");
            std::ifstream is(file);
            if (!is)
                throw std::runtime_error("no eval results at " + file.string() +
                                         "; run eval first");
            const sb::json acc = sb::json::parse(is);
            for (const auto& [name, value] : acc.items())
                mr.splits[name].per_seed.push_back(value.get<double>());
        }
        for (auto& [name, stat] : mr.splits) stat.finalize();
        report.methods.push_back(std::move(mr));
    }
    const sb::fs::path existing = sb::fs::path(cfg.out_dir) / "report.json";
    if (sb::fs::exists(existing)) {
        std::ifstream is(existing);
        report.domain_gaps = sb::report_from_json(sb::json::parse(is)).domain_gaps;
    }
    sb::emit_report(report, cfg.out_dir);
    std::cout << sb::report_table(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // single-threaded BLAS keeps results identical regardless of core count
    openblas_set_num_threads(1);
    CLI::App app{"static-bias video laboratory"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config (JSON)");
    auto* seed_opt = app.add_option("--seed", g.seed, "override: run a single seed");
    app.add_option("--out", g.out_dir, "override output directory");
    app.add_option("--threads", g.threads, "worker threads for data generation");

    std::string method = "none";
    auto* gen_world = app.add_subcommand("gen-world", "generate the synthetic world dataset");
    auto* build_bench = app.add_subcommand("build-bench", "build SCUB/SCUF benchmark sets");
    auto* train_ref = app.add_subcommand("train-ref", "train the still-frame reference network");
    auto* build_bank = app.add_subcommand("build-bank", "build the biased frame bank");
    auto* train = app.add_subcommand("train", "train the main network for one method");
    train->add_option("--method", method, "augmentation method")->required();
    auto* eval = app.add_subcommand("eval", "evaluate trained models on all splits");
    eval->add_option("--method", method, "augmentation method")->required();
    auto* run = app.add_subcommand("run", "full pipeline: world, benchmarks, training, report");
    auto* report = app.add_subcommand("report", "assemble reports from cached eval results");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        if (gen_world->parsed()) return cmd_gen_world(g);
        if (build_bench->parsed()) return cmd_build_bench(g);
        if (train_ref->parsed()) return cmd_train_ref(g);
        if (build_bank->parsed()) return cmd_build_bank(g);
        if (train->parsed()) return cmd_train(g, method);
        if (eval->parsed()) return cmd_eval(g, method);
        if (run->parsed()) return cmd_run(g);
        if (report->parsed()) return cmd_report(g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
