#pragma once

// On-disk dataset layout: a directory with manifest.json plus one .sbvd
// file per clip (and one per mask). The .sbvd format is magic "SBVD",
// u32 version = 1, u32 C, T, H, W, then C*T*H*W little-endian f32 values
// in C-major order. Masks use C = 1 with values exactly 0 or 1.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stillbench/augment.hpp"
#include "stillbench/benchmark.hpp"
#include "stillbench/world.hpp"

namespace sb {

static_assert(std::endian::native == std::endian::little,
              "sbvd serialization assumes a little-endian host");

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// atomic file writes
// ---------------------------------------------------------------------------

inline void atomic_write_text(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os << content;
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// .sbvd
// ---------------------------------------------------------------------------

inline void write_sbvd(const fs::path& path, const Tensor& t) {
    if (t.rank() != 4)
        throw std::invalid_argument("write_sbvd: tensor must be [C x T x H x W], got " +
                                    shape_str(t.shape()));
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("write_sbvd: cannot open " + tmp.string());
        os.write("SBVD", 4);
        const std::uint32_t header[5] = {1u, static_cast<std::uint32_t>(t.dim(0)),
                                         static_cast<std::uint32_t>(t.dim(1)),
                                         static_cast<std::uint32_t>(t.dim(2)),
                                         static_cast<std::uint32_t>(t.dim(3))};
        os.write(reinterpret_cast<const char*>(header), sizeof(header));
        std::vector<float> buf(t.numel());
        for (std::size_t i = 0; i < t.numel(); ++i) buf[i] = static_cast<float>(t[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!os) throw std::runtime_error("write_sbvd: write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline Tensor read_sbvd(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_sbvd: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SBVD")
        throw std::runtime_error("read_sbvd: " + path.string() + " is not an sbvd file");
    std::uint32_t header[5];
    is.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!is || header[0] != 1)
        throw std::runtime_error("read_sbvd: unsupported version in " + path.string());
    Tensor t({header[1], header[2], header[3], header[4]});
    std::vector<float> buf(t.numel());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw std::runtime_error("read_sbvd: truncated file " + path.string());
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(buf[i]);
    return t;
}

inline void write_mask_sbvd(const fs::path& path, const Tensor& mask) {
    if (mask.rank() != 3)
        throw std::invalid_argument("write_mask_sbvd: mask must be [T x H x W], got " +
                                    shape_str(mask.shape()));
    write_sbvd(path, mask.reshape({1, mask.dim(0), mask.dim(1), mask.dim(2)}));
}

inline Tensor read_mask_sbvd(const fs::path& path) {
    Tensor t = read_sbvd(path);
    if (t.dim(0) != 1)
        throw std::runtime_error("read_mask_sbvd: " + path.string() + " has C != 1");
    for (std::size_t i = 0; i < t.numel(); ++i)
        if (t[i] != 0.0 && t[i] != 1.0)
            throw std::runtime_error("read_mask_sbvd: non-binary value in " + path.string());
    return t.reshape({t.dim(1), t.dim(2), t.dim(3)});
}

// .sbvd carries f32; quantize in-memory doubles the same way so a fresh
// pipeline and a cache-reload pipeline see identical bits
inline void quantize_f32(Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<double>(static_cast<float>(t[i]));
}

// ---------------------------------------------------------------------------
// world datasets
// ---------------------------------------------------------------------------

inline json world_spec_to_json(const WorldSpec& s) {
    return json{{"classes", s.classes},       {"channels", s.channels},
                {"frames", s.frames},         {"height", s.height},
                {"width", s.width},           {"rho_bg", s.rho_bg},
                {"rho_fg", s.rho_fg},         {"train_size", s.train_size},
                {"val_size", s.val_size},     {"test_size", s.test_size},
                {"master_seed", s.master_seed}};
}

inline void check_known_keys(const json& j, const std::vector<std::string>& known,
                             const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
    }
}

inline WorldSpec world_spec_from_json(const json& j) {
    check_known_keys(j,
                     {"classes", "channels", "frames", "height", "width", "rho_bg", "rho_fg",
                      "train_size", "val_size", "test_size", "master_seed"},
                     "world spec");
    WorldSpec s;
    s.classes = j.value("classes", s.classes);
    s.channels = j.value("channels", s.channels);
    s.frames = j.value("frames", s.frames);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.rho_bg = j.value("rho_bg", s.rho_bg);
    s.rho_fg = j.value("rho_fg", s.rho_fg);
    s.train_size = j.value("train_size", s.train_size);
    s.val_size = j.value("val_size", s.val_size);
    s.test_size = j.value("test_size", s.test_size);
    s.master_seed = j.value("master_seed", s.master_seed);
    return s;
}

inline void save_world(const fs::path& dir, const WorldData& world) {
    fs::create_directories(dir / "clips");
    json manifest;
    manifest["world"] = world_spec_to_json(world.spec);
    const std::pair<const char*, const std::vector<LabeledClip>*> splits[] = {
        {"train", &world.train}, {"val", &world.val}, {"test_iid", &world.test_iid}};
    for (const auto& [name, clips] : splits) {
        json entries = json::array();
        for (const LabeledClip& clip : *clips) {
            const std::string stem = std::string(name) + "_" + std::to_string(clip.id);
            write_sbvd(dir / "clips" / (stem + ".sbvd"), clip.video);
            write_mask_sbvd(dir / "clips" / (stem + ".mask.sbvd"), clip.masks);
            entries.push_back({{"id", clip.id},
                               {"label", clip.label},
                               {"bg_family", clip.bg_family},
                               {"fg_appearance", clip.fg_appearance},
                               {"seed", clip.seed},
                               {"video", "clips/" + stem + ".sbvd"},
                               {"mask", "clips/" + stem + ".mask.sbvd"}});
        }
        manifest["splits"][name] = std::move(entries);
    }
    atomic_write_text(dir / "manifest.json", manifest.dump(2));
}

inline std::vector<LabeledClip> load_clip_list(const fs::path& dir, const json& entries) {
    std::vector<LabeledClip> clips;
    clips.reserve(entries.size());
    for (const json& e : entries) {
        LabeledClip clip;
        clip.id = e.at("id").get<std::size_t>();
        clip.label = e.at("label").get<std::size_t>();
        clip.bg_family = e.at("bg_family").get<std::size_t>();
        clip.fg_appearance = e.at("fg_appearance").get<std::size_t>();
        clip.seed = e.at("seed").get<std::uint64_t>();
        clip.video = read_sbvd(dir / e.at("video").get<std::string>());
        clip.masks = read_mask_sbvd(dir / e.at("mask").get<std::string>());
        clips.push_back(std::move(clip));
    }
    return clips;
}

inline WorldData load_world(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("load_world: no manifest.json in " + dir.string());
    json manifest = json::parse(is);
    WorldData world;
    world.spec = world_spec_from_json(manifest.at("world"));
    world.train = load_clip_list(dir, manifest.at("splits").at("train"));
    world.val = load_clip_list(dir, manifest.at("splits").at("val"));
    world.test_iid = load_clip_list(dir, manifest.at("splits").at("test_iid"));
    return world;
}

// ---------------------------------------------------------------------------
// benchmark sets
// ---------------------------------------------------------------------------

inline void save_benchmarks(const fs::path& dir, const std::vector<BenchmarkSet>& sets) {
    fs::create_directories(dir / "clips");
    json manifest;
    json jsets = json::array();
    for (const BenchmarkSet& set : sets) {
        json entries = json::array();
        for (std::size_t i = 0; i < set.clips.size(); ++i) {
            const BenchClip& clip = set.clips[i];
            const std::string stem = set.name + "_" + std::to_string(i);
            write_sbvd(dir / "clips" / (stem + ".sbvd"), clip.video);
            entries.push_back({{"label", clip.label},
                               {"source_clip", clip.source_clip},
                               {"background_id", clip.background_id},
                               {"video", "clips/" + stem + ".sbvd"}});
        }
        jsets.push_back({{"name", set.name},
                         {"kind", set.kind == BenchmarkKind::SCUB ? "SCUB" : "SCUF"},
                         {"pool", set.pool},
                         {"clips", std::move(entries)}});
    }
    manifest["sets"] = std::move(jsets);
    atomic_write_text(dir / "manifest.json", manifest.dump(2));
}

inline std::vector<BenchmarkSet> load_benchmarks(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("load_benchmarks: no manifest.json in " + dir.string());
    json manifest = json::parse(is);
    std::vector<BenchmarkSet> sets;
    for (const json& js : manifest.at("sets")) {
        BenchmarkSet set;
        set.name = js.at("name").get<std::string>();
        const std::string kind = js.at("kind").get<std::string>();
        if (kind != "SCUB" && kind != "SCUF")
            throw std::runtime_error("load_benchmarks: unknown kind " + kind);
        set.kind = kind == "SCUB" ? BenchmarkKind::SCUB : BenchmarkKind::SCUF;
        set.pool = js.at("pool").get<std::string>();
        for (const json& e : js.at("clips")) {
            BenchClip clip;
            clip.label = e.at("label").get<std::size_t>();
            clip.source_clip = e.at("source_clip").get<std::size_t>();
            clip.background_id = e.at("background_id").get<std::uint64_t>();
            clip.video = read_sbvd(dir / e.at("video").get<std::string>());
            set.clips.push_back(std::move(clip));
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

// ---------------------------------------------------------------------------
// frame bank
// ---------------------------------------------------------------------------

inline void save_bank(const fs::path& dir, const FrameBank& bank, std::uint64_t seed) {
    fs::create_directories(dir / "frames");
    json entries = json::array();
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        const FrameBankEntry& e = bank.entries[i];
        const std::string file = "frames/" + std::to_string(i) + ".sbvd";
        write_sbvd(dir / file, e.frame.reshape({e.frame.dim(0), 1, e.frame.dim(1), e.frame.dim(2)}));
        entries.push_back({{"source_clip", e.source_clip},
                           {"frame_index", e.frame_index},
                           {"confidence", e.confidence},
                           {"file", file}});
    }
    json manifest{{"tau", bank.tau},
                  {"capacity", bank.capacity},
                  {"seed", seed},
                  {"warnings", bank.warnings},
                  {"entries", std::move(entries)}};
    atomic_write_text(dir / "bank.json", manifest.dump(2));
}

inline FrameBank load_bank(const fs::path& dir) {
    std::ifstream is(dir / "bank.json");
    if (!is) throw std::runtime_error("load_bank: no bank.json in " + dir.string());
    json manifest = json::parse(is);
    FrameBank bank;
    bank.tau = manifest.at("tau").get<double>();
    bank.capacity = manifest.at("capacity").get<std::size_t>();
    bank.warnings = manifest.at("warnings").get<std::vector<std::string>>();
    for (const json& e : manifest.at("entries")) {
        FrameBankEntry entry;
        entry.source_clip = e.at("source_clip").get<std::size_t>();
        entry.frame_index = e.at("frame_index").get<std::size_t>();
        entry.confidence = e.at("confidence").get<double>();
        Tensor as4 = read_sbvd(dir / e.at("file").get<std::string>());
        entry.frame = as4.reshape({as4.dim(0), as4.dim(2), as4.dim(3)});
        bank.entries.push_back(std::move(entry));
    }
    return bank;
}

}  // namespace sb
