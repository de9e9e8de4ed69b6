#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simgen/adapter.hpp"
#include "simgen/condiff.hpp"
#include "simgen/image.hpp"
#include "simgen/render.hpp"
#include "simgen/traffic.hpp"
#include "simgen/vocab.hpp"

namespace simgen {

// ---------------------------------------------------------------------------
// Rule-based cleaning checklist
// ---------------------------------------------------------------------------

struct ChecklistConfig {
    double tau_black = 0.04;  // mean luminance floor
    double tau_blur = 0.0;    // Laplacian-variance floor; 0 disables until calibrated
    double tau_trans = 0.0;   // frame-difference energy ceiling; 0 disables
};

struct ChecklistResult {
    bool pass = true;
    std::vector<std::string> reasons;
};

namespace detail_data {

inline std::vector<double> luma(const ImageF& img) {
    std::vector<double> out(size_t(img.h) * img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            out[size_t(y) * img.w + x] = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                                         0.114 * img.at(2, y, x);
    return out;
}

inline double mean_luminance(const ImageF& img) {
    auto l = luma(img);
    double s = 0;
    for (double v : l) s += v;
    return s / double(l.size());
}

// Variance of the 4-neighbor Laplacian response on exposure-normalized
// luminance; low values flag blur. The normalization keeps dark-but-sharp
// frames (dusk, night) away from the blur floor.
inline double laplacian_variance(const ImageF& img) {
    auto l = luma(img);
    double lm = 0;
    for (double v : l) lm += v;
    lm = std::max(lm / double(l.size()), 0.02);
    for (double& v : l) v /= lm;
    double s = 0, s2 = 0;
    int64_t n = 0;
    for (int y = 1; y + 1 < img.h; ++y)
        for (int x = 1; x + 1 < img.w; ++x) {
            double v = 4.0 * l[size_t(y) * img.w + x] - l[size_t(y) * img.w + x - 1] -
                       l[size_t(y) * img.w + x + 1] - l[size_t(y - 1) * img.w + x] -
                       l[size_t(y + 1) * img.w + x];
            s += v;
            s2 += v * v;
            ++n;
        }
    if (n == 0) return 0;
    double mean = s / double(n);
    return s2 / double(n) - mean * mean;
}

inline double frame_difference_energy(const ImageF& a, const ImageF& b) {
    SIMGEN_REQUIRE(a.data.size() == b.data.size(), shape, "frame difference: size mismatch");
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = double(a.data[i]) - double(b.data[i]);
        s += d * d;
    }
    return s / double(a.data.size());
}

}  // namespace detail_data

inline ChecklistResult quality_checklist(const ImageF& frame, const ImageF* prev,
                                         const ChecklistConfig& cfg) {
    ChecklistResult r;
    if (detail_data::mean_luminance(frame) < cfg.tau_black) r.reasons.push_back("black-screen");
    if (cfg.tau_blur > 0 && detail_data::laplacian_variance(frame) < cfg.tau_blur)
        r.reasons.push_back("blur");
    if (prev && cfg.tau_trans > 0 &&
        detail_data::frame_difference_energy(frame, *prev) > cfg.tau_trans)
        r.reasons.push_back("transition");
    r.pass = r.reasons.empty();
    return r;
}

// Batch semantics: one probe frame is checked; if it fails, the whole batch
// (nominally five frames) is rejected.
inline bool checklist_accepts_batch(const std::vector<ImageF>& frames,
                                    const std::vector<const ImageF*>& prevs,
                                    const ChecklistConfig& cfg, size_t probe_idx,
                                    ChecklistResult* probe_result = nullptr) {
    SIMGEN_REQUIRE(probe_idx < frames.size(), contract, "checklist probe index out of range");
    SIMGEN_REQUIRE(prevs.size() == frames.size(), contract, "checklist prev list mismatch");
    auto res = quality_checklist(frames[probe_idx], prevs[probe_idx], cfg);
    if (probe_result) *probe_result = res;
    return res.pass;
}

// 5th percentile of Laplacian variance / 95th percentile of transition
// energy over clean calibration frames.
inline ChecklistConfig calibrate_checklist(const std::vector<ImageF>& clean_frames,
                                           const std::vector<const ImageF*>& prevs,
                                           double tau_black = 0.04) {
    SIMGEN_REQUIRE(clean_frames.size() >= 2, stats, "checklist calibration needs >= 2 frames");
    ChecklistConfig cfg;
    cfg.tau_black = tau_black;
    std::vector<double> blur, trans;
    for (size_t i = 0; i < clean_frames.size(); ++i) {
        blur.push_back(detail_data::laplacian_variance(clean_frames[i]));
        if (prevs[i])
            trans.push_back(detail_data::frame_difference_energy(clean_frames[i], *prevs[i]));
    }
    std::sort(blur.begin(), blur.end());
    std::sort(trans.begin(), trans.end());
    // 5th / 95th percentiles of the clean calibration frames; the rules use
    // strict comparisons so frames sitting exactly on the threshold pass.
    // Tiny calibration sets (smoke builds) get slack because a 4-sample
    // percentile is just an order statistic of noise.
    cfg.tau_blur = blur[size_t(double(blur.size() - 1) * 0.05)];
    cfg.tau_trans = trans.empty() ? 0.0 : trans[size_t(double(trans.size() - 1) * 0.95)];
    if (clean_frames.size() < 20) {
        cfg.tau_blur *= 0.5;
        cfg.tau_trans *= 2.0;
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    std::string scene_path;
    std::string provenance;  // "real" | "sim"
    std::string split;       // "train" | "val"
    double t = 0;
    std::string caption;
    std::string weather, time_of_day, setting;
    // file paths relative to the dataset root; sim entries carry all five
    // condition paths (SimCond depth/seg + ExtraCond), real entries only the
    // RealCond pair next to the target RGB
    std::string rgb, depth, seg;
    std::string sim_depth, sim_seg, extra_rgb, instance, topdown;

    nlohmann::json to_json() const {
        nlohmann::json j = {{"id", id},         {"scene", scene_path}, {"provenance", provenance},
                            {"split", split},   {"t", t},              {"caption", caption},
                            {"weather", weather}, {"time", time_of_day}, {"setting", setting},
                            {"rgb", rgb},       {"depth", depth},      {"seg", seg}};
        if (provenance == "sim") {
            j["sim_depth"] = sim_depth;
            j["sim_seg"] = sim_seg;
            j["extra_rgb"] = extra_rgb;
            j["instance"] = instance;
            j["topdown"] = topdown;
        }
        return j;
    }

    static ManifestEntry from_json(const nlohmann::json& j) {
        ManifestEntry e;
        e.id = j.at("id");
        e.scene_path = j.at("scene");
        e.provenance = j.at("provenance");
        e.split = j.at("split");
        e.t = j.at("t");
        e.caption = j.at("caption");
        e.weather = j.at("weather");
        e.time_of_day = j.at("time");
        e.setting = j.at("setting");
        e.rgb = j.at("rgb");
        e.depth = j.at("depth");
        e.seg = j.at("seg");
        if (e.provenance == "sim") {
            e.sim_depth = j.at("sim_depth");
            e.sim_seg = j.at("sim_seg");
            e.extra_rgb = j.at("extra_rgb");
            e.instance = j.at("instance");
            e.topdown = j.at("topdown");
        }
        return e;
    }
};

struct DatasetManifest {
    static constexpr const char* kSchema = "simgen.dataset/1";
    std::vector<ManifestEntry> entries;
    nlohmann::json config;       // build configuration echo
    nlohmann::json statistics;   // per-cell counts, cleaning counters
    int height = 0, width = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema"] = kSchema;
        j["height"] = height;
        j["width"] = width;
        j["config"] = config;
        j["statistics"] = statistics;
        j["palette"] = nlohmann::json::array();
        for (int k = 0; k < kNumSemClasses; ++k)
            j["palette"].push_back({kPalette[size_t(k)][0], kPalette[size_t(k)][1],
                                    kPalette[size_t(k)][2]});
        nlohmann::json arr = nlohmann::json::array();
        for (auto& e : entries) arr.push_back(e.to_json());
        j["entries"] = arr;
        return j;
    }

    std::string to_text() const { return to_json().dump(1); }
    uint64_t hash() const { return fnv1a(to_text()); }

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        try {
            SIMGEN_REQUIRE(j.at("schema").get<std::string>() == kSchema, parse,
                           "unknown dataset manifest schema");
            m.height = j.at("height");
            m.width = j.at("width");
            m.config = j.value("config", nlohmann::json::object());
            m.statistics = j.value("statistics", nlohmann::json::object());
            for (auto& e : j.at("entries")) m.entries.push_back(ManifestEntry::from_json(e));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, std::string("malformed dataset manifest: ") + e.what());
        }
        // ids unique, splits disjoint by scene
        std::map<std::string, std::string> scene_split;
        std::map<std::string, int> ids;
        for (auto& e : m.entries) {
            SIMGEN_REQUIRE(++ids[e.id] == 1, parse, "duplicate sample id: " << e.id);
            auto it = scene_split.find(e.scene_path);
            if (it == scene_split.end())
                scene_split[e.scene_path] = e.split;
            else
                SIMGEN_REQUIRE(it->second == e.split, parse,
                               "scene " << e.scene_path << " appears in both splits");
        }
        return m;
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream f(path);
        SIMGEN_REQUIRE(f.good(), io, "cannot open manifest: " << path);
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, std::string("manifest is not valid JSON: ") + e.what());
        }
        return from_json(j);
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        SIMGEN_REQUIRE(f.good(), io, "cannot write manifest: " << path);
        f << to_text();
        SIMGEN_REQUIRE(f.good(), io, "write failure on manifest: " << path);
    }
};

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

struct BuildConfig {
    int n_real = 2000;  // frame counts
    int n_sim = 1000;
    int frames_per_scene = 2;
    int height = 32, width = 56;
    uint64_t seed = 0;
    double density_lo = 2.0, density_hi = 9.0;
    double duration = 8.0;
    // when set, every scene uses this one metadata cell (the narrow corpus)
    std::optional<SceneMeta> fixed_meta;
    double val_fraction = 0.1;
    double max_cleaning_loss = 0.2;
    int topdown_res = 64;
    double topdown_extent = 48.0;
    int workers = 1;  // scene/render workers; artifacts do not depend on it

    nlohmann::json to_json() const {
        nlohmann::json j = {{"n_real", n_real},
                            {"n_sim", n_sim},
                            {"frames_per_scene", frames_per_scene},
                            {"height", height},
                            {"width", width},
                            {"seed", seed},
                            {"duration", duration},
                            {"topdown_res", topdown_res},
                            {"topdown_extent", topdown_extent}};
        if (fixed_meta)
            j["fixed_meta"] = {to_string(fixed_meta->weather), to_string(fixed_meta->time),
                               to_string(fixed_meta->setting)};
        return j;
    }
};

namespace detail_data {

inline std::string id_str(const char* prefix, int scene_idx, int frame_idx) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%05d_f%d", prefix, scene_idx, frame_idx);
    return buf;
}

inline std::string scene_file(int idx) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "scenes/scene_%05d.json", idx);
    return buf;
}

inline void write_instance_map(const std::string& path, const std::vector<int32_t>& ids, int h,
                               int w) {
    std::vector<float> v(ids.size());
    for (size_t i = 0; i < ids.size(); ++i)
        v[i] = float(std::clamp<int32_t>(ids[i], 0, 65535)) / 65535.f;
    write_pgm16(path, v, h, w);
}

inline std::vector<int32_t> read_instance_map(const std::string& path) {
    int h = 0, w = 0;
    auto v = read_pgm16(path, &h, &w);
    std::vector<int32_t> ids(v.size());
    for (size_t i = 0; i < v.size(); ++i) ids[i] = int32_t(std::lround(v[i] * 65535.f));
    return ids;
}

inline SceneMeta stratified_meta(int scene_idx) {
    // 100 weather x time x setting cells, visited in a scrambled round-robin
    // (37 is coprime with 100) so any window of 100 scenes covers every cell;
    // the checklist calibration set therefore spans the full diversity
    int cell = (scene_idx * 37) % 100;
    SceneMeta m;
    m.weather = Weather(cell % 5);
    m.time = TimeOfDay((cell / 5) % 4);
    m.setting = Setting((cell / 20) % 5);
    return m;
}

}  // namespace detail_data

struct BuildCounters {
    int rendered = 0;
    int rejected = 0;
    std::map<std::string, int> reject_reasons;
};

// Generates the enriched-renderer "real" corpus and the simulator corpus
// (replay + adversarial halves), runs the cleaning checklist, and writes the
// directory layout: scenes/, frames/{real,sim}/, manifest.json at the root.
inline DatasetManifest build_dataset(const BuildConfig& cfg, const std::string& out_dir,
                                     const ChecklistConfig* preset_checklist = nullptr) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "scenes", ec);
    fs::create_directories(fs::path(out_dir) / "frames" / "real", ec);
    fs::create_directories(fs::path(out_dir) / "frames" / "sim", ec);
    SIMGEN_REQUIRE(!ec, io, "cannot create dataset directories under " << out_dir);

    auto cam = CameraSpec::for_size(cfg.height, cfg.width);
    Rng rng(cfg.seed, 0xda7a);

    int scenes_real = (cfg.n_real + cfg.frames_per_scene - 1) / cfg.frames_per_scene;
    int scenes_sim = (cfg.n_sim + cfg.frames_per_scene - 1) / cfg.frames_per_scene;

    struct PendingFrame {
        int scene_idx;
        int frame_idx;
        bool sim;
        double t;
        std::string caption;
        SceneMeta meta;
        RenderedFrame enriched;
        RenderedFrame enriched_prev;
        RenderedFrame plain;      // sim only
        ImageF topdown;           // sim only
    };

    DatasetManifest manifest;
    manifest.height = cfg.height;
    manifest.width = cfg.width;
    manifest.config = cfg.to_json();

    BuildCounters counters;
    std::vector<PendingFrame> pending;

    // renders one scene into frame candidates; the record is kept in memory
    // until the group passes the checklist
    auto roll_scene = [&](bool sim, int scene_idx, int idx_within, int attempt,
                          SceneRecord& rec_out) {
        SceneConfig scfg;
        SceneMeta meta =
            cfg.fixed_meta ? *cfg.fixed_meta : detail_data::stratified_meta(scene_idx);
        scfg.weather = meta.weather;
        scfg.time = meta.time;
        scfg.setting = meta.setting;
        scfg.duration = cfg.duration;
        Rng srng = rng.split(uint64_t(scene_idx) * 16 + uint64_t(attempt) + 1);
        scfg.density = cfg.density_lo + (cfg.density_hi - cfg.density_lo) * srng.next_double();
        auto rec = generate_procedural_scene(
            cfg.seed * 0x10001 + uint64_t(scene_idx) * 7 + uint64_t(attempt) * 7919, scfg);

        bool adversarial = sim && (idx_within % 2 == 1);
        if (adversarial) {
            int adv_id = nearest_vehicle_adversary(rec);
            if (adv_id > 0) rec = adversarial_perturb(rec, adv_id, rec.duration, 6).record;
        }
        std::vector<PendingFrame> frames;
        std::string caption = caption_from_record(rec);
        for (int f = 0; f < cfg.frames_per_scene; ++f) {
            PendingFrame pf;
            pf.scene_idx = scene_idx;
            pf.frame_idx = f;
            pf.sim = sim;
            pf.meta = meta;
            pf.caption = caption;
            pf.t = rec.duration * double(f + 1) / double(cfg.frames_per_scene + 1);
            auto ws = step_scene(rec, pf.t, StepPolicy::replay);
            uint64_t rseed = cfg.seed ^ (uint64_t(scene_idx) << 8) ^ uint64_t(attempt);
            pf.enriched = render_front(ws, cam, RenderMode::enriched, rseed);
            auto ws_prev = step_scene(rec, std::max(0.0, pf.t - 0.1), StepPolicy::replay);
            pf.enriched_prev = render_front(ws_prev, cam, RenderMode::enriched, rseed);
            if (sim) {
                pf.plain = render_front(ws, cam, RenderMode::plain, rseed);
                pf.topdown = render_topdown(ws, cfg.topdown_extent, cfg.topdown_res);
            }
            frames.push_back(std::move(pf));
        }
        rec_out = std::move(rec);
        return frames;
    };

    // checklist thresholds: preset, or calibrated on the first clean scenes
    ChecklistConfig check;
    if (preset_checklist) {
        check = *preset_checklist;
    } else {
        int total = scenes_real + scenes_sim;
        int calib_scenes = std::min(total, std::max(1, 100 / std::max(cfg.frames_per_scene, 1)));
        std::vector<ImageF> calib;
        std::vector<ImageF> prev_store;
        for (int i = 0; i < calib_scenes; ++i) {
            bool sim = i >= scenes_real;
            SceneRecord rec;
            auto frames = roll_scene(sim, i, i - (sim ? scenes_real : 0), 0, rec);
            for (auto& pf : frames) {
                calib.push_back(pf.enriched.rgb);
                prev_store.push_back(pf.enriched_prev.rgb);
            }
        }
        std::vector<const ImageF*> prevs;
        for (auto& p : prev_store) prevs.push_back(&p);
        check = calibrate_checklist(calib, prevs);
    }

    // scene loop with replacement: a failing probe discards the whole frame
    // group and retries the slot with a fresh seed in the same metadata cell.
    // Slots are independent, so they run on the worker pool; results merge in
    // slot order and artifacts do not depend on the worker count.
    const int kMaxAttempts = 6;
    int unfilled = 0;
    int total_scenes = scenes_real + scenes_sim;
    struct SlotResult {
        bool accepted = false;
        SceneRecord rec;
        std::vector<PendingFrame> frames;
        int rendered = 0, rejected = 0;
        std::map<std::string, int> reasons;
    };
    std::vector<SlotResult> slots(static_cast<size_t>(total_scenes));
    parallel_for(size_t(total_scenes), cfg.workers, [&](size_t si) {
        int scene_idx = int(si);
        auto& slot = slots[si];
        bool sim = scene_idx >= scenes_real;
        int idx_within = sim ? scene_idx - scenes_real : scene_idx;
        for (int attempt = 0; attempt < kMaxAttempts && !slot.accepted; ++attempt) {
            SceneRecord rec;
            auto frames = roll_scene(sim, scene_idx, idx_within, attempt, rec);
            slot.rendered += int(frames.size());
            Rng prng = rng.split(0x9999 + uint64_t(scene_idx) * 31 + uint64_t(attempt));
            size_t probe = size_t(prng.next_below(frames.size()));
            std::vector<ImageF> imgs;
            std::vector<ImageF> prev_store;
            for (auto& pf : frames) {
                imgs.push_back(pf.enriched.rgb);
                prev_store.push_back(pf.enriched_prev.rgb);
            }
            std::vector<const ImageF*> prevs;
            for (auto& p : prev_store) prevs.push_back(&p);
            ChecklistResult res;
            if (!checklist_accepts_batch(imgs, prevs, check, probe, &res)) {
                slot.rejected += int(frames.size());
                for (auto& r : res.reasons) slot.reasons[r] += int(frames.size());
                continue;
            }
            slot.accepted = true;
            slot.rec = std::move(rec);
            slot.frames = std::move(frames);
        }
    });
    for (int scene_idx = 0; scene_idx < total_scenes; ++scene_idx) {
        auto& slot = slots[size_t(scene_idx)];
        counters.rendered += slot.rendered;
        counters.rejected += slot.rejected;
        for (auto& [r, c] : slot.reasons) counters.reject_reasons[r] += c;
        if (!slot.accepted) {
            unfilled += cfg.frames_per_scene;
            continue;
        }
        save_scene(slot.rec, (fs::path(out_dir) / detail_data::scene_file(scene_idx)).string());
        for (auto& pf : slot.frames) pending.push_back(std::move(pf));
    }
    double loss_frac = double(unfilled) /
                       double(std::max(total_scenes * cfg.frames_per_scene, 1));
    SIMGEN_REQUIRE(loss_frac <= cfg.max_cleaning_loss, build,
                   "cleaning rejected too many frames: " << counters.rejected << " rejected over "
                                                         << counters.rendered << " rendered, "
                                                         << unfilled
                                                         << " slots left unfilled after retries");

    // write surviving frames + manifest entries
    std::map<std::string, int> cell_counts;
    for (size_t i = 0; i < pending.size(); ++i) {
        auto& pf = pending[i];
        const char* prefix = pf.sim ? "sim" : "real";
        std::string id = detail_data::id_str(prefix, pf.scene_idx, pf.frame_idx);
        std::string base = std::string("frames/") + prefix + "/" + id;
        ManifestEntry e;
        e.id = id;
        e.scene_path = detail_data::scene_file(pf.scene_idx);
        e.provenance = prefix;
        e.split = (pf.scene_idx % 10 == 9) ? "val" : "train";
        e.t = pf.t;
        e.caption = pf.caption;
        e.weather = to_string(pf.meta.weather);
        e.time_of_day = to_string(pf.meta.time);
        e.setting = to_string(pf.meta.setting);
        e.rgb = base + "_rgb.ppm";
        e.depth = base + "_depth.pgm";
        e.seg = base + "_seg.ppm";
        write_ppm((fs::path(out_dir) / e.rgb).string(), pf.enriched.rgb);
        write_pgm16((fs::path(out_dir) / e.depth).string(), pf.enriched.depth, cfg.height,
                    cfg.width);
        auto seg_img = ConditionImage::from_frame(pf.enriched, Provenance::real);
        ImageF seg_f;
        seg_f.h = cfg.height;
        seg_f.w = cfg.width;
        seg_f.c = 3;
        seg_f.data = seg_img.seg_rgb;
        write_ppm((fs::path(out_dir) / e.seg).string(), seg_f);
        if (pf.sim) {
            e.sim_depth = base + "_simdepth.pgm";
            e.sim_seg = base + "_simseg.ppm";
            e.extra_rgb = base + "_simrgb.ppm";
            e.instance = base + "_inst.pgm";
            e.topdown = base + "_td.ppm";
            write_pgm16((fs::path(out_dir) / e.sim_depth).string(), pf.plain.depth, cfg.height,
                        cfg.width);
            auto sim_seg = ConditionImage::from_frame(pf.plain, Provenance::sim);
            ImageF sim_seg_f;
            sim_seg_f.h = cfg.height;
            sim_seg_f.w = cfg.width;
            sim_seg_f.c = 3;
            sim_seg_f.data = sim_seg.seg_rgb;
            write_ppm((fs::path(out_dir) / e.sim_seg).string(), sim_seg_f);
            write_ppm((fs::path(out_dir) / e.extra_rgb).string(), pf.plain.rgb);
            detail_data::write_instance_map((fs::path(out_dir) / e.instance).string(),
                                            pf.plain.instance, cfg.height, cfg.width);
            write_ppm((fs::path(out_dir) / e.topdown).string(), pf.topdown);
        }
        cell_counts[e.weather + "/" + e.time_of_day + "/" + e.setting] += 1;
        manifest.entries.push_back(std::move(e));
    }

    manifest.statistics["rendered"] = counters.rendered;
    manifest.statistics["rejected"] = counters.rejected;
    manifest.statistics["reject_reasons"] = counters.reject_reasons;
    manifest.statistics["cells"] = cell_counts;
    manifest.statistics["checklist"] = {{"tau_black", check.tau_black},
                                        {"tau_blur", check.tau_blur},
                                        {"tau_trans", check.tau_trans}};
    manifest.save((fs::path(out_dir) / "manifest.json").string());

    // camera/palette sidecar for the raster files
    nlohmann::json sidecar;
    sidecar["camera"] = {{"mount_height", cam.mount_height},
                         {"forward_offset", cam.forward_offset},
                         {"focal_px", cam.focal_px},
                         {"height", cam.height},
                         {"width", cam.width},
                         {"max_depth", cam.max_depth}};
    sidecar["depth_scale"] = cam.max_depth;
    sidecar["palette"] = manifest.to_json()["palette"];
    std::ofstream side((fs::path(out_dir) / "rasters.json").string());
    side << sidecar.dump(1);

    return manifest;
}

// ---------------------------------------------------------------------------
// In-memory dataset for training and evaluation
// ---------------------------------------------------------------------------

struct LoadedSample {
    ManifestEntry meta;
    ImageF rgb;
    ConditionImage realcond;
    std::vector<uint8_t> real_sem;
    ConditionImage simcond;          // sim provenance only
    std::optional<ExtraCond> extra;  // sim provenance only
};

struct LoadedDataset {
    DatasetManifest manifest;
    std::string root;
    std::vector<LoadedSample> samples;

    static LoadedDataset load(const std::string& root_dir) {
        namespace fs = std::filesystem;
        LoadedDataset ds;
        ds.root = root_dir;
        ds.manifest = DatasetManifest::load((fs::path(root_dir) / "manifest.json").string());
        for (auto& e : ds.manifest.entries) {
            LoadedSample s;
            s.meta = e;
            s.rgb = read_ppm((fs::path(root_dir) / e.rgb).string());
            int h = 0, w = 0;
            s.realcond.depth = read_pgm16((fs::path(root_dir) / e.depth).string(), &h, &w);
            s.realcond.h = h;
            s.realcond.w = w;
            s.realcond.seg_rgb = read_ppm((fs::path(root_dir) / e.seg).string()).data;
            s.realcond.provenance = Provenance::real;
            s.real_sem = s.realcond.seg_classes();
            if (e.provenance == "sim") {
                s.simcond.depth =
                    read_pgm16((fs::path(root_dir) / e.sim_depth).string(), &h, &w);
                s.simcond.h = h;
                s.simcond.w = w;
                s.simcond.seg_rgb = read_ppm((fs::path(root_dir) / e.sim_seg).string()).data;
                s.simcond.provenance = Provenance::sim;
                ExtraCond ex;
                ex.rendered_rgb = read_ppm((fs::path(root_dir) / e.extra_rgb).string());
                ex.instance =
                    detail_data::read_instance_map((fs::path(root_dir) / e.instance).string());
                ex.topdown = read_ppm((fs::path(root_dir) / e.topdown).string());
                ex.semantic = s.simcond.seg_classes();
                s.extra = std::move(ex);
            }
            ds.samples.push_back(std::move(s));
        }
        return ds;
    }

    std::vector<size_t> select(const std::string& provenance, const std::string& split) const {
        std::vector<size_t> idx;
        for (size_t i = 0; i < samples.size(); ++i) {
            if (!provenance.empty() && samples[i].meta.provenance != provenance) continue;
            if (!split.empty() && samples[i].meta.split != split) continue;
            idx.push_back(i);
        }
        return idx;
    }
};

// dataset views with the interfaces the trainers expect

struct CondView {
    const LoadedDataset* ds;
    std::vector<size_t> idx;
    size_t size() const { return idx.size(); }
    const ConditionImage& condition(size_t i) const { return ds->samples[idx[i]].realcond; }
    const std::string& caption(size_t i) const { return ds->samples[idx[i]].meta.caption; }
};

struct RgbView {
    const LoadedDataset* ds;
    std::vector<size_t> idx;
    size_t size() const { return idx.size(); }
    const ImageF& image(size_t i) const { return ds->samples[idx[i]].rgb; }
    const std::string& caption(size_t i) const { return ds->samples[idx[i]].meta.caption; }
};

struct MixedView {
    const LoadedDataset* ds;
    std::vector<size_t> idx;
    size_t size() const { return idx.size(); }
    const ImageF& image(size_t i) const { return ds->samples[idx[i]].rgb; }
    const std::string& caption(size_t i) const { return ds->samples[idx[i]].meta.caption; }
    const ConditionImage& realcond(size_t i) const { return ds->samples[idx[i]].realcond; }
    const ExtraCond* extracond(size_t i) const {
        return ds->samples[idx[i]].extra ? &*ds->samples[idx[i]].extra : nullptr;
    }
    const std::vector<uint8_t>& real_semantic(size_t i) const {
        return ds->samples[idx[i]].real_sem;
    }
};

}  // namespace simgen
