// simgen: simulator-conditioned cascade diffusion pipeline.
//
// Subcommands: gen-data, train-cond, train-img, sim2real, sample,
// scenario replay|adversarial, eval fid|dpix|control|augment|ablate.
// Every artifact-producing run writes a manifest (resolved config, seeds,
// input/output hashes) into its output directory.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "simgen/pipeline.hpp"

namespace fs = std::filesystem;
using namespace simgen;

namespace {

struct RunManifest {
    std::string command;
    nlohmann::json config;
    uint64_t seed = 0;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    nlohmann::json extra;

    void add_input(const std::string& label, const std::string& path) {
        inputs[label] = hex64(file_hash(path));
    }
    void add_output(const std::string& rel, const std::string& abs) {
        outputs[rel] = hex64(file_hash(abs));
    }
    void save(const fs::path& dir) {
        nlohmann::json j;
        j["command"] = command;
        j["config"] = config;
        j["seed"] = seed;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        if (!extra.is_null()) j["report"] = extra;
        std::ofstream f(dir / "run_manifest.json");
        SIMGEN_REQUIRE(f.good(), io, "cannot write run manifest in " << dir.string());
        f << j.dump(1) << "\n";
    }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    SIMGEN_REQUIRE(f.good(), io, "cannot write " << p.string());
    f << text;
}

void write_losses(const fs::path& p, const std::vector<float>& losses) {
    std::ostringstream oss;
    for (size_t i = 0; i < losses.size(); ++i) oss << i << " " << losses[i] << "\n";
    write_text(p, oss.str());
}

// save a condition image as the depth/seg pair
void save_condition(const fs::path& dir, const std::string& stem, const ConditionImage& c) {
    write_pgm16((dir / (stem + "_depth.pgm")).string(), c.depth, c.h, c.w);
    ImageF seg;
    seg.h = c.h;
    seg.w = c.w;
    seg.c = 3;
    seg.data = c.seg_rgb;
    write_ppm((dir / (stem + "_seg.ppm")).string(), seg);
}

ConditionImage load_condition(const fs::path& dir, const std::string& stem, Provenance prov) {
    ConditionImage c;
    int h = 0, w = 0;
    c.depth = read_pgm16((dir / (stem + "_depth.pgm")).string(), &h, &w);
    c.h = h;
    c.w = w;
    c.seg_rgb = read_ppm((dir / (stem + "_seg.ppm")).string()).data;
    c.provenance = prov;
    return c;
}

std::vector<ImageF> load_image_dir(const std::string& dir) {
    std::vector<std::string> files;
    for (auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".ppm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    SIMGEN_REQUIRE(!files.empty(), io, "no .ppm images under " << dir);
    std::vector<ImageF> out;
    for (auto& f : files) out.push_back(read_ppm(f));
    return out;
}

uint64_t derived_seed(uint64_t seed, uint64_t salt) { return Rng::mix(seed ^ (salt * 0x9e37)); }

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& rc, const std::string& out, const std::string& cell) {
    auto sc = stage_configs(rc);
    if (!cell.empty()) {
        auto c1 = cell.find(',');
        auto c2 = cell.rfind(',');
        SIMGEN_REQUIRE(c1 != std::string::npos && c2 != c1, config,
                       "--cell expects weather,time,setting");
        SceneMeta meta;
        meta.weather = weather_from_string(cell.substr(0, c1));
        meta.time = time_from_string(cell.substr(c1 + 1, c2 - c1 - 1));
        meta.setting = setting_from_string(cell.substr(c2 + 1));
        sc.build.fixed_meta = meta;
    }
    fs::create_directories(out);
    auto manifest = build_dataset(sc.build, out);
    std::cout << "dataset: " << manifest.entries.size() << " frames, manifest hash "
              << hex64(manifest.hash()) << "\n";

    RunManifest rm;
    rm.command = "gen-data";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    for (auto& e : manifest.entries) {
        rm.add_output(e.rgb, (fs::path(out) / e.rgb).string());
        rm.add_output(e.depth, (fs::path(out) / e.depth).string());
        rm.add_output(e.seg, (fs::path(out) / e.seg).string());
        rm.add_output(e.scene_path, (fs::path(out) / e.scene_path).string());
        if (e.provenance == "sim") {
            rm.add_output(e.sim_depth, (fs::path(out) / e.sim_depth).string());
            rm.add_output(e.sim_seg, (fs::path(out) / e.sim_seg).string());
            rm.add_output(e.extra_rgb, (fs::path(out) / e.extra_rgb).string());
            rm.add_output(e.instance, (fs::path(out) / e.instance).string());
            rm.add_output(e.topdown, (fs::path(out) / e.topdown).string());
        }
    }
    rm.add_output("manifest.json", (fs::path(out) / "manifest.json").string());
    rm.extra = {{"dataset_hash", hex64(manifest.hash())},
                {"frames", manifest.entries.size()},
                {"statistics", manifest.statistics}};
    rm.save(out);
    return 0;
}

int cmd_train_cond(const RunConfig& rc, const std::string& data, const std::string& out) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto ds = LoadedDataset::load(data);
    SIMGEN_REQUIRE(sc.cond.h == ds.manifest.height && sc.cond.w == ds.manifest.width, config,
                   "res.h/res.w must match the dataset resolution");
    auto model = CondDiffModel::create(sc.cond);
    CondView view{&ds, ds.select("real", "train")};
    auto log = train_condiff(model, view, sc.cond.steps);
    auto ckpt_path = (fs::path(out) / "condiff.ckpt").string();
    model.to_checkpoint().save(ckpt_path);
    write_losses(fs::path(out) / "training_curve.txt", log.losses);
    std::cout << "condiff: " << log.losses.size() << " steps, final loss "
              << (log.losses.empty() ? 0.f : log.losses.back()) << "\n";

    RunManifest rm;
    rm.command = "train-cond";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("dataset", (fs::path(data) / "manifest.json").string());
    rm.add_output("condiff.ckpt", ckpt_path);
    rm.add_output("training_curve.txt", (fs::path(out) / "training_curve.txt").string());
    rm.save(out);
    return 0;
}

int cmd_train_img(const RunConfig& rc, const std::string& data, const std::string& out,
                  const std::string& trunk_ckpt) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto ds = LoadedDataset::load(data);
    SIMGEN_REQUIRE(sc.img.h == ds.manifest.height && sc.img.w == ds.manifest.width, config,
                   "res.h/res.w must match the dataset resolution");
    TrunkModel trunk = TrunkModel::create(sc.trunk);
    std::string trunk_path;
    RunManifest rm;
    if (!trunk_ckpt.empty()) {
        trunk = TrunkModel::from_checkpoint(Checkpoint::load(trunk_ckpt));
        rm.add_input("trunk", trunk_ckpt);
    } else {
        RgbView view{&ds, ds.select("real", "train")};
        auto tlog = train_trunk(trunk, view, sc.trunk.steps);
        trunk_path = (fs::path(out) / "trunk.ckpt").string();
        trunk.to_checkpoint().save(trunk_path);
        write_losses(fs::path(out) / "trunk_curve.txt", tlog.losses);
    }
    auto model = ImgDiffModel::create(sc.img, &trunk.unet);
    MixedView view{&ds, ds.select("", "train")};
    auto log = train_imgdiff(model, view, sc.img.steps);
    auto ckpt_path = (fs::path(out) / "imgdiff.ckpt").string();
    model.to_checkpoint().save(ckpt_path);
    write_losses(fs::path(out) / "training_curve.txt", log.losses);
    std::cout << "imgdiff(" << to_string(model.cfg.fusion) << "): " << log.losses.size()
              << " steps, final loss " << (log.losses.empty() ? 0.f : log.losses.back()) << "\n";

    rm.command = "train-img";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("dataset", (fs::path(data) / "manifest.json").string());
    rm.add_output("imgdiff.ckpt", ckpt_path);
    if (!trunk_path.empty()) rm.add_output("trunk.ckpt", trunk_path);
    rm.save(out);
    return 0;
}

int cmd_sim2real(const RunConfig& rc, const std::string& ckpt, const std::string& data,
                 const std::string& out, const std::string& split, int count) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto model = CondDiffModel::from_checkpoint(Checkpoint::load(ckpt));
    auto ds = LoadedDataset::load(data);
    auto idx = ds.select("sim", split);
    SIMGEN_REQUIRE(!idx.empty(), stats, "no simulator samples in split '" << split << "'");
    if (count > 0 && idx.size() > size_t(count)) idx.resize(size_t(count));

    RunManifest rm;
    rm.command = "sim2real";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("condiff", ckpt);
    rm.add_input("dataset", (fs::path(data) / "manifest.json").string());

    double iou_sum = 0, bg_rise_sum = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
        const auto& s = ds.samples[idx[k]];
        auto res = sim2real(model, s.simcond, s.meta.caption, sc.t_s, derived_seed(sc.seed, k),
                            sc.sample_steps, sc.cfg_scale);
        std::string stem = s.meta.id + "_realcond";
        save_condition(out, stem, res.image);
        rm.add_output(stem + "_depth.pgm", (fs::path(out) / (stem + "_depth.pgm")).string());
        rm.add_output(stem + "_seg.ppm", (fs::path(out) / (stem + "_seg.ppm")).string());
        auto in_cls = s.simcond.seg_classes();
        auto out_cls = res.image.seg_classes();
        iou_sum += foreground_iou(in_cls, out_cls);
        bg_rise_sum += background_fraction(out_cls) - background_fraction(in_cls);
    }
    double miou = iou_sum / double(idx.size());
    double bg = bg_rise_sum / double(idx.size());
    std::cout << "sim2real: " << idx.size() << " scenes, fg IoU " << miou << ", background rise "
              << bg * 100 << " pp\n";
    rm.extra = {{"scenes", idx.size()}, {"fg_iou", miou}, {"bg_rise_pp", bg * 100}};
    rm.save(out);
    return 0;
}

int cmd_sample(const RunConfig& rc, const std::string& img_ckpt, const std::string& cond_ckpt,
               const std::string& data, const std::string& scene_file,
               const std::string& cond_dir, const std::string& out, int count, bool direct,
               bool extracond, double scene_t, const std::string& sa_split) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto model = ImgDiffModel::from_checkpoint(Checkpoint::load(img_ckpt));
    std::optional<CondDiffModel> condiff;
    if (!cond_ckpt.empty()) condiff = CondDiffModel::from_checkpoint(Checkpoint::load(cond_ckpt));

    RunManifest rm;
    rm.command = "sample";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("imgdiff", img_ckpt);
    if (!cond_ckpt.empty()) rm.add_input("condiff", cond_ckpt);

    auto emit = [&](const std::string& stem, const ImageF& img) {
        auto p = (fs::path(out) / (stem + ".ppm")).string();
        write_ppm(p, img);
        rm.add_output(stem + ".ppm", p);
    };

    if (!scene_file.empty()) {
        // generate straight from a scene record
        auto rec = load_scene(scene_file);
        rm.add_input("scene", scene_file);
        auto cam = CameraSpec::for_size(model.cfg.h, model.cfg.w);
        auto ws = step_scene(rec, scene_t, StepPolicy::replay);
        auto plain = render_front(ws, cam, RenderMode::plain, sc.seed);
        auto simcond = ConditionImage::from_frame(plain, Provenance::sim);
        ConditionImage cond = simcond;
        if (!direct) {
            SIMGEN_REQUIRE(condiff.has_value(), config,
                           "scene sampling without --direct needs --cond");
            cond = sim2real(*condiff, simcond, caption_from_record(rec), sc.t_s,
                            derived_seed(sc.seed, 1), sc.sample_steps, sc.cfg_scale)
                       .image;
        }
        ExtraCond extra;
        if (extracond) {
            extra.rendered_rgb = plain.rgb;
            extra.instance = plain.instance;
            extra.topdown = render_topdown(ws, 48.0, 64);
            extra.semantic.assign(plain.semantic.begin(), plain.semantic.end());
        }
        auto stack = build_condition_stack(cond, extracond ? &extra : nullptr);
        auto img = generate(model, stack, caption_from_record(rec), sc.sample_steps, sc.cfg_scale,
                            derived_seed(sc.seed, 2));
        emit("sample_scene", img);
    } else if (!cond_dir.empty()) {
        // stored conditions: every *_depth.pgm with its *_seg.ppm twin
        std::vector<std::string> stems;
        for (auto& e : fs::directory_iterator(cond_dir)) {
            auto name = e.path().filename().string();
            auto pos = name.rfind("_depth.pgm");
            if (pos != std::string::npos) stems.push_back(name.substr(0, pos));
        }
        std::sort(stems.begin(), stems.end());
        SIMGEN_REQUIRE(!stems.empty(), io, "no condition pairs under " << cond_dir);
        if (count > 0 && stems.size() > size_t(count)) stems.resize(size_t(count));
        for (size_t k = 0; k < stems.size(); ++k) {
            auto cond = load_condition(cond_dir, stems[k], Provenance::generated);
            auto stack = build_condition_stack(cond, nullptr);
            auto img = generate(model, stack, "", sc.sample_steps, sc.cfg_scale,
                                derived_seed(sc.seed, k));
            emit(stems[k] + "_rgb", img);
        }
    } else {
        SIMGEN_REQUIRE(!data.empty(), config, "sample needs --data, --scene, or --conditions");
        auto ds = LoadedDataset::load(data);
        rm.add_input("dataset", (fs::path(data) / "manifest.json").string());
        auto idx = ds.select("sim", sa_split);
        SIMGEN_REQUIRE(!idx.empty(), stats, "dataset has no simulator samples");
        if (count > 0 && idx.size() > size_t(count)) idx.resize(size_t(count));
        for (size_t k = 0; k < idx.size(); ++k) {
            const auto& s = ds.samples[idx[k]];
            CascadeOptions opt;
            opt.use_cascade = !direct;
            opt.use_extracond = extracond;
            opt.t_s = sc.t_s;
            opt.cond_steps = sc.sample_steps;
            opt.cond_cfg = sc.cfg_scale;
            opt.img_steps = sc.sample_steps;
            opt.img_cfg = sc.cfg_scale;
            opt.seed = derived_seed(sc.seed, k);
            if (!direct)
                SIMGEN_REQUIRE(condiff.has_value(), config, "cascade sampling needs --cond");
            auto img = generate_from_sample(condiff ? &*condiff : nullptr, model, s, opt);
            emit(s.meta.id + "_gen", img);
        }
    }
    rm.save(out);
    return 0;
}

int cmd_scenario(const RunConfig& rc, bool adversarial, const std::string& scene_file,
                 uint64_t gen_seed, bool have_gen, const std::string& out, double t,
                 int adversary, double horizon, int modes) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    RunManifest rm;
    rm.command = adversarial ? "scenario adversarial" : "scenario replay";
    rm.config = rc.to_json();
    rm.seed = sc.seed;

    SceneRecord rec;
    if (have_gen) {
        SceneConfig scfg;
        scfg.duration = sc.build.duration;
        scfg.density = 0.5 * (sc.build.density_lo + sc.build.density_hi);
        rec = generate_procedural_scene(gen_seed, scfg);
    } else {
        SIMGEN_REQUIRE(!scene_file.empty(), config, "scenario needs --scene or --gen");
        rec = load_scene(scene_file);
        rm.add_input("scene", scene_file);
    }

    if (adversarial) {
        int adv = adversary;
        if (adv < 0) adv = nearest_vehicle_adversary(rec);
        SIMGEN_REQUIRE(adv > 0, perturbation, "no adversary candidate vehicle in the scene");
        auto res = adversarial_perturb(rec, adv, horizon, modes);
        rec = res.record;
        nlohmann::json scores = nlohmann::json::array();
        for (auto& s : res.scores)
            scores.push_back({{"mode", to_string(s.mode)},
                              {"min_dist", s.min_dist},
                              {"min_time", s.min_time}});
        rm.extra = {{"adversary", adv}, {"chosen", to_string(res.chosen)}, {"scores", scores}};
        std::cout << "adversarial: chose " << to_string(res.chosen) << "\n";
    }

    auto rec_path = (fs::path(out) / "scene.json").string();
    save_scene(rec, rec_path);
    rm.add_output("scene.json", rec_path);

    auto cam = CameraSpec::for_size(sc.build.height, sc.build.width);
    auto ws =
        step_scene(rec, t, adversarial ? StepPolicy::adversarial_overlay : StepPolicy::replay);
    auto plain = render_front(ws, cam, RenderMode::plain, sc.seed);
    auto cond = ConditionImage::from_frame(plain, Provenance::sim);
    save_condition(out, "simcond", cond);
    write_ppm((fs::path(out) / "sim_rgb.ppm").string(), plain.rgb);
    detail_data::write_instance_map((fs::path(out) / "instance.pgm").string(), plain.instance,
                                    plain.h, plain.w);
    auto td = render_topdown(ws, sc.build.topdown_extent, sc.build.topdown_res);
    write_ppm((fs::path(out) / "topdown.ppm").string(), td);
    for (auto& f :
         {"simcond_depth.pgm", "simcond_seg.ppm", "sim_rgb.ppm", "instance.pgm", "topdown.ppm"})
        rm.add_output(f, (fs::path(out) / f).string());
    rm.save(out);
    return 0;
}

int cmd_eval_fid(const RunConfig& rc, const std::string& data, const std::string& real_dir,
                 const std::string& gen_dir, const std::string& ext_ckpt, const std::string& out) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    RunManifest rm;
    rm.command = "eval fid";
    rm.config = rc.to_json();
    rm.seed = sc.seed;

    FeatureExtractor ext = FeatureExtractor::create(sc.ext);
    if (!ext_ckpt.empty()) {
        ext = FeatureExtractor::from_checkpoint(Checkpoint::load(ext_ckpt));
        rm.add_input("extractor", ext_ckpt);
    } else {
        SIMGEN_REQUIRE(!data.empty(), config, "eval fid needs --extractor or --data to train one");
        auto ds = LoadedDataset::load(data);
        ext = train_extractor_stage(ds, sc.ext);
        auto p = (fs::path(out) / "extractor.ckpt").string();
        ext.to_checkpoint().save(p);
        rm.add_output("extractor.ckpt", p);
    }
    std::vector<ImageF> reference;
    if (!real_dir.empty()) {
        reference = load_image_dir(real_dir);
    } else {
        SIMGEN_REQUIRE(!data.empty(), config, "eval fid needs --real or --data");
        auto ds = LoadedDataset::load(data);
        reference = real_reference_images(ds, "val");
        if (reference.size() < size_t(sc.ext.feat_dim + 1))
            reference = real_reference_images(ds, "");
    }
    auto generated = load_image_dir(gen_dir);
    double fid = fid_between(ext, reference, generated);
    MetricsReport rep;
    rep.fid_lite = fid;
    rep.samples = int64_t(generated.size());
    rep.extractor_hash = hex64(ext.version_hash());
    rep.config_hash = hex64(fnv1a(rc.to_json().dump()));
    std::cout << "fid-lite: " << fid << " (extractor " << rep.extractor_hash << ")\n";
    write_text(fs::path(out) / "report.json", rep.to_json().dump(1) + "\n");
    rm.add_output("report.json", (fs::path(out) / "report.json").string());
    rm.save(out);
    return 0;
}

int cmd_eval_dpix(const RunConfig& rc, const std::string& gen_dir, const std::string& out) {
    fs::create_directories(out);
    auto images = load_image_dir(gen_dir);
    double v = d_pix(images);
    MetricsReport rep;
    rep.d_pix = v;
    rep.samples = int64_t(images.size());
    rep.config_hash = hex64(fnv1a(rc.to_json().dump()));
    std::cout << "d_pix: " << v << " over " << images.size() << " images\n";
    write_text(fs::path(out) / "report.json", rep.to_json().dump(1) + "\n");
    RunManifest rm;
    rm.command = "eval dpix";
    rm.config = rc.to_json();
    rm.add_output("report.json", (fs::path(out) / "report.json").string());
    rm.save(out);
    return 0;
}

int cmd_eval_control(const RunConfig& rc, const std::string& data, const std::string& img_ckpt,
                     const std::string& cond_ckpt, const std::string& out) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto ds = LoadedDataset::load(data);
    auto img = ImgDiffModel::from_checkpoint(Checkpoint::load(img_ckpt));
    auto cond = CondDiffModel::from_checkpoint(Checkpoint::load(cond_ckpt));
    auto perception = train_perception_stage(ds, sc.per);

    auto scenes = ds.select("sim", "val");
    if (scenes.empty()) scenes = ds.select("sim", "");
    if (scenes.size() > size_t(sc.eval_scenes)) scenes.resize(size_t(sc.eval_scenes));
    CascadeOptions opt;
    opt.t_s = sc.t_s;
    opt.cond_steps = sc.sample_steps;
    opt.cond_cfg = sc.cfg_scale;
    opt.img_steps = sc.sample_steps;
    opt.img_cfg = sc.cfg_scale;
    opt.seed = sc.seed;
    auto rep = run_controllability_eval(&cond, img, perception, ds, scenes, opt);
    std::cout << "controllability: oracle vehicle IoU " << rep.oracle.miou_per_class.at("vehicle")
              << ", matched " << rep.matched.miou_per_class.at("vehicle") << ", shuffled "
              << rep.shuffled.miou_per_class.at("vehicle") << "\n";
    write_text(fs::path(out) / "report.json", rep.to_json().dump(1) + "\n");
    RunManifest rm;
    rm.command = "eval control";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("dataset", (fs::path(data) / "manifest.json").string());
    rm.add_input("imgdiff", img_ckpt);
    rm.add_input("condiff", cond_ckpt);
    rm.add_output("report.json", (fs::path(out) / "report.json").string());
    rm.extra = rep.to_json();
    rm.save(out);
    return 0;
}

int cmd_eval_augment(const RunConfig& rc, const std::string& data, const std::string& img_ckpt,
                     const std::string& cond_ckpt, const std::string& out) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto ds = LoadedDataset::load(data);
    auto img = ImgDiffModel::from_checkpoint(Checkpoint::load(img_ckpt));
    auto cond = CondDiffModel::from_checkpoint(Checkpoint::load(cond_ckpt));

    // real arm: real train frames; generated arm: cascade renders of sim
    // train scenes labelled by their paired enriched semantics
    SegSet real_train, generated, test;
    auto real_idx = ds.select("real", "train");
    auto sim_idx = ds.select("sim", "train");
    auto test_idx = ds.select("real", "val");
    SIMGEN_REQUIRE(!real_idx.empty() && !sim_idx.empty() && !test_idx.empty(), stats,
                   "augmentation eval needs real train, sim train, and real val samples");
    size_t n = std::min({real_idx.size(), sim_idx.size(), size_t(sc.eval_scenes)});
    for (size_t i = 0; i < n; ++i) {
        real_train.images.push_back(ds.samples[real_idx[i]].rgb);
        real_train.labels.push_back(ds.samples[real_idx[i]].real_sem);
    }
    for (size_t i = 0; i < n; ++i) {
        const auto& s = ds.samples[sim_idx[i]];
        CascadeOptions opt;
        opt.t_s = sc.t_s;
        opt.cond_steps = sc.sample_steps;
        opt.cond_cfg = sc.cfg_scale;
        opt.img_steps = sc.sample_steps;
        opt.img_cfg = sc.cfg_scale;
        opt.seed = derived_seed(sc.seed, i);
        generated.images.push_back(generate_from_sample(&cond, img, s, opt));
        generated.labels.push_back(s.real_sem);
    }
    for (size_t i : test_idx) {
        test.images.push_back(ds.samples[i].rgb);
        test.labels.push_back(ds.samples[i].real_sem);
    }
    auto rep = run_augmentation_eval(real_train, generated, test, sc.per);
    std::cout << "augmentation: baseline vehicle IoU " << rep.baseline_vehicle_iou
              << ", augmented " << rep.augmented_vehicle_iou << "\n";
    write_text(fs::path(out) / "report.json", rep.to_json().dump(1) + "\n");
    RunManifest rm;
    rm.command = "eval augment";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("dataset", (fs::path(data) / "manifest.json").string());
    rm.add_input("imgdiff", img_ckpt);
    rm.add_input("condiff", cond_ckpt);
    rm.add_output("report.json", (fs::path(out) / "report.json").string());
    rm.extra = rep.to_json();
    rm.save(out);
    return 0;
}

int cmd_eval_ablate(const RunConfig& rc, const std::string& data, const std::string& out) {
    auto sc = stage_configs(rc);
    fs::create_directories(out);
    auto ds = LoadedDataset::load(data);
    auto res = run_ablation(ds, sc);
    std::cout << ablation_table_text(res.rows);
    write_text(fs::path(out) / "report.json", res.to_json().dump(1) + "\n");
    write_text(fs::path(out) / "table.txt", ablation_table_text(res.rows));
    RunManifest rm;
    rm.command = "eval ablate";
    rm.config = rc.to_json();
    rm.seed = sc.seed;
    rm.add_input("dataset", (fs::path(data) / "manifest.json").string());
    rm.add_output("report.json", (fs::path(out) / "report.json").string());
    rm.add_output("table.txt", (fs::path(out) / "table.txt").string());
    rm.save(out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulator-conditioned cascade diffusion pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--set/--seed are valid after the subcommand too

    std::string config_file;
    std::vector<std::string> overrides;
    app.add_option("--config", config_file, "key = value configuration file");
    app.add_option("--set", overrides, "override a configuration key (key=value)");
    uint64_t seed_flag = 0;
    bool have_seed = false;
    app.add_option("--seed", seed_flag, "run seed (shorthand for --set seed=N)")
        ->each([&](const std::string&) { have_seed = true; });

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "build the dataset corpus");
    std::string gd_out, gd_cell;
    std::vector<int> gd_sizes;
    gen->add_option("--out", gd_out, "output directory")->required();
    gen->add_option("--sizes", gd_sizes, "real and sim frame counts")->expected(2);
    gen->add_option("--cell", gd_cell, "fix every scene to one weather,time,setting cell");

    // train-cond
    auto* tc = app.add_subcommand("train-cond", "train the text-to-RealCond model");
    std::string tc_data, tc_out;
    int tc_steps = -1;
    tc->add_option("--data", tc_data, "dataset directory")->required();
    tc->add_option("--out", tc_out, "output directory")->required();
    tc->add_option("--steps", tc_steps, "training steps (overrides train.steps)");

    // train-img
    auto* ti = app.add_subcommand("train-img", "pre-train the trunk then graft ImgDiff");
    std::string ti_data, ti_out, ti_trunk, ti_fusion;
    int ti_steps = -1, ti_trunk_steps = -1, ti_extra = -1;
    ti->add_option("--data", ti_data, "dataset directory")->required();
    ti->add_option("--out", ti_out, "output directory")->required();
    ti->add_option("--trunk", ti_trunk, "reuse a pre-trained trunk checkpoint");
    ti->add_option("--trunk-steps", ti_trunk_steps, "trunk pre-training steps");
    ti->add_option("--steps", ti_steps, "grafted fine-tuning steps");
    ti->add_option("--fusion", ti_fusion, "adapter | concat");
    ti->add_option("--extracond", ti_extra, "train with ExtraCond slots (0/1)");

    // sim2real
    auto* s2r = app.add_subcommand("sim2real", "batch sim-to-real condition transformation");
    std::string s2_ckpt, s2_data, s2_out, s2_split = "val";
    int s2_count = 0;
    double s2_ts = -1;
    s2r->add_option("--ckpt", s2_ckpt, "condiff checkpoint")->required();
    s2r->add_option("--data", s2_data, "dataset directory")->required();
    s2r->add_option("--out", s2_out, "output directory")->required();
    s2r->add_option("--split", s2_split, "dataset split (train|val)");
    s2r->add_option("--count", s2_count, "max scenes");
    s2r->add_option("--ts", s2_ts, "injection time t_s in (0,1)");

    // sample
    auto* sa = app.add_subcommand("sample", "generate images");
    std::string sa_img, sa_cond, sa_data, sa_scene, sa_conddir, sa_out;
    int sa_count = 0;
    bool sa_direct = false, sa_extra = false;
    double sa_t = 1.0;
    sa->add_option("--img", sa_img, "imgdiff checkpoint")->required();
    sa->add_option("--cond", sa_cond, "condiff checkpoint (cascade)");
    sa->add_option("--data", sa_data, "dataset directory");
    sa->add_option("--scene", sa_scene, "scene record file");
    sa->add_option("--conditions", sa_conddir, "directory of stored condition pairs");
    sa->add_option("--out", sa_out, "output directory")->required();
    sa->add_option("--count", sa_count, "max images");
    sa->add_flag("--direct", sa_direct, "skip the cascade, condition on raw SimCond");
    sa->add_flag("--extracond", sa_extra, "feed ExtraCond slots");
    sa->add_option("--t", sa_t, "scene time for --scene");
    std::string sa_split;
    sa->add_option("--split", sa_split, "restrict dataset scenes to a split (train|val)");

    // scenario
    auto* sc_cmd = app.add_subcommand("scenario", "simulator tools");
    sc_cmd->require_subcommand(1);
    auto* sc_rep = sc_cmd->add_subcommand("replay", "replay a scene and emit condition rasters");
    auto* sc_adv = sc_cmd->add_subcommand("adversarial", "perturb an adversary then replay");
    std::string sr_scene, sr_out;
    uint64_t sr_gen = 0;
    bool sr_have_gen = false;
    double sr_t = 1.0, sr_horizon = 5.0;
    int sr_adv = -1, sr_modes = 6;
    for (auto* c : {sc_rep, sc_adv}) {
        c->add_option("--scene", sr_scene, "scene record file");
        c->add_option("--gen", sr_gen, "generate a procedural scene with this seed")
            ->each([&](const std::string&) { sr_have_gen = true; });
        c->add_option("--out", sr_out, "output directory")->required();
        c->add_option("--t", sr_t, "scene time");
    }
    sc_adv->add_option("--adversary", sr_adv, "adversary object id (default: first vehicle)");
    sc_adv->add_option("--horizon", sr_horizon, "scoring horizon in seconds");
    sc_adv->add_option("--modes", sr_modes, "number of candidate modes (1-6)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluation suites");
    ev->require_subcommand(1);
    auto* ev_fid = ev->add_subcommand("fid", "FID-lite between real and generated images");
    auto* ev_dpix = ev->add_subcommand("dpix", "pixel-diversity of generated images");
    auto* ev_ctl = ev->add_subcommand("control", "controllability with the toy perception");
    auto* ev_aug = ev->add_subcommand("augment", "data-augmentation comparison");
    auto* ev_abl = ev->add_subcommand("ablate", "four-row cascade/extracond/adapter table");
    std::string ef_data, ef_real, ef_gen, ef_ext, ef_out;
    ev_fid->add_option("--data", ef_data, "dataset directory (reference + extractor training)");
    ev_fid->add_option("--real", ef_real, "reference image directory");
    ev_fid->add_option("--gen", ef_gen, "generated image directory")->required();
    ev_fid->add_option("--extractor", ef_ext, "pinned extractor checkpoint");
    ev_fid->add_option("--out", ef_out, "output directory")->required();
    std::string ed_gen, ed_out;
    ev_dpix->add_option("--gen", ed_gen, "generated image directory")->required();
    ev_dpix->add_option("--out", ed_out, "output directory")->required();
    std::string ec_data, ec_img, ec_cond, ec_out;
    for (auto* c : {ev_ctl, ev_aug}) {
        c->add_option("--data", ec_data, "dataset directory")->required();
        c->add_option("--img", ec_img, "imgdiff checkpoint")->required();
        c->add_option("--cond", ec_cond, "condiff checkpoint")->required();
        c->add_option("--out", ec_out, "output directory")->required();
    }
    std::string ea_data, ea_out;
    ev_abl->add_option("--data", ea_data, "dataset directory")->required();
    ev_abl->add_option("--out", ea_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    try {
        RunConfig rc;
        if (!config_file.empty()) rc.load_file(config_file);
        for (auto& kv : overrides) {
            auto eq = kv.find('=');
            SIMGEN_REQUIRE(eq != std::string::npos, config, "--set expects key=value");
            rc.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (have_seed) rc.set("seed", std::to_string(seed_flag));

        if (*gen) {
            if (gd_sizes.size() == 2) {
                rc.set("data.real", std::to_string(gd_sizes[0]));
                rc.set("data.sim", std::to_string(gd_sizes[1]));
            }
            return cmd_gen_data(rc, gd_out, gd_cell);
        }
        if (*tc) {
            if (tc_steps >= 0) rc.set("train.steps", std::to_string(tc_steps));
            return cmd_train_cond(rc, tc_data, tc_out);
        }
        if (*ti) {
            if (ti_steps >= 0) rc.set("imgdiff.steps", std::to_string(ti_steps));
            if (ti_trunk_steps >= 0) rc.set("trunk.steps", std::to_string(ti_trunk_steps));
            if (!ti_fusion.empty()) rc.set("imgdiff.fusion", ti_fusion);
            if (ti_extra >= 0) rc.set("imgdiff.extracond", std::to_string(ti_extra));
            return cmd_train_img(rc, ti_data, ti_out, ti_trunk);
        }
        if (*s2r) {
            if (s2_ts >= 0) rc.set("sim2real.ts", std::to_string(s2_ts));
            return cmd_sim2real(rc, s2_ckpt, s2_data, s2_out, s2_split, s2_count);
        }
        if (*sa)
            return cmd_sample(rc, sa_img, sa_cond, sa_data, sa_scene, sa_conddir, sa_out, sa_count,
                              sa_direct, sa_extra, sa_t, sa_split);
        if (*sc_cmd)
            return cmd_scenario(rc, sc_adv->parsed(), sr_scene, sr_gen, sr_have_gen, sr_out, sr_t,
                                sr_adv, sr_horizon, sr_modes);
        if (*ev_fid) return cmd_eval_fid(rc, ef_data, ef_real, ef_gen, ef_ext, ef_out);
        if (*ev_dpix) return cmd_eval_dpix(rc, ed_gen, ed_out);
        if (*ev_ctl) return cmd_eval_control(rc, ec_data, ec_img, ec_cond, ec_out);
        if (*ev_aug) return cmd_eval_augment(rc, ec_data, ec_img, ec_cond, ec_out);
        if (*ev_abl) return cmd_eval_ablate(rc, ea_data, ea_out);
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
