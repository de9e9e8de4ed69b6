#pragma once

#include "simgen/config.hpp"
#include "simgen/dataset.hpp"
#include "simgen/evalsuite.hpp"

namespace simgen {

// All stage configurations resolved from one RunConfig.
struct StageConfigs {
    BuildConfig build;
    CondDiffConfig cond;
    TrunkConfig trunk;
    ImgDiffConfig img;
    ExtractorConfig ext;
    PerceptionConfig per;
    int sample_steps = 50;
    double cfg_scale = 9.5;
    double t_s = 0.5;
    int eval_scenes = 32;
    uint64_t seed = 0;
};

inline StageConfigs stage_configs(const RunConfig& rc) {
    StageConfigs s;
    s.seed = rc.getu("seed");
    int h = rc.geti("res.h"), w = rc.geti("res.w");

    s.build.n_real = rc.geti("data.real");
    s.build.n_sim = rc.geti("data.sim");
    s.build.frames_per_scene = rc.geti("data.frames_per_scene");
    s.build.height = h;
    s.build.width = w;
    s.build.seed = s.seed;
    s.build.duration = rc.getd("data.duration");
    s.build.density_lo = rc.getd("data.density_lo");
    s.build.density_hi = rc.getd("data.density_hi");

    UNetConfig unet;
    unet.base = rc.geti("unet.base");
    unet.groups = rc.geti("unet.groups");
    unet.time_dim = rc.geti("unet.time_dim");
    unet.text_dim = rc.geti("unet.text_dim");
    unet.cond_dim = rc.geti("unet.cond_dim");

    s.cond.h = h;
    s.cond.w = w;
    s.cond.T = rc.geti("diffusion.T");
    s.cond.kind = schedule_kind_from_string(rc.gets("diffusion.schedule"));
    s.cond.unet = unet;
    s.cond.steps = rc.geti("train.steps");
    s.cond.batch = rc.geti("train.batch");
    s.cond.lr = float(rc.getd("train.lr"));
    s.cond.weight_decay = float(rc.getd("train.wd"));
    s.cond.gamma_c = rc.getd("gamma.c");
    s.cond.seed = s.seed;

    s.trunk.h = h;
    s.trunk.w = w;
    s.trunk.T = s.cond.T;
    s.trunk.kind = s.cond.kind;
    s.trunk.unet = unet;
    s.trunk.steps = rc.geti("trunk.steps");
    s.trunk.batch = s.cond.batch;
    s.trunk.lr = s.cond.lr;
    s.trunk.weight_decay = s.cond.weight_decay;
    s.trunk.gamma_c = s.cond.gamma_c;
    s.trunk.seed = s.seed;

    s.img.h = h;
    s.img.w = w;
    s.img.T = s.cond.T;
    s.img.kind = s.cond.kind;
    s.img.unet = unet;
    s.img.adapter.branch_ch = rc.geti("adapter.branch");
    s.img.adapter.ctrl_dim = rc.geti("adapter.ctrl");
    s.img.fusion = rc.gets("imgdiff.fusion") == "concat" ? FusionMode::concat
                                                         : FusionMode::adapter;
    s.img.use_extracond = rc.getb("imgdiff.extracond");
    s.img.steps = rc.geti("imgdiff.steps");
    s.img.batch = s.cond.batch;
    s.img.lr = s.cond.lr;
    s.img.weight_decay = s.cond.weight_decay;
    s.img.gamma_c = rc.getd("gamma.c");
    s.img.gamma_b = rc.getd("gamma.b");
    s.img.gamma_n = rc.getd("gamma.n");
    s.img.gamma_p = rc.getd("gamma.p");
    s.img.slice_n = rc.geti("slice.n");
    s.img.seed = s.seed;

    s.ext.h = h;
    s.ext.w = w;
    s.ext.base = rc.geti("extractor.base");
    s.ext.feat_dim = rc.geti("extractor.feat_dim");
    s.ext.steps = rc.geti("extractor.steps");
    s.ext.batch = rc.geti("extractor.batch");
    s.ext.seed = s.seed;

    s.per.h = h;
    s.per.w = w;
    s.per.base = rc.geti("perception.base");
    s.per.steps = rc.geti("perception.steps");
    s.per.batch = rc.geti("perception.batch");
    s.per.seed = s.seed;

    s.sample_steps = rc.geti("sample.steps");
    s.cfg_scale = rc.getd("sample.cfg");
    s.t_s = rc.getd("sim2real.ts");
    s.eval_scenes = rc.geti("eval.scenes");
    return s;
}

// labelled view for the extractor
struct MetaLabelView {
    const LoadedDataset* ds;
    std::vector<size_t> idx;
    size_t size() const { return idx.size(); }
    const ImageF& image(size_t i) const { return ds->samples[idx[i]].rgb; }
    std::vector<float> label(size_t i) const {
        const auto& m = ds->samples[idx[i]].meta;
        return meta_label(weather_from_string(m.weather), time_from_string(m.time_of_day),
                          setting_from_string(m.setting));
    }
};

// segmentation view over enriched renders
struct SegView {
    const LoadedDataset* ds;
    std::vector<size_t> idx;
    size_t size() const { return idx.size(); }
    const ImageF& image(size_t i) const { return ds->samples[idx[i]].rgb; }
    const std::vector<uint8_t>& classes(size_t i) const { return ds->samples[idx[i]].real_sem; }
};

inline CondDiffModel train_condiff_stage(const LoadedDataset& ds, CondDiffConfig cfg, int steps) {
    auto model = CondDiffModel::create(cfg);
    CondView view{&ds, ds.select("real", "train")};
    train_condiff(model, view, steps);
    return model;
}

inline TrunkModel train_trunk_stage(const LoadedDataset& ds, TrunkConfig cfg, int steps) {
    auto model = TrunkModel::create(cfg);
    RgbView view{&ds, ds.select("real", "train")};
    train_trunk(model, view, steps);
    return model;
}

inline ImgDiffModel train_imgdiff_stage(const LoadedDataset& ds, ImgDiffConfig cfg,
                                        const TrunkModel& trunk, int steps) {
    auto model = ImgDiffModel::create(cfg, &trunk.unet);
    MixedView view{&ds, ds.select("", "train")};
    train_imgdiff(model, view, steps);
    return model;
}

inline FeatureExtractor train_extractor_stage(const LoadedDataset& ds, ExtractorConfig cfg) {
    auto model = FeatureExtractor::create(cfg);
    MetaLabelView view{&ds, ds.select("real", "train")};
    train_extractor(model, view, cfg.steps);
    return model;
}

inline ToyPerception train_perception_stage(const LoadedDataset& ds, PerceptionConfig cfg) {
    auto model = ToyPerception::create(cfg);
    SegView view{&ds, ds.select("real", "train")};
    train_perception(model, view, cfg.steps);
    return model;
}

inline std::vector<ImageF> real_reference_images(const LoadedDataset& ds, const std::string& split,
                                                 size_t cap = 0) {
    std::vector<ImageF> out;
    for (size_t i : ds.select("real", split)) {
        out.push_back(ds.samples[i].rgb);
        if (cap && out.size() >= cap) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Table-5-shaped ablation: baseline-direct, +cascade, +extracond, +adapter
// ---------------------------------------------------------------------------

struct AblationResult {
    std::vector<AblationRow> rows;
    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (auto& r : rows)
            arr.push_back({{"name", r.name}, {"fid_lite", r.fid_lite}, {"ap_lite", r.ap_lite}});
        return arr;
    }
};

struct AblationArm {
    const ImgDiffModel* model;
    bool cascade;
    bool extracond;
};

inline AblationRow evaluate_arm(const std::string& name, const AblationArm& arm,
                                const CondDiffModel& condiff, const FeatureExtractor& ext,
                                const ToyPerception& perception,
                                const std::vector<ImageF>& reference, const LoadedDataset& ds,
                                const std::vector<size_t>& scenes, const StageConfigs& sc,
                                uint64_t seed) {
    std::vector<ImageF> generated;
    std::vector<std::pair<std::vector<DetBox>, std::vector<DetBox>>> detections;
    for (size_t k = 0; k < scenes.size(); ++k) {
        const auto& sample = ds.samples[scenes[k]];
        CascadeOptions opt;
        opt.use_cascade = arm.cascade;
        opt.use_extracond = arm.extracond;
        opt.t_s = sc.t_s;
        opt.cond_steps = sc.sample_steps;
        opt.cond_cfg = sc.cfg_scale;
        opt.img_steps = sc.sample_steps;
        opt.img_cfg = sc.cfg_scale;
        opt.seed = seed + k * 977;
        generated.push_back(generate_from_sample(&condiff, *arm.model, sample, opt));
        auto pred = perception.vehicle_boxes(generated.back());
        auto gt = gt_vehicle_boxes(sample.extra->instance, sample.extra->semantic,
                                   sample.simcond.h, sample.simcond.w);
        detections.push_back({pred, gt});
    }
    AblationRow row;
    row.name = name;
    row.fid_lite = fid_between(ext, reference, generated);
    row.ap_lite = ap_lite_pooled(detections);
    return row;
}

struct AblationModels {
    CondDiffModel condiff;
    TrunkModel trunk;
    ImgDiffModel concat_realcond;   // rows 1-2
    ImgDiffModel concat_extracond;  // row 3
    ImgDiffModel adapter_extracond; // row 4
    FeatureExtractor extractor;
    ToyPerception perception;
};

inline AblationModels train_ablation_models(const LoadedDataset& ds, const StageConfigs& sc) {
    AblationModels m{CondDiffModel::create(sc.cond),
                     TrunkModel::create(sc.trunk),
                     ImgDiffModel::create(sc.img),
                     ImgDiffModel::create(sc.img),
                     ImgDiffModel::create(sc.img),
                     FeatureExtractor::create(sc.ext),
                     ToyPerception::create(sc.per)};
    m.condiff = train_condiff_stage(ds, sc.cond, sc.cond.steps);
    m.trunk = train_trunk_stage(ds, sc.trunk, sc.trunk.steps);
    auto cfg_cc = sc.img;
    cfg_cc.fusion = FusionMode::concat;
    cfg_cc.use_extracond = false;
    m.concat_realcond = train_imgdiff_stage(ds, cfg_cc, m.trunk, sc.img.steps);
    auto cfg_ce = sc.img;
    cfg_ce.fusion = FusionMode::concat;
    cfg_ce.use_extracond = true;
    m.concat_extracond = train_imgdiff_stage(ds, cfg_ce, m.trunk, sc.img.steps);
    auto cfg_ad = sc.img;
    cfg_ad.fusion = FusionMode::adapter;
    cfg_ad.use_extracond = true;
    m.adapter_extracond = train_imgdiff_stage(ds, cfg_ad, m.trunk, sc.img.steps);
    m.extractor = train_extractor_stage(ds, sc.ext);
    m.perception = train_perception_stage(ds, sc.per);
    return m;
}

inline AblationResult run_ablation(const LoadedDataset& ds, const StageConfigs& sc) {
    auto models = train_ablation_models(ds, sc);
    auto scenes = ds.select("sim", "val");
    if (scenes.size() < size_t(sc.ext.feat_dim + 1)) scenes = ds.select("sim", "");
    if (scenes.size() > size_t(sc.eval_scenes)) scenes.resize(size_t(sc.eval_scenes));
    SIMGEN_REQUIRE(int(scenes.size()) >= sc.ext.feat_dim + 1, stats,
                   "ablation needs at least feat_dim+1 simulator scenes for the FID fit");
    auto reference = real_reference_images(ds, "val");
    if (reference.size() < size_t(sc.ext.feat_dim + 1))
        reference = real_reference_images(ds, "");
    AblationResult res;
    res.rows.push_back(evaluate_arm("baseline", {&models.concat_realcond, false, false},
                                    models.condiff, models.extractor, models.perception,
                                    reference, ds, scenes, sc, sc.seed + 11));
    res.rows.push_back(evaluate_arm("+cascade", {&models.concat_realcond, true, false},
                                    models.condiff, models.extractor, models.perception,
                                    reference, ds, scenes, sc, sc.seed + 11));
    res.rows.push_back(evaluate_arm("+extracond", {&models.concat_extracond, true, true},
                                    models.condiff, models.extractor, models.perception,
                                    reference, ds, scenes, sc, sc.seed + 11));
    res.rows.push_back(evaluate_arm("+adapter", {&models.adapter_extracond, true, true},
                                    models.condiff, models.extractor, models.perception,
                                    reference, ds, scenes, sc, sc.seed + 11));
    return res;
}

}  // namespace simgen
