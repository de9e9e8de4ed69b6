#pragma once

#include <map>
#include <string>
#include <vector>

#include "simgen/dataset.hpp"
#include "simgen/features.hpp"
#include "simgen/imgdiff.hpp"
#include "simgen/metrics.hpp"
#include "simgen/perception.hpp"

namespace simgen {

struct MetricsReport {
    double fid_lite = -1;
    double d_pix = -1;
    std::map<std::string, double> miou_per_class;
    double miou_mean = -1;
    double ap_lite = -1;
    int64_t samples = 0;
    std::string config_hash;
    std::string extractor_hash;

    nlohmann::json to_json() const {
        nlohmann::json j;
        if (fid_lite >= 0) j["fid_lite"] = fid_lite;
        if (d_pix >= 0) j["d_pix"] = d_pix;
        if (!miou_per_class.empty()) {
            j["miou"] = miou_per_class;
            j["miou_mean"] = miou_mean;
        }
        if (ap_lite >= 0) j["ap_lite"] = ap_lite;
        j["samples"] = samples;
        if (!config_hash.empty()) j["config_hash"] = config_hash;
        if (!extractor_hash.empty()) j["extractor_hash"] = extractor_hash;
        return j;
    }
};

// dataset-pooled segmentation IoU (per-class intersections and unions
// accumulated over every image before the ratio)
struct PooledMiou {
    std::vector<int64_t> inter = std::vector<int64_t>(kNumSemClasses, 0);
    std::vector<int64_t> uni = std::vector<int64_t>(kNumSemClasses, 0);

    void add(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
        SIMGEN_REQUIRE(pred.size() == gt.size(), shape, "pooled miou: size mismatch");
        for (size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == gt[i]) ++inter[pred[i]];
            ++uni[pred[i]];
            if (pred[i] != gt[i]) ++uni[gt[i]];
        }
    }

    double iou(int cls) const {
        return uni[size_t(cls)] ? double(inter[size_t(cls)]) / double(uni[size_t(cls)]) : 0.0;
    }

    double mean() const {
        double s = 0;
        int n = 0;
        for (int c = 0; c < kNumSemClasses; ++c)
            if (uni[size_t(c)]) {
                s += iou(c);
                ++n;
            }
        return n ? s / n : 0.0;
    }
};

// detection AP pooled across images: per-image greedy matching, global PR
// curve over all scored predictions
inline double ap_lite_pooled(
    const std::vector<std::pair<std::vector<DetBox>, std::vector<DetBox>>>& images,
    double iou_thresh = 0.5) {
    int64_t total_gt = 0;
    std::vector<std::pair<double, int>> scored;  // (score, tp)
    for (auto& [pred_in, gt] : images) {
        total_gt += int64_t(gt.size());
        auto pred = pred_in;
        std::stable_sort(pred.begin(), pred.end(),
                         [](const DetBox& a, const DetBox& b) { return a.score > b.score; });
        std::vector<bool> used(gt.size(), false);
        for (auto& p : pred) {
            double best = iou_thresh;
            int bj = -1;
            for (size_t j = 0; j < gt.size(); ++j) {
                if (used[j]) continue;
                double iou = box_iou(p, gt[j]);
                if (iou >= best) {
                    best = iou;
                    bj = int(j);
                }
            }
            if (bj >= 0) used[size_t(bj)] = true;
            scored.push_back({p.score, bj >= 0 ? 1 : 0});
        }
    }
    if (total_gt == 0) return scored.empty() ? 1.0 : 0.0;
    if (scored.empty()) return 0.0;
    std::stable_sort(scored.begin(), scored.end(),
                     [](auto& a, auto& b) { return a.first > b.first; });
    std::vector<double> recall(scored.size()), precision(scored.size());
    int cum = 0;
    for (size_t i = 0; i < scored.size(); ++i) {
        cum += scored[i].second;
        recall[i] = double(cum) / double(total_gt);
        precision[i] = double(cum) / double(i + 1);
    }
    for (int i = int(scored.size()) - 2; i >= 0; --i)
        precision[size_t(i)] = std::max(precision[size_t(i)], precision[size_t(i) + 1]);
    double ap = 0, prev = 0;
    for (size_t i = 0; i < scored.size(); ++i) {
        ap += (recall[i] - prev) * precision[i];
        prev = recall[i];
    }
    return ap;
}

// ---------------------------------------------------------------------------
// Cascade driver: scene conditions -> (optional sim2real) -> image
// ---------------------------------------------------------------------------

struct CascadeOptions {
    bool use_cascade = true;    // transform SimCond through CondDiff first
    bool use_extracond = false; // feed ExtraCond slots (per-paper default off)
    double t_s = 0.5;
    int cond_steps = 50;
    double cond_cfg = 9.5;
    int img_steps = 50;
    double img_cfg = 9.5;
    uint64_t seed = 0;
};

inline ImageF generate_from_sample(const CondDiffModel* condiff, const ImgDiffModel& imgdiff,
                                   const LoadedSample& sample, const CascadeOptions& opt) {
    SIMGEN_REQUIRE(sample.meta.provenance == "sim", contract,
                   "cascade generation needs a simulator sample");
    ConditionImage cond;
    if (opt.use_cascade) {
        SIMGEN_REQUIRE(condiff != nullptr, contract, "cascade requested without a CondDiff model");
        cond = sim2real(*condiff, sample.simcond, sample.meta.caption, opt.t_s,
                        opt.seed ^ 0xc45c, opt.cond_steps, opt.cond_cfg)
                   .image;
    } else {
        cond = sample.simcond;  // direct SimCond conditioning
    }
    const ExtraCond* extra = (opt.use_extracond && sample.extra) ? &*sample.extra : nullptr;
    auto stack = build_condition_stack(cond, extra);
    return generate(imgdiff, stack, sample.meta.caption, opt.img_steps, opt.img_cfg,
                    opt.seed ^ 0x16d9);
}

// ---------------------------------------------------------------------------
// Controllability evaluation (matched layouts vs the oracle and a shuffled
// negative control)
// ---------------------------------------------------------------------------

struct ControllabilityReport {
    MetricsReport oracle;    // perception on real renders
    MetricsReport matched;   // perception on generated, matched layouts
    MetricsReport shuffled;  // perception on generated, layout-shuffled gt
    double rel_drop_vehicle = 0;  // matched vehicle IoU minus oracle vehicle IoU

    nlohmann::json to_json() const {
        return {{"oracle", oracle.to_json()},
                {"matched", matched.to_json()},
                {"shuffled", shuffled.to_json()},
                {"rel_drop_vehicle", rel_drop_vehicle}};
    }
};

inline ControllabilityReport run_controllability_eval(const CondDiffModel* condiff,
                                                      const ImgDiffModel& imgdiff,
                                                      const ToyPerception& perception,
                                                      const LoadedDataset& ds,
                                                      const std::vector<size_t>& sim_test_idx,
                                                      CascadeOptions opt) {
    SIMGEN_REQUIRE(sim_test_idx.size() >= 2, stats, "controllability eval needs >= 2 scenes");
    ControllabilityReport rep;
    PooledMiou oracle, matched, shuffled;
    std::vector<ImageF> generated;
    for (size_t k = 0; k < sim_test_idx.size(); ++k) {
        const auto& s = ds.samples[sim_test_idx[k]];
        oracle.add(perception.predict_classes(s.rgb), s.real_sem);
        CascadeOptions o = opt;
        o.seed = opt.seed + k * 1513;
        generated.push_back(generate_from_sample(condiff, imgdiff, s, o));
        auto pred = perception.predict_classes(generated.back());
        matched.add(pred, s.real_sem);
        const auto& other = ds.samples[sim_test_idx[(k + 1) % sim_test_idx.size()]];
        shuffled.add(pred, other.real_sem);
    }
    auto fill = [&](PooledMiou& pm, MetricsReport& r) {
        for (int c = 0; c < kNumSemClasses; ++c)
            if (pm.uni[size_t(c)])
                r.miou_per_class[std::string(c == sem_road ? "road"
                                             : c == sem_vehicle ? "vehicle"
                                                                : std::to_string(c))] = pm.iou(c);
        r.miou_mean = pm.mean();
        r.samples = int64_t(sim_test_idx.size());
    };
    fill(oracle, rep.oracle);
    fill(matched, rep.matched);
    fill(shuffled, rep.shuffled);
    rep.rel_drop_vehicle =
        rep.matched.miou_per_class["vehicle"] - rep.oracle.miou_per_class["vehicle"];
    return rep;
}

// ---------------------------------------------------------------------------
// Augmentation evaluation: real-only arm vs real+generated arm
// ---------------------------------------------------------------------------

struct SegSet {
    std::vector<ImageF> images;
    std::vector<std::vector<uint8_t>> labels;
    size_t size() const { return images.size(); }
    const ImageF& image(size_t i) const { return images[i]; }
    const std::vector<uint8_t>& classes(size_t i) const { return labels[i]; }
};

struct AugmentationReport {
    double baseline_vehicle_iou = 0;
    double augmented_vehicle_iou = 0;
    double baseline_mean_iou = 0;
    double augmented_mean_iou = 0;

    nlohmann::json to_json() const {
        return {{"baseline_vehicle_iou", baseline_vehicle_iou},
                {"augmented_vehicle_iou", augmented_vehicle_iou},
                {"baseline_mean_iou", baseline_mean_iou},
                {"augmented_mean_iou", augmented_mean_iou}};
    }
};

// Both arms run the same iteration/batch budget; the augmented arm draws
// from the doubled pool.
inline AugmentationReport run_augmentation_eval(const SegSet& real_train, const SegSet& generated,
                                                const SegSet& test, PerceptionConfig pcfg) {
    SIMGEN_REQUIRE(real_train.size() > 0 && test.size() > 0, stats,
                   "augmentation eval needs data");
    SIMGEN_REQUIRE(generated.size() == real_train.size(), contract,
                   "augmentation adds an equal sample count to the real set");
    auto run_arm = [&](const SegSet& train) {
        auto model = ToyPerception::create(pcfg);
        train_perception(model, train, pcfg.steps);
        PooledMiou pm;
        for (size_t i = 0; i < test.size(); ++i)
            pm.add(model.predict_classes(test.image(i)), test.classes(i));
        return pm;
    };
    SegSet combined = real_train;
    combined.images.insert(combined.images.end(), generated.images.begin(),
                           generated.images.end());
    combined.labels.insert(combined.labels.end(), generated.labels.begin(),
                           generated.labels.end());
    auto base = run_arm(real_train);
    auto aug = run_arm(combined);
    AugmentationReport rep;
    rep.baseline_vehicle_iou = base.iou(sem_vehicle);
    rep.augmented_vehicle_iou = aug.iou(sem_vehicle);
    rep.baseline_mean_iou = base.mean();
    rep.augmented_mean_iou = aug.mean();
    return rep;
}

// ---------------------------------------------------------------------------
// FID-lite / AP-lite arms used by the ablation table
// ---------------------------------------------------------------------------

inline double fid_between(const FeatureExtractor& ext, const std::vector<ImageF>& reference,
                          const std::vector<ImageF>& generated) {
    auto a = fit_feature_stats(ext, reference);
    auto b = fit_feature_stats(ext, generated);
    return frechet_distance(a, b);
}

struct AblationRow {
    std::string name;
    double fid_lite = 0;
    double ap_lite = 0;
};

inline std::string ablation_table_text(const std::vector<AblationRow>& rows) {
    std::ostringstream oss;
    oss << "ablation            FID-lite   AP-lite\n";
    for (auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-18s %9.3f %9.3f\n", r.name.c_str(), r.fid_lite,
                      r.ap_lite);
        oss << buf;
    }
    return oss.str();
}

}  // namespace simgen
