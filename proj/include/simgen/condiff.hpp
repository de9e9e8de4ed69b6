#pragma once

#include <string>
#include <vector>

#include "simgen/checkpoint.hpp"
#include "simgen/diffusion.hpp"
#include "simgen/optim.hpp"
#include "simgen/render.hpp"

namespace simgen {

enum class Provenance { sim, real, generated };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::sim: return "sim";
        case Provenance::real: return "real";
        case Provenance::generated: return "generated";
    }
    return "?";
}

// Depth + palette-color segmentation bundle; the unit CondDiff diffuses.
struct ConditionImage {
    int h = 0, w = 0;
    std::vector<float> depth;    // h*w in [0,1]
    std::vector<float> seg_rgb;  // 3*h*w palette colors in [0,1], planar
    Provenance provenance = Provenance::real;

    static ConditionImage from_frame(const RenderedFrame& fr, Provenance prov) {
        ConditionImage c;
        c.h = fr.h;
        c.w = fr.w;
        c.depth = fr.depth;
        c.seg_rgb.resize(size_t(3) * fr.h * fr.w);
        for (int y = 0; y < fr.h; ++y)
            for (int x = 0; x < fr.w; ++x) {
                auto& pal = kPalette[fr.semantic[size_t(y) * fr.w + x]];
                for (int ch = 0; ch < 3; ++ch)
                    c.seg_rgb[size_t((ch * fr.h + y) * fr.w + x)] = float(pal[size_t(ch)]) / 255.f;
            }
        c.provenance = prov;
        return c;
    }

    // nearest palette class per pixel
    std::vector<uint8_t> seg_classes() const {
        std::vector<uint8_t> out(size_t(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double best = 1e18;
                uint8_t cls = sem_void;
                for (int k = 0; k < kNumSemClasses; ++k) {
                    double d = 0;
                    for (int ch = 0; ch < 3; ++ch) {
                        double diff = double(seg_rgb[size_t((ch * h + y) * w + x)]) -
                                      double(kPalette[size_t(k)][size_t(ch)]) / 255.0;
                        d += diff * diff;
                    }
                    if (d < best) {
                        best = d;
                        cls = uint8_t(k);
                    }
                }
                out[size_t(y) * w + x] = cls;
            }
        return out;
    }
};

// condition tensor layout: channel 0 depth, channels 1-3 palette RGB, all
// rescaled to [-1, 1]
constexpr int kCondChannels = 4;

inline Tensor pack_realcond(const ConditionImage& c) {
    SIMGEN_REQUIRE(!c.depth.empty() && !c.seg_rgb.empty(), contract,
                   "pack_realcond: missing depth or segmentation channel");
    const int64_t h = c.h, w = c.w;
    std::vector<float> data(size_t(kCondChannels) * h * w);
    for (int64_t i = 0; i < h * w; ++i) data[size_t(i)] = c.depth[size_t(i)] * 2.f - 1.f;
    for (int64_t i = 0; i < 3 * h * w; ++i)
        data[size_t(h * w + i)] = c.seg_rgb[size_t(i)] * 2.f - 1.f;
    return Tensor::from_data({kCondChannels, h, w}, std::move(data));
}

inline Tensor pack_realcond(const RenderedFrame& fr) {
    return pack_realcond(ConditionImage::from_frame(fr, Provenance::real));
}

struct UnpackResult {
    ConditionImage image;
    double out_of_tolerance = 0;  // fraction of pixels beyond the palette tolerance
};

// Total decode: depth clipped, segmentation snapped to the nearest palette
// color; reports the fraction outside the L-inf tolerance of 0.5/8.
inline UnpackResult unpack_realcond(const Tensor& t, Provenance prov = Provenance::generated) {
    SIMGEN_REQUIRE(t.ndim() == 3 && t.dim(0) == kCondChannels, shape,
                   "unpack_realcond expects [4,H,W]");
    const int64_t h = t.dim(1), w = t.dim(2);
    UnpackResult r;
    r.image.h = int(h);
    r.image.w = int(w);
    r.image.provenance = prov;
    r.image.depth.resize(size_t(h * w));
    r.image.seg_rgb.resize(size_t(3 * h * w));
    const double tol = 0.5 / 8.0;
    int64_t bad = 0;
    for (int64_t i = 0; i < h * w; ++i) {
        r.image.depth[size_t(i)] = std::clamp((t.data()[size_t(i)] + 1.f) * 0.5f, 0.f, 1.f);
        double c0 = (double(t.data()[size_t(h * w + i)]) + 1.0) * 0.5;
        double c1 = (double(t.data()[size_t(2 * h * w + i)]) + 1.0) * 0.5;
        double c2 = (double(t.data()[size_t(3 * h * w + i)]) + 1.0) * 0.5;
        double best = 1e18;
        int cls = 0;
        for (int k = 0; k < kNumSemClasses; ++k) {
            double p0 = kPalette[size_t(k)][0] / 255.0;
            double p1 = kPalette[size_t(k)][1] / 255.0;
            double p2 = kPalette[size_t(k)][2] / 255.0;
            double d = (c0 - p0) * (c0 - p0) + (c1 - p1) * (c1 - p1) + (c2 - p2) * (c2 - p2);
            if (d < best) {
                best = d;
                cls = k;
            }
        }
        double linf = std::max({std::abs(c0 - kPalette[size_t(cls)][0] / 255.0),
                                std::abs(c1 - kPalette[size_t(cls)][1] / 255.0),
                                std::abs(c2 - kPalette[size_t(cls)][2] / 255.0)});
        if (linf > tol) ++bad;
        for (int ch = 0; ch < 3; ++ch)
            r.image.seg_rgb[size_t(ch * h * w + i)] = float(kPalette[size_t(cls)][size_t(ch)]) / 255.f;
    }
    r.out_of_tolerance = double(bad) / double(h * w);
    return r;
}

// ---------------------------------------------------------------------------
// CondDiff model: text-to-RealCond diffusion
// ---------------------------------------------------------------------------

struct CondDiffConfig {
    int h = 32, w = 56;
    int T = 1000;
    ScheduleKind kind = ScheduleKind::scaled_linear;
    UNetConfig unet;  // in/out overridden to kCondChannels
    int steps = 2000;
    int batch = 8;
    float lr = 2e-3f;
    float weight_decay = 1e-4f;
    double gamma_c = 0.1;
    uint64_t seed = 0;
};

struct CondDiffModel {
    CondDiffConfig cfg;
    UNet unet;
    NoiseSchedule sched;

    static CondDiffModel create(CondDiffConfig cfg) {
        cfg.unet.in_channels = kCondChannels;
        cfg.unet.out_channels = kCondChannels;
        CondDiffModel m;
        m.cfg = cfg;
        Rng rng(cfg.seed, 0xc0d1);
        m.unet = UNet::create(cfg.unet, rng);
        m.sched = make_schedule(cfg.T, cfg.kind);
        return m;
    }

    Tensor operator()(const Tensor& x_t, const std::vector<int>& ts,
                      const std::vector<TextCondition>& texts) const {
        return unet(x_t, ts, texts);
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.config["model"] = "condiff";
        ck.config["h"] = cfg.h;
        ck.config["w"] = cfg.w;
        ck.config["T"] = cfg.T;
        ck.config["schedule"] = cfg.kind == ScheduleKind::cosine ? "cosine" : "scaled-linear";
        ck.config["unet"] = cfg.unet.to_json();
        ParamSet<float> ps;
        unet.params(ps, "unet");
        ck.add_params(ps);
        return ck;
    }

    static CondDiffModel from_checkpoint(const Checkpoint& ck) {
        SIMGEN_REQUIRE(ck.config.value("model", "") == "condiff", parse,
                       "checkpoint is not a condiff model");
        CondDiffConfig cfg;
        cfg.h = ck.config.at("h");
        cfg.w = ck.config.at("w");
        cfg.T = ck.config.at("T");
        cfg.kind = schedule_kind_from_string(ck.config.at("schedule"));
        cfg.unet = UNetConfig::from_json(ck.config.at("unet"));
        auto m = create(cfg);
        ParamSet<float> ps;
        m.unet.params(ps, "unet");
        ck.load_into(ps);
        return m;
    }
};

struct TrainLog {
    std::vector<float> losses;
    int text_dropped = 0;
    int samples_seen = 0;
};

// Text-to-RealCond training; the dataset must come from the enriched
// renderer only (no simulator frames at this stage).
template <typename Dataset>
TrainLog train_condiff(CondDiffModel& model, const Dataset& data, int steps) {
    SIMGEN_REQUIRE(data.size() > 0, config, "train_condiff: empty dataset");
    const auto& first = data.condition(0);
    SIMGEN_REQUIRE(first.provenance == Provenance::real, contract,
                   "train_condiff: training conditions must be real provenance");
    ParamSet<float> ps;
    model.unet.params(ps, "unet");
    AdamW opt(ps.tensors(), model.cfg.lr, model.cfg.weight_decay);
    Rng rng(model.cfg.seed, 0x7a11);
    TrainLog log;
    const int64_t hw = int64_t(model.cfg.h) * model.cfg.w;
    for (int step = 0; step < steps; ++step) {
        int n = std::min<int>(model.cfg.batch, int(data.size()));
        std::vector<float> batch(size_t(n) * kCondChannels * hw);
        std::vector<TextCondition> texts;
        for (int i = 0; i < n; ++i) {
            size_t idx = size_t(rng.next_below(data.size()));
            auto packed = pack_realcond(data.condition(idx));
            std::copy(packed.data().begin(), packed.data().end(),
                      batch.begin() + size_t(i) * kCondChannels * hw);
            texts.push_back(TextCondition::from_caption(data.caption(idx)));
        }
        auto x0 = Tensor::from_data({n, kCondChannels, int64_t(model.cfg.h), int64_t(model.cfg.w)},
                                    std::move(batch));
        auto stats = train_step(x0, texts, model, model.sched, model.cfg.gamma_c, rng);
        opt.step();
        log.losses.push_back(stats.loss);
        log.text_dropped += stats.text_dropped;
        log.samples_seen += stats.batch;
    }
    return log;
}

struct Sim2RealResult {
    ConditionImage image;
    double out_of_tolerance = 0;
    int reverse_steps = 0;
};

// Adaptation-free sim-to-real transformation: inject the packed SimCond at
// t_s and run the remaining reverse steps against the frozen model.
inline Sim2RealResult sim2real(const CondDiffModel& model, const ConditionImage& simcond,
                               const std::string& caption, double t_s, uint64_t seed,
                               int steps = 50, double cfg_scale = 9.5) {
    SIMGEN_REQUIRE(simcond.provenance == Provenance::sim, contract,
                   "sim2real expects sim-provenance input");
    SIMGEN_REQUIRE(simcond.h == model.cfg.h && simcond.w == model.cfg.w, shape,
                   "sim2real: condition resolution mismatch");
    NoGradGuard ng;
    auto packed = pack_realcond(simcond);
    auto guide = reshape(packed, {1, kCondChannels, int64_t(simcond.h), int64_t(simcond.w)});
    auto text = TextCondition::from_caption(caption);
    SampleStats st;
    auto out = guided_sample_from<float>(model, guide, t_s, text, model.sched, steps, cfg_scale,
                                         seed, false, &st);
    auto flat = reshape(out, {kCondChannels, int64_t(simcond.h), int64_t(simcond.w)});
    auto un = unpack_realcond(flat, Provenance::generated);
    return {un.image, un.out_of_tolerance, st.reverse_steps};
}

// foreground = vehicle + road; the layout-preservation measure for sim2real
inline double foreground_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    SIMGEN_REQUIRE(a.size() == b.size(), shape, "foreground_iou: size mismatch");
    auto fg = [](uint8_t c) { return c == sem_vehicle || c == sem_road; };
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        bool fa = fg(a[i]), fb = fg(b[i]);
        inter += fa && fb;
        uni += fa || fb;
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

inline double background_fraction(const std::vector<uint8_t>& classes) {
    int64_t bg = 0;
    for (auto c : classes)
        if (is_background_class(SemClass(c))) ++bg;
    return classes.empty() ? 0.0 : double(bg) / double(classes.size());
}

}  // namespace simgen
