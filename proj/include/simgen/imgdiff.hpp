#pragma once

#include <string>
#include <vector>

#include "simgen/adapter.hpp"
#include "simgen/checkpoint.hpp"
#include "simgen/diffusion.hpp"
#include "simgen/optim.hpp"

namespace simgen {

enum class FusionMode { adapter, concat };

inline const char* to_string(FusionMode m) {
    return m == FusionMode::adapter ? "adapter" : "concat";
}

struct ImgDiffConfig {
    int h = 32, w = 56;
    int T = 1000;
    ScheduleKind kind = ScheduleKind::scaled_linear;
    UNetConfig unet;  // trunk; in/out forced to 3
    AdapterConfig adapter;
    FusionMode fusion = FusionMode::adapter;
    bool use_extracond = true;

    int steps = 2000;
    int batch = 8;
    float lr = 2e-3f;
    float weight_decay = 1e-4f;
    double gamma_c = 0.1;   // text drop
    double gamma_b = 0.5;   // background masking of real conditions
    double gamma_n = 0.25;  // slice-noise application rate
    double gamma_p = 0.25;  // per-patch zeroing inside slice noise
    int slice_n = 4;
    uint64_t seed = 0;
};

// Second cascade stage: frozen trunk encoder + trainable decoder, ControlNet
// graft fed either by the unified masked adapter or by a plain concat hint
// encoder (the ablation baseline).
struct ImgDiffModel {
    ImgDiffConfig cfg;
    UNet trunk;
    ControlBranch control;
    Adapter adapter;                    // fusion == adapter
    Conv2dLayer<float> cenc1, cenc2;    // fusion == concat
    NoiseSchedule sched;

    static ImgDiffModel create(ImgDiffConfig cfg, const UNet* pretrained_trunk = nullptr) {
        cfg.unet.in_channels = 3;
        cfg.unet.out_channels = 3;
        ImgDiffModel m;
        m.cfg = cfg;
        Rng rng(cfg.seed, 0x16d1);
        m.trunk = UNet::create(cfg.unet, rng);
        if (pretrained_trunk) {
            ParamSet<float> src, dst;
            pretrained_trunk->params(src, "t");
            m.trunk.params(dst, "t");
            SIMGEN_REQUIRE(src.items.size() == dst.items.size(), contract,
                           "trunk transplant mismatch");
            for (size_t i = 0; i < src.items.size(); ++i)
                dst.items[i].second.data() = src.items[i].second.data();
        }
        m.control = ControlBranch::create(m.trunk, cfg.adapter.ctrl_dim, cfg.adapter.ctrl_dim, rng);
        m.adapter = Adapter::create(cfg.adapter, rng);
        m.cenc1 = Conv2dLayer<float>::create(3 * kNumSlots, cfg.adapter.ctrl_dim, 3, 1, 1, rng);
        m.cenc2 =
            Conv2dLayer<float>::create(cfg.adapter.ctrl_dim, cfg.adapter.ctrl_dim, 3, 1, 1, rng);
        m.sched = make_schedule(cfg.T, cfg.kind);
        return m;
    }

    struct Hint {
        Tensor map;   // [N, ctrl_dim, H, W]
        Tensor vec;   // [N, ctrl_dim] (adapter fusion only)
        bool has_vec = false;
    };

    Hint make_hint(const std::vector<const ConditionStack*>& stacks) const {
        if (cfg.fusion == FusionMode::adapter) {
            auto out = adapter.forward(Adapter::masked_inputs(stacks));
            return {out.fused_map, out.ctrl_vec, true};
        }
        // concat fusion: raw slot images, no masks, shared encoder
        const int h = stacks[0]->h, w = stacks[0]->w;
        const int64_t n = int64_t(stacks.size());
        std::vector<float> data(size_t(n) * 3 * kNumSlots * h * w, 0.f);
        for (int64_t i = 0; i < n; ++i)
            for (int k = 0; k < kNumSlots; ++k)
                if (stacks[size_t(i)]->present[size_t(k)])
                    std::copy(stacks[size_t(i)]->x[size_t(k)].begin(),
                              stacks[size_t(i)]->x[size_t(k)].end(),
                              data.begin() + size_t((i * kNumSlots + k) * 3 * h * w));
        auto in = Tensor::from_data({n, 3 * kNumSlots, h, w}, std::move(data));
        return {cenc2(silu(cenc1(in))), Tensor(), false};
    }

    Tensor eps(const Tensor& x_t, const std::vector<int>& ts,
               const std::vector<TextCondition>& texts, const Hint& hint) const {
        auto cond = trunk.cond_vector(ts, texts);
        auto res = control.forward(x_t, cond, hint.map, hint.has_vec ? &hint.vec : nullptr);
        return trunk.forward(x_t, cond, &res);
    }

    // denoiser closure with conditions bound; adapter features recompute once
    // and inject at every sampler step
    auto bind(const Hint& hint) const {
        return [this, &hint](const Tensor& x_t, const std::vector<int>& ts,
                             const std::vector<TextCondition>& texts) {
            return eps(x_t, ts, texts, hint);
        };
    }

    void trainable_params(ParamSet<float>& ps) const {
        trunk.decoder_params(ps, "trunk");
        if (cfg.fusion == FusionMode::adapter) {
            control.params(ps, "control");
            adapter.params(ps, "adapter");
        } else {
            control.params_core(ps, "control");  // no pooled-vector path
            cenc1.params(ps, "cenc1");
            cenc2.params(ps, "cenc2");
        }
    }

    // every parameter exactly once, independent of the fusion mode
    void all_params(ParamSet<float>& ps) const {
        trunk.frozen_params(ps, "trunk");
        trunk.decoder_params(ps, "trunk");
        control.params(ps, "control");
        adapter.params(ps, "adapter");
        cenc1.params(ps, "cenc1");
        cenc2.params(ps, "cenc2");
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.config["model"] = "imgdiff";
        ck.config["h"] = cfg.h;
        ck.config["w"] = cfg.w;
        ck.config["T"] = cfg.T;
        ck.config["schedule"] = cfg.kind == ScheduleKind::cosine ? "cosine" : "scaled-linear";
        ck.config["unet"] = cfg.unet.to_json();
        ck.config["adapter"] = cfg.adapter.to_json();
        ck.config["fusion"] = to_string(cfg.fusion);
        ck.config["use_extracond"] = cfg.use_extracond;
        ParamSet<float> ps;
        all_params(ps);
        ck.add_params(ps);
        return ck;
    }

    static ImgDiffModel from_checkpoint(const Checkpoint& ck) {
        SIMGEN_REQUIRE(ck.config.value("model", "") == "imgdiff", parse,
                       "checkpoint is not an imgdiff model");
        ImgDiffConfig cfg;
        cfg.h = ck.config.at("h");
        cfg.w = ck.config.at("w");
        cfg.T = ck.config.at("T");
        cfg.kind = schedule_kind_from_string(ck.config.at("schedule"));
        cfg.unet = UNetConfig::from_json(ck.config.at("unet"));
        cfg.adapter = AdapterConfig::from_json(ck.config.at("adapter"));
        cfg.fusion =
            ck.config.at("fusion") == "adapter" ? FusionMode::adapter : FusionMode::concat;
        cfg.use_extracond = ck.config.at("use_extracond");
        auto m = create(cfg);
        ParamSet<float> ps;
        m.all_params(ps);
        ck.load_into(ps);
        return m;
    }
};

// ---------------------------------------------------------------------------
// Trunk pre-training (text-conditioned RGB denoiser, the SD-2.1 stand-in)
// ---------------------------------------------------------------------------

struct TrunkConfig {
    int h = 32, w = 56;
    int T = 1000;
    ScheduleKind kind = ScheduleKind::scaled_linear;
    UNetConfig unet;
    int steps = 2000;
    int batch = 8;
    float lr = 2e-3f;
    float weight_decay = 1e-4f;
    double gamma_c = 0.1;
    uint64_t seed = 0;
};

struct TrunkModel {
    TrunkConfig cfg;
    UNet unet;
    NoiseSchedule sched;

    static TrunkModel create(TrunkConfig cfg) {
        cfg.unet.in_channels = 3;
        cfg.unet.out_channels = 3;
        TrunkModel m;
        m.cfg = cfg;
        Rng rng(cfg.seed, 0x72b);
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
        ck.config["model"] = "trunk";
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

    static TrunkModel from_checkpoint(const Checkpoint& ck) {
        SIMGEN_REQUIRE(ck.config.value("model", "") == "trunk", parse,
                       "checkpoint is not a trunk model");
        TrunkConfig cfg;
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

// rgb01 [0,1] -> diffusion range [-1,1]
inline std::vector<float> rgb_to_latent(const ImageF& img) {
    std::vector<float> out(img.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = img.data[i] * 2.f - 1.f;
    return out;
}

inline ImageF latent_to_rgb(const Tensor& x, int h, int w) {
    ImageF img = ImageF::make(h, w, 3);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::clamp((x.data()[i] + 1.f) * 0.5f, 0.f, 1.f);
    return img;
}

template <typename Dataset>
TrainLog train_trunk(TrunkModel& model, const Dataset& data, int steps) {
    SIMGEN_REQUIRE(data.size() > 0, config, "train_trunk: empty dataset");
    ParamSet<float> ps;
    model.unet.params(ps, "unet");
    AdamW opt(ps.tensors(), model.cfg.lr, model.cfg.weight_decay);
    Rng rng(model.cfg.seed, 0x7a12);
    TrainLog log;
    const int64_t chw = int64_t(3) * model.cfg.h * model.cfg.w;
    for (int step = 0; step < steps; ++step) {
        int n = std::min<int>(model.cfg.batch, int(data.size()));
        std::vector<float> batch(size_t(n) * chw);
        std::vector<TextCondition> texts;
        for (int i = 0; i < n; ++i) {
            size_t idx = size_t(rng.next_below(data.size()));
            auto lat = rgb_to_latent(data.image(idx));
            std::copy(lat.begin(), lat.end(), batch.begin() + size_t(i) * chw);
            texts.push_back(TextCondition::from_caption(data.caption(idx)));
        }
        auto x0 = Tensor::from_data({n, 3, int64_t(model.cfg.h), int64_t(model.cfg.w)},
                                    std::move(batch));
        auto stats = train_step(x0, texts, model, model.sched, model.cfg.gamma_c, rng);
        opt.step();
        log.losses.push_back(stats.loss);
        log.text_dropped += stats.text_dropped;
        log.samples_seen += stats.batch;
    }
    return log;
}

// ---------------------------------------------------------------------------
// Grafted fine-tuning
// ---------------------------------------------------------------------------

struct ImgDiffTrainLog {
    std::vector<float> losses;
    int text_dropped = 0;
    int background_masked = 0;
    int slice_noised = 0;
    int samples_seen = 0;
};

// Dataset interface: size(), image(i) -> ImageF, caption(i) -> string,
// realcond(i) -> ConditionImage, extracond(i) -> const ExtraCond* (null for
// real provenance), real_semantic(i) -> class map for gamma_b masking.
template <typename Dataset>
ImgDiffTrainLog train_imgdiff(ImgDiffModel& model, const Dataset& data, int steps) {
    SIMGEN_REQUIRE(data.size() > 0, config, "train_imgdiff: empty dataset");
    // freeze the trunk input/middle layers; only output layers, control
    // branch, and the fusion module train
    ParamSet<float> frozen;
    model.trunk.frozen_params(frozen, "trunk");
    for (auto& [name, t] : frozen.items) t.set_requires_grad(false);
    ParamSet<float> trainable;
    model.trainable_params(trainable);
    AdamW opt(trainable.tensors(), model.cfg.lr, model.cfg.weight_decay);
    Rng rng(model.cfg.seed, 0x7a13);
    ImgDiffTrainLog log;
    const int64_t chw = int64_t(3) * model.cfg.h * model.cfg.w;
    const size_t hw = size_t(model.cfg.h) * model.cfg.w;

    for (int step = 0; step < steps; ++step) {
        int n = std::min<int>(model.cfg.batch, int(data.size()));
        std::vector<float> batch(size_t(n) * chw);
        std::vector<TextCondition> texts;
        std::vector<ConditionStack> stacks(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            size_t idx = size_t(rng.next_below(data.size()));
            auto lat = rgb_to_latent(data.image(idx));
            std::copy(lat.begin(), lat.end(), batch.begin() + size_t(i) * chw);
            texts.push_back(TextCondition::from_caption(data.caption(idx)));
            const ExtraCond* extra =
                (model.cfg.use_extracond) ? data.extracond(idx) : nullptr;
            auto stack = build_condition_stack(data.realcond(idx), extra);
            // gamma_b: zero the background of the real condition slots
            if (rng.next_bernoulli(model.cfg.gamma_b)) {
                ++log.background_masked;
                const auto& sem = data.real_semantic(idx);
                for (int slot : {int(slot_depth), int(slot_seg)})
                    for (size_t p = 0; p < hw; ++p)
                        if (is_background_class(SemClass(sem[p]))) {
                            stack.mask[size_t(slot)][p] = 0.f;
                            for (int ch = 0; ch < 3; ++ch)
                                stack.x[size_t(slot)][size_t(ch) * hw + p] = 0.f;
                        }
            }
            // gamma_n: slice noise over the condition slots
            if (rng.next_bernoulli(model.cfg.gamma_n)) {
                ++log.slice_noised;
                for (int k = 0; k < kNumSlots; ++k) {
                    if (!stack.present[size_t(k)]) continue;
                    stack.x[size_t(k)] =
                        slice_noise(stack.x[size_t(k)], 3, model.cfg.h, model.cfg.w,
                                    model.cfg.slice_n, model.cfg.gamma_p, rng);
                }
            }
            stacks[size_t(i)] = std::move(stack);
        }
        auto x0 = Tensor::from_data({n, 3, int64_t(model.cfg.h), int64_t(model.cfg.w)},
                                    std::move(batch));
        std::vector<const ConditionStack*> ptrs;
        for (auto& s : stacks) ptrs.push_back(&s);
        auto hint = model.make_hint(ptrs);
        auto bound = model.bind(hint);
        auto stats = train_step(x0, texts, bound, model.sched, model.cfg.gamma_c, rng);
        opt.step();
        log.losses.push_back(stats.loss);
        log.text_dropped += stats.text_dropped;
        log.samples_seen += stats.batch;
    }
    return log;
}

// Full 50-step guided generation with the conditions injected every step.
inline ImageF generate(const ImgDiffModel& model, const ConditionStack& stack,
                       const std::string& caption, int steps = 50, double cfg_scale = 9.5,
                       uint64_t seed = 0, SampleStats* stats = nullptr) {
    NoGradGuard ng;
    auto hint = model.make_hint({&stack});
    auto bound = model.bind(hint);
    auto text = caption.empty() ? TextCondition::null() : TextCondition::from_caption(caption);
    auto x = sample<float>(bound, {1, 3, model.cfg.h, model.cfg.w}, text, model.sched, steps,
                           cfg_scale, seed, stats);
    return latent_to_rgb(reshape(x, {3, int64_t(model.cfg.h), int64_t(model.cfg.w)}), model.cfg.h,
                         model.cfg.w);
}

}  // namespace simgen
