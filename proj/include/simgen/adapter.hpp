#pragma once

#include <array>
#include <optional>
#include <vector>

#include "simgen/condiff.hpp"
#include "simgen/nn.hpp"

namespace simgen {

// Fixed modality registry of the condition stack.
enum Slot : int {
    slot_depth = 0,
    slot_seg = 1,
    slot_rendered_rgb = 2,
    slot_instance = 3,
    slot_topdown = 4,
};
constexpr int kNumSlots = 5;

inline const char* slot_name(int k) {
    switch (k) {
        case slot_depth: return "depth";
        case slot_seg: return "segmentation";
        case slot_rendered_rgb: return "rendered-rgb";
        case slot_instance: return "instance";
        case slot_topdown: return "top-down";
    }
    return "?";
}

// classes whose pixels are masked out of simulator-origin condition slots
inline bool mask_background_class(uint8_t c) {
    return c == sem_building || c == sem_tree || c == sem_sky || c == sem_void;
}

struct ConditionStack {
    int h = 0, w = 0;
    std::array<std::vector<float>, kNumSlots> x;     // 3*h*w each, [-1,1]; zeros when absent
    std::array<std::vector<float>, kNumSlots> mask;  // h*w each, {0,1}; zeros when absent
    std::array<bool, kNumSlots> present{};

    static ConditionStack empty(int h, int w) {
        ConditionStack s;
        s.h = h;
        s.w = w;
        for (int k = 0; k < kNumSlots; ++k) {
            s.x[size_t(k)].assign(size_t(3) * h * w, 0.f);
            s.mask[size_t(k)].assign(size_t(h) * w, 0.f);
        }
        return s;
    }

    void set_slot(int k, const std::vector<float>& rgb01, const std::vector<float>& valid) {
        SIMGEN_REQUIRE(rgb01.size() == size_t(3) * h * w, shape,
                       "condition slot " << slot_name(k) << " has the wrong resolution");
        SIMGEN_REQUIRE(valid.size() == size_t(h) * w, shape,
                       "mask for slot " << slot_name(k) << " has the wrong resolution");
        for (size_t i = 0; i < rgb01.size(); ++i) x[size_t(k)][i] = rgb01[i] * 2.f - 1.f;
        mask[size_t(k)] = valid;
        present[size_t(k)] = true;
    }
};

// Optional simulator-only conditions for a sample.
struct ExtraCond {
    ImageF rendered_rgb;             // plain flat-shaded RGB
    std::vector<int32_t> instance;   // h*w object ids
    ImageF topdown;                  // any square resolution; resampled to h*w
    std::vector<uint8_t> semantic;   // simulator semantic labels for masking
};

namespace detail_adapter {

inline std::vector<float> replicate3(const std::vector<float>& mono, int h, int w) {
    std::vector<float> out(size_t(3) * h * w);
    for (int ch = 0; ch < 3; ++ch)
        std::copy(mono.begin(), mono.end(), out.begin() + size_t(ch) * h * w);
    return out;
}

inline std::vector<float> instance_colors(const std::vector<int32_t>& ids, int h, int w) {
    std::vector<float> out(size_t(3) * h * w, 0.f);
    for (int64_t i = 0; i < int64_t(h) * w; ++i) {
        int32_t id = ids[size_t(i)];
        if (id == 0) continue;
        auto c = detail_render::body_color(uint32_t(id) * 0x9e3779b9u);
        out[size_t(i)] = float(c.r);
        out[size_t(int64_t(h) * w + i)] = float(c.g);
        out[size_t(2 * int64_t(h) * w + i)] = float(c.b);
    }
    return out;
}

inline std::vector<float> resample_nearest(const ImageF& img, int h, int w) {
    std::vector<float> out(size_t(3) * h * w);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                int sy = int(int64_t(y) * img.h / h);
                int sx = int(int64_t(xx) * img.w / w);
                out[size_t((ch * h + y) * w + xx)] = img.at(ch, sy, sx);
            }
    return out;
}

}  // namespace detail_adapter

// RealCond always fills the depth/segmentation slots (masks all-ones);
// ExtraCond slots exist only for simulator-sourced samples and carry
// background-zeroed masks derived from the semantic labels. The top-down
// slot keeps an all-ones mask.
inline ConditionStack build_condition_stack(const ConditionImage& realcond,
                                            const ExtraCond* extracond) {
    auto s = ConditionStack::empty(realcond.h, realcond.w);
    const size_t hw = size_t(realcond.h) * realcond.w;
    std::vector<float> ones(hw, 1.f);
    s.set_slot(slot_depth, detail_adapter::replicate3(realcond.depth, realcond.h, realcond.w),
               ones);
    s.set_slot(slot_seg, realcond.seg_rgb, ones);
    if (extracond) {
        SIMGEN_REQUIRE(extracond->semantic.size() == hw, shape,
                       "extracond semantic labels have the wrong resolution");
        std::vector<float> fg(hw);
        for (size_t i = 0; i < hw; ++i)
            fg[i] = mask_background_class(extracond->semantic[i]) ? 0.f : 1.f;
        SIMGEN_REQUIRE(extracond->rendered_rgb.h == realcond.h &&
                           extracond->rendered_rgb.w == realcond.w,
                       shape, "extracond rendered RGB has the wrong resolution");
        s.set_slot(slot_rendered_rgb, extracond->rendered_rgb.data, fg);
        s.set_slot(slot_instance,
                   detail_adapter::instance_colors(extracond->instance, realcond.h, realcond.w),
                   fg);
        s.set_slot(slot_topdown,
                   detail_adapter::resample_nearest(extracond->topdown, realcond.h, realcond.w),
                   ones);  // frontal masking does not apply to the top-down view
    }
    return s;
}

// Zeroes n x n patches independently with probability gamma_p. Ragged edge
// patches (when n does not divide H or W) count as patches of their own.
inline std::vector<float> slice_noise(const std::vector<float>& chw, int channels, int h, int w,
                                      int n, double gamma_p, Rng& rng) {
    SIMGEN_REQUIRE(n >= 1, config, "slice_noise: n must be >= 1");
    SIMGEN_REQUIRE(int(chw.size()) == channels * h * w, shape, "slice_noise: size mismatch");
    std::vector<float> out = chw;
    int ph = (h + n - 1) / n, pw = (w + n - 1) / n;
    for (int py = 0; py < n; ++py)
        for (int px = 0; px < n; ++px) {
            if (!rng.next_bernoulli(gamma_p)) continue;
            int y0 = py * ph, x0 = px * pw;
            for (int ch = 0; ch < channels; ++ch)
                for (int y = y0; y < std::min(y0 + ph, h); ++y)
                    for (int xx = x0; xx < std::min(x0 + pw, w); ++xx)
                        out[size_t((ch * h + y) * w + xx)] = 0.f;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Unified adapter (per-modality masked conv branches + fusion head)
// ---------------------------------------------------------------------------

struct AdapterConfig {
    int branch_ch = 8;
    int ctrl_dim = 256;  // fused feature channels == pooled control vector length

    nlohmann::json to_json() const {
        return {{"branch_ch", branch_ch}, {"ctrl_dim", ctrl_dim}};
    }
    static AdapterConfig from_json(const nlohmann::json& j) {
        AdapterConfig c;
        c.branch_ch = j.at("branch_ch");
        c.ctrl_dim = j.at("ctrl_dim");
        return c;
    }
};

template <typename T>
struct AdapterT {
    AdapterConfig cfg;
    // cov2 runs first on the masked input, cov1 second; both bias-free so a
    // fully masked slot contributes exactly zero
    std::array<Conv2dLayer<T>, kNumSlots> cov2, cov1;
    Conv2dLayer<T> fuse1, fuse2;

    static AdapterT create(const AdapterConfig& cfg, Rng& rng) {
        AdapterT a;
        a.cfg = cfg;
        for (int k = 0; k < kNumSlots; ++k) {
            a.cov2[size_t(k)] = Conv2dLayer<T>::create(3, cfg.branch_ch, 3, 1, 1, rng, false);
            a.cov1[size_t(k)] =
                Conv2dLayer<T>::create(cfg.branch_ch, cfg.branch_ch, 3, 1, 1, rng, false);
        }
        a.fuse1 =
            Conv2dLayer<T>::create(kNumSlots * cfg.branch_ch, cfg.ctrl_dim, 3, 1, 1, rng, false);
        a.fuse2 = Conv2dLayer<T>::create(cfg.ctrl_dim, cfg.ctrl_dim, 3, 1, 1, rng, false);
        return a;
    }

    struct Output {
        TensorT<T> fused_map;  // [N, ctrl_dim, H, W]
        TensorT<T> ctrl_vec;   // [N, ctrl_dim], spatial max-pool of the map
    };

    // Batched masked inputs: for each slot a [N,3,H,W] tensor whose values
    // are x*M with the mask applied at construction (explicit zeros).
    static std::array<TensorT<T>, kNumSlots> masked_inputs(
        const std::vector<const ConditionStack*>& batch) {
        SIMGEN_REQUIRE(!batch.empty(), contract, "adapter: empty batch");
        const int h = batch[0]->h, w = batch[0]->w;
        const int64_t n = int64_t(batch.size());
        std::array<TensorT<T>, kNumSlots> out;
        for (int k = 0; k < kNumSlots; ++k) {
            std::vector<T> data(size_t(n) * 3 * h * w, T(0));
            for (int64_t i = 0; i < n; ++i) {
                const auto& st = *batch[size_t(i)];
                SIMGEN_REQUIRE(st.h == h && st.w == w, shape, "adapter: mixed resolutions");
                if (!st.present[size_t(k)]) continue;
                for (int ch = 0; ch < 3; ++ch)
                    for (int64_t p = 0; p < int64_t(h) * w; ++p) {
                        float m = st.mask[size_t(k)][size_t(p)];
                        if (m != 0.f)
                            data[size_t((i * 3 + ch) * h * w + p)] =
                                T(st.x[size_t(k)][size_t(ch * h * w + p)] * m);
                    }
            }
            out[size_t(k)] = TensorT<T>::from_data({n, 3, h, w}, std::move(data));
        }
        return out;
    }

    Output forward(const std::array<TensorT<T>, kNumSlots>& masked) const {
        TensorT<T> cat;
        for (int k = 0; k < kNumSlots; ++k) {
            auto b = cov1[size_t(k)](silu(cov2[size_t(k)](masked[size_t(k)])));
            cat = (k == 0) ? b : concat_channels(cat, b);
        }
        auto fused = fuse2(silu(fuse1(cat)));
        return {fused, global_max_pool(fused)};
    }

    Output forward(const ConditionStack& stack) const {
        return forward(masked_inputs({&stack}));
    }

    void params(ParamSet<T>& ps, const std::string& p) const {
        for (int k = 0; k < kNumSlots; ++k) {
            cov2[size_t(k)].params(ps, p + ".cov2." + slot_name(k));
            cov1[size_t(k)].params(ps, p + ".cov1." + slot_name(k));
        }
        fuse1.params(ps, p + ".fuse1");
        fuse2.params(ps, p + ".fuse2");
    }
};

using Adapter = AdapterT<float>;

}  // namespace simgen
