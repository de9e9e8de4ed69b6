#pragma once

#include <vector>

#include "simgen/checkpoint.hpp"
#include "simgen/features.hpp"
#include "simgen/metrics.hpp"
#include "simgen/render.hpp"

namespace simgen {

// Toy perception: per-pixel 8-class segmenter trained on enriched renders.
// Vehicle detections come from connected components of the predicted
// vehicle mask.
struct PerceptionConfig {
    int h = 32, w = 56;
    int base = 16;
    int steps = 600;
    int batch = 8;
    float lr = 2e-3f;
    uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"h", h},         {"w", w},         {"base", base},
                {"steps", steps}, {"batch", batch}, {"lr", lr},
                {"seed", seed}};
    }
    static PerceptionConfig from_json(const nlohmann::json& j) {
        PerceptionConfig c;
        c.h = j.at("h");
        c.w = j.at("w");
        c.base = j.at("base");
        c.steps = j.at("steps");
        c.batch = j.at("batch");
        c.lr = j.at("lr");
        c.seed = j.at("seed");
        return c;
    }
};

struct ToyPerception {
    PerceptionConfig cfg;
    Conv2dLayer<float> c1, c2, c3, head;
    GroupNormLayer<float> g1, g2, g3;

    static ToyPerception create(const PerceptionConfig& cfg) {
        ToyPerception m;
        m.cfg = cfg;
        Rng rng(cfg.seed, 0x9e4c);
        int b = cfg.base;
        m.c1 = Conv2dLayer<float>::create(3, b, 3, 1, 1, rng);
        m.g1 = GroupNormLayer<float>::create(b, 4);
        m.c2 = Conv2dLayer<float>::create(b, b, 3, 1, 1, rng);
        m.g2 = GroupNormLayer<float>::create(b, 4);
        m.c3 = Conv2dLayer<float>::create(b, b, 3, 1, 1, rng);
        m.g3 = GroupNormLayer<float>::create(b, 4);
        m.head = Conv2dLayer<float>::create(b, kNumSemClasses, 3, 1, 1, rng);
        return m;
    }

    Tensor forward(const Tensor& x) const {
        auto h = silu(g1(c1(x)));
        h = silu(g2(c2(h)));
        h = silu(g3(c3(h)));
        return head(h);  // [N,8,H,W] one-hot regression scores
    }

    void params(ParamSet<float>& ps, const std::string& p) const {
        c1.params(ps, p + ".c1");
        g1.params(ps, p + ".g1");
        c2.params(ps, p + ".c2");
        g2.params(ps, p + ".g2");
        c3.params(ps, p + ".c3");
        g3.params(ps, p + ".g3");
        head.params(ps, p + ".head");
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.config["model"] = "perception";
        ck.config["perception"] = cfg.to_json();
        ParamSet<float> ps;
        params(ps, "per");
        ck.add_params(ps);
        return ck;
    }

    static ToyPerception from_checkpoint(const Checkpoint& ck) {
        SIMGEN_REQUIRE(ck.config.value("model", "") == "perception", parse,
                       "checkpoint is not a perception model");
        auto m = create(PerceptionConfig::from_json(ck.config.at("perception")));
        ParamSet<float> ps;
        m.params(ps, "per");
        ck.load_into(ps);
        return m;
    }

    std::vector<uint8_t> predict_classes(const ImageF& img) const {
        NoGradGuard ng;
        auto logits = forward(stack_images({&img}));
        std::vector<uint8_t> out(size_t(img.h) * img.w);
        const int64_t hw = int64_t(img.h) * img.w;
        for (int64_t p = 0; p < hw; ++p) {
            int best = 0;
            float bv = logits.data()[size_t(p)];
            for (int c = 1; c < kNumSemClasses; ++c) {
                float v = logits.data()[size_t(c * hw + p)];
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            out[size_t(p)] = uint8_t(best);
        }
        return out;
    }

    // vehicle detections: connected components of the predicted vehicle mask,
    // scored by the mean vehicle activation over the component
    std::vector<DetBox> vehicle_boxes(const ImageF& img, int min_area = 2) const {
        NoGradGuard ng;
        auto logits = forward(stack_images({&img}));
        const int h = img.h, w = img.w;
        const int64_t hw = int64_t(h) * w;
        auto classes = predict_classes(img);
        std::vector<int> comp(size_t(hw), -1);
        std::vector<DetBox> boxes;
        for (int64_t p = 0; p < hw; ++p) {
            if (classes[size_t(p)] != sem_vehicle || comp[size_t(p)] >= 0) continue;
            // BFS flood fill
            std::vector<int64_t> stack = {p}, members;
            comp[size_t(p)] = int(boxes.size());
            while (!stack.empty()) {
                int64_t q = stack.back();
                stack.pop_back();
                members.push_back(q);
                int y = int(q / w), x = int(q % w);
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    int ny = y + dy[d], nx = x + dx[d];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    int64_t np = int64_t(ny) * w + nx;
                    if (classes[size_t(np)] == sem_vehicle && comp[size_t(np)] < 0) {
                        comp[size_t(np)] = int(boxes.size());
                        stack.push_back(np);
                    }
                }
            }
            if (int(members.size()) < min_area) continue;
            DetBox b;
            b.x0 = 1e18;
            b.y0 = 1e18;
            b.x1 = -1e18;
            b.y1 = -1e18;
            double score = 0;
            for (int64_t q : members) {
                int y = int(q / w), x = int(q % w);
                b.x0 = std::min(b.x0, double(x));
                b.y0 = std::min(b.y0, double(y));
                b.x1 = std::max(b.x1, double(x) + 1);
                b.y1 = std::max(b.y1, double(y) + 1);
                score += double(logits.data()[size_t(sem_vehicle * hw + q)]);
            }
            b.score = score / double(members.size());
            boxes.push_back(b);
        }
        return boxes;
    }
};

// ground-truth vehicle boxes from an instance map restricted to vehicle
// semantics
inline std::vector<DetBox> gt_vehicle_boxes(const std::vector<int32_t>& instance,
                                            const std::vector<uint8_t>& semantic, int h, int w,
                                            int min_area = 2) {
    std::map<int32_t, DetBox> by_id;
    std::map<int32_t, int> areas;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t p = size_t(y) * w + size_t(x);
            if (instance[p] == 0 || semantic[p] != sem_vehicle) continue;
            auto [it, fresh] = by_id.try_emplace(instance[p],
                                                 DetBox{1e18, 1e18, -1e18, -1e18, 1.0});
            it->second.x0 = std::min(it->second.x0, double(x));
            it->second.y0 = std::min(it->second.y0, double(y));
            it->second.x1 = std::max(it->second.x1, double(x) + 1);
            it->second.y1 = std::max(it->second.y1, double(y) + 1);
            areas[instance[p]] += 1;
        }
    std::vector<DetBox> out;
    for (auto& [id, b] : by_id)
        if (areas[id] >= min_area) out.push_back(b);
    return out;
}

// MSE one-hot training on (image, class-map) pairs.
template <typename SegData>  // size(), image(i) -> ImageF, classes(i) -> vector<uint8_t>
TrainLog train_perception(ToyPerception& m, const SegData& data, int steps) {
    SIMGEN_REQUIRE(data.size() > 0, config, "train_perception: empty dataset");
    ParamSet<float> ps;
    m.params(ps, "per");
    AdamW opt(ps.tensors(), m.cfg.lr, 1e-4f);
    Rng rng(m.cfg.seed, 0x7a15);
    TrainLog log;
    const int64_t hw = int64_t(m.cfg.h) * m.cfg.w;
    for (int step = 0; step < steps; ++step) {
        int n = std::min<int>(m.cfg.batch, int(data.size()));
        std::vector<const ImageF*> imgs;
        std::vector<float> target(size_t(n) * kNumSemClasses * hw, 0.f);
        for (int i = 0; i < n; ++i) {
            size_t idx = size_t(rng.next_below(data.size()));
            imgs.push_back(&data.image(idx));
            const auto& cls = data.classes(idx);
            for (int64_t p = 0; p < hw; ++p)
                target[size_t((i * kNumSemClasses + cls[size_t(p)]) * hw + p)] = 1.f;
        }
        auto x = stack_images(imgs);
        auto tgt = Tensor::from_data({n, kNumSemClasses, m.cfg.h, m.cfg.w}, std::move(target));
        auto loss = mse_loss(m.forward(x), tgt);
        log.losses.push_back(loss.item());
        backward(loss);
        opt.step();
        log.samples_seen += n;
    }
    return log;
}

}  // namespace simgen
