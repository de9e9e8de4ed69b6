#pragma once

#include <string>
#include <vector>

#include "simgen/checkpoint.hpp"
#include "simgen/metrics.hpp"
#include "simgen/nn.hpp"
#include "simgen/optim.hpp"
#include "simgen/scene.hpp"

namespace simgen {

// Small conv classifier over enriched renders predicting the metadata labels
// (weather/time/setting one-hots). Its penultimate layer is the FID-lite
// feature space; FID values are only comparable within one extractor
// version, so reports embed the checkpoint hash.
struct ExtractorConfig {
    int h = 32, w = 56;
    int base = 12;
    int feat_dim = 64;
    int steps = 600;
    int batch = 16;
    float lr = 2e-3f;
    uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"h", h},           {"w", w},         {"base", base}, {"feat_dim", feat_dim},
                {"steps", steps},   {"batch", batch}, {"lr", lr},     {"seed", seed}};
    }
    static ExtractorConfig from_json(const nlohmann::json& j) {
        ExtractorConfig c;
        c.h = j.at("h");
        c.w = j.at("w");
        c.base = j.at("base");
        c.feat_dim = j.at("feat_dim");
        c.steps = j.at("steps");
        c.batch = j.at("batch");
        c.lr = j.at("lr");
        c.seed = j.at("seed");
        return c;
    }
};

constexpr int kMetaLabelDim = 5 + 4 + 5;  // weather + time + setting one-hots

inline std::vector<float> meta_label(Weather w, TimeOfDay t, Setting s) {
    std::vector<float> v(kMetaLabelDim, 0.f);
    v[size_t(int(w))] = 1.f;
    v[size_t(5 + int(t))] = 1.f;
    v[size_t(9 + int(s))] = 1.f;
    return v;
}

struct FeatureExtractor {
    ExtractorConfig cfg;
    Conv2dLayer<float> c1, c2, c3;
    GroupNormLayer<float> g1, g2, g3;
    LinearLayer<float> fc_feat, fc_head;

    static FeatureExtractor create(const ExtractorConfig& cfg) {
        FeatureExtractor m;
        m.cfg = cfg;
        Rng rng(cfg.seed, 0xfe47);
        int b = cfg.base;
        m.c1 = Conv2dLayer<float>::create(3, b, 3, 2, 1, rng);
        m.g1 = GroupNormLayer<float>::create(b, 4);
        m.c2 = Conv2dLayer<float>::create(b, 2 * b, 3, 2, 1, rng);
        m.g2 = GroupNormLayer<float>::create(2 * b, 4);
        m.c3 = Conv2dLayer<float>::create(2 * b, 2 * b, 3, 2, 1, rng);
        m.g3 = GroupNormLayer<float>::create(2 * b, 4);
        m.fc_feat = LinearLayer<float>::create(2 * b, cfg.feat_dim, rng);
        m.fc_head = LinearLayer<float>::create(cfg.feat_dim, kMetaLabelDim, rng);
        return m;
    }

    Tensor features(const Tensor& x) const {
        auto h = silu(g1(c1(x)));
        h = silu(g2(c2(h)));
        h = silu(g3(c3(h)));
        return fc_feat(global_mean_pool(h));
    }

    Tensor logits(const Tensor& x) const { return fc_head(silu(features(x))); }

    void params(ParamSet<float>& ps, const std::string& p) const {
        c1.params(ps, p + ".c1");
        g1.params(ps, p + ".g1");
        c2.params(ps, p + ".c2");
        g2.params(ps, p + ".g2");
        c3.params(ps, p + ".c3");
        g3.params(ps, p + ".g3");
        fc_feat.params(ps, p + ".fc_feat");
        fc_head.params(ps, p + ".fc_head");
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.config["model"] = "extractor";
        ck.config["extractor"] = cfg.to_json();
        ParamSet<float> ps;
        params(ps, "ext");
        ck.add_params(ps);
        return ck;
    }

    static FeatureExtractor from_checkpoint(const Checkpoint& ck) {
        SIMGEN_REQUIRE(ck.config.value("model", "") == "extractor", parse,
                       "checkpoint is not a feature extractor");
        auto m = create(ExtractorConfig::from_json(ck.config.at("extractor")));
        ParamSet<float> ps;
        m.params(ps, "ext");
        ck.load_into(ps);
        return m;
    }

    uint64_t version_hash() const {
        ParamSet<float> ps;
        params(ps, "ext");
        uint64_t h = 0xcbf29ce484222325ull;
        for (auto& [name, t] : ps.items) {
            h = fnv1a(name, h);
            h = fnv1a(t.data().data(), t.data().size() * sizeof(float), h);
        }
        return h;
    }
};

// training batch helper: images as [N,3,H,W] in [0,1]
inline Tensor stack_images(const std::vector<const ImageF*>& imgs) {
    SIMGEN_REQUIRE(!imgs.empty(), contract, "stack_images: empty batch");
    int h = imgs[0]->h, w = imgs[0]->w;
    std::vector<float> data(imgs.size() * 3 * size_t(h) * w);
    for (size_t i = 0; i < imgs.size(); ++i) {
        SIMGEN_REQUIRE(imgs[i]->h == h && imgs[i]->w == w, shape, "stack_images: mixed sizes");
        std::copy(imgs[i]->data.begin(), imgs[i]->data.end(),
                  data.begin() + i * 3 * size_t(h) * w);
    }
    return Tensor::from_data({int64_t(imgs.size()), 3, h, w}, std::move(data));
}

// Supervised pre-training on (image, metadata one-hot) pairs.
template <typename LabelledData>  // size(), image(i) -> ImageF, label(i) -> vector<float>[14]
TrainLog train_extractor(FeatureExtractor& m, const LabelledData& data, int steps) {
    SIMGEN_REQUIRE(data.size() > 0, config, "train_extractor: empty dataset");
    ParamSet<float> ps;
    m.params(ps, "ext");
    AdamW opt(ps.tensors(), m.cfg.lr, 1e-4f);
    Rng rng(m.cfg.seed, 0x7a14);
    TrainLog log;
    for (int step = 0; step < steps; ++step) {
        int n = std::min<int>(m.cfg.batch, int(data.size()));
        std::vector<const ImageF*> imgs;
        std::vector<float> labels(size_t(n) * kMetaLabelDim);
        for (int i = 0; i < n; ++i) {
            size_t idx = size_t(rng.next_below(data.size()));
            imgs.push_back(&data.image(idx));
            auto lab = data.label(idx);
            std::copy(lab.begin(), lab.end(), labels.begin() + size_t(i) * kMetaLabelDim);
        }
        auto x = stack_images(imgs);
        auto target = Tensor::from_data({n, kMetaLabelDim}, std::move(labels));
        auto loss = mse_loss(m.logits(x), target);
        log.losses.push_back(loss.item());
        backward(loss);
        opt.step();
        log.samples_seen += n;
    }
    return log;
}

// feature rows for a set of images, in input order
inline std::vector<std::vector<double>> extract_features(const FeatureExtractor& m,
                                                         const std::vector<ImageF>& images,
                                                         int batch = 32) {
    NoGradGuard ng;
    std::vector<std::vector<double>> out;
    for (size_t at = 0; at < images.size(); at += size_t(batch)) {
        std::vector<const ImageF*> ptrs;
        for (size_t i = at; i < std::min(images.size(), at + size_t(batch)); ++i)
            ptrs.push_back(&images[i]);
        auto f = m.features(stack_images(ptrs));
        for (int64_t i = 0; i < f.dim(0); ++i) {
            std::vector<double> row(size_t(f.dim(1)));
            for (int64_t j = 0; j < f.dim(1); ++j) row[size_t(j)] = f.data()[size_t(i * f.dim(1) + j)];
            out.push_back(std::move(row));
        }
    }
    return out;
}

inline FeatureStats fit_feature_stats(const FeatureExtractor& m,
                                      const std::vector<ImageF>& images) {
    return fit_feature_stats(extract_features(m, images));
}

}  // namespace simgen
