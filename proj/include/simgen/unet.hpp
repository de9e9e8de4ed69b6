#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "simgen/nn.hpp"
#include "simgen/vocab.hpp"

namespace simgen {

struct UNetConfig {
    int in_channels = 3;
    int out_channels = 3;
    int base = 16;      // width; deeper levels run at 2*base
    int groups = 4;
    int time_dim = 32;  // sinusoidal feature count (even)
    int text_dim = 16;
    int cond_dim = 64;

    nlohmann::json to_json() const {
        return {{"in_channels", in_channels}, {"out_channels", out_channels}, {"base", base},
                {"groups", groups},           {"time_dim", time_dim},         {"text_dim", text_dim},
                {"cond_dim", cond_dim}};
    }
    static UNetConfig from_json(const nlohmann::json& j) {
        UNetConfig c;
        c.in_channels = j.at("in_channels");
        c.out_channels = j.at("out_channels");
        c.base = j.at("base");
        c.groups = j.at("groups");
        c.time_dim = j.at("time_dim");
        c.text_dim = j.at("text_dim");
        c.cond_dim = j.at("cond_dim");
        return c;
    }
};

// GroupNorm -> SiLU -> conv, adaptive modulation from the conditioning
// vector, second conv zero-initialized so the block starts as identity.
template <typename T>
struct ResBlockT {
    GroupNormLayer<T> gn1, gn2;
    Conv2dLayer<T> conv1, conv2;
    LinearLayer<T> mod;

    static ResBlockT create(int64_t ch, int64_t cond_dim, int groups, Rng& rng) {
        ResBlockT b;
        b.gn1 = GroupNormLayer<T>::create(ch, groups);
        b.conv1 = Conv2dLayer<T>::create(ch, ch, 3, 1, 1, rng);
        b.mod = LinearLayer<T>::create(cond_dim, 2 * ch, rng, T(0.2));
        b.gn2 = GroupNormLayer<T>::create(ch, groups);
        b.conv2 = Conv2dLayer<T>::create_zero(ch, ch, 3, 1, 1);
        return b;
    }

    TensorT<T> operator()(const TensorT<T>& x, const TensorT<T>& cond) const {
        int64_t ch = x.dim(1);
        auto h = conv1(silu(gn1(x)));
        auto m = mod(cond);
        auto scale = slice_cols(m, 0, ch);
        auto shift = slice_cols(m, ch, 2 * ch);
        h = silu(channel_modulate(gn2(h), scale, shift));
        h = conv2(h);
        return add(x, h);
    }

    void params(ParamSet<T>& ps, const std::string& p) const {
        gn1.params(ps, p + ".gn1");
        conv1.params(ps, p + ".conv1");
        mod.params(ps, p + ".mod");
        gn2.params(ps, p + ".gn2");
        conv2.params(ps, p + ".conv2");
    }
};

template <typename T>
struct Residuals {
    TensorT<T> s0, s1, m;
    bool defined() const { return s0.defined(); }
};

// Input + middle trunk: stem, two down levels, mid block. Kept separate so
// the control branch can hold a trainable copy of exactly these layers.
template <typename T>
struct UNetEncoderT {
    Conv2dLayer<T> stem;
    ResBlockT<T> enc0;
    Conv2dLayer<T> down0;
    ResBlockT<T> enc1;
    Conv2dLayer<T> down1;
    ResBlockT<T> mid;

    static UNetEncoderT create(const UNetConfig& cfg, Rng& rng) {
        UNetEncoderT e;
        int64_t b = cfg.base;
        e.stem = Conv2dLayer<T>::create(cfg.in_channels, b, 3, 1, 1, rng);
        e.enc0 = ResBlockT<T>::create(b, cfg.cond_dim, cfg.groups, rng);
        e.down0 = Conv2dLayer<T>::create(b, 2 * b, 3, 2, 1, rng);
        e.enc1 = ResBlockT<T>::create(2 * b, cfg.cond_dim, cfg.groups, rng);
        e.down1 = Conv2dLayer<T>::create(2 * b, 2 * b, 3, 2, 1, rng);
        e.mid = ResBlockT<T>::create(2 * b, cfg.cond_dim, cfg.groups, rng);
        return e;
    }

    struct Feats {
        TensorT<T> s0, s1, m;
    };

    Feats forward(const TensorT<T>& x, const TensorT<T>& cond,
                  const TensorT<T>* stem_extra = nullptr) const {
        auto h = stem(x);
        if (stem_extra) h = add(h, *stem_extra);
        auto s0 = enc0(h, cond);
        auto s1 = enc1(down0(s0), cond);
        auto m = mid(down1(s1), cond);
        return {s0, s1, m};
    }

    void params(ParamSet<T>& ps, const std::string& p) const {
        stem.params(ps, p + ".stem");
        enc0.params(ps, p + ".enc0");
        down0.params(ps, p + ".down0");
        enc1.params(ps, p + ".enc1");
        down1.params(ps, p + ".down1");
        mid.params(ps, p + ".mid");
    }
};

// Epsilon-prediction UNet. Conditioning (time step + caption tokens) enters
// every block through adaptive group-norm modulation.
template <typename T>
struct UNetT {
    UNetConfig cfg;
    EmbeddingLayer<T> text_emb;
    LinearLayer<T> cond_fc1, cond_fc2;
    UNetEncoderT<T> enc;
    Conv2dLayer<T> upconv1, fuse1;
    ResBlockT<T> dec1;
    Conv2dLayer<T> upconv0, fuse0;
    ResBlockT<T> dec0;
    GroupNormLayer<T> head_gn;
    Conv2dLayer<T> head;

    static UNetT create(const UNetConfig& cfg, Rng& rng) {
        SIMGEN_REQUIRE(cfg.time_dim % 2 == 0, config, "time_dim must be even");
        UNetT u;
        u.cfg = cfg;
        int64_t b = cfg.base;
        u.text_emb = EmbeddingLayer<T>::create(Vocab::size(), cfg.text_dim, rng);
        u.cond_fc1 = LinearLayer<T>::create(cfg.time_dim + cfg.text_dim, cfg.cond_dim, rng);
        u.cond_fc2 = LinearLayer<T>::create(cfg.cond_dim, cfg.cond_dim, rng);
        u.enc = UNetEncoderT<T>::create(cfg, rng);
        u.upconv1 = Conv2dLayer<T>::create(2 * b, 2 * b, 3, 1, 1, rng);
        u.fuse1 = Conv2dLayer<T>::create(4 * b, 2 * b, 3, 1, 1, rng);
        u.dec1 = ResBlockT<T>::create(2 * b, cfg.cond_dim, cfg.groups, rng);
        u.upconv0 = Conv2dLayer<T>::create(2 * b, b, 3, 1, 1, rng);
        u.fuse0 = Conv2dLayer<T>::create(2 * b, b, 3, 1, 1, rng);
        u.dec0 = ResBlockT<T>::create(b, cfg.cond_dim, cfg.groups, rng);
        u.head_gn = GroupNormLayer<T>::create(b, cfg.groups);
        u.head = Conv2dLayer<T>::create_zero(b, cfg.out_channels, 3, 1, 1);
        return u;
    }

    // [N, cond_dim] from sinusoidal time features and mean token embeddings
    TensorT<T> cond_vector(const std::vector<int>& t_steps,
                           const std::vector<TextCondition>& texts) const {
        const int64_t N = int64_t(t_steps.size());
        SIMGEN_REQUIRE(texts.size() == size_t(N), contract, "cond_vector: batch size mismatch");
        const int64_t half = cfg.time_dim / 2;
        std::vector<T> tf(size_t(N) * cfg.time_dim);
        for (int64_t i = 0; i < N; ++i)
            for (int64_t k = 0; k < half; ++k) {
                double w = std::pow(10000.0, -double(k) / double(half));
                tf[size_t(i * cfg.time_dim + k)] = T(std::sin(double(t_steps[size_t(i)]) * w));
                tf[size_t(i * cfg.time_dim + half + k)] =
                    T(std::cos(double(t_steps[size_t(i)]) * w));
            }
        auto time_feats = TensorT<T>::from_data({N, cfg.time_dim}, std::move(tf));

        // segment-mean matrix: one matmul embeds and averages every caption
        std::vector<int> all_ids;
        std::vector<std::pair<size_t, size_t>> spans;
        for (auto& tc : texts) {
            std::vector<int> ids = tc.null_flag ? std::vector<int>{Vocab::kNull} : tc.ids;
            spans.push_back({all_ids.size(), ids.size()});
            all_ids.insert(all_ids.end(), ids.begin(), ids.end());
        }
        std::vector<T> mix(size_t(N) * all_ids.size(), T(0));
        for (int64_t i = 0; i < N; ++i) {
            auto [off, len] = spans[size_t(i)];
            for (size_t k = 0; k < len; ++k)
                mix[size_t(i) * all_ids.size() + off + k] = T(1) / T(len);
        }
        auto mix_t = TensorT<T>::from_data({N, int64_t(all_ids.size())}, std::move(mix));
        auto tokens = embedding(text_emb.table, all_ids);
        auto text_vec = matmul(mix_t, tokens);

        auto joint = concat_cols(time_feats, text_vec);
        return cond_fc2(silu(cond_fc1(joint)));
    }

    TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& cond,
                       const Residuals<T>* res = nullptr) const {
        SIMGEN_REQUIRE(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0, config,
                       "unet input dims must be divisible by 4 (got " << x.dim(2) << "x"
                                                                      << x.dim(3) << ")");
        auto f = enc.forward(x, cond);
        auto s0 = f.s0, s1 = f.s1, m = f.m;
        if (res && res->defined()) {
            s0 = add(s0, res->s0);
            s1 = add(s1, res->s1);
            m = add(m, res->m);
        }
        auto h = upconv1(upsample_nearest2(m));
        h = dec1(fuse1(concat_channels(h, s1)), cond);
        h = upconv0(upsample_nearest2(h));
        h = dec0(fuse0(concat_channels(h, s0)), cond);
        return head(silu(head_gn(h)));
    }

    TensorT<T> operator()(const TensorT<T>& x_t, const std::vector<int>& t_steps,
                          const std::vector<TextCondition>& texts) const {
        return forward(x_t, cond_vector(t_steps, texts));
    }

    // conditioning pathway + encoder: the paper-frozen part during grafted
    // fine-tuning
    void frozen_params(ParamSet<T>& ps, const std::string& p) const {
        text_emb.params(ps, p + ".text_emb");
        cond_fc1.params(ps, p + ".cond_fc1");
        cond_fc2.params(ps, p + ".cond_fc2");
        enc.params(ps, p + ".enc");
    }

    void decoder_params(ParamSet<T>& ps, const std::string& p) const {
        upconv1.params(ps, p + ".upconv1");
        fuse1.params(ps, p + ".fuse1");
        dec1.params(ps, p + ".dec1");
        upconv0.params(ps, p + ".upconv0");
        fuse0.params(ps, p + ".fuse0");
        dec0.params(ps, p + ".dec0");
        head_gn.params(ps, p + ".head_gn");
        head.params(ps, p + ".head");
    }

    void params(ParamSet<T>& ps, const std::string& p) const {
        frozen_params(ps, p);
        decoder_params(ps, p);
    }
};

using UNet = UNetT<float>;

// Trainable copy of the trunk encoder plus zero-initialized connectors;
// residuals are exactly zero until training moves the connector weights.
template <typename T>
struct ControlBranchT {
    UNetEncoderT<T> copy;
    Conv2dLayer<T> hint_in;  // hint channels -> base, zero 1x1
    Conv2dLayer<T> zc0, zc1, zcm;
    LinearLayer<T> vec_in;   // pooled control vector -> cond_dim, zero

    static ControlBranchT create(const UNetT<T>& trunk, int64_t hint_channels, int64_t vec_dim,
                                 Rng& rng) {
        ControlBranchT c;
        c.copy = UNetEncoderT<T>::create(trunk.cfg, rng);
        // start from the trunk's weights, the ControlNet recipe
        ParamSet<T> src, dst;
        trunk.enc.params(src, "e");
        c.copy.params(dst, "e");
        SIMGEN_REQUIRE(src.items.size() == dst.items.size(), contract, "encoder copy mismatch");
        for (size_t i = 0; i < src.items.size(); ++i)
            dst.items[i].second.data() = src.items[i].second.data();
        int64_t b = trunk.cfg.base;
        c.hint_in = Conv2dLayer<T>::create_zero(hint_channels, b, 1, 1, 0);
        c.zc0 = Conv2dLayer<T>::create_zero(b, b, 1, 1, 0);
        c.zc1 = Conv2dLayer<T>::create_zero(2 * b, 2 * b, 1, 1, 0);
        c.zcm = Conv2dLayer<T>::create_zero(2 * b, 2 * b, 1, 1, 0);
        c.vec_in = LinearLayer<T>::create_zero(vec_dim, trunk.cfg.cond_dim);
        return c;
    }

    Residuals<T> forward(const TensorT<T>& x, const TensorT<T>& cond, const TensorT<T>& hint_map,
                         const TensorT<T>* ctrl_vec = nullptr) const {
        auto c = cond;
        if (ctrl_vec) c = add(c, vec_in(*ctrl_vec));
        auto hint = hint_in(hint_map);
        auto f = copy.forward(x, c, &hint);
        return {zc0(f.s0), zc1(f.s1), zcm(f.m)};
    }

    // vec_in registers separately: it only trains under adapter fusion,
    // where the pooled control vector feeds the branch conditioning
    void params_core(ParamSet<T>& ps, const std::string& p) const {
        copy.params(ps, p + ".copy");
        hint_in.params(ps, p + ".hint_in");
        zc0.params(ps, p + ".zc0");
        zc1.params(ps, p + ".zc1");
        zcm.params(ps, p + ".zcm");
    }

    void params(ParamSet<T>& ps, const std::string& p) const {
        params_core(ps, p);
        vec_in.params(ps, p + ".vec_in");
    }
};

using ControlBranch = ControlBranchT<float>;

}  // namespace simgen
