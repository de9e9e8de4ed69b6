#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "simgen/checkpoint.hpp"
#include "simgen/gradcheck.hpp"
#include "simgen/nn.hpp"
#include "simgen/optim.hpp"
#include "simgen/tensor.hpp"

using namespace simgen;

namespace {

// reference conv: quadruple loop, double accumulation
std::vector<double> conv_oracle(const std::vector<float>& x, int64_t N, int64_t C, int64_t H,
                                int64_t W, const std::vector<float>& k, int64_t O, int64_t KH,
                                int64_t KW, int stride, int pad) {
    int64_t OH = (H + 2 * pad - KH) / stride + 1;
    int64_t OW = (W + 2 * pad - KW) / stride + 1;
    std::vector<double> y(size_t(N * O * OH * OW), 0.0);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o)
            for (int64_t oy = 0; oy < OH; ++oy)
                for (int64_t ox = 0; ox < OW; ++ox) {
                    double acc = 0.0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t ky = 0; ky < KH; ++ky)
                            for (int64_t kx = 0; kx < KW; ++kx) {
                                int64_t iy = oy * stride - pad + ky;
                                int64_t ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += double(x[size_t(((n * C + c) * H + iy) * W + ix)]) *
                                       double(k[size_t(((o * C + c) * KH + ky) * KW + kx)]);
                            }
                    y[size_t(((n * O + o) * OH + oy) * OW + ox)] = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("init_tensor zeros and constant") {
    auto z = init_tensor<float>({2, 2}, InitMode::zeros, 0);
    for (float v : z.data()) CHECK(v == 0.0f);
    auto c = init_tensor<float>({3}, InitMode::constant, 0, 1.0f);
    REQUIRE(c.numel() == 3);
    for (float v : c.data()) CHECK(v == 1.0f);
}

TEST_CASE("init_tensor rejects bad shapes") {
    CHECK_THROWS_AS(init_tensor<float>({0, 2}, InitMode::zeros, 0), Error);
    CHECK_THROWS_AS(init_tensor<float>({-1}, InitMode::zeros, 0), Error);
    CHECK_THROWS_AS(init_tensor<float>({}, InitMode::zeros, 0), Error);
    try {
        init_tensor<float>({0}, InitMode::zeros, 0);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::shape);
    }
}

TEST_CASE("init_tensor normal: Monte-Carlo moments") {
    auto t = init_tensor<float>({1000000}, InitMode::normal, 7, 0.0f, 1.0f);
    double mean = 0.0;
    for (float v : t.data()) mean += v;
    mean /= double(t.numel());
    double var = 0.0;
    for (float v : t.data()) var += (v - mean) * (v - mean);
    var /= double(t.numel());
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.01);
}

TEST_CASE("init_tensor determinism: same seed gives identical bits") {
    auto a = init_tensor<float>({128}, InitMode::normal, 41);
    auto b = init_tensor<float>({128}, InitMode::normal, 41);
    CHECK(a.data() == b.data());
    auto c = init_tensor<float>({128}, InitMode::normal, 42);
    CHECK(a.data() != c.data());
}

TEST_CASE("conv2d: 1x1 identity kernel passes input through") {
    Rng rng(3);
    auto x = Tensor::normal({2, 3, 5, 5}, 0.f, 1.f, rng);
    std::vector<float> kd(9, 0.f);
    kd[0] = 1.f;  // [3,3,1,1] diag
    kd[4] = 1.f;
    kd[8] = 1.f;
    auto k = Tensor::from_data({3, 3, 1, 1}, kd);
    auto y = conv2d(x, k, 1, 0);
    REQUIRE(y.shape() == x.shape());
    for (size_t i = 0; i < y.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d: hand-summed 2x2 sum kernel") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto k = Tensor::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
    auto y = conv2d(x, k, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.data()[0] == 10.0f);
}

TEST_CASE("conv2d matches brute-force oracle across shape classes") {
    struct Case {
        int64_t N, C, H, W, O, K;
        int stride, pad;
    };
    std::vector<Case> cases = {
        {1, 3, 8, 8, 4, 3, 1, 0}, {2, 4, 9, 7, 3, 3, 1, 1}, {1, 2, 8, 8, 5, 3, 2, 1},
        {2, 1, 6, 10, 2, 5, 1, 2}, {1, 8, 4, 7, 8, 1, 1, 0}, {1, 3, 12, 12, 2, 3, 3, 1},
    };
    for (uint64_t seed = 0; seed < 5; ++seed) {
        for (auto& cs : cases) {
            Rng rng(100 + seed);
            auto x = Tensor::normal({cs.N, cs.C, cs.H, cs.W}, 0.f, 1.f, rng);
            auto k = Tensor::normal({cs.O, cs.C, cs.K, cs.K}, 0.f, 0.5f, rng);
            auto y = conv2d(x, k, cs.stride, cs.pad);
            auto ref = conv_oracle(x.data(), cs.N, cs.C, cs.H, cs.W, k.data(), cs.O, cs.K, cs.K,
                                   cs.stride, cs.pad);
            REQUIRE(y.data().size() == ref.size());
            for (size_t i = 0; i < ref.size(); ++i)
                REQUIRE(std::abs(double(y.data()[i]) - ref[i]) < 1e-6);
        }
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    auto x = Tensor::zeros({1, 3, 4, 4});
    auto k = Tensor::zeros({2, 4, 3, 3});
    try {
        conv2d(x, k, 1, 1);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::shape);
    }
}

TEST_CASE("matmul: identity, hand case, oracle") {
    Rng rng(5);
    auto x = Tensor::normal({3, 4}, 0.f, 1.f, rng);
    auto eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto y = matmul(eye, x);
    CHECK(y.data() == x.data());

    auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::from_data({2, 1}, {5, 6});
    auto c = matmul(a, b);
    CHECK(c.data()[0] == 17.0f);
    CHECK(c.data()[1] == 39.0f);

    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng r2(200 + seed);
        auto p = Tensor::normal({5, 7}, 0.f, 1.f, r2);
        auto q = Tensor::normal({7, 3}, 0.f, 1.f, r2);
        auto pq = matmul(p, q);
        for (int64_t i = 0; i < 5; ++i)
            for (int64_t j = 0; j < 3; ++j) {
                double acc = 0;
                for (int64_t k = 0; k < 7; ++k)
                    acc += double(p.data()[size_t(i * 7 + k)]) * double(q.data()[size_t(k * 3 + j)]);
                REQUIRE(std::abs(double(pq.data()[size_t(i * 3 + j)]) - acc) < 1e-6);
            }
    }
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), Error);
}

TEST_CASE("group_norm: constant input normalizes to zero") {
    auto x = Tensor::constant({2, 4, 3, 3}, 5.0f);
    auto gain = Tensor::constant({4}, 1.0f);
    auto bias = Tensor::zeros({4});
    auto y = group_norm(x, 2, gain, bias);
    for (float v : y.data()) CHECK(std::abs(v) < 1e-6f);
}

TEST_CASE("group_norm: zero gain collapses to bias") {
    Rng rng(9);
    auto x = Tensor::normal({1, 4, 5, 5}, 0.f, 2.f, rng);
    auto gain = Tensor::zeros({4});
    auto bias = Tensor::constant({4}, 0.75f);
    auto y = group_norm(x, 4, gain, bias);
    for (float v : y.data()) CHECK(v == 0.75f);
}

TEST_CASE("group_norm: per-group statistics pre-affine") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(300 + seed);
        int64_t N = 2, C = 8, H = 6, W = 7;
        int groups = 4;
        auto x = Tensor::normal({N, C, H, W}, 1.5f, 3.f, rng);
        auto gain = Tensor::constant({C}, 1.0f);
        auto bias = Tensor::zeros({C});
        auto y = group_norm(x, groups, gain, bias);
        int64_t cpg = C / groups, m = cpg * H * W;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t g = 0; g < groups; ++g) {
                double mean = 0, var = 0;
                const float* p = y.data().data() + (n * C + g * cpg) * H * W;
                for (int64_t i = 0; i < m; ++i) mean += p[i];
                mean /= double(m);
                for (int64_t i = 0; i < m; ++i) var += (p[i] - mean) * (p[i] - mean);
                var /= double(m);
                REQUIRE(std::abs(mean) < 1e-5);
                REQUIRE(std::abs(var - 1.0) < 1e-4);
            }
    }
    CHECK_THROWS_AS(group_norm(Tensor::zeros({1, 6, 2, 2}), 4, Tensor::zeros({6}),
                               Tensor::zeros({6})),
                    Error);
}

TEST_CASE("silu values") {
    auto x = Tensor::from_data({3}, {0.f, 20.f, 1.f});
    auto y = silu(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(std::abs(y.data()[1] - 20.f) < 1e-4f);
    CHECK(std::abs(y.data()[2] - 0.7310586f) < 1e-6f);
}

TEST_CASE("mse_loss: zero, hand value, loop oracle") {
    Rng rng(11);
    auto a = Tensor::normal({4, 4}, 0.f, 1.f, rng);
    CHECK(mse_loss(a, a).item() == 0.0f);

    auto p = Tensor::from_data({1}, {2.f});
    auto t = Tensor::from_data({1}, {0.f});
    CHECK(mse_loss(p, t).item() == 4.0f);

    auto c = Tensor::normal({4, 4}, 0.f, 0.2f, rng);
    auto d = Tensor::normal({4, 4}, 0.f, 0.2f, rng);
    double oracle = 0.0;
    for (size_t i = 0; i < c.data().size(); ++i) {
        double diff = double(c.data()[i]) - double(d.data()[i]);
        oracle += diff * diff;
    }
    oracle /= double(c.numel());
    CHECK(std::abs(double(mse_loss(c, d).item()) - oracle) < 1e-7);
    CHECK_THROWS_AS(mse_loss(a, Tensor::zeros({2, 2})), Error);
}

TEST_CASE("backward: sum gradient is ones") {
    auto x = Tensor::constant({4}, 2.0f, true);
    auto loss = sum_all(x);
    backward(loss);
    REQUIRE(x.has_grad());
    for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("backward: mse chain rule by hand") {
    auto x = Tensor::from_data({1}, {3.f}, true);
    auto t = Tensor::from_data({1}, {0.f});
    auto loss = mse_loss(x, t);
    backward(loss);
    CHECK(x.grad()[0] == 6.0f);
}

TEST_CASE("backward: non-scalar loss is a contract error") {
    auto x = Tensor::constant({3}, 1.0f, true);
    auto y = mul_scalar(x, 2.0f);
    try {
        backward(y);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::contract);
    }
    auto z = Tensor::constant({1}, 1.0f);  // no requires_grad anywhere
    auto l = mean_all(z);
    CHECK_THROWS_AS(backward(l), Error);
}

TEST_CASE("backward: accumulation is additive (double backward doubles)") {
    Rng rng(13);
    auto x = Tensor::normal({2, 3, 6, 6}, 0.f, 1.f, rng).set_requires_grad(true);
    auto k = Tensor::normal({3, 3, 3, 3}, 0.f, 0.5f, rng).set_requires_grad(true);
    auto run = [&]() {
        auto y = silu(conv2d(x, k, 1, 1));
        return mse_loss(y, Tensor::zeros(y.shape()));
    };
    auto l1 = run();
    backward(l1);
    auto g1x = x.grad();
    auto g1k = k.grad();
    auto l2 = run();
    backward(l2);
    for (size_t i = 0; i < g1x.size(); ++i) CHECK(x.grad()[i] == 2.0f * g1x[i]);
    for (size_t i = 0; i < g1k.size(); ++i) CHECK(k.grad()[i] == 2.0f * g1k[i]);
}

TEST_CASE("forward determinism: identical runs produce identical bits") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng r1(500 + seed), r2(500 + seed);
        auto x1 = Tensor::normal({1, 4, 8, 8}, 0.f, 1.f, r1);
        auto k1 = Tensor::normal({4, 4, 3, 3}, 0.f, 0.5f, r1);
        auto x2 = Tensor::normal({1, 4, 8, 8}, 0.f, 1.f, r2);
        auto k2 = Tensor::normal({4, 4, 3, 3}, 0.f, 0.5f, r2);
        auto y1 = silu(conv2d(x1, k1, 1, 1));
        auto y2 = silu(conv2d(x2, k2, 1, 1));
        REQUIRE(y1.data() == y2.data());
    }
}

TEST_CASE("adamw: zero grads and zero decay leave params unchanged") {
    auto w = Tensor::constant({4}, 1.5f, true);
    AdamW opt({w}, 0.1f, 0.0f);
    w.grad().assign(4, 0.0f);
    opt.step();
    for (float v : w.data()) CHECK(v == 1.5f);
    CHECK(opt.step_count == 1);
}

TEST_CASE("adamw: descent direction on first step") {
    auto w = Tensor::constant({1}, 2.0f, true);
    AdamW opt({w}, 0.1f, 0.0f);
    w.grad().assign(1, 1.0f);
    opt.step();
    CHECK(w.data()[0] < 2.0f);
    CHECK(!w.has_grad());  // grads consumed
}

TEST_CASE("adamw: converges on convex scalar") {
    auto w = Tensor::zeros({1}, true);
    AdamW opt({w}, 0.1f, 0.0f);
    for (int i = 0; i < 100; ++i) {
        auto target = Tensor::constant({1}, 3.0f);
        auto loss = mse_loss(w, target);
        backward(loss);
        opt.step();
    }
    CHECK(std::abs(w.data()[0] - 3.0f) < 0.1f);
}

TEST_CASE("adamw: missing grad is a contract error") {
    auto w = Tensor::zeros({2}, true);
    AdamW opt({w}, 0.1f);
    try {
        opt.step();
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::contract);
    }
}

TEST_CASE("grad_check: linear layer below 1e-6") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(600 + seed);
        auto lin = LinearLayer<double>::create(6, 4, rng);
        auto x = Tensor64::normal({3, 6}, 0.0, 1.0, rng).set_requires_grad(true);
        auto probe = Tensor64::normal({3, 4}, 0.0, 1.0, rng);
        auto fn = [&]() { return mse_loss(lin(x), probe); };
        auto rep = grad_check(fn, {x, lin.w, lin.b}, rng.split(1), 16);
        CHECK(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("grad_check: conv + group_norm + silu stack below 1e-4") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(700 + seed);
        auto conv = Conv2dLayer<double>::create(3, 8, 3, 1, 1, rng);
        auto gn = GroupNormLayer<double>::create(8, 4);
        auto x = Tensor64::normal({2, 3, 6, 8}, 0.0, 1.0, rng).set_requires_grad(true);
        auto probe = Tensor64::normal({2, 8, 6, 8}, 0.0, 1.0, rng);
        auto fn = [&]() { return mse_loss(silu(gn(conv(x))), probe); };
        auto rep = grad_check(fn, {x, conv.w, conv.b, gn.gain, gn.bias}, rng.split(1), 12);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("grad_check: structural ops (concat, upsample, pools, modulate)") {
    Rng rng(800);
    auto c1 = Conv2dLayer<double>::create(2, 4, 3, 1, 1, rng);
    auto c2 = Conv2dLayer<double>::create(2, 4, 3, 2, 1, rng);
    auto lin = LinearLayer<double>::create(8, 6, rng);
    auto x = Tensor64::normal({2, 2, 4, 6}, 0.0, 1.0, rng).set_requires_grad(true);
    auto emb = Tensor64::normal({5, 8}, 0.0, 1.0, rng).set_requires_grad(true);
    auto fn = [&]() {
        auto a = c1(x);                       // [2,4,4,6]
        auto b = upsample_nearest2(c2(x));    // [2,4,4,6]
        auto cat = concat_channels(a, b);     // [2,8,4,6]
        auto e = embedding(emb, {1, 3});      // [2,8]
        auto mods = lin(e);                   // [2,6]
        auto scale = slice_cols(mods, 0, 3);
        auto shift = slice_cols(mods, 3, 6);
        auto pooled = global_max_pool(cat);   // [2,8]
        auto small = reshape(slice_cols(pooled, 0, 3), Shape{2, 3, 1, 1});
        auto modded = channel_modulate(small, scale, shift);
        auto gm = global_mean_pool(cat);
        return add(mean_all(modded), mean_all(sum_all(gm)));
    };
    auto rep = grad_check(fn, {x, emb, c1.w, c1.b, c2.w, c2.b, lin.w, lin.b}, rng.split(2), 10);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("debug finite check trips on overflow") {
    auto x = Tensor::constant({4}, 1e30f, true);
    CHECK_THROWS_AS(mul(x, x), Error);
}

TEST_CASE("checkpoint: lossless round trip and version guard") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "simgen_ckpt_test";
    fs::create_directories(dir);
    auto path = (dir / "model.ckpt").string();

    Rng rng(19);
    Checkpoint ck;
    ck.config = {{"lr", 0.001}, {"steps", 100}};
    auto a = Tensor::normal({3, 4}, 0.f, 1.f, rng);
    auto b = Tensor::normal({7}, 0.f, 1.f, rng);
    ck.add("layer.w", a);
    ck.add("layer.b", b);
    ck.save(path);

    auto loaded = Checkpoint::load(path);
    REQUIRE(loaded.arrays.size() == 2);
    CHECK(loaded.config["steps"] == 100);
    CHECK(loaded.find("layer.w")->data() == a.data());
    CHECK(loaded.find("layer.b")->data() == b.data());
    CHECK(loaded.find("layer.w")->shape() == a.shape());

    // truncated file parses as an error, not a crash
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out(path + ".trunc", std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size() / 2));
    }
    try {
        Checkpoint::load(path + ".trunc");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
    }

    {
        std::ofstream out(path + ".bad", std::ios::binary);
        out.write("NOPE", 4);
    }
    CHECK_THROWS_AS(Checkpoint::load(path + ".bad"), Error);
    fs::remove_all(dir);
}
