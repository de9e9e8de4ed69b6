#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "simgen/evalsuite.hpp"
#include "simgen/features.hpp"
#include "simgen/metrics.hpp"
#include "simgen/perception.hpp"
#include "simgen/traffic.hpp"

using namespace simgen;

namespace {

std::vector<std::vector<double>> random_features(int n, int d, uint64_t seed, double spread = 1.0) {
    Rng rng(seed);
    std::vector<std::vector<double>> out(static_cast<size_t>(n),
                                         std::vector<double>(static_cast<size_t>(d)));
    for (auto& row : out)
        for (auto& v : row) v = rng.next_gaussian() * spread;
    return out;
}

}  // namespace

TEST_CASE("fit_feature_stats: duplicated sample gives zero covariance") {
    std::vector<std::vector<double>> feats(7, std::vector<double>{1.0, -2.0, 0.5});
    auto st = fit_feature_stats(feats);
    CHECK(st.dim == 3);
    for (double v : st.cov) CHECK(std::abs(v) < 1e-12);
    CHECK(st.mean[0] == Catch::Approx(1.0));
    CHECK(st.mean[1] == Catch::Approx(-2.0));
}

TEST_CASE("fit_feature_stats: sample-count precondition") {
    auto feats = random_features(4, 8, 1);
    try {
        fit_feature_stats(feats);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::stats);
    }
}

TEST_CASE("fit_feature_stats: permutation invariance and split-half agreement") {
    auto feats = random_features(400, 6, 7);
    auto a = fit_feature_stats(feats);
    auto shuffled = feats;
    std::mt19937 gen(3);
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    auto b = fit_feature_stats(shuffled);
    for (int i = 0; i < a.dim; ++i) REQUIRE(a.mean[size_t(i)] == Catch::Approx(b.mean[size_t(i)]).margin(1e-10));
    for (size_t i = 0; i < a.cov.size(); ++i)
        REQUIRE(a.cov[i] == Catch::Approx(b.cov[i]).margin(1e-10));

    // two disjoint halves of one i.i.d. set agree within sampling error
    std::vector<std::vector<double>> h1(feats.begin(), feats.begin() + 200);
    std::vector<std::vector<double>> h2(feats.begin() + 200, feats.end());
    auto s1 = fit_feature_stats(h1);
    auto s2 = fit_feature_stats(h2);
    for (int i = 0; i < 6; ++i)
        CHECK(std::abs(s1.mean[size_t(i)] - s2.mean[size_t(i)]) < 4.0 / std::sqrt(200.0));
    CHECK(frechet_distance(s1, s2) < 0.5);
}

TEST_CASE("frechet_distance: identity, mean shift, diagonal oracle, symmetry") {
    auto feats = random_features(100, 5, 11);
    auto st = fit_feature_stats(feats);
    CHECK(frechet_distance(st, st) < 1e-6);

    // isotropic Gaussians N(0,I) vs N(mu,I): distance is ||mu||^2
    FeatureStats a, b;
    a.dim = b.dim = 4;
    a.count = b.count = 1000;
    a.mean = {0, 0, 0, 0};
    b.mean = {1.0, -2.0, 0.5, 3.0};
    a.cov.assign(16, 0.0);
    b.cov.assign(16, 0.0);
    for (int i = 0; i < 4; ++i) {
        a.cov[size_t(i) * 4 + i] = 1.0;
        b.cov[size_t(i) * 4 + i] = 1.0;
    }
    double mu2 = 1.0 + 4.0 + 0.25 + 9.0;
    CHECK(frechet_distance(a, b) == Catch::Approx(mu2).margin(1e-6));

    // random diagonal-covariance pair vs the scalar closed form
    Rng rng(13);
    const double lam = 1e-6;
    FeatureStats c = a, d = b;
    double expect = 0;
    for (int i = 0; i < 4; ++i) {
        double sa = 0.2 + rng.next_double() * 2.0;
        double sb = 0.2 + rng.next_double() * 2.0;
        c.cov[size_t(i) * 4 + i] = sa;
        d.cov[size_t(i) * 4 + i] = sb;
        double dm = c.mean[size_t(i)] - d.mean[size_t(i)];
        expect += dm * dm + (sa + lam) + (sb + lam) - 2.0 * std::sqrt((sa + lam) * (sb + lam));
    }
    CHECK(frechet_distance(c, d, lam) == Catch::Approx(expect).margin(1e-6));
    CHECK(frechet_distance(c, d) == Catch::Approx(frechet_distance(d, c)).margin(1e-9));

    FeatureStats wrong;
    wrong.dim = 3;
    wrong.mean = {0, 0, 0};
    wrong.cov.assign(9, 0.0);
    CHECK_THROWS_AS(frechet_distance(a, wrong), Error);
}

TEST_CASE("d_pix: constants and the two-point distribution") {
    std::vector<ImageF> consts(3, ImageF::make(4, 7, 3, 0.36f));
    CHECK(d_pix(consts) == Catch::Approx(0.0).margin(1e-9));

    std::vector<ImageF> bw = {ImageF::make(4, 7, 3, 0.f), ImageF::make(4, 7, 3, 1.f)};
    CHECK(d_pix(bw) == Catch::Approx(127.5).margin(1e-9));
}

TEST_CASE("miou: exact, disjoint, half-overlap thirds") {
    std::vector<uint8_t> gt(100, sem_road);
    CHECK(miou(gt, gt, kNumSemClasses).mean == 1.0);

    std::vector<uint8_t> pred(100, sem_vehicle);
    auto dis = miou(pred, gt, kNumSemClasses);
    CHECK(dis.mean == 0.0);

    // 10x10 grid: gt vehicle rect covers columns 0..3, pred covers 2..5 on
    // one row band -> overlap half of each rect
    std::vector<uint8_t> g(100, sem_void), p(100, sem_void);
    for (int x = 0; x < 4; ++x) g[size_t(x)] = sem_vehicle;
    for (int x = 2; x < 6; ++x) p[size_t(x)] = sem_vehicle;
    auto r = miou(p, g, kNumSemClasses);
    CHECK(r.per_class[sem_vehicle] == Catch::Approx(1.0 / 3.0));
    // absent classes carry NaN and stay out of the mean
    CHECK(std::isnan(r.per_class[sem_tree]));
}

TEST_CASE("ap_lite: exact predictions, misses, and the hand-enumerated PR curve") {
    std::vector<DetBox> gt = {{0, 0, 4, 4, 0}, {10, 0, 14, 4, 0}, {20, 0, 24, 4, 0}};
    std::vector<DetBox> exact = gt;
    for (size_t i = 0; i < exact.size(); ++i) exact[i].score = 0.9 - 0.1 * double(i);
    CHECK(ap_lite(exact, gt) == Catch::Approx(1.0));

    CHECK(ap_lite({}, gt) == 0.0);
    CHECK(ap_lite({}, {}) == 1.0);
    CHECK(ap_lite(exact, {}) == 0.0);

    // false positive ranked last: all-point AP stays 1.0 (recall saturates
    // before the FP enters the ranking)
    auto with_fp = exact;
    with_fp.push_back({40, 40, 44, 44, 0.05});
    CHECK(ap_lite(with_fp, gt) == Catch::Approx(1.0));

    // false positive ranked second: PR enumerated by hand
    // ranks: tp(1.0), fp(0.8), tp(0.6), tp(0.4)
    std::vector<DetBox> mixed = {{0, 0, 4, 4, 1.0},
                                 {40, 40, 44, 44, 0.8},
                                 {10, 0, 14, 4, 0.6},
                                 {20, 0, 24, 4, 0.4}};
    // precision envelope: [1, 3/4, 3/4, 3/4]; AP = 1/3 + 1/4 + 1/4
    CHECK(ap_lite(mixed, gt) == Catch::Approx(1.0 / 3.0 + 0.25 + 0.25).margin(1e-9));
}

TEST_CASE("ap_lite_pooled matches single-image ap on one image") {
    std::vector<DetBox> gt = {{0, 0, 4, 4, 0}, {10, 0, 14, 4, 0}};
    std::vector<DetBox> pred = {{0, 0, 4, 4, 0.9}, {40, 0, 44, 4, 0.8}, {10, 0, 14, 4, 0.7}};
    CHECK(ap_lite_pooled({{pred, gt}}) == Catch::Approx(ap_lite(pred, gt)).margin(1e-12));
}

TEST_CASE("feature extractor: training reduces loss; features are order-stable") {
    struct Labelled {
        std::vector<ImageF> imgs;
        std::vector<std::vector<float>> labs;
        size_t size() const { return imgs.size(); }
        const ImageF& image(size_t i) const { return imgs[i]; }
        const std::vector<float>& label(size_t i) const { return labs[i]; }
    } data;
    SceneConfig cfg;
    cfg.density = 3;
    auto cam = CameraSpec::for_size(16, 28);
    for (int i = 0; i < 10; ++i) {
        cfg.weather = Weather(i % 5);
        cfg.time = TimeOfDay(i % 4);
        cfg.setting = Setting(i % 5);
        auto rec = generate_procedural_scene(3000 + uint64_t(i), cfg);
        auto fr = render_front(step_scene(rec, 0.5, StepPolicy::replay), cam,
                               RenderMode::enriched, uint64_t(i));
        data.imgs.push_back(fr.rgb);
        data.labs.push_back(meta_label(cfg.weather, cfg.time, cfg.setting));
    }
    ExtractorConfig ecfg;
    ecfg.h = 16;
    ecfg.w = 28;
    ecfg.base = 8;
    ecfg.feat_dim = 8;
    ecfg.batch = 4;
    ecfg.seed = 5;
    auto ext = FeatureExtractor::create(ecfg);
    auto log = train_extractor(ext, data, 40);
    double head = (log.losses[0] + log.losses[1]) / 2;
    double tail = (log.losses[38] + log.losses[39]) / 2;
    CHECK(tail < head);

    // per-image features do not depend on batch composition
    auto f_all = extract_features(ext, data.imgs, 4);
    auto f_single = extract_features(ext, {data.imgs[3]}, 1);
    for (size_t j = 0; j < f_single[0].size(); ++j)
        REQUIRE(f_all[3][j] == Catch::Approx(f_single[0][j]).margin(1e-12));

    // version hash moves with the weights
    auto h1 = ext.version_hash();
    ext.fc_feat.b.data()[0] += 1.0f;
    CHECK(ext.version_hash() != h1);
}

TEST_CASE("toy perception: learns renderer segmentation well enough to beat chance") {
    SegSet train, test;
    SceneConfig cfg;
    cfg.density = 5;
    auto cam = CameraSpec::for_size(16, 28);
    for (int i = 0; i < 14; ++i) {
        cfg.setting = Setting(i % 5);
        auto rec = generate_procedural_scene(5000 + uint64_t(i), cfg);
        auto fr = render_front(step_scene(rec, 0.5, StepPolicy::replay), cam,
                               RenderMode::enriched, uint64_t(i));
        auto& dst = (i < 10) ? train : test;
        dst.images.push_back(fr.rgb);
        dst.labels.push_back(std::vector<uint8_t>(fr.semantic.begin(), fr.semantic.end()));
    }
    PerceptionConfig pcfg;
    pcfg.h = 16;
    pcfg.w = 28;
    pcfg.base = 12;
    pcfg.steps = 150;
    pcfg.batch = 4;
    pcfg.seed = 9;
    auto model = ToyPerception::create(pcfg);
    train_perception(model, train, pcfg.steps);
    PooledMiou pm;
    for (size_t i = 0; i < test.size(); ++i)
        pm.add(model.predict_classes(test.image(i)), test.classes(i));
    CHECK(pm.mean() > 0.2);  // far above the 1/8 chance level
    CHECK(pm.iou(sem_road) > 0.3);
}

TEST_CASE("gt_vehicle_boxes extracts per-instance rectangles") {
    int h = 8, w = 10;
    std::vector<int32_t> inst(size_t(h) * w, 0);
    std::vector<uint8_t> sem(size_t(h) * w, sem_void);
    for (int y = 2; y < 5; ++y)
        for (int x = 1; x < 4; ++x) {
            inst[size_t(y) * w + x] = 7;
            sem[size_t(y) * w + x] = sem_vehicle;
        }
    inst[size_t(6) * w + 8] = 9;
    sem[size_t(6) * w + 8] = sem_pedestrian;  // not a vehicle: excluded
    auto boxes = gt_vehicle_boxes(inst, sem, h, w);
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0].x0 == 1.0);
    CHECK(boxes[0].y0 == 2.0);
    CHECK(boxes[0].x1 == 4.0);
    CHECK(boxes[0].y1 == 5.0);
}
