#include <catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "simgen/dataset.hpp"

using namespace simgen;
namespace fs = std::filesystem;

namespace {

ImageF render_sample_frame(uint64_t seed, Weather w = Weather::clear,
                           TimeOfDay t = TimeOfDay::day) {
    SceneConfig cfg;
    cfg.density = 4;
    cfg.weather = w;
    cfg.time = t;
    auto rec = generate_procedural_scene(seed, cfg);
    auto cam = CameraSpec::for_size(16, 28);
    return render_front(step_scene(rec, 0.5, StepPolicy::replay), cam, RenderMode::enriched, seed)
        .rgb;
}

}  // namespace

TEST_CASE("checklist: black frames fail, normal frames pass") {
    ChecklistConfig cfg;
    auto black = ImageF::make(16, 28, 3, 0.005f);
    auto res = quality_checklist(black, nullptr, cfg);
    REQUIRE(!res.pass);
    CHECK(res.reasons == std::vector<std::string>{"black-screen"});

    auto normal = render_sample_frame(11);
    CHECK(quality_checklist(normal, nullptr, cfg).pass);
}

TEST_CASE("checklist: constructed transition and blur failures fire the detectors") {
    // calibrate on clean consecutive frames
    SceneConfig scfg;
    scfg.density = 4;
    auto cam = CameraSpec::for_size(16, 28);
    std::vector<ImageF> frames;
    std::vector<ImageF> prev_store;
    for (uint64_t s = 0; s < 24; ++s) {
        auto rec = generate_procedural_scene(800 + s, scfg);
        frames.push_back(
            render_front(step_scene(rec, 0.6, StepPolicy::replay), cam, RenderMode::enriched, s)
                .rgb);
        prev_store.push_back(
            render_front(step_scene(rec, 0.5, StepPolicy::replay), cam, RenderMode::enriched, s)
                .rgb);
    }
    std::vector<const ImageF*> prevs;
    for (auto& p : prev_store) prevs.push_back(&p);
    auto cfg = calibrate_checklist(frames, prevs);
    CHECK(cfg.tau_blur > 0);
    CHECK(cfg.tau_trans > 0);

    // percentile thresholds pass nearly every clean frame (only strict
    // outliers beyond the 5th/95th marks fail)
    int passed = 0;
    for (size_t i = 0; i < frames.size(); ++i)
        passed += quality_checklist(frames[i], prevs[i], cfg).pass;
    CHECK(passed >= int(frames.size()) - 4);

    // synthetic transition: frame blended 50/50 with an unrelated successor
    auto other = render_sample_frame(4242, Weather::snow, TimeOfDay::night);
    ImageF blended = frames[0];
    for (size_t i = 0; i < blended.data.size(); ++i)
        blended.data[i] = 0.5f * blended.data[i] + 0.5f * other.data[i];
    auto res = quality_checklist(blended, prevs[0], cfg);
    REQUIRE(!res.pass);
    bool has_transition = false;
    for (auto& r : res.reasons) has_transition = has_transition || r == "transition";
    CHECK(has_transition);

    // blur: heavy box filter collapses the Laplacian variance
    ImageF blurred = frames[0];
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < blurred.h; ++y)
            for (int x = 0; x < blurred.w; ++x) {
                float acc = 0;
                int cnt = 0;
                for (int dy = -3; dy <= 3; ++dy)
                    for (int dx = -3; dx <= 3; ++dx) {
                        int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= blurred.h || nx < 0 || nx >= blurred.w) continue;
                        acc += frames[0].at(ch, ny, nx);
                        ++cnt;
                    }
                blurred.at(ch, y, x) = acc / float(cnt);
            }
    auto res2 = quality_checklist(blurred, nullptr, cfg);
    REQUIRE(!res2.pass);
    bool has_blur = false;
    for (auto& r : res2.reasons) has_blur = has_blur || r == "blur";
    CHECK(has_blur);
}

TEST_CASE("checklist: a failing probe rejects its five-frame batch") {
    ChecklistConfig cfg;
    std::vector<ImageF> batch(5, render_sample_frame(21));
    batch[2] = ImageF::make(16, 28, 3, 0.0f);  // black probe
    std::vector<const ImageF*> prevs(5, nullptr);
    CHECK(checklist_accepts_batch(batch, prevs, cfg, 0));
    CHECK(!checklist_accepts_batch(batch, prevs, cfg, 2));
}

TEST_CASE("caption template is exact and closed-vocabulary") {
    SceneConfig cfg;
    cfg.density = 3;  // lands in the 'few' bucket
    cfg.weather = Weather::clear;
    cfg.time = TimeOfDay::day;
    cfg.setting = Setting::urban;
    auto rec = generate_procedural_scene(5, cfg);
    int vehicles = 0;
    for (auto& t : rec.tracks)
        if (t.id != rec.ego_id &&
            (t.cls == ObjectClass::car || t.cls == ObjectClass::truck ||
             t.cls == ObjectClass::cyclist))
            ++vehicles;
    if (vehicles >= 1 && vehicles <= 3) {
        CHECK(caption_from_record(rec) == "a clear day drive in a urban with few vehicles");
    }
    CHECK(caption_from_record(rec) == caption_from_record(rec));

    // every token of every caption is in-vocabulary, over a corpus sweep
    for (uint64_t seed = 0; seed < 40; ++seed) {
        SceneConfig c2;
        c2.density = double(seed % 12);
        c2.weather = Weather(seed % 5);
        c2.time = TimeOfDay(seed % 4);
        c2.setting = Setting(seed % 5);
        auto r = generate_procedural_scene(seed, c2);
        auto caption = caption_from_record(r);
        auto ids = Vocab::tokenize(caption);  // throws on out-of-vocabulary tokens
        CHECK(!ids.empty());
    }
}

TEST_CASE("count buckets") {
    CHECK(std::string(count_bucket(0)) == "no");
    CHECK(std::string(count_bucket(1)) == "few");
    CHECK(std::string(count_bucket(3)) == "few");
    CHECK(std::string(count_bucket(4)) == "several");
    CHECK(std::string(count_bucket(7)) == "several");
    CHECK(std::string(count_bucket(8)) == "many");
}

TEST_CASE("build_dataset: deterministic manifest hash, disjoint splits, path contract") {
    auto dir1 = fs::temp_directory_path() / "simgen_ds_a";
    auto dir2 = fs::temp_directory_path() / "simgen_ds_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    BuildConfig cfg;
    cfg.n_real = 8;
    cfg.n_sim = 8;
    cfg.height = 16;
    cfg.width = 28;
    cfg.seed = 77;
    auto m1 = build_dataset(cfg, dir1.string());
    auto m2 = build_dataset(cfg, dir2.string());
    CHECK(m1.hash() == m2.hash());

    BuildConfig cfg2 = cfg;
    cfg2.seed = 78;
    fs::remove_all(dir2);
    auto m3 = build_dataset(cfg2, dir2.string());
    CHECK(m1.hash() != m3.hash());

    // split disjointness by scene and the Table-2 path contract
    std::map<std::string, std::set<std::string>> scene_splits;
    for (auto& e : m1.entries) {
        scene_splits[e.scene_path].insert(e.split);
        REQUIRE(fs::exists(dir1 / e.rgb));
        REQUIRE(fs::exists(dir1 / e.depth));
        REQUIRE(fs::exists(dir1 / e.seg));
        REQUIRE(fs::exists(dir1 / e.scene_path));
        if (e.provenance == "sim") {
            REQUIRE(!e.sim_depth.empty());
            REQUIRE(!e.sim_seg.empty());
            REQUIRE(!e.extra_rgb.empty());
            REQUIRE(!e.instance.empty());
            REQUIRE(!e.topdown.empty());
            REQUIRE(fs::exists(dir1 / e.topdown));
        } else {
            REQUIRE(e.sim_depth.empty());
            REQUIRE(e.extra_rgb.empty());
        }
    }
    for (auto& [scene, splits] : scene_splits) REQUIRE(splits.size() == 1);

    // loader round trip: decoded classes match the paletted files
    auto ds = LoadedDataset::load(dir1.string());
    REQUIRE(ds.samples.size() == m1.entries.size());
    for (auto& s : ds.samples) {
        REQUIRE(s.rgb.h == 16);
        REQUIRE(s.realcond.h == 16);
        if (s.meta.provenance == "sim") {
            REQUIRE(s.extra.has_value());
            // plain renders never carry background classes
            for (auto c : s.extra->semantic) {
                REQUIRE(c != sem_building);
                REQUIRE(c != sem_tree);
                REQUIRE(c != sem_sky);
            }
        }
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("build_dataset: stratification leaves no cell under 1%") {
    auto dir = fs::temp_directory_path() / "simgen_ds_strat";
    fs::remove_all(dir);
    BuildConfig cfg;
    cfg.n_real = 200;
    cfg.n_sim = 0;
    cfg.frames_per_scene = 2;
    cfg.height = 16;
    cfg.width = 28;
    cfg.seed = 3;
    auto m = build_dataset(cfg, dir.string());
    std::map<std::string, int> cells;
    for (auto& e : m.entries) cells[e.weather + "/" + e.time_of_day + "/" + e.setting]++;
    REQUIRE(cells.size() == 100);
    for (auto& [cell, count] : cells)
        REQUIRE(double(count) / double(m.entries.size()) >= 0.01 - 1e-9);
    fs::remove_all(dir);
}

TEST_CASE("build_dataset: cleaning shortfall raises a build error with counts") {
    auto dir = fs::temp_directory_path() / "simgen_ds_short";
    fs::remove_all(dir);
    BuildConfig cfg;
    cfg.n_real = 8;
    cfg.n_sim = 0;
    cfg.height = 16;
    cfg.width = 28;
    ChecklistConfig never_pass;
    never_pass.tau_black = 10.0;  // everything reads as a black screen
    try {
        build_dataset(cfg, dir.string(), &never_pass);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::build);
        CHECK(std::string(e.what()).find("rejected") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest io: duplicate ids and cross-split scenes rejected") {
    BuildConfig cfg;
    cfg.n_real = 4;
    cfg.n_sim = 0;
    cfg.height = 16;
    cfg.width = 28;
    auto dir = fs::temp_directory_path() / "simgen_ds_io";
    fs::remove_all(dir);
    auto m = build_dataset(cfg, dir.string());
    auto j = m.to_json();
    auto loaded = DatasetManifest::from_json(j);
    CHECK(loaded.hash() == m.hash());

    auto dup = j;
    dup["entries"].push_back(dup["entries"][0]);
    CHECK_THROWS_AS(DatasetManifest::from_json(dup), Error);

    auto cross = j;
    REQUIRE(cross["entries"].size() >= 2);
    cross["entries"][1]["split"] = "val";
    cross["entries"][1]["id"] = "other";
    // entries 0 and 1 share a scene (two frames per scene)
    if (cross["entries"][0]["scene"] == cross["entries"][1]["scene"])
        CHECK_THROWS_AS(DatasetManifest::from_json(cross), Error);
    fs::remove_all(dir);
}
