#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>

#include "simgen/image.hpp"
#include "simgen/render.hpp"

using namespace simgen;

namespace {

SceneRecord lane_scene(std::vector<ObjectTrack> extra, double duration = 2.0) {
    SceneRecord rec;
    rec.duration = duration;
    LanePolyline lane;
    lane.width = 3.5;
    for (double x = -20; x <= 200.0; x += 5.0) lane.points.push_back({x, 0});
    rec.map.lanes.push_back(lane);
    int64_t n = rec.sample_count();
    ObjectTrack ego;
    ego.id = 1;
    ego.cls = ObjectClass::car;
    for (int64_t k = 0; k < n; ++k) ego.poses.push_back({0, 0, 0});
    rec.tracks.push_back(ego);
    for (auto& t : extra) rec.tracks.push_back(t);
    rec.ego_id = 1;
    rec.validate();
    return rec;
}

ObjectTrack parked(int id, ObjectClass cls, double x, double y, double len, double wid, double hgt,
                   int64_t n) {
    ObjectTrack t;
    t.id = id;
    t.cls = cls;
    t.length = len;
    t.width = wid;
    t.height = hgt;
    for (int64_t k = 0; k < n; ++k) t.poses.push_back({x, y, 0});
    return t;
}

}  // namespace

TEST_CASE("empty plain frame: only road classes, analytic ground depth") {
    auto rec = lane_scene({});
    auto ws = step_scene(rec, 0.0, StepPolicy::replay);
    auto cam = CameraSpec::for_size(32, 56);
    auto fr = render_front(ws, cam, RenderMode::plain, 0);

    std::set<uint8_t> classes(fr.semantic.begin(), fr.semantic.end());
    for (auto c : classes)
        CHECK((c == sem_road || c == sem_lane_marking || c == sem_void));

    // closed-form ground depth d(row) = h * f / (v * max_depth)
    for (int y = 0; y < fr.h; ++y)
        for (int x = 0; x < fr.w; ++x) {
            if (fr.sem_at(y, x) != sem_road) continue;
            double v = (double(y) + 0.5 - double(fr.h) / 2.0) / cam.focal_px;
            REQUIRE(v > 0);
            double expect = std::min(cam.mount_height / v / cam.max_depth, 1.0);
            REQUIRE(std::abs(double(fr.depth[size_t(y) * fr.w + x]) - expect) < 1e-5);
        }
}

TEST_CASE("vehicle with its near face 10 m from the camera reads depth 0.1") {
    auto cam = CameraSpec::for_size(32, 56);
    double len = 4.5;
    // camera sits forward_offset ahead of the ego center
    double cx = cam.forward_offset + 10.0 + len / 2.0;
    SceneRecord rec = lane_scene({});
    rec.tracks.push_back(parked(2, ObjectClass::car, cx, 0, len, 1.9, 1.5, rec.sample_count()));
    rec.validate();
    auto ws = step_scene(rec, 0.0, StepPolicy::replay);
    auto fr = render_front(ws, cam, RenderMode::plain, 0);

    int inst_pixels = 0;
    float min_depth = 1.0f;
    for (size_t i = 0; i < fr.instance.size(); ++i)
        if (fr.instance[i] == 2) {
            ++inst_pixels;
            min_depth = std::min(min_depth, fr.depth[i]);
        }
    REQUIRE(inst_pixels > 0);  // instance map nonempty
    CHECK(std::abs(double(min_depth) - 0.1) < 0.002);
    // front-face pixels: everything at the analytically projected face depth
    int face_pixels = 0;
    for (size_t i = 0; i < fr.instance.size(); ++i)
        if (fr.instance[i] == 2 && std::abs(double(fr.depth[i]) - 0.1) < 0.002) ++face_pixels;
    CHECK(face_pixels >= inst_pixels / 2);
    // semantic/instance agreement
    for (size_t i = 0; i < fr.instance.size(); ++i)
        if (fr.instance[i] != 0)
            CHECK((fr.semantic[i] == sem_vehicle || fr.semantic[i] == sem_pedestrian));
}

TEST_CASE("occlusion: nearer box claims the shared ray") {
    auto cam = CameraSpec::for_size(32, 56);
    int64_t n = lane_scene({}).sample_count();
    auto near_car = parked(2, ObjectClass::car, 12, 0, 4.5, 1.9, 1.5, n);
    auto far_car = parked(3, ObjectClass::car, 25, 0, 4.5, 1.9, 1.8, n);
    auto rec = lane_scene({near_car, far_car});
    auto ws = step_scene(rec, 0.0, StepPolicy::replay);
    auto fr = render_front(ws, cam, RenderMode::plain, 0);
    // center column: both cars straddle it; winner must be the nearer one
    int x = fr.w / 2;
    bool saw2 = false;
    for (int y = 0; y < fr.h; ++y) {
        int id = fr.instance[size_t(y) * fr.w + x];
        if (id == 2) saw2 = true;
        if (id != 0) CHECK(id == 2);  // id 3 never visible on this column
    }
    CHECK(saw2);

    // swap distances: now 3 is nearer and must win the same rays
    auto rec2 = lane_scene({parked(2, ObjectClass::car, 25, 0, 4.5, 1.9, 1.5, n),
                            parked(3, ObjectClass::car, 12, 0, 4.5, 1.9, 1.8, n)});
    auto fr2 = render_front(step_scene(rec2, 0.0, StepPolicy::replay), cam, RenderMode::plain, 0);
    bool saw3 = false;
    for (int y = 0; y < fr2.h; ++y) {
        int id = fr2.instance[size_t(y) * fr2.w + x];
        if (id == 3) saw3 = true;
        if (id != 0) CHECK(id == 3);
    }
    CHECK(saw3);
}

TEST_CASE("frames stay within range; sky pixels carry no-hit depth") {
    SceneConfig cfg;
    cfg.density = 8;
    auto cam = CameraSpec::for_size(16, 28);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        auto rec = generate_procedural_scene(900 + seed, cfg);
        auto ws = step_scene(rec, 1.0, StepPolicy::replay);
        auto fr = render_front(ws, cam, RenderMode::enriched, seed);
        for (size_t i = 0; i < fr.depth.size(); ++i) {
            REQUIRE(fr.depth[i] >= 0.0f);
            REQUIRE(fr.depth[i] <= 1.0f);
            if (fr.semantic[i] == sem_sky) REQUIRE(fr.depth[i] == 1.0f);
        }
        for (auto v : fr.rgb.data) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }
}

TEST_CASE("plain mode never emits background classes") {
    SceneConfig cfg;
    cfg.density = 7;
    auto cam = CameraSpec::for_size(16, 28);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        cfg.setting = Setting(seed % 5);
        cfg.weather = Weather(seed % 5);
        cfg.time = TimeOfDay(seed % 4);
        auto rec = generate_procedural_scene(500 + seed, cfg);
        auto ws = step_scene(rec, 0.5, StepPolicy::replay);
        auto fr = render_front(ws, cam, RenderMode::plain, seed);
        for (auto c : fr.semantic) {
            REQUIRE(c != sem_building);
            REQUIRE(c != sem_tree);
            REQUIRE(c != sem_sky);
        }
    }
}

TEST_CASE("enriched urban frames carry background pixels (statistical)") {
    SceneConfig cfg;
    cfg.density = 5;
    cfg.setting = Setting::urban;
    auto cam = CameraSpec::for_size(16, 28);
    int frames_with_bg = 0;
    double bg_fraction_sum = 0;
    const int seeds = 100;
    for (uint64_t seed = 0; seed < seeds; ++seed) {
        auto rec = generate_procedural_scene(7000 + seed, cfg);
        auto ws = step_scene(rec, 0.0, StepPolicy::replay);
        auto fr = render_front(ws, cam, RenderMode::enriched, seed);
        int bg = 0, building_tree = 0;
        for (auto c : fr.semantic) {
            if (is_background_class(SemClass(c))) ++bg;
            if (c == sem_building || c == sem_tree) ++building_tree;
        }
        bg_fraction_sum += double(bg) / double(fr.semantic.size());
        if (double(building_tree) / double(fr.semantic.size()) >= 0.01) ++frames_with_bg;
    }
    CHECK(frames_with_bg >= 95);            // >=1% building/tree pixels per urban frame
    CHECK(bg_fraction_sum / seeds > 0.25);  // plenty of background content on average
}

TEST_CASE("rendering is a pure function of (state, camera, mode, seed)") {
    SceneConfig cfg;
    cfg.density = 6;
    cfg.weather = Weather::rain;
    cfg.time = TimeOfDay::night;
    auto rec = generate_procedural_scene(31, cfg);
    auto ws = step_scene(rec, 1.5, StepPolicy::replay);
    auto cam = CameraSpec::for_size(32, 56);
    auto a = render_front(ws, cam, RenderMode::enriched, 5);
    auto b = render_front(ws, cam, RenderMode::enriched, 5);
    CHECK(a.rgb.data == b.rgb.data);
    CHECK(a.depth == b.depth);
    CHECK(a.semantic == b.semantic);
    CHECK(a.instance == b.instance);
    auto c = render_front(ws, cam, RenderMode::enriched, 6);
    CHECK(a.rgb.data != c.rgb.data);  // seed moves the procedural texture
}

TEST_CASE("camera spec validation") {
    CameraSpec cam;
    cam.focal_px = -1;
    CHECK_THROWS_AS(cam.validate(), Error);
    CameraSpec cam2;
    cam2.height = 30;
    cam2.width = 56;  // breaks the 7/4 aspect contract
    CHECK_THROWS_AS(cam2.validate(), Error);
    CHECK_THROWS_AS(CameraSpec::for_size(4, 7), Error);
}

TEST_CASE("topdown: empty scene is lanes only; forward object sits in upper half") {
    auto rec = lane_scene({});
    auto ws = step_scene(rec, 0.0, StepPolicy::replay);
    auto img = render_topdown(ws, 40.0, 64);
    REQUIRE(img.h == 64);

    int64_t n = rec.sample_count();
    auto rec2 = lane_scene({parked(2, ObjectClass::car, 10.0, 0, 4.5, 1.9, 1.5, n)});
    auto img2 = render_topdown(step_scene(rec2, 0.0, StepPolicy::replay), 40.0, 64);
    // vehicle-palette pixels appear only in the upper half
    auto vcol = kPalette[sem_vehicle];
    int upper = 0, lower = 0;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            bool is_vehicle = std::abs(img2.at(0, r, c) - vcol[0] / 255.f) < 0.02f &&
                              std::abs(img2.at(1, r, c) - vcol[1] / 255.f) < 0.02f &&
                              std::abs(img2.at(2, r, c) - vcol[2] / 255.f) < 0.02f;
            if (is_vehicle) (r < 32 ? upper : lower)++;
        }
    CHECK(upper > 0);
    CHECK(lower == 0);
}

TEST_CASE("topdown: invariant under rigid world rotation") {
    SceneConfig cfg;
    cfg.density = 5;
    auto rec = generate_procedural_scene(55, cfg);
    auto img = render_topdown(step_scene(rec, 1.0, StepPolicy::replay), 50.0, 48);

    double phi = 0.83;
    double cph = std::cos(phi), sph = std::sin(phi);
    auto rot = [&](Vec2 p) { return Vec2{p.x * cph - p.y * sph, p.x * sph + p.y * cph}; };
    SceneRecord r2 = rec;
    for (auto& lane : r2.map.lanes)
        for (auto& p : lane.points) p = rot(p);
    for (auto& poly : r2.map.intersections)
        for (auto& p : poly) p = rot(p);
    for (auto& t : r2.tracks)
        for (auto& p : t.poses) {
            Vec2 q = rot({p.x, p.y});
            p = {q.x, q.y, wrap_angle(p.heading + phi)};
        }
    auto img2 = render_topdown(step_scene(r2, 1.0, StepPolicy::replay), 50.0, 48);
    int diff = 0;
    for (size_t i = 0; i < img.data.size(); ++i)
        if (std::abs(img.data[i] - img2.data[i]) > 1e-4f) ++diff;
    CHECK(diff == 0);
}

TEST_CASE("pnm round trips") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "simgen_pnm";
    fs::create_directories(dir);
    ImageF img = ImageF::make(6, 7, 3);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = float((i * 37) % 256) / 255.f;
    auto p = (dir / "a.ppm").string();
    write_ppm(p, img);
    auto back = read_ppm(p);
    REQUIRE(back.h == 6);
    REQUIRE(back.w == 7);
    for (size_t i = 0; i < img.data.size(); ++i) REQUIRE(back.data[i] == img.data[i]);

    std::vector<float> depth(6 * 7);
    for (size_t i = 0; i < depth.size(); ++i) depth[i] = float(i) / float(depth.size());
    auto q = (dir / "d.pgm").string();
    write_pgm16(q, depth, 6, 7);
    int h = 0, w = 0;
    auto dback = read_pgm16(q, &h, &w);
    REQUIRE(h == 6);
    REQUIRE(w == 7);
    for (size_t i = 0; i < depth.size(); ++i) REQUIRE(std::abs(dback[i] - depth[i]) < 1.0f / 65535.f);
    fs::remove_all(dir);
}
