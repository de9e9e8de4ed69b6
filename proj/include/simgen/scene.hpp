#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgen/common.hpp"
#include "simgen/geometry.hpp"

namespace simgen {

enum class ObjectClass { car, truck, pedestrian, cyclist };
enum class Weather { clear, rain, fog, snow, overcast };
enum class TimeOfDay { day, dawn, dusk, night };
enum class Setting { urban, rural, highway, desert, mountain };

inline const char* to_string(ObjectClass c) {
    switch (c) {
        case ObjectClass::car: return "car";
        case ObjectClass::truck: return "truck";
        case ObjectClass::pedestrian: return "pedestrian";
        case ObjectClass::cyclist: return "cyclist";
    }
    return "?";
}
inline const char* to_string(Weather w) {
    switch (w) {
        case Weather::clear: return "clear";
        case Weather::rain: return "rain";
        case Weather::fog: return "fog";
        case Weather::snow: return "snow";
        case Weather::overcast: return "overcast";
    }
    return "?";
}
inline const char* to_string(TimeOfDay t) {
    switch (t) {
        case TimeOfDay::day: return "day";
        case TimeOfDay::dawn: return "dawn";
        case TimeOfDay::dusk: return "dusk";
        case TimeOfDay::night: return "night";
    }
    return "?";
}
inline const char* to_string(Setting s) {
    switch (s) {
        case Setting::urban: return "urban";
        case Setting::rural: return "rural";
        case Setting::highway: return "highway";
        case Setting::desert: return "desert";
        case Setting::mountain: return "mountain";
    }
    return "?";
}

template <typename E>
E enum_from_string(const std::string& s, std::initializer_list<E> all, const char* what) {
    for (E e : all)
        if (s == to_string(e)) return e;
    fail(ErrorKind::parse, std::string("unknown ") + what + ": " + s);
}

inline ObjectClass object_class_from_string(const std::string& s) {
    return enum_from_string<ObjectClass>(
        s, {ObjectClass::car, ObjectClass::truck, ObjectClass::pedestrian, ObjectClass::cyclist},
        "object class");
}
inline Weather weather_from_string(const std::string& s) {
    return enum_from_string<Weather>(
        s, {Weather::clear, Weather::rain, Weather::fog, Weather::snow, Weather::overcast},
        "weather");
}
inline TimeOfDay time_from_string(const std::string& s) {
    return enum_from_string<TimeOfDay>(
        s, {TimeOfDay::day, TimeOfDay::dawn, TimeOfDay::dusk, TimeOfDay::night}, "time of day");
}
inline Setting setting_from_string(const std::string& s) {
    return enum_from_string<Setting>(
        s, {Setting::urban, Setting::rural, Setting::highway, Setting::desert, Setting::mountain},
        "setting");
}

struct Pose {
    double x = 0, y = 0, heading = 0;
    Vec2 pos() const { return {x, y}; }
};

struct LanePolyline {
    std::vector<Vec2> points;  // centerline, meters
    double width = 3.5;
};

struct SceneMap {
    std::vector<LanePolyline> lanes;
    std::vector<std::vector<Vec2>> intersections;  // polygons
};

struct ObjectTrack {
    int id = 0;
    ObjectClass cls = ObjectClass::car;
    double length = 4.5, width = 1.9, height = 1.5;
    std::vector<Pose> poses;  // sampled at kSampleHz covering [0, duration]
};

struct SceneMeta {
    Weather weather = Weather::clear;
    TimeOfDay time = TimeOfDay::day;
    Setting setting = Setting::urban;
};

struct SceneRecord {
    static constexpr double kSampleHz = 10.0;
    static constexpr const char* kSchema = "simgen.scene/1";

    SceneMap map;
    std::vector<ObjectTrack> tracks;
    int ego_id = 0;
    double duration = 10.0;
    SceneMeta meta;

    int64_t sample_count() const { return int64_t(std::lround(duration * kSampleHz)) + 1; }

    const ObjectTrack* find_track(int id) const {
        for (auto& t : tracks)
            if (t.id == id) return &t;
        return nullptr;
    }

    ObjectTrack* find_track(int id) {
        for (auto& t : tracks)
            if (t.id == id) return &t;
        return nullptr;
    }

    void validate() const {
        SIMGEN_REQUIRE(duration > 0, contract, "scene duration must be positive");
        SIMGEN_REQUIRE(find_track(ego_id) != nullptr, contract,
                       "ego id " << ego_id << " not present in tracks");
        int64_t n = sample_count();
        for (auto& t : tracks) {
            SIMGEN_REQUIRE(int64_t(t.poses.size()) == n, contract,
                           "track " << t.id << " has " << t.poses.size() << " poses, expected "
                                    << n);
            SIMGEN_REQUIRE(t.length > 0 && t.width > 0 && t.height > 0, contract,
                           "track " << t.id << " has non-positive size");
            for (auto& p : t.poses)
                SIMGEN_REQUIRE(p.heading > -M_PI - 1e-9 && p.heading <= M_PI + 1e-9, contract,
                               "track " << t.id << " heading out of (-pi, pi]");
        }
    }

    // Logged pose interpolated at time t: linear position, shortest-arc heading.
    Pose pose_at(const ObjectTrack& track, double t) const {
        SIMGEN_REQUIRE(t >= 0 && t <= duration + 1e-9, range,
                       "time " << t << " outside [0, " << duration << "]");
        double ft = t * kSampleHz;
        int64_t i0 = int64_t(std::floor(ft));
        int64_t last = int64_t(track.poses.size()) - 1;
        if (i0 >= last) return track.poses[size_t(last)];
        double u = ft - double(i0);
        const Pose& a = track.poses[size_t(i0)];
        const Pose& b = track.poses[size_t(i0 + 1)];
        return {a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u, lerp_heading(a.heading, b.heading, u)};
    }
};

// ---------------------------------------------------------------------------
// Serialization (versioned, human-readable)
// ---------------------------------------------------------------------------

inline nlohmann::json scene_to_json(const SceneRecord& rec) {
    nlohmann::json j;
    j["schema"] = SceneRecord::kSchema;
    j["duration"] = rec.duration;
    j["ego_id"] = rec.ego_id;
    j["metadata"] = {{"weather", to_string(rec.meta.weather)},
                     {"time", to_string(rec.meta.time)},
                     {"setting", to_string(rec.meta.setting)}};
    nlohmann::json lanes = nlohmann::json::array();
    for (auto& l : rec.map.lanes) {
        nlohmann::json pts = nlohmann::json::array();
        for (auto& p : l.points) pts.push_back({p.x, p.y});
        lanes.push_back({{"width", l.width}, {"points", pts}});
    }
    j["map"]["lanes"] = lanes;
    nlohmann::json inters = nlohmann::json::array();
    for (auto& poly : rec.map.intersections) {
        nlohmann::json pts = nlohmann::json::array();
        for (auto& p : poly) pts.push_back({p.x, p.y});
        inters.push_back(pts);
    }
    j["map"]["intersections"] = inters;
    nlohmann::json tracks = nlohmann::json::array();
    for (auto& t : rec.tracks) {
        nlohmann::json poses = nlohmann::json::array();
        for (auto& p : t.poses) poses.push_back({p.x, p.y, p.heading});
        tracks.push_back({{"id", t.id},
                          {"class", to_string(t.cls)},
                          {"size", {t.length, t.width, t.height}},
                          {"poses", poses}});
    }
    j["tracks"] = tracks;
    return j;
}

inline std::string scene_to_text(const SceneRecord& rec) { return scene_to_json(rec).dump(1); }

inline SceneRecord scene_from_json(const nlohmann::json& j) {
    SceneRecord rec;
    try {
        std::string schema = j.at("schema").get<std::string>();
        SIMGEN_REQUIRE(schema == SceneRecord::kSchema, parse,
                       "unknown scene schema version: " << schema);
        rec.duration = j.at("duration").get<double>();
        rec.ego_id = j.at("ego_id").get<int>();
        auto& md = j.at("metadata");
        rec.meta.weather = weather_from_string(md.at("weather").get<std::string>());
        rec.meta.time = time_from_string(md.at("time").get<std::string>());
        rec.meta.setting = setting_from_string(md.at("setting").get<std::string>());
        for (auto& l : j.at("map").at("lanes")) {
            LanePolyline lane;
            lane.width = l.at("width").get<double>();
            for (auto& p : l.at("points")) lane.points.push_back({p.at(0), p.at(1)});
            rec.map.lanes.push_back(std::move(lane));
        }
        for (auto& poly : j.at("map").at("intersections")) {
            std::vector<Vec2> pts;
            for (auto& p : poly) pts.push_back({p.at(0), p.at(1)});
            rec.map.intersections.push_back(std::move(pts));
        }
        for (auto& t : j.at("tracks")) {
            ObjectTrack tr;
            tr.id = t.at("id").get<int>();
            tr.cls = object_class_from_string(t.at("class").get<std::string>());
            auto& sz = t.at("size");
            tr.length = sz.at(0);
            tr.width = sz.at(1);
            tr.height = sz.at(2);
            for (auto& p : t.at("poses")) tr.poses.push_back({p.at(0), p.at(1), p.at(2)});
            rec.tracks.push_back(std::move(tr));
        }
    } catch (const nlohmann::json::exception& e) {
        // e.what() carries the json pointer path of the offending field
        fail(ErrorKind::parse, std::string("malformed scene record: ") + e.what());
    }
    rec.validate();
    return rec;
}

inline SceneRecord scene_from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, std::string("scene record is not valid JSON: ") + e.what());
    }
    return scene_from_json(j);
}

inline void save_scene(const SceneRecord& rec, const std::string& path) {
    std::ofstream f(path);
    SIMGEN_REQUIRE(f.good(), io, "cannot write scene record: " << path);
    f << scene_to_text(rec);
    SIMGEN_REQUIRE(f.good(), io, "write failure on scene record: " << path);
}

inline SceneRecord load_scene(const std::string& path) {
    std::ifstream f(path);
    SIMGEN_REQUIRE(f.good(), io, "cannot open scene record: " << path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return scene_from_text(text);
}

}  // namespace simgen
