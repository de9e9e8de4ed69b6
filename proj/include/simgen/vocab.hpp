#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "simgen/common.hpp"
#include "simgen/scene.hpp"

namespace simgen {

// Closed caption vocabulary. Token 0 is the learned null embedding used for
// the unconditional branch of classifier-free guidance.
struct Vocab {
    static const std::vector<std::string>& tokens() {
        static const std::vector<std::string> t = {
            "<null>", "a",    "clear", "rain",    "fog",     "snow",   "overcast",
            "day",    "dawn", "dusk",  "night",   "drive",   "in",     "urban",
            "rural",  "highway", "desert", "mountain", "with", "no",  "few",
            "several", "many", "vehicles"};
        return t;
    }

    static int size() { return int(tokens().size()); }
    static constexpr int kNull = 0;

    static int id(const std::string& tok) {
        const auto& ts = tokens();
        for (size_t i = 0; i < ts.size(); ++i)
            if (ts[i] == tok) return int(i);
        fail(ErrorKind::parse, "token outside the caption vocabulary: " + tok);
    }

    static bool contains(const std::string& tok) {
        for (const auto& t : tokens())
            if (t == tok) return true;
        return false;
    }

    static std::vector<int> tokenize(const std::string& caption) {
        std::vector<int> ids;
        std::istringstream iss(caption);
        std::string tok;
        while (iss >> tok) ids.push_back(id(tok));
        SIMGEN_REQUIRE(!ids.empty(), parse, "empty caption");
        return ids;
    }
};

struct TextCondition {
    std::vector<int> ids;
    bool null_flag = false;

    static TextCondition null() {
        TextCondition c;
        c.ids = {Vocab::kNull};
        c.null_flag = true;
        return c;
    }
    static TextCondition from_caption(const std::string& caption) {
        TextCondition c;
        c.ids = Vocab::tokenize(caption);
        return c;
    }
};

inline const char* count_bucket(int n) {
    if (n <= 0) return "no";
    if (n <= 3) return "few";
    if (n <= 7) return "several";
    return "many";
}

// Deterministic caption template over the closed vocabulary.
inline std::string caption_from_record(const SceneRecord& rec) {
    int vehicles = 0;
    for (auto& t : rec.tracks)
        if (t.id != rec.ego_id && (t.cls == ObjectClass::car || t.cls == ObjectClass::truck ||
                                   t.cls == ObjectClass::cyclist))
            ++vehicles;
    std::ostringstream oss;
    oss << "a " << to_string(rec.meta.weather) << " " << to_string(rec.meta.time) << " drive in a "
        << to_string(rec.meta.setting) << " with " << count_bucket(vehicles) << " vehicles";
    return oss.str();
}

}  // namespace simgen
