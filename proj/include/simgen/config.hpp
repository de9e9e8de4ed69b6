#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "simgen/common.hpp"

namespace simgen {

// Keyed run settings: defaults, overridden by a plain-text key=value file,
// overridden by command-line --set flags. Unknown keys are rejected; the
// fully resolved table is echoed into every output directory.
class RunConfig {
public:
    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"seed", "0"},
            {"workers", "1"},
            {"res.h", "32"},
            {"res.w", "56"},
            {"diffusion.T", "1000"},
            {"diffusion.schedule", "scaled-linear"},
            {"sample.steps", "50"},
            {"sample.cfg", "9.5"},
            {"sim2real.ts", "0.5"},
            {"gamma.c", "0.1"},
            {"gamma.b", "0.5"},
            {"gamma.n", "0.25"},
            {"gamma.p", "0.25"},
            {"slice.n", "4"},
            {"data.real", "2000"},
            {"data.sim", "1000"},
            {"data.frames_per_scene", "2"},
            {"data.duration", "8"},
            {"data.density_lo", "2"},
            {"data.density_hi", "9"},
            {"unet.base", "16"},
            {"unet.groups", "4"},
            {"unet.time_dim", "32"},
            {"unet.text_dim", "16"},
            {"unet.cond_dim", "64"},
            {"adapter.branch", "8"},
            {"adapter.ctrl", "256"},
            {"train.steps", "10000"},
            {"train.batch", "8"},
            {"train.lr", "0.002"},
            {"train.wd", "0.0001"},
            {"trunk.steps", "3000"},
            {"imgdiff.steps", "4000"},
            {"imgdiff.fusion", "adapter"},
            {"imgdiff.extracond", "1"},
            {"extractor.steps", "600"},
            {"extractor.base", "12"},
            {"extractor.feat_dim", "64"},
            {"extractor.batch", "16"},
            {"perception.steps", "600"},
            {"perception.base", "16"},
            {"perception.batch", "8"},
            {"eval.scenes", "32"},
        };
        return d;
    }

    RunConfig() : values_(defaults()) {}

    void set(const std::string& key, const std::string& value) {
        SIMGEN_REQUIRE(values_.count(key), config, "unknown configuration key: " << key);
        values_[key] = value;
    }

    void load_file(const std::string& path) {
        std::ifstream f(path);
        SIMGEN_REQUIRE(f.good(), io, "cannot open config file: " << path);
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto strip = [](std::string s) {
                size_t a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                size_t b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            line = strip(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            SIMGEN_REQUIRE(eq != std::string::npos, parse,
                           path << ":" << lineno << ": expected key = value");
            set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
        }
    }

    const std::string& gets(const std::string& key) const {
        auto it = values_.find(key);
        SIMGEN_REQUIRE(it != values_.end(), config, "unknown configuration key: " << key);
        return it->second;
    }

    int geti(const std::string& key) const {
        try {
            return std::stoi(gets(key));
        } catch (const std::exception&) {
            fail(ErrorKind::config, "config key " + key + " is not an integer: " + gets(key));
        }
    }

    double getd(const std::string& key) const {
        try {
            return std::stod(gets(key));
        } catch (const std::exception&) {
            fail(ErrorKind::config, "config key " + key + " is not a number: " + gets(key));
        }
    }

    uint64_t getu(const std::string& key) const {
        try {
            return std::stoull(gets(key));
        } catch (const std::exception&) {
            fail(ErrorKind::config, "config key " + key + " is not an integer: " + gets(key));
        }
    }

    bool getb(const std::string& key) const {
        const auto& v = gets(key);
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        fail(ErrorKind::config, "config key " + key + " is not a boolean: " + v);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace simgen
