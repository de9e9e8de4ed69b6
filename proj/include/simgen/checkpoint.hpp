#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgen/nn.hpp"
#include "simgen/tensor.hpp"

namespace simgen {

// Checkpoint container: "SGCK" magic, u32 format version, u64 manifest
// length, JSON manifest (named arrays: shape/dtype/offset/nbytes, plus the
// training config), then raw little-endian payloads. See
// docs/file_formats.md for the byte-level layout.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> arrays;

    void add(const std::string& name, const Tensor& t) { arrays.push_back({name, t}); }

    void add_params(const ParamSet<float>& ps) {
        for (auto& [name, t] : ps.items) arrays.push_back({name, t});
    }

    const Tensor* find(const std::string& name) const {
        for (auto& [n, t] : arrays)
            if (n == name) return &t;
        return nullptr;
    }

    void save(const std::string& path) const {
        nlohmann::json manifest;
        manifest["format_version"] = kVersion;
        manifest["config"] = config;
        nlohmann::json arr = nlohmann::json::array();
        uint64_t offset = 0;
        for (auto& [name, t] : arrays) {
            nlohmann::json e;
            e["name"] = name;
            e["shape"] = t.shape();
            e["dtype"] = "f32";
            e["offset"] = offset;
            e["nbytes"] = uint64_t(t.numel()) * sizeof(float);
            arr.push_back(e);
            offset += uint64_t(t.numel()) * sizeof(float);
        }
        manifest["arrays"] = arr;
        std::string mtxt = manifest.dump();

        std::ofstream f(path, std::ios::binary);
        SIMGEN_REQUIRE(f.good(), io, "cannot open checkpoint for writing: " << path);
        f.write("SGCK", 4);
        uint32_t ver = kVersion;
        f.write(reinterpret_cast<const char*>(&ver), 4);
        uint64_t mlen = mtxt.size();
        f.write(reinterpret_cast<const char*>(&mlen), 8);
        f.write(mtxt.data(), std::streamsize(mtxt.size()));
        for (auto& [name, t] : arrays)
            f.write(reinterpret_cast<const char*>(t.data().data()),
                    std::streamsize(t.numel() * int64_t(sizeof(float))));
        SIMGEN_REQUIRE(f.good(), io, "write failure on checkpoint: " << path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        SIMGEN_REQUIRE(f.good(), io, "cannot open checkpoint: " << path);
        char magic[4];
        f.read(magic, 4);
        SIMGEN_REQUIRE(f.good() && std::memcmp(magic, "SGCK", 4) == 0, parse,
                       "not a checkpoint file: " << path);
        uint32_t ver = 0;
        f.read(reinterpret_cast<char*>(&ver), 4);
        SIMGEN_REQUIRE(ver == kVersion, parse,
                       "unsupported checkpoint version " << ver << " in " << path);
        uint64_t mlen = 0;
        f.read(reinterpret_cast<char*>(&mlen), 8);
        SIMGEN_REQUIRE(f.good() && mlen > 0 && mlen < (1ull << 30), parse,
                       "corrupt checkpoint manifest length in " << path);
        std::string mtxt(mlen, '\0');
        f.read(mtxt.data(), std::streamsize(mlen));
        SIMGEN_REQUIRE(f.good(), parse, "truncated checkpoint manifest in " << path);
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(mtxt);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, std::string("bad checkpoint manifest: ") + e.what());
        }
        Checkpoint ck;
        ck.config = manifest.value("config", nlohmann::json::object());
        for (auto& e : manifest.at("arrays")) {
            std::string name = e.at("name").get<std::string>();
            Shape shape = e.at("shape").get<Shape>();
            SIMGEN_REQUIRE(e.at("dtype").get<std::string>() == "f32", parse,
                           "unsupported dtype for array " << name);
            std::vector<float> data(size_t(numel_of(shape)));
            f.read(reinterpret_cast<char*>(data.data()),
                   std::streamsize(data.size() * sizeof(float)));
            SIMGEN_REQUIRE(f.good(), parse, "truncated payload for array " << name << " in " << path);
            ck.arrays.push_back({name, Tensor::from_data(shape, std::move(data))});
        }
        return ck;
    }

    // Copy stored arrays into live parameters, by name, shape-checked.
    void load_into(ParamSet<float>& ps) const {
        for (auto& [name, t] : ps.items) {
            const Tensor* src = find(name);
            SIMGEN_REQUIRE(src != nullptr, parse, "checkpoint missing array: " << name);
            SIMGEN_REQUIRE(src->shape() == t.shape(), shape,
                           "checkpoint array " << name << " has shape " << shape_str(src->shape())
                                               << ", model expects " << shape_str(t.shape()));
            t.data() = src->data();
        }
    }
};

inline uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    SIMGEN_REQUIRE(f.good(), io, "cannot open file for hashing: " << path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a(buf, size_t(f.gcount()), h);
    }
    return h;
}

}  // namespace simgen
