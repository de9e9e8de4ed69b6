#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "simgen/common.hpp"

namespace simgen {

// Planar float image, channels-first, values in [0,1].
struct ImageF {
    int h = 0, w = 0, c = 0;
    std::vector<float> data;  // c*h*w

    static ImageF make(int h, int w, int c, float fill = 0.f) {
        ImageF im;
        im.h = h;
        im.w = w;
        im.c = c;
        im.data.assign(size_t(c) * h * w, fill);
        return im;
    }
    float& at(int ch, int y, int x) { return data[size_t((ch * h + y) * w + x)]; }
    float at(int ch, int y, int x) const { return data[size_t((ch * h + y) * w + x)]; }
};

namespace detail_pnm {

inline int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    in >> v;
    return v;
}

}  // namespace detail_pnm

// 8-bit binary PPM (P6); lossless for palette colors and quantized RGB.
inline void write_ppm(const std::string& path, const ImageF& img) {
    SIMGEN_REQUIRE(img.c == 3, contract, "write_ppm expects a 3-channel image");
    std::ofstream f(path, std::ios::binary);
    SIMGEN_REQUIRE(f.good(), io, "cannot write image: " << path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<uint8_t> row(size_t(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                float v = std::clamp(img.at(ch, y, x), 0.f, 1.f);
                row[size_t(x) * 3 + size_t(ch)] = uint8_t(std::lround(v * 255.f));
            }
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    SIMGEN_REQUIRE(f.good(), io, "write failure on image: " << path);
}

inline ImageF read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    SIMGEN_REQUIRE(f.good(), io, "cannot open image: " << path);
    std::string magic;
    f >> magic;
    SIMGEN_REQUIRE(magic == "P6", parse, "not a binary PPM: " << path);
    int w = detail_pnm::read_pnm_token(f);
    int h = detail_pnm::read_pnm_token(f);
    int maxval = detail_pnm::read_pnm_token(f);
    SIMGEN_REQUIRE(w > 0 && h > 0 && maxval == 255, parse, "unsupported PPM header in " << path);
    f.get();  // single whitespace after header
    std::vector<uint8_t> raw(size_t(w) * size_t(h) * 3);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    SIMGEN_REQUIRE(f.gcount() == std::streamsize(raw.size()), parse, "truncated PPM: " << path);
    ImageF img = ImageF::make(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) = float(raw[(size_t(y) * w + size_t(x)) * 3 + size_t(ch)]) / 255.f;
    return img;
}

// 16-bit binary PGM (P5, big-endian samples per the netpbm spec); used for
// depth maps, quantization step 1/65535.
inline void write_pgm16(const std::string& path, const std::vector<float>& v01, int h, int w) {
    SIMGEN_REQUIRE(int(v01.size()) == h * w, contract, "write_pgm16: size mismatch");
    std::ofstream f(path, std::ios::binary);
    SIMGEN_REQUIRE(f.good(), io, "cannot write image: " << path);
    f << "P5\n" << w << " " << h << "\n65535\n";
    std::vector<uint8_t> row(size_t(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float v = std::clamp(v01[size_t(y) * w + size_t(x)], 0.f, 1.f);
            auto q = uint16_t(std::lround(v * 65535.f));
            row[size_t(x) * 2] = uint8_t(q >> 8);
            row[size_t(x) * 2 + 1] = uint8_t(q & 0xff);
        }
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    SIMGEN_REQUIRE(f.good(), io, "write failure on image: " << path);
}

inline std::vector<float> read_pgm16(const std::string& path, int* h_out = nullptr,
                                     int* w_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    SIMGEN_REQUIRE(f.good(), io, "cannot open image: " << path);
    std::string magic;
    f >> magic;
    SIMGEN_REQUIRE(magic == "P5", parse, "not a binary PGM: " << path);
    int w = detail_pnm::read_pnm_token(f);
    int h = detail_pnm::read_pnm_token(f);
    int maxval = detail_pnm::read_pnm_token(f);
    SIMGEN_REQUIRE(w > 0 && h > 0 && maxval == 65535, parse, "unsupported PGM header in " << path);
    f.get();
    std::vector<uint8_t> raw(size_t(w) * size_t(h) * 2);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    SIMGEN_REQUIRE(f.gcount() == std::streamsize(raw.size()), parse, "truncated PGM: " << path);
    std::vector<float> out(size_t(w) * size_t(h));
    for (size_t i = 0; i < out.size(); ++i) {
        uint16_t q = uint16_t((raw[i * 2] << 8) | raw[i * 2 + 1]);
        out[i] = float(q) / 65535.f;
    }
    if (h_out) *h_out = h;
    if (w_out) *w_out = w;
    return out;
}

}  // namespace simgen
