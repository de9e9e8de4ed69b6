#pragma once

#include <cmath>
#include <cstdint>

namespace simgen {

// Splittable counter-based generator. Every draw is a stateless hash of
// (key, stream, counter), so any op that takes an explicit stream id is
// reproducible regardless of call order elsewhere in the program.
struct Rng {
    uint64_t key     = 0;
    uint64_t stream  = 0;
    uint64_t counter = 0;

    Rng() = default;
    Rng(uint64_t key_, uint64_t stream_ = 0) : key(key_), stream(stream_) {}

    static uint64_t mix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // Derive an independent stream; does not advance this generator.
    Rng split(uint64_t child_id) const {
        Rng r;
        r.key    = key;
        r.stream = mix(stream * 0x632be59bd9b4e019ull + child_id + 1);
        return r;
    }

    uint64_t next_u64() {
        uint64_t v = mix(counter ^ mix(stream ^ mix(key)));
        ++counter;
        return v;
    }

    // in [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // in (0, 1]
    double next_open() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_open();
        double u2 = next_double();
        double r  = std::sqrt(-2.0 * std::log(u1));
        double a  = 6.283185307179586476925286766559 * u2;
        spare_      = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

    bool next_bernoulli(double p) { return next_double() < p; }

private:
    bool have_spare_ = false;
    double spare_    = 0.0;
};

}  // namespace simgen
