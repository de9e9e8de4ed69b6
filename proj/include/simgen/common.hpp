#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace simgen {

enum class ErrorKind {
    shape,         // dimension / shape mismatch
    config,        // invalid configuration value
    range,         // argument outside its documented range
    contract,      // API precondition violated
    parse,         // malformed file / unknown schema version
    io,            // filesystem failure
    stats,         // degenerate statistics (too few samples)
    numeric,       // numerical guard tripped (NaN/Inf, near-zero divisor)
    generation,    // infeasible scene generation request
    perturbation,  // adversarial perturbation has no feasible candidate
    build,         // dataset build failed (cleaning shortfall etc.)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

#define SIMGEN_REQUIRE(cond, kind, msg)                       \
    do {                                                      \
        if (!(cond)) {                                        \
            std::ostringstream oss_;                          \
            oss_ << msg;                                      \
            ::simgen::fail(::simgen::ErrorKind::kind, oss_.str()); \
        }                                                     \
    } while (0)

// FNV-1a, used for manifest/checkpoint hashes. Stability across runs is what
// matters here, not collision resistance.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// Bounded worker pool over an index range. Items must be independent; the
// caller owns output slots, so results land identically for any worker
// count. The first worker exception is rethrown after the join.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
    workers = std::max(1, std::min<int>(workers, int(n)));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            size_t i;
            while ((i = next.fetch_add(1)) < n) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace simgen
