#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "simgen/common.hpp"

namespace simgen {

enum class ScheduleKind { scaled_linear, cosine };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "scaled-linear") return ScheduleKind::scaled_linear;
    if (s == "cosine") return ScheduleKind::cosine;
    fail(ErrorKind::config, "unknown schedule kind: " + s);
}

// Per-step (alpha_t, sigma_t) tables. Row 0 is pinned to the clean state
// (alpha=1, sigma=0); the noise ramp occupies rows 1..T-1. Variance
// preserving: alpha^2 + sigma^2 = 1.
struct NoiseSchedule {
    int T = 1000;
    std::vector<double> alpha;
    std::vector<double> sigma;
    bool variance_preserving = true;
    ScheduleKind kind = ScheduleKind::scaled_linear;

    double alpha_at(int t) const {
        SIMGEN_REQUIRE(t >= 0 && t < T, range, "schedule step " << t << " outside [0," << T << ")");
        return alpha[size_t(t)];
    }
    double sigma_at(int t) const {
        SIMGEN_REQUIRE(t >= 0 && t < T, range, "schedule step " << t << " outside [0," << T << ")");
        return sigma[size_t(t)];
    }
};

inline NoiseSchedule make_schedule(int T, ScheduleKind kind) {
    SIMGEN_REQUIRE(T >= 10, config, "schedule needs T >= 10 (got " << T << ")");
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.alpha.resize(size_t(T));
    s.sigma.resize(size_t(T));
    s.alpha[0] = 1.0;
    s.sigma[0] = 0.0;
    if (kind == ScheduleKind::scaled_linear) {
        // SD-lineage betas, rescaled so the ramp spans rows 1..T-1
        const double b0 = std::sqrt(0.00085), b1 = std::sqrt(0.012);
        double cum = 1.0;
        for (int t = 1; t < T; ++t) {
            double u = double(t - 1) / double(std::max(T - 2, 1));
            double beta = (b0 + (b1 - b0) * u) * (b0 + (b1 - b0) * u) * (999.0 / double(T - 1));
            cum *= 1.0 - std::min(beta, 0.999);
            s.alpha[size_t(t)] = std::sqrt(cum);
            s.sigma[size_t(t)] = std::sqrt(1.0 - cum);
        }
    } else {
        // squared-cosine ramp
        const double off = 0.008;
        auto f = [&](double u) {
            double c = std::cos((u + off) / (1.0 + off) * M_PI / 2.0);
            return c * c;
        };
        double f0 = f(0.0);
        for (int t = 1; t < T; ++t) {
            double abar = std::max(f(double(t) / double(T - 1)) / f0, 1e-8);
            s.alpha[size_t(t)] = std::sqrt(abar);
            s.sigma[size_t(t)] = std::sqrt(1.0 - abar);
        }
    }
    return s;
}

}  // namespace simgen
