#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "simgen/tensor.hpp"

namespace simgen {

// Central-difference gradient verification at 64-bit precision.
//
// loss_fn rebuilds the graph from the given leaves on every call; the checker
// perturbs leaf coordinates in place. Relative error uses the guarded
// denominator max(1, |analytic|, |numeric|) so tiny gradients are compared
// absolutely. Checking a sampled subset of coordinates per tensor keeps the
// cost proportional to the number of leaves, not the parameter count.
struct GradCheckReport {
    double max_rel_err = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    size_t coords_checked = 0;
};

inline GradCheckReport grad_check(const std::function<Tensor64()>& loss_fn,
                                  std::vector<Tensor64> leaves, Rng rng,
                                  int coords_per_tensor = 12, double h = 1e-3) {
    for (auto& l : leaves) l.zero_grad();
    {
        Tensor64 loss = loss_fn();
        backward(loss);
    }
    GradCheckReport rep;
    for (auto& leaf : leaves) {
        if (!leaf.requires_grad()) continue;
        SIMGEN_REQUIRE(leaf.has_grad(), contract, "grad_check: leaf received no gradient");
        const int64_t n = leaf.numel();
        int64_t count = std::min<int64_t>(n, coords_per_tensor);
        for (int64_t k = 0; k < count; ++k) {
            int64_t idx = (n <= coords_per_tensor) ? k : int64_t(rng.next_below(uint64_t(n)));
            double saved = leaf.data()[size_t(idx)];
            double fp, fm;
            {
                NoGradGuard ng;
                leaf.data()[size_t(idx)] = saved + h;
                fp = loss_fn().item();
                leaf.data()[size_t(idx)] = saved - h;
                fm = loss_fn().item();
                leaf.data()[size_t(idx)] = saved;
            }
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = leaf.grad()[size_t(idx)];
            double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            double rel = std::abs(analytic - numeric) / denom;
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_analytic = analytic;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace simgen
