#pragma once

#include <cmath>
#include <vector>

#include "simgen/schedule.hpp"
#include "simgen/tensor.hpp"
#include "simgen/unet.hpp"

namespace simgen {

// x_t = alpha_t * x0 + sigma_t * eps
template <typename T>
TensorT<T> forward_noise(const TensorT<T>& x0, int t, const TensorT<T>& eps,
                         const NoiseSchedule& sched) {
    SIMGEN_REQUIRE(x0.shape() == eps.shape(), shape, "forward_noise: x0/eps shape mismatch");
    T a = T(sched.alpha_at(t));
    T s = T(sched.sigma_at(t));
    auto out = TensorT<T>::zeros(x0.shape());
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = a * x0.data()[i] + s * eps.data()[i];
    return out;
}

struct TrainStepStats {
    float loss = 0;
    int text_dropped = 0;
    int batch = 0;
};

// One epsilon-prediction step: samples t and eps per item, applies the
// condition-dropout, runs forward+backward. The optimizer step is the
// caller's (single-writer contract).
template <typename T, typename Model>
TrainStepStats train_step(const TensorT<T>& x0_batch, const std::vector<TextCondition>& texts,
                          Model& model, const NoiseSchedule& sched, double drop_rate, Rng& rng) {
    SIMGEN_REQUIRE(x0_batch.ndim() == 4 && x0_batch.dim(0) >= 1, contract,
                   "train_step: empty batch");
    SIMGEN_REQUIRE(texts.size() == size_t(x0_batch.dim(0)), contract,
                   "train_step: caption count mismatch");
    const int64_t N = x0_batch.dim(0);
    const int64_t per = x0_batch.numel() / N;

    TrainStepStats stats;
    stats.batch = int(N);
    std::vector<int> t_steps(static_cast<size_t>(N));
    std::vector<TextCondition> used = texts;
    TensorT<T> x_t, eps;
    {
        NoGradGuard ng;
        eps = TensorT<T>::zeros(x0_batch.shape());
        x_t = TensorT<T>::zeros(x0_batch.shape());
        for (int64_t i = 0; i < N; ++i) {
            // t=0 is the clean row; noising steps live in [1, T)
            t_steps[size_t(i)] = 1 + int(rng.next_below(uint64_t(sched.T - 1)));
            if (rng.next_bernoulli(drop_rate)) {
                used[size_t(i)] = TextCondition::null();
                ++stats.text_dropped;
            }
            T a = T(sched.alpha_at(t_steps[size_t(i)]));
            T s = T(sched.sigma_at(t_steps[size_t(i)]));
            for (int64_t k = 0; k < per; ++k) {
                T e = T(rng.next_gaussian());
                eps.data()[size_t(i * per + k)] = e;
                x_t.data()[size_t(i * per + k)] =
                    a * x0_batch.data()[size_t(i * per + k)] + s * e;
            }
        }
    }
    auto pred = model(x_t, t_steps, used);
    auto loss = mse_loss(pred, eps);
    stats.loss = float(loss.item());
    if (loss.requires_grad()) backward(loss);  // stub denoisers carry no parameters
    return stats;
}

// Classifier-free guidance. s=1 and s=0 collapse exactly to the conditional
// and unconditional branches.
template <typename T, typename Model>
TensorT<T> cfg_epsilon(Model& model, const TensorT<T>& x_t, int t, const TextCondition& text,
                       double scale) {
    std::vector<int> ts(size_t(x_t.dim(0)), t);
    std::vector<TextCondition> cond(size_t(x_t.dim(0)), text);
    std::vector<TextCondition> null(size_t(x_t.dim(0)), TextCondition::null());
    if (scale == 1.0) return model(x_t, ts, cond);
    if (scale == 0.0) return model(x_t, ts, null);
    auto e_c = model(x_t, ts, cond);
    auto e_u = model(x_t, ts, null);
    auto out = TensorT<T>::zeros(e_c.shape());
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = e_u.data()[i] + T(scale) * (e_c.data()[i] - e_u.data()[i]);
    return out;
}

// Deterministic DDIM update (eta = 0).
template <typename T>
TensorT<T> ddim_step(const TensorT<T>& x_t, const TensorT<T>& eps_hat, int t, int t_prev,
                     const NoiseSchedule& sched) {
    SIMGEN_REQUIRE(t_prev <= t, contract, "ddim_step: t_prev must not exceed t");
    SIMGEN_REQUIRE(x_t.shape() == eps_hat.shape(), shape, "ddim_step: shape mismatch");
    if (t_prev == t) return x_t.detach();
    double a_t = sched.alpha_at(t), s_t = sched.sigma_at(t);
    double a_p = sched.alpha_at(t_prev), s_p = sched.sigma_at(t_prev);
    SIMGEN_REQUIRE(a_t >= 1e-6, numeric, "ddim_step: alpha_t below numerical guard");
    auto out = TensorT<T>::zeros(x_t.shape());
    for (size_t i = 0; i < out.data().size(); ++i) {
        double x0_hat = (double(x_t.data()[i]) - s_t * double(eps_hat.data()[i])) / a_t;
        out.data()[i] = T(a_p * x0_hat + s_p * double(eps_hat.data()[i]));
    }
    return out;
}

struct SampleStats {
    int reverse_steps = 0;
    int model_calls = 0;
};

// timestep grid: tau_i = floor(i*T/steps), clamped into [0, T)
inline int grid_step(int i, int steps, int T) {
    return std::min(int(int64_t(i) * T / steps), T - 1);
}

// Full reverse trajectory from pure noise.
template <typename T, typename Model>
TensorT<T> sample(Model& model, const Shape& shape, const TextCondition& text,
                  const NoiseSchedule& sched, int steps, double cfg_scale, uint64_t seed,
                  SampleStats* stats = nullptr) {
    SIMGEN_REQUIRE(steps >= 1 && steps <= sched.T, config, "sample: bad step count");
    NoGradGuard ng;
    Rng rng(seed, 0x5a3);
    auto x = TensorT<T>::normal(shape, T(0), T(1), rng);
    for (int i = steps; i >= 1; --i) {
        int t = grid_step(i, steps, sched.T);
        int t_prev = grid_step(i - 1, steps, sched.T);
        auto eps = cfg_epsilon<T>(model, x, t, text, cfg_scale);
        x = ddim_step(x, eps, t, t_prev, sched);
        if (stats) {
            ++stats->reverse_steps;
            stats->model_calls += (cfg_scale == 1.0 || cfg_scale == 0.0) ? 1 : 2;
        }
    }
    return x;
}

// SDEdit-style guided sampling: inject the guide at intermediate time t_s
// and run only the remaining ceil(t_s * steps) reverse iterations. The
// injected mean is alpha-scaled to match the training marginal; the
// paper-literal variant (mean = x_guide) sits behind the flag.
template <typename T, typename Model>
TensorT<T> guided_sample_from(Model& model, const TensorT<T>& x_guide, double t_s,
                              const TextCondition& text, const NoiseSchedule& sched, int steps,
                              double cfg_scale, uint64_t seed, bool paper_literal_mean = false,
                              SampleStats* stats = nullptr) {
    SIMGEN_REQUIRE(t_s > 0.0 && t_s < 1.0, range, "guided_sample_from: t_s outside (0,1)");
    SIMGEN_REQUIRE(steps >= 1 && steps <= sched.T, config, "guided_sample_from: bad step count");
    NoGradGuard ng;
    int k = std::min(steps, std::max(1, int(std::ceil(t_s * double(steps) - 1e-12))));
    int t_inject = grid_step(k, steps, sched.T);
    Rng rng(seed, 0x5a4);
    auto eps = TensorT<T>::normal(x_guide.shape(), T(0), T(1), rng);
    T a = paper_literal_mean ? T(1) : T(sched.alpha_at(t_inject));
    T s = T(sched.sigma_at(t_inject));
    auto x = TensorT<T>::zeros(x_guide.shape());
    for (size_t i = 0; i < x.data().size(); ++i)
        x.data()[i] = a * x_guide.data()[i] + s * eps.data()[i];
    for (int i = k; i >= 1; --i) {
        int t = grid_step(i, steps, sched.T);
        int t_prev = grid_step(i - 1, steps, sched.T);
        auto e = cfg_epsilon<T>(model, x, t, text, cfg_scale);
        x = ddim_step(x, e, t, t_prev, sched);
        if (stats) {
            ++stats->reverse_steps;
            stats->model_calls += (cfg_scale == 1.0 || cfg_scale == 0.0) ? 1 : 2;
        }
    }
    return x;
}

}  // namespace simgen
