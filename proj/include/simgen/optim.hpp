#pragma once

#include <cmath>
#include <vector>

#include "simgen/tensor.hpp"

namespace simgen {

// Decoupled weight decay Adam. Grads are consumed: step() zeroes them after
// applying the update.
template <typename T>
struct AdamWT {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);
    int64_t step_count = 0;

    AdamWT(std::vector<TensorT<T>> params, T lr_, T weight_decay_ = T(0))
        : lr(lr_), weight_decay(weight_decay_), params_(std::move(params)) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(size_t(params_[i].numel()), T(0));
            v_[i].assign(size_t(params_[i].numel()), T(0));
        }
    }

    void step() {
        for (auto& p : params_)
            SIMGEN_REQUIRE(p.has_grad(), contract, "adamw_step: parameter has no gradient");
        ++step_count;
        T bc1 = T(1) - std::pow(beta1, T(step_count));
        T bc2 = T(1) - std::pow(beta2, T(step_count));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& w = params_[i].data();
            auto& g = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < w.size(); ++j) {
                m[j] = beta1 * m[j] + (T(1) - beta1) * g[j];
                v[j] = beta2 * v[j] + (T(1) - beta2) * g[j] * g[j];
                T mhat = m[j] / bc1;
                T vhat = v[j] / bc2;
                w[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[j]);
            }
        }
        zero_grad();
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    const std::vector<TensorT<T>>& params() const { return params_; }
    std::vector<T>& first_moment(size_t i) { return m_[i]; }
    std::vector<T>& second_moment(size_t i) { return v_[i]; }

private:
    std::vector<TensorT<T>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
};

using AdamW = AdamWT<float>;

}  // namespace simgen
