#pragma once

#include <string>
#include <utility>
#include <vector>

#include "simgen/tensor.hpp"

namespace simgen {

// Named parameter registry. Names are stable and define the checkpoint layout.
template <typename T>
struct ParamSet {
    std::vector<std::pair<std::string, TensorT<T>>> items;

    void add(const std::string& name, const TensorT<T>& t) { items.push_back({name, t}); }

    std::vector<TensorT<T>> tensors() const {
        std::vector<TensorT<T>> out;
        out.reserve(items.size());
        for (auto& [name, t] : items) out.push_back(t);
        return out;
    }

    const TensorT<T>* find(const std::string& name) const {
        for (auto& [n, t] : items)
            if (n == name) return &t;
        return nullptr;
    }
};

template <typename T>
struct Conv2dLayer {
    TensorT<T> w;  // [O,C,kh,kw]
    TensorT<T> b;  // [O], undefined when bias-free
    int stride = 1;
    int pad = 0;

    static Conv2dLayer create(int64_t in_ch, int64_t out_ch, int64_t k, int stride, int pad,
                              Rng& rng, bool bias = true, T gain = T(1)) {
        Conv2dLayer l;
        T std_dev = gain * std::sqrt(T(2) / T(in_ch * k * k));
        l.w = TensorT<T>::normal({out_ch, in_ch, k, k}, T(0), std_dev, rng, true);
        if (bias) l.b = TensorT<T>::zeros({out_ch}, true);
        l.stride = stride;
        l.pad = pad;
        return l;
    }

    // all-zero weights; the ControlNet-style connector init
    static Conv2dLayer create_zero(int64_t in_ch, int64_t out_ch, int64_t k, int stride, int pad,
                                   bool bias = true) {
        Conv2dLayer l;
        l.w = TensorT<T>::zeros({out_ch, in_ch, k, k}, true);
        if (bias) l.b = TensorT<T>::zeros({out_ch}, true);
        l.stride = stride;
        l.pad = pad;
        return l;
    }

    TensorT<T> operator()(const TensorT<T>& x) const {
        return b.defined() ? conv2d(x, w, stride, pad, &b) : conv2d(x, w, stride, pad);
    }

    void params(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".w", w);
        if (b.defined()) ps.add(prefix + ".b", b);
    }
};

template <typename T>
struct GroupNormLayer {
    TensorT<T> gain;
    TensorT<T> bias;
    int groups = 1;
    T eps = T(1e-5);

    static GroupNormLayer create(int64_t channels, int groups) {
        GroupNormLayer l;
        l.gain = TensorT<T>::constant({channels}, T(1), true);
        l.bias = TensorT<T>::zeros({channels}, true);
        l.groups = groups;
        return l;
    }

    TensorT<T> operator()(const TensorT<T>& x) const { return group_norm(x, groups, gain, bias, eps); }

    void params(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".gain", gain);
        ps.add(prefix + ".bias", bias);
    }
};

template <typename T>
struct LinearLayer {
    TensorT<T> w;  // [in,out]
    TensorT<T> b;  // [out]

    static LinearLayer create(int64_t in_dim, int64_t out_dim, Rng& rng, T gain = T(1)) {
        LinearLayer l;
        T std_dev = gain * std::sqrt(T(1) / T(in_dim));
        l.w = TensorT<T>::normal({in_dim, out_dim}, T(0), std_dev, rng, true);
        l.b = TensorT<T>::zeros({out_dim}, true);
        return l;
    }

    static LinearLayer create_zero(int64_t in_dim, int64_t out_dim) {
        LinearLayer l;
        l.w = TensorT<T>::zeros({in_dim, out_dim}, true);
        l.b = TensorT<T>::zeros({out_dim}, true);
        return l;
    }

    TensorT<T> operator()(const TensorT<T>& x) const { return linear(x, w, b); }

    void params(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

template <typename T>
struct EmbeddingLayer {
    TensorT<T> table;  // [V,E]

    static EmbeddingLayer create(int64_t vocab, int64_t dim, Rng& rng) {
        EmbeddingLayer l;
        l.table = TensorT<T>::normal({vocab, dim}, T(0), T(0.05), rng, true);
        return l;
    }

    TensorT<T> operator()(const std::vector<int>& ids) const { return embedding(table, ids); }

    void params(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".table", table);
    }
};

}  // namespace simgen
