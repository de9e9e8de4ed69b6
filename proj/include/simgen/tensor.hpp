#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "simgen/common.hpp"
#include "simgen/rng.hpp"

namespace simgen {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

// Tape node. Ops append nodes to a dynamically built graph; backward() walks
// the graph in reverse topological order. Gradients accumulate additively and
// persist until zero_grad().
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_fn;

    int64_t numel() const { return int64_t(value.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

namespace detail {
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <typename T>
class TensorT {
public:
    using Node = TensorNode<T>;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static TensorT from_data(const Shape& shape, std::vector<T> data, bool requires_grad = false) {
        check_shape(shape);
        SIMGEN_REQUIRE(numel_of(shape) == int64_t(data.size()), shape,
                       "data size " << data.size() << " does not match shape " << shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(n);
    }

    static TensorT zeros(const Shape& shape, bool requires_grad = false) {
        check_shape(shape);
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value.assign(size_t(numel_of(shape)), T(0));
        n->requires_grad = requires_grad;
        return TensorT(n);
    }

    static TensorT constant(const Shape& shape, T v, bool requires_grad = false) {
        check_shape(shape);
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value.assign(size_t(numel_of(shape)), v);
        n->requires_grad = requires_grad;
        return TensorT(n);
    }

    static TensorT normal(const Shape& shape, T mean, T stddev, Rng& rng, bool requires_grad = false) {
        check_shape(shape);
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value.resize(size_t(numel_of(shape)));
        for (auto& v : n->value) v = mean + stddev * T(rng.next_gaussian());
        n->requires_grad = requires_grad;
        return TensorT(n);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    size_t ndim() const { return node_->shape.size(); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& grad() { return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    TensorT& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    void zero_grad() { node_->grad.clear(); }

    T item() const {
        SIMGEN_REQUIRE(numel() == 1, contract, "item() on non-scalar tensor " << shape_str(shape()));
        return node_->value[0];
    }

    // Value copy detached from the tape.
    TensorT detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->value = node_->value;
        return TensorT(n);
    }

    std::shared_ptr<Node> node() const { return node_; }

private:
    static void check_shape(const Shape& shape) {
        SIMGEN_REQUIRE(!shape.empty(), shape, "empty shape");
        for (int64_t d : shape)
            SIMGEN_REQUIRE(d >= 1, shape, "non-positive dimension in shape " << shape_str(shape));
    }

    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Forward accumulations run in double even for float tensors; keeps the
// naive-loop oracle agreement inside 1e-6 on every supported shape class.
template <typename T>
using AccT = std::conditional_t<std::is_same_v<T, float>, double, T>;

// Spec surface: init_tensor(shape, mode, seed). The mode-specific factories
// above are what the rest of the code uses.
enum class InitMode { zeros, normal, constant };

template <typename T = float>
TensorT<T> init_tensor(const Shape& shape, InitMode mode, uint64_t seed, T a = T(0), T b = T(1)) {
    switch (mode) {
        case InitMode::zeros:
            return TensorT<T>::zeros(shape);
        case InitMode::constant:
            return TensorT<T>::constant(shape, a);
        case InitMode::normal: {
            Rng rng(seed);
            return TensorT<T>::normal(shape, a, b, rng);
        }
    }
    fail(ErrorKind::config, "unknown init mode");
}

namespace detail {

template <typename T>
void debug_check_finite(const TensorNode<T>& n, const char* what) {
#if !defined(NDEBUG) || defined(SIMGEN_CHECK_FINITE)
    for (T v : n.value)
        SIMGEN_REQUIRE(std::isfinite(double(v)), numeric, "non-finite value after " << what);
    for (T v : n.grad)
        SIMGEN_REQUIRE(std::isfinite(double(v)), numeric, "non-finite gradient after " << what);
#else
    (void)n;
    (void)what;
#endif
}

template <typename T>
std::shared_ptr<TensorNode<T>> make_result(const Shape& shape,
                                           std::initializer_list<TensorT<T>> inputs) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = shape;
    n->value.resize(size_t(numel_of(shape)));
    bool any_grad = false;
    for (const auto& in : inputs) any_grad = any_grad || in.requires_grad();
    if (grad_enabled() && any_grad) {
        n->requires_grad = true;
        for (const auto& in : inputs) n->parents.push_back(in.node());
    }
    return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    SIMGEN_REQUIRE(a.shape() == b.shape(), shape,
                   "add: shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
    auto n = detail::make_result<T>(a.shape(), {a, b});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] + bv[i];
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            for (int p = 0; p < 2; ++p) {
                auto& par = *self.parents[p];
                if (!par.requires_grad) continue;
                par.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
            }
        };
    }
    detail::debug_check_finite(*n, "add");
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    SIMGEN_REQUIRE(a.shape() == b.shape(), shape,
                   "sub: shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
    auto n = detail::make_result<T>(a.shape(), {a, b});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] - bv[i];
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
            }
        };
    }
    detail::debug_check_finite(*n, "sub");
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    SIMGEN_REQUIRE(a.shape() == b.shape(), shape,
                   "mul: shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
    auto n = detail::make_result<T>(a.shape(), {a, b});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * bv[i];
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
            }
        };
    }
    detail::debug_check_finite(*n, "mul");
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& a, T s) {
    auto n = detail::make_result<T>(a.shape(), {a});
    const auto& av = a.data();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * s;
    if (n->requires_grad) {
        n->backward_fn = [s](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
        };
    }
    detail::debug_check_finite(*n, "mul_scalar");
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T s) {
    auto n = detail::make_result<T>(a.shape(), {a});
    const auto& av = a.data();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] + s;
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> silu(const TensorT<T>& a) {
    auto n = detail::make_result<T>(a.shape(), {a});
    const auto& av = a.data();
    for (size_t i = 0; i < av.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-av[i]));
        n->value[i] = av[i] * s;
    }
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                T x = pa.value[i];
                T s = T(1) / (T(1) + std::exp(-x));
                pa.grad[i] += self.grad[i] * (s + x * s * (T(1) - s));
            }
        };
    }
    detail::debug_check_finite(*n, "silu");
    return TensorT<T>(n);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
    auto n = detail::make_result<T>({1}, {a});
    AccT<T> acc = 0;
    for (T v : a.data()) acc += v;
    n->value[0] = T(acc);
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[0];
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
    auto n = detail::make_result<T>({1}, {a});
    AccT<T> acc = 0;
    for (T v : a.data()) acc += v;
    T inv = T(1) / T(a.numel());
    n->value[0] = T(acc / AccT<T>(a.numel()));
    if (n->requires_grad) {
        n->backward_fn = [inv](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[0] * inv;
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    SIMGEN_REQUIRE(pred.shape() == target.shape(), shape,
                   "mse_loss: shape mismatch " << shape_str(pred.shape()) << " vs "
                                               << shape_str(target.shape()));
    auto n = detail::make_result<T>({1}, {pred, target});
    const auto& pv = pred.data();
    const auto& tv = target.data();
    AccT<T> acc = 0;
    for (size_t i = 0; i < pv.size(); ++i) {
        AccT<T> d = AccT<T>(pv[i]) - AccT<T>(tv[i]);
        acc += d * d;
    }
    T inv = T(1) / T(pv.size());
    n->value[0] = T(acc / AccT<T>(pv.size()));
    if (n->requires_grad) {
        n->backward_fn = [inv](TensorNode<T>& self) {
            auto& pp = *self.parents[0];
            auto& pt = *self.parents[1];
            T g2 = T(2) * inv * self.grad[0];
            if (pp.requires_grad) {
                pp.ensure_grad();
                for (size_t i = 0; i < pp.grad.size(); ++i)
                    pp.grad[i] += g2 * (pp.value[i] - pt.value[i]);
            }
            if (pt.requires_grad) {
                pt.ensure_grad();
                for (size_t i = 0; i < pt.grad.size(); ++i)
                    pt.grad[i] -= g2 * (pp.value[i] - pt.value[i]);
            }
        };
    }
    detail::debug_check_finite(*n, "mse_loss");
    return TensorT<T>(n);
}

// ---------------------------------------------------------------------------
// matmul / linear
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    SIMGEN_REQUIRE(a.ndim() == 2 && b.ndim() == 2, shape, "matmul expects 2-D tensors");
    SIMGEN_REQUIRE(a.dim(1) == b.dim(0), shape,
                   "matmul: inner dims differ " << shape_str(a.shape()) << " x "
                                                << shape_str(b.shape()));
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    auto n = detail::make_result<T>({M, N}, {a, b});
    const T* A = a.data().data();
    const T* B = b.data().data();
    T* C = n->value.data();
    {
        using Acc = AccT<T>;
        std::vector<Acc> row(static_cast<size_t>(N));
        for (int64_t i = 0; i < M; ++i) {
            std::fill(row.begin(), row.end(), Acc(0));
            for (int64_t k = 0; k < K; ++k) {
                Acc av = Acc(A[i * K + k]);
                const T* brow = B + k * N;
                for (int64_t j = 0; j < N; ++j) row[size_t(j)] += av * Acc(brow[j]);
            }
            for (int64_t j = 0; j < N; ++j) C[i * N + j] = T(row[size_t(j)]);
        }
    }
    if (n->requires_grad) {
        n->backward_fn = [M, K, N](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const T* G = self.grad.data();
            if (pa.requires_grad) {
                pa.ensure_grad();  // dA = G · Bᵀ
                const T* B = pb.value.data();
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t k = 0; k < K; ++k) {
                        T acc = T(0);
                        const T* grow = G + i * N;
                        const T* brow = B + k * N;
                        for (int64_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
                        pa.grad[i * K + k] += acc;
                    }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();  // dB = Aᵀ · G
                const T* A = pa.value.data();
                for (int64_t k = 0; k < K; ++k)
                    for (int64_t i = 0; i < M; ++i) {
                        T av = A[i * K + k];
                        const T* grow = G + i * N;
                        T* brow = pb.grad.data() + k * N;
                        for (int64_t j = 0; j < N; ++j) brow[j] += av * grow[j];
                    }
            }
        };
    }
    detail::debug_check_finite(*n, "matmul");
    return TensorT<T>(n);
}

// y[i,j] = x[i,j] + b[j]
template <typename T>
TensorT<T> bias_add_row(const TensorT<T>& x, const TensorT<T>& b) {
    SIMGEN_REQUIRE(x.ndim() == 2 && b.ndim() == 1 && x.dim(1) == b.dim(0), shape,
                   "bias_add_row: incompatible shapes");
    const int64_t N = x.dim(0), M = x.dim(1);
    auto n = detail::make_result<T>(x.shape(), {x, b});
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < M; ++j) n->value[i * M + j] = x.data()[i * M + j] + b.data()[j];
    if (n->requires_grad) {
        n->backward_fn = [N, M](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pb = *self.parents[1];
            if (px.requires_grad) {
                px.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < M; ++j) pb.grad[j] += self.grad[i * M + j];
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    return bias_add_row(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, int stride, int padding,
                  const TensorT<T>* bias = nullptr) {
    SIMGEN_REQUIRE(input.ndim() == 4 && kernel.ndim() == 4, shape, "conv2d expects 4-D tensors");
    const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int64_t O = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2), KW = kernel.dim(3);
    SIMGEN_REQUIRE(C == KC, shape, "conv2d: channel mismatch, input C=" << C << " kernel C=" << KC);
    SIMGEN_REQUIRE(stride >= 1 && padding >= 0, config, "conv2d: bad stride/padding");
    SIMGEN_REQUIRE(KH <= H + 2 * padding && KW <= W + 2 * padding, shape,
                   "conv2d: kernel larger than padded input");
    const int64_t OH = (H + 2 * padding - KH) / stride + 1;
    const int64_t OW = (W + 2 * padding - KW) / stride + 1;
    bool with_bias = bias != nullptr;
    if (with_bias)
        SIMGEN_REQUIRE(bias->ndim() == 1 && bias->dim(0) == O, shape, "conv2d: bad bias shape");

    auto n = with_bias ? detail::make_result<T>({N, O, OH, OW}, {input, kernel, *bias})
                       : detail::make_result<T>({N, O, OH, OW}, {input, kernel});
    const T* X = input.data().data();
    const T* K = kernel.data().data();
    T* Y = n->value.data();

    // zero-padded input copy: branch-free inner loops over output rows
    using Acc = AccT<T>;
    const int64_t HP = H + 2 * padding, WP = W + 2 * padding;
    std::vector<T> xpad(size_t(N * C) * HP * WP, T(0));
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t y = 0; y < H; ++y)
            std::copy(X + (nc * H + y) * W, X + (nc * H + y + 1) * W,
                      xpad.begin() + (nc * HP + y + padding) * WP + padding);

    // im2col GEMM: every tap of every channel becomes one contiguous row of
    // length OH*OW, so the hot loops are long and branch-free. Products of
    // two T values are exact in Acc, leaving only Acc-addition rounding.
    const int64_t TAPS = C * KH * KW;
    const int64_t OHW = OH * OW;
    for (int64_t in = 0; in < N; ++in) {
        thread_local std::vector<T> col;
        col.resize(size_t(TAPS) * OHW);
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ky = 0; ky < KH; ++ky)
                for (int64_t kx = 0; kx < KW; ++kx) {
                    T* crow = col.data() + ((c * KH + ky) * KW + kx) * OHW;
                    const T* xp = xpad.data() + (in * C + c) * HP * WP;
                    for (int64_t oy = 0; oy < OH; ++oy) {
                        const T* src = xp + (oy * stride + ky) * WP + kx;
                        if (stride == 1) {
                            std::copy(src, src + OW, crow + oy * OW);
                        } else {
                            for (int64_t ox = 0; ox < OW; ++ox) crow[oy * OW + ox] = src[ox * stride];
                        }
                    }
                }
        thread_local std::vector<Acc> acc;
        acc.resize(static_cast<size_t>(OHW));
        for (int64_t o = 0; o < O; ++o) {
            std::fill(acc.begin(), acc.end(), Acc(with_bias ? bias->data()[o] : T(0)));
            const T* krow = K + o * TAPS;
            for (int64_t t = 0; t < TAPS; ++t) {
                Acc kv = Acc(krow[t]);
                if (kv == Acc(0)) continue;
                const T* crow = col.data() + t * OHW;
                for (int64_t j = 0; j < OHW; ++j) acc[size_t(j)] += kv * Acc(crow[j]);
            }
            T* yplane = Y + (in * O + o) * OHW;
            for (int64_t j = 0; j < OHW; ++j) yplane[j] = T(acc[size_t(j)]);
        }
    }

    if (n->requires_grad) {
        int64_t s = stride, p = padding;
        n->backward_fn = [N, C, H, W, O, KH, KW, OH, OW, HP, WP, s, p,
                          with_bias](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pk = *self.parents[1];
            const T* G = self.grad.data();
            const int64_t TAPS = C * KH * KW;
            const int64_t OHW = OH * OW;
            if (px.requires_grad) {
                px.ensure_grad();
                const T* K = pk.value.data();
                for (int64_t in = 0; in < N; ++in) {
                    // dcol = K^T · G, then col2im scatter into the padded grad
                    std::vector<T> dcol(size_t(TAPS) * OHW, T(0));
                    for (int64_t o = 0; o < O; ++o) {
                        const T* grow = G + (in * O + o) * OHW;
                        const T* krow = K + o * TAPS;
                        for (int64_t t = 0; t < TAPS; ++t) {
                            T kv = krow[t];
                            if (kv == T(0)) continue;
                            T* drow = dcol.data() + t * OHW;
                            for (int64_t j = 0; j < OHW; ++j) drow[j] += kv * grow[j];
                        }
                    }
                    std::vector<T> dxpad(size_t(C) * HP * WP, T(0));
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t ky = 0; ky < KH; ++ky)
                            for (int64_t kx = 0; kx < KW; ++kx) {
                                const T* drow = dcol.data() + ((c * KH + ky) * KW + kx) * OHW;
                                T* dxp = dxpad.data() + c * HP * WP;
                                for (int64_t oy = 0; oy < OH; ++oy) {
                                    T* dst = dxp + (oy * s + ky) * WP + kx;
                                    const T* src = drow + oy * OW;
                                    if (s == 1) {
                                        for (int64_t ox = 0; ox < OW; ++ox) dst[ox] += src[ox];
                                    } else {
                                        for (int64_t ox = 0; ox < OW; ++ox) dst[ox * s] += src[ox];
                                    }
                                }
                            }
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t y = 0; y < H; ++y) {
                            const T* src = dxpad.data() + (c * HP + y + p) * WP + p;
                            T* dst = px.grad.data() + ((in * C + c) * H + y) * W;
                            for (int64_t x = 0; x < W; ++x) dst[x] += src[x];
                        }
                }
            }
            if (pk.requires_grad) {
                pk.ensure_grad();
                // rebuild the padded input (not retained from the forward)
                const T* X = px.value.data();
                std::vector<T> xpad(size_t(N * C) * HP * WP, T(0));
                for (int64_t nc = 0; nc < N * C; ++nc)
                    for (int64_t y = 0; y < H; ++y)
                        std::copy(X + (nc * H + y) * W, X + (nc * H + y + 1) * W,
                                  xpad.begin() + (nc * HP + y + p) * WP + p);
                for (int64_t o = 0; o < O; ++o)
                    for (int64_t in = 0; in < N; ++in) {
                        const T* gplane = G + (in * O + o) * OHW;
                        for (int64_t c = 0; c < C; ++c) {
                            const T* xp = xpad.data() + (in * C + c) * HP * WP;
                            T* dkplane = pk.grad.data() + (o * C + c) * KH * KW;
                            for (int64_t ky = 0; ky < KH; ++ky)
                                for (int64_t kx = 0; kx < KW; ++kx) {
                                    // four-way partial sums: a fixed
                                    // reassociation the vectorizer can use
                                    T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                                    for (int64_t oy = 0; oy < OH; ++oy) {
                                        const T* grow = gplane + oy * OW;
                                        const T* xrow = xp + (oy * s + ky) * WP + kx;
                                        int64_t ox = 0;
                                        if (s == 1) {
                                            for (; ox + 4 <= OW; ox += 4) {
                                                a0 += grow[ox] * xrow[ox];
                                                a1 += grow[ox + 1] * xrow[ox + 1];
                                                a2 += grow[ox + 2] * xrow[ox + 2];
                                                a3 += grow[ox + 3] * xrow[ox + 3];
                                            }
                                            for (; ox < OW; ++ox) a0 += grow[ox] * xrow[ox];
                                        } else {
                                            for (; ox < OW; ++ox) a0 += grow[ox] * xrow[ox * s];
                                        }
                                    }
                                    dkplane[ky * KW + kx] += ((a0 + a1) + (a2 + a3));
                                }
                        }
                    }
            }
            if (with_bias) {
                auto& pb = *self.parents[2];
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    for (int64_t in = 0; in < N; ++in)
                        for (int64_t o = 0; o < O; ++o) {
                            const T* gplane = G + (in * O + o) * OH * OW;
                            T acc = T(0);
                            for (int64_t i = 0; i < OH * OW; ++i) acc += gplane[i];
                            pb.grad[o] += acc;
                        }
                }
            }
        };
    }
    detail::debug_check_finite(*n, "conv2d");
    return TensorT<T>(n);
}

// ---------------------------------------------------------------------------
// group_norm
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> group_norm(const TensorT<T>& input, int groups, const TensorT<T>& gain,
                      const TensorT<T>& bias, T eps = T(1e-5)) {
    SIMGEN_REQUIRE(input.ndim() == 4, shape, "group_norm expects [N,C,H,W]");
    const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    SIMGEN_REQUIRE(groups >= 1 && C % groups == 0, config,
                   "group_norm: C=" << C << " not divisible by groups=" << groups);
    SIMGEN_REQUIRE(gain.ndim() == 1 && gain.dim(0) == C && bias.ndim() == 1 && bias.dim(0) == C,
                   shape, "group_norm: gain/bias must be [C]");
    const int64_t cpg = C / groups;
    const int64_t m = cpg * H * W;

    auto n = detail::make_result<T>(input.shape(), {input, gain, bias});
    auto stats = std::make_shared<std::vector<T>>(size_t(N * groups * 2));  // mean, inv per group
    const T* X = input.data().data();
    T* Y = n->value.data();
    for (int64_t in = 0; in < N; ++in)
        for (int64_t g = 0; g < groups; ++g) {
            const T* xg = X + (in * C + g * cpg) * H * W;
            AccT<T> macc = 0;
            for (int64_t i = 0; i < m; ++i) macc += xg[i];
            T mean = T(macc / AccT<T>(m));
            AccT<T> vacc = 0;
            for (int64_t i = 0; i < m; ++i) {
                AccT<T> d = AccT<T>(xg[i]) - AccT<T>(mean);
                vacc += d * d;
            }
            T var = T(vacc / AccT<T>(m));
            T inv = T(1) / std::sqrt(var + eps);
            (*stats)[size_t((in * groups + g) * 2)] = mean;
            (*stats)[size_t((in * groups + g) * 2 + 1)] = inv;
            for (int64_t c = 0; c < cpg; ++c) {
                int64_t ch = g * cpg + c;
                const T* xrow = X + (in * C + ch) * H * W;
                T* yrow = Y + (in * C + ch) * H * W;
                T gv = gain.data()[ch], bv = bias.data()[ch];
                for (int64_t i = 0; i < H * W; ++i) yrow[i] = (xrow[i] - mean) * inv * gv + bv;
            }
        }

    if (n->requires_grad) {
        int64_t G = groups;
        n->backward_fn = [N, C, H, W, G, cpg, m, stats](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const T* X = px.value.data();
            const T* DY = self.grad.data();
            if (pg.requires_grad) pg.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            if (px.requires_grad) px.ensure_grad();
            for (int64_t in = 0; in < N; ++in)
                for (int64_t g = 0; g < G; ++g) {
                    T mean = (*stats)[size_t((in * G + g) * 2)];
                    T inv = (*stats)[size_t((in * G + g) * 2 + 1)];
                    // accumulate per-channel gain/bias grads and group sums
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (int64_t c = 0; c < cpg; ++c) {
                        int64_t ch = g * cpg + c;
                        const T* xrow = X + (in * C + ch) * H * W;
                        const T* dyrow = DY + (in * C + ch) * H * W;
                        T gv = pg.value[size_t(ch)];
                        T dg = T(0), db = T(0);
                        for (int64_t i = 0; i < H * W; ++i) {
                            T xhat = (xrow[i] - mean) * inv;
                            T dy = dyrow[i];
                            dg += dy * xhat;
                            db += dy;
                            T dxhat = dy * gv;
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        if (pg.requires_grad) pg.grad[size_t(ch)] += dg;
                        if (pb.requires_grad) pb.grad[size_t(ch)] += db;
                    }
                    if (px.requires_grad) {
                        T inv_m = T(1) / T(m);
                        for (int64_t c = 0; c < cpg; ++c) {
                            int64_t ch = g * cpg + c;
                            const T* xrow = X + (in * C + ch) * H * W;
                            const T* dyrow = DY + (in * C + ch) * H * W;
                            T* dxrow = px.grad.data() + (in * C + ch) * H * W;
                            T gv = pg.value[size_t(ch)];
                            for (int64_t i = 0; i < H * W; ++i) {
                                T xhat = (xrow[i] - mean) * inv;
                                T dxhat = dyrow[i] * gv;
                                dxrow[i] += inv * (dxhat - inv_m * sum_dxhat -
                                                   xhat * inv_m * sum_dxhat_xhat);
                            }
                        }
                    }
                }
        };
    }
    detail::debug_check_finite(*n, "group_norm");
    return TensorT<T>(n);
}

// y[n,c,h,w] = x[n,c,h,w]*(1+scale[n,c]) + shift[n,c]  (adaptive modulation)
template <typename T>
TensorT<T> channel_modulate(const TensorT<T>& x, const TensorT<T>& scale, const TensorT<T>& shift) {
    SIMGEN_REQUIRE(x.ndim() == 4 && scale.ndim() == 2 && shift.ndim() == 2, shape,
                   "channel_modulate: expects x[N,C,H,W], scale/shift [N,C]");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    SIMGEN_REQUIRE(scale.dim(0) == N && scale.dim(1) == C && shift.dim(0) == N && shift.dim(1) == C,
                   shape, "channel_modulate: scale/shift shape mismatch");
    auto n = detail::make_result<T>(x.shape(), {x, scale, shift});
    const T* X = x.data().data();
    T* Y = n->value.data();
    for (int64_t i = 0; i < N; ++i)
        for (int64_t c = 0; c < C; ++c) {
            T s = T(1) + scale.data()[i * C + c];
            T b = shift.data()[i * C + c];
            const T* xr = X + (i * C + c) * HW;
            T* yr = Y + (i * C + c) * HW;
            for (int64_t k = 0; k < HW; ++k) yr[k] = xr[k] * s + b;
        }
    if (n->requires_grad) {
        n->backward_fn = [N, C, HW](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& ps = *self.parents[1];
            auto& pq = *self.parents[2];
            const T* G = self.grad.data();
            if (px.requires_grad) px.ensure_grad();
            if (ps.requires_grad) ps.ensure_grad();
            if (pq.requires_grad) pq.ensure_grad();
            for (int64_t i = 0; i < N; ++i)
                for (int64_t c = 0; c < C; ++c) {
                    const T* gr = G + (i * C + c) * HW;
                    const T* xr = px.value.data() + (i * C + c) * HW;
                    T s = T(1) + ps.value[size_t(i * C + c)];
                    T ds = T(0), dq = T(0);
                    if (px.requires_grad) {
                        T* dxr = px.grad.data() + (i * C + c) * HW;
                        for (int64_t k = 0; k < HW; ++k) dxr[k] += gr[k] * s;
                    }
                    for (int64_t k = 0; k < HW; ++k) {
                        ds += gr[k] * xr[k];
                        dq += gr[k];
                    }
                    if (ps.requires_grad) ps.grad[size_t(i * C + c)] += ds;
                    if (pq.requires_grad) pq.grad[size_t(i * C + c)] += dq;
                }
        };
    }
    return TensorT<T>(n);
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, const Shape& shape) {
    SIMGEN_REQUIRE(numel_of(shape) == x.numel(), shape,
                   "reshape: element count mismatch " << shape_str(x.shape()) << " -> "
                                                      << shape_str(shape));
    auto n = detail::make_result<T>(shape, {x});
    n->value = x.data();
    if (n->requires_grad) {
        n->backward_fn = [](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    SIMGEN_REQUIRE(a.ndim() == 4 && b.ndim() == 4, shape, "concat_channels expects 4-D");
    SIMGEN_REQUIRE(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3), shape,
                   "concat_channels: incompatible shapes");
    const int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
    auto n = detail::make_result<T>({N, Ca + Cb, a.dim(2), a.dim(3)}, {a, b});
    for (int64_t i = 0; i < N; ++i) {
        std::copy(a.data().begin() + i * Ca * HW, a.data().begin() + (i + 1) * Ca * HW,
                  n->value.begin() + i * (Ca + Cb) * HW);
        std::copy(b.data().begin() + i * Cb * HW, b.data().begin() + (i + 1) * Cb * HW,
                  n->value.begin() + (i * (Ca + Cb) + Ca) * HW);
    }
    if (n->requires_grad) {
        n->backward_fn = [N, Ca, Cb, HW](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t k = 0; k < Ca * HW; ++k)
                        pa.grad[size_t(i * Ca * HW + k)] += self.grad[size_t(i * (Ca + Cb) * HW + k)];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t k = 0; k < Cb * HW; ++k)
                        pb.grad[size_t(i * Cb * HW + k)] +=
                            self.grad[size_t((i * (Ca + Cb) + Ca) * HW + k)];
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> upsample_nearest2(const TensorT<T>& x) {
    SIMGEN_REQUIRE(x.ndim() == 4, shape, "upsample_nearest2 expects 4-D");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto n = detail::make_result<T>({N, C, H * 2, W * 2}, {x});
    const T* X = x.data().data();
    T* Y = n->value.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* xp = X + nc * H * W;
        T* yp = Y + nc * H * W * 4;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < W; ++xx) {
                T v = xp[y * W + xx];
                yp[(2 * y) * 2 * W + 2 * xx] = v;
                yp[(2 * y) * 2 * W + 2 * xx + 1] = v;
                yp[(2 * y + 1) * 2 * W + 2 * xx] = v;
                yp[(2 * y + 1) * 2 * W + 2 * xx + 1] = v;
            }
    }
    if (n->requires_grad) {
        n->backward_fn = [N, C, H, W](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                T* dxp = px.grad.data() + nc * H * W;
                const T* gp = self.grad.data() + nc * H * W * 4;
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t xx = 0; xx < W; ++xx)
                        dxp[y * W + xx] += gp[(2 * y) * 2 * W + 2 * xx] +
                                           gp[(2 * y) * 2 * W + 2 * xx + 1] +
                                           gp[(2 * y + 1) * 2 * W + 2 * xx] +
                                           gp[(2 * y + 1) * 2 * W + 2 * xx + 1];
            }
        };
    }
    return TensorT<T>(n);
}

// max over the spatial extent -> [N,C]; ties resolve to the first index.
template <typename T>
TensorT<T> global_max_pool(const TensorT<T>& x) {
    SIMGEN_REQUIRE(x.ndim() == 4, shape, "global_max_pool expects 4-D");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    auto n = detail::make_result<T>({N, C}, {x});
    auto argmax = std::make_shared<std::vector<int64_t>>(size_t(N * C));
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* xp = x.data().data() + nc * HW;
        int64_t best = 0;
        for (int64_t i = 1; i < HW; ++i)
            if (xp[i] > xp[best]) best = i;
        (*argmax)[size_t(nc)] = best;
        n->value[size_t(nc)] = xp[best];
    }
    if (n->requires_grad) {
        n->backward_fn = [HW, argmax](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t nc = 0; nc < self.grad.size(); ++nc)
                px.grad[nc * size_t(HW) + size_t((*argmax)[nc])] += self.grad[nc];
        };
    }
    return TensorT<T>(n);
}

// mean over the spatial extent -> [N,C]
template <typename T>
TensorT<T> global_mean_pool(const TensorT<T>& x) {
    SIMGEN_REQUIRE(x.ndim() == 4, shape, "global_mean_pool expects 4-D");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    auto n = detail::make_result<T>({N, C}, {x});
    T inv = T(1) / T(HW);
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* xp = x.data().data() + nc * HW;
        T acc = T(0);
        for (int64_t i = 0; i < HW; ++i) acc += xp[i];
        n->value[size_t(nc)] = acc * inv;
    }
    if (n->requires_grad) {
        n->backward_fn = [HW, inv](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t nc = 0; nc < self.grad.size(); ++nc) {
                T g = self.grad[nc] * inv;
                T* dxp = px.grad.data() + nc * size_t(HW);
                for (int64_t i = 0; i < HW; ++i) dxp[i] += g;
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> concat_cols(const TensorT<T>& a, const TensorT<T>& b) {
    SIMGEN_REQUIRE(a.ndim() == 2 && b.ndim() == 2 && a.dim(0) == b.dim(0), shape,
                   "concat_cols: incompatible shapes");
    const int64_t N = a.dim(0), A = a.dim(1), B = b.dim(1);
    auto n = detail::make_result<T>({N, A + B}, {a, b});
    for (int64_t i = 0; i < N; ++i) {
        std::copy(a.data().begin() + i * A, a.data().begin() + (i + 1) * A,
                  n->value.begin() + i * (A + B));
        std::copy(b.data().begin() + i * B, b.data().begin() + (i + 1) * B,
                  n->value.begin() + i * (A + B) + A);
    }
    if (n->requires_grad) {
        n->backward_fn = [N, A, B](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < A; ++j)
                        pa.grad[size_t(i * A + j)] += self.grad[size_t(i * (A + B) + j)];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < B; ++j)
                        pb.grad[size_t(i * B + j)] += self.grad[size_t(i * (A + B) + A + j)];
            }
        };
    }
    return TensorT<T>(n);
}

// columns [c0, c1) of a 2-D tensor
template <typename T>
TensorT<T> slice_cols(const TensorT<T>& x, int64_t c0, int64_t c1) {
    SIMGEN_REQUIRE(x.ndim() == 2 && c0 >= 0 && c1 > c0 && c1 <= x.dim(1), shape,
                   "slice_cols: bad range");
    const int64_t N = x.dim(0), M = x.dim(1), K = c1 - c0;
    auto n = detail::make_result<T>({N, K}, {x});
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < K; ++j) n->value[size_t(i * K + j)] = x.data()[size_t(i * M + c0 + j)];
    if (n->requires_grad) {
        n->backward_fn = [N, M, K, c0](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < K; ++j)
                    px.grad[size_t(i * M + c0 + j)] += self.grad[size_t(i * K + j)];
        };
    }
    return TensorT<T>(n);
}

// rows of an embedding table -> [ids.size(), E]
template <typename T>
TensorT<T> embedding(const TensorT<T>& table, const std::vector<int>& ids) {
    SIMGEN_REQUIRE(table.ndim() == 2, shape, "embedding table must be 2-D");
    const int64_t V = table.dim(0), E = table.dim(1);
    for (int id : ids)
        SIMGEN_REQUIRE(id >= 0 && id < V, range, "embedding id " << id << " out of range [0," << V << ")");
    auto n = detail::make_result<T>({int64_t(ids.size()), E}, {table});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table.data().begin() + ids[i] * E, table.data().begin() + (ids[i] + 1) * E,
                  n->value.begin() + int64_t(i) * E);
    if (n->requires_grad) {
        auto ids_copy = std::make_shared<std::vector<int>>(ids);
        n->backward_fn = [E, ids_copy](TensorNode<T>& self) {
            auto& pt = *self.parents[0];
            pt.ensure_grad();
            for (size_t i = 0; i < ids_copy->size(); ++i) {
                T* dst = pt.grad.data() + (*ids_copy)[i] * E;
                const T* src = self.grad.data() + int64_t(i) * E;
                for (int64_t j = 0; j < E; ++j) dst[j] += src[j];
            }
        };
    }
    return TensorT<T>(n);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
void backward(TensorT<T>& loss) {
    SIMGEN_REQUIRE(loss.numel() == 1, contract, "backward: loss must be scalar");
    SIMGEN_REQUIRE(loss.requires_grad(), contract,
                   "backward: loss is not connected to any requires_grad tensor");
    using Node = TensorNode<T>;
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Run the pass on fresh buffers and fold previous gradients back in at
    // the end, so that calling backward twice doubles gradients exactly
    // (accumulation order inside one pass is then identical across passes).
    std::vector<std::pair<Node*, std::vector<T>>> stashed;
    for (Node* node : order) {
        if (!node->grad.empty()) {
            stashed.emplace_back(node, std::move(node->grad));
            node->grad.clear();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
        detail::debug_check_finite(*node, "backward");
    }
    for (auto& [node, old] : stashed) {
        if (node->grad.empty()) {
            node->grad = std::move(old);
        } else {
            for (size_t i = 0; i < old.size(); ++i) node->grad[i] += old[i];
        }
    }
}

}  // namespace simgen
