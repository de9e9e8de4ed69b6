#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "simgen/common.hpp"
#include "simgen/image.hpp"

namespace simgen {

// ---------------------------------------------------------------------------
// Feature-Gaussian fits and the Frechet distance
// ---------------------------------------------------------------------------

struct FeatureStats {
    int dim = 0;
    int64_t count = 0;
    std::vector<double> mean;  // [dim]
    std::vector<double> cov;   // [dim*dim], symmetric
};

// Gaussian moments of a feature set [count x dim]; requires count >= dim+1
// for a nondegenerate covariance. Unbiased covariance, order-independent
// accumulation.
inline FeatureStats fit_feature_stats(const std::vector<std::vector<double>>& feats) {
    SIMGEN_REQUIRE(!feats.empty(), stats, "fit_feature_stats: no samples");
    const int d = int(feats[0].size());
    SIMGEN_REQUIRE(int64_t(feats.size()) >= int64_t(d) + 1, stats,
                   "fit_feature_stats: need at least dim+1 = " << d + 1 << " samples, got "
                                                               << feats.size());
    FeatureStats st;
    st.dim = d;
    st.count = int64_t(feats.size());
    st.mean.assign(size_t(d), 0.0);
    st.cov.assign(size_t(d) * d, 0.0);
    for (auto& f : feats) {
        SIMGEN_REQUIRE(int(f.size()) == d, shape, "fit_feature_stats: ragged feature row");
        for (int i = 0; i < d; ++i) st.mean[size_t(i)] += f[size_t(i)];
    }
    for (int i = 0; i < d; ++i) st.mean[size_t(i)] /= double(st.count);
    for (auto& f : feats)
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j)
                st.cov[size_t(i) * d + j] +=
                    (f[size_t(i)] - st.mean[size_t(i)]) * (f[size_t(j)] - st.mean[size_t(j)]);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            double v = st.cov[size_t(i) * d + j] / double(st.count - 1);
            st.cov[size_t(i) * d + j] = v;
            st.cov[size_t(j) * d + i] = v;
        }
    return st;
}

namespace detail_metrics {

// Jacobi eigendecomposition of a symmetric matrix; A is destroyed.
inline void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
    eigvecs.assign(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[size_t(i) * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[size_t(p) * n + q] * a[size_t(p) * n + q];
        if (off < 1e-22) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a[size_t(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                double app = a[size_t(p) * n + p], aqq = a[size_t(q) * n + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a[size_t(k) * n + p], akq = a[size_t(k) * n + q];
                    a[size_t(k) * n + p] = c * akp - s * akq;
                    a[size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a[size_t(p) * n + k], aqk = a[size_t(q) * n + k];
                    a[size_t(p) * n + k] = c * apk - s * aqk;
                    a[size_t(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = eigvecs[size_t(k) * n + p], vkq = eigvecs[size_t(k) * n + q];
                    eigvecs[size_t(k) * n + p] = c * vkp - s * vkq;
                    eigvecs[size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
    }
    eigvals.resize(size_t(n));
    for (int i = 0; i < n; ++i) eigvals[size_t(i)] = a[size_t(i) * n + i];
}

inline std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
    std::vector<double> c(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double av = a[size_t(i) * n + k];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) c[size_t(i) * n + j] += av * b[size_t(k) * n + j];
        }
    return c;
}

// symmetric matrix square root via eigendecomposition; negative eigenvalues
// clip to zero
inline std::vector<double> sym_sqrt(std::vector<double> a, int n) {
    std::vector<double> vals, vecs;
    jacobi_eigen(a, n, vals, vecs);
    std::vector<double> out(size_t(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        double lam = std::sqrt(std::max(vals[size_t(k)], 0.0));
        if (lam == 0.0) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[size_t(i) * n + j] += lam * vecs[size_t(i) * n + k] * vecs[size_t(j) * n + k];
    }
    return out;
}

}  // namespace detail_metrics

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}); the cross term uses the
// symmetric form Sa^{1/2} Sb Sa^{1/2}. Diagonal shrinkage guards small
// sample counts.
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b,
                               double shrinkage = 1e-6) {
    SIMGEN_REQUIRE(a.dim == b.dim, shape, "frechet_distance: dimension mismatch");
    const int n = a.dim;
    double dist = 0;
    for (int i = 0; i < n; ++i) {
        double d = a.mean[size_t(i)] - b.mean[size_t(i)];
        dist += d * d;
    }
    std::vector<double> sa = a.cov, sb = b.cov;
    for (int i = 0; i < n; ++i) {
        sa[size_t(i) * n + i] += shrinkage;
        sb[size_t(i) * n + i] += shrinkage;
    }
    double trace = 0;
    for (int i = 0; i < n; ++i) trace += sa[size_t(i) * n + i] + sb[size_t(i) * n + i];
    auto root_a = detail_metrics::sym_sqrt(sa, n);
    auto inner = detail_metrics::matmul_sq(detail_metrics::matmul_sq(root_a, sb, n), root_a, n);
    // symmetrize against rounding before the final eigensolve
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (inner[size_t(i) * n + j] + inner[size_t(j) * n + i]);
            inner[size_t(i) * n + j] = v;
            inner[size_t(j) * n + i] = v;
        }
    std::vector<double> vals, vecs;
    detail_metrics::jacobi_eigen(inner, n, vals, vecs);
    double tr_sqrt = 0;
    for (double v : vals) tr_sqrt += std::sqrt(std::max(v, 0.0));
    return std::max(dist + trace - 2.0 * tr_sqrt, 0.0);
}

// ---------------------------------------------------------------------------
// Pixel diversity
// ---------------------------------------------------------------------------

// standard deviation of all pixel values across the set, on the 0-255 scale
inline double d_pix(const std::vector<ImageF>& images) {
    SIMGEN_REQUIRE(!images.empty(), stats, "d_pix: empty image set");
    double sum = 0, sum2 = 0;
    int64_t n = 0;
    for (auto& img : images)
        for (float v : img.data) {
            double x = double(v) * 255.0;
            sum += x;
            sum2 += x * x;
            ++n;
        }
    double mean = sum / double(n);
    double var = std::max(sum2 / double(n) - mean * mean, 0.0);
    return std::sqrt(var);
}

// ---------------------------------------------------------------------------
// Segmentation / detection metrics
// ---------------------------------------------------------------------------

struct MiouResult {
    std::vector<double> per_class;  // NaN for classes absent from pred and gt
    double mean = 0;
};

inline MiouResult miou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                       int num_classes) {
    SIMGEN_REQUIRE(pred.size() == gt.size(), shape, "miou: resolution mismatch");
    std::vector<int64_t> inter(size_t(num_classes), 0), uni(size_t(num_classes), 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == gt[i]) ++inter[pred[i]];
        ++uni[pred[i]];
        if (pred[i] != gt[i]) ++uni[gt[i]];
    }
    MiouResult r;
    r.per_class.assign(size_t(num_classes), std::nan(""));
    double sum = 0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (uni[size_t(c)] == 0) continue;  // absent classes excluded from the mean
        r.per_class[size_t(c)] = double(inter[size_t(c)]) / double(uni[size_t(c)]);
        sum += r.per_class[size_t(c)];
        ++present;
    }
    r.mean = present ? sum / present : 0.0;
    return r;
}

struct DetBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double score = 0;

    double area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
};

inline double box_iou(const DetBox& a, const DetBox& b) {
    double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
    double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

// Average precision at one IoU threshold; greedy matching by descending
// score, all-point interpolation of the PR curve.
inline double ap_lite(std::vector<DetBox> pred, const std::vector<DetBox>& gt,
                      double iou_thresh = 0.5) {
    if (gt.empty()) return pred.empty() ? 1.0 : 0.0;
    if (pred.empty()) return 0.0;
    std::stable_sort(pred.begin(), pred.end(),
                     [](const DetBox& a, const DetBox& b) { return a.score > b.score; });
    std::vector<bool> used(gt.size(), false);
    std::vector<int> tp(pred.size(), 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        double best = iou_thresh;
        int best_j = -1;
        for (size_t j = 0; j < gt.size(); ++j) {
            if (used[j]) continue;
            double iou = box_iou(pred[i], gt[j]);
            if (iou >= best) {
                best = iou;
                best_j = int(j);
            }
        }
        if (best_j >= 0) {
            used[size_t(best_j)] = true;
            tp[i] = 1;
        }
    }
    // precision envelope over recall
    double ap = 0;
    int cum_tp = 0;
    std::vector<double> recall(pred.size()), precision(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        cum_tp += tp[i];
        recall[i] = double(cum_tp) / double(gt.size());
        precision[i] = double(cum_tp) / double(i + 1);
    }
    for (int i = int(pred.size()) - 2; i >= 0; --i)
        precision[size_t(i)] = std::max(precision[size_t(i)], precision[size_t(i) + 1]);
    double prev_recall = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

}  // namespace simgen
