#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace simgen {

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
    Vec2 unit() const {
        double n = norm();
        return n > 1e-12 ? Vec2{x / n, y / n} : Vec2{1, 0};
    }
    Vec2 perp() const { return {-y, x}; }  // left normal
};

inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    a -= M_PI;
    if (a <= -M_PI) a = M_PI;  // headings live in (-pi, pi]
    return a;
}

// shortest-arc interpolation between headings
inline double lerp_heading(double a, double b, double u) {
    return wrap_angle(a + wrap_angle(b - a) * u);
}

// Projection of a point onto a polyline: arclength s, signed lateral offset
// (positive to the left of travel), and distance.
struct PolyProjection {
    double s = 0;
    double lateral = 0;
    double dist = 0;
    size_t segment = 0;
};

inline PolyProjection project_to_polyline(const std::vector<Vec2>& pts, Vec2 p) {
    PolyProjection best;
    best.dist = 1e18;
    double s_acc = 0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        Vec2 a = pts[i], b = pts[i + 1];
        Vec2 ab = b - a;
        double len = ab.norm();
        if (len < 1e-12) continue;
        double u = std::clamp((p - a).dot(ab) / (len * len), 0.0, 1.0);
        Vec2 q = a + ab * u;
        double d = (p - q).norm();
        if (d < best.dist) {
            best.dist = d;
            best.s = s_acc + u * len;
            best.lateral = ab.unit().cross(p - q);
            best.segment = i;
        }
        s_acc += len;
    }
    return best;
}

inline double polyline_length(const std::vector<Vec2>& pts) {
    double s = 0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) s += (pts[i + 1] - pts[i]).norm();
    return s;
}

// Point at arclength s with lateral offset (left positive); heading out-param
// is the tangent direction.
inline Vec2 point_at_arclength(const std::vector<Vec2>& pts, double s, double lateral,
                               double* heading = nullptr) {
    if (pts.size() < 2) {
        if (heading) *heading = 0;
        return pts.empty() ? Vec2{} : pts[0];
    }
    double s_acc = 0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        double len = (pts[i + 1] - pts[i]).norm();
        if (s <= s_acc + len || i + 2 == pts.size()) {
            double u = len > 1e-12 ? std::clamp((s - s_acc) / len, 0.0, 10.0) : 0.0;
            Vec2 dir = (pts[i + 1] - pts[i]).unit();
            if (heading) *heading = std::atan2(dir.y, dir.x);
            Vec2 q = pts[i] + dir * (u * len);
            return q + dir.perp() * lateral;
        }
        s_acc += len;
    }
    if (heading) *heading = 0;
    return pts.back();
}

// Oriented rectangle (vehicle footprint).
struct OrientedBox2 {
    Vec2 center;
    double heading = 0;
    double length = 0;  // along heading
    double width = 0;

    std::array<Vec2, 4> corners() const {
        Vec2 f{std::cos(heading), std::sin(heading)};
        Vec2 r = f.perp();
        Vec2 hl = f * (length * 0.5), hw = r * (width * 0.5);
        return {center + hl + hw, center + hl - hw, center - hl - hw, center - hl + hw};
    }
};

// Separating-axis overlap test for two oriented rectangles.
inline bool boxes_overlap(const OrientedBox2& a, const OrientedBox2& b) {
    auto ca = a.corners(), cb = b.corners();
    auto test_axes = [&](const std::array<Vec2, 4>& poly, const std::array<Vec2, 4>& other) {
        for (int i = 0; i < 4; ++i) {
            Vec2 edge = poly[(i + 1) % 4] - poly[i];
            Vec2 axis = edge.perp().unit();
            double amin = 1e18, amax = -1e18, bmin = 1e18, bmax = -1e18;
            for (auto& p : poly) {
                double v = axis.dot(p);
                amin = std::min(amin, v);
                amax = std::max(amax, v);
            }
            for (auto& p : other) {
                double v = axis.dot(p);
                bmin = std::min(bmin, v);
                bmax = std::max(bmax, v);
            }
            if (amax < bmin || bmax < amin) return true;  // separating axis found
        }
        return false;
    };
    return !test_axes(ca, cb) && !test_axes(cb, ca);
}

inline bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p) {
    bool inside = false;
    for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        if ((poly[i].y > p.y) != (poly[j].y > p.y)) {
            double xint = poly[j].x + (poly[i].x - poly[j].x) * (p.y - poly[j].y) /
                                          (poly[i].y - poly[j].y);
            if (p.x < xint) inside = !inside;
        }
    }
    return inside;
}

}  // namespace simgen
