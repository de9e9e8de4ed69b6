#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "simgen/image.hpp"
#include "simgen/traffic.hpp"

namespace simgen {

enum SemClass : uint8_t {
    sem_road = 0,
    sem_lane_marking = 1,
    sem_vehicle = 2,
    sem_pedestrian = 3,
    sem_building = 4,
    sem_tree = 5,
    sem_sky = 6,
    sem_void = 7,
};
constexpr int kNumSemClasses = 8;

// 8-bit palette; pairwise L-inf separation is at least 70/255, comfortably
// above the 0.5/8 decode tolerance used by the condition codec.
constexpr std::array<std::array<uint8_t, 3>, 8> kPalette = {{
    {128, 64, 128},   // road
    {255, 255, 255},  // lane-marking
    {0, 0, 230},      // vehicle
    {220, 20, 60},    // pedestrian
    {70, 70, 70},     // building
    {0, 153, 0},      // tree
    {70, 130, 180},   // sky
    {0, 0, 0},        // void
}};

inline bool is_background_class(SemClass c) {
    return c == sem_building || c == sem_tree || c == sem_sky;
}

inline SemClass semantic_of(ObjectClass c) {
    switch (c) {
        case ObjectClass::car:
        case ObjectClass::truck:
        case ObjectClass::cyclist:
            return sem_vehicle;
        case ObjectClass::pedestrian:
            return sem_pedestrian;
    }
    return sem_void;
}

struct CameraSpec {
    double mount_height = 1.6;    // meters above ground
    double forward_offset = 1.5;  // meters ahead of the ego center
    double focal_px = 44.8;       // 0.8 * width by default
    int height = 32;
    int width = 56;
    double max_depth = 100.0;

    static CameraSpec for_size(int h, int w) {
        CameraSpec c;
        c.height = h;
        c.width = w;
        c.focal_px = 0.8 * double(w);
        c.validate();
        return c;
    }

    void validate() const {
        SIMGEN_REQUIRE(focal_px > 0, config, "camera focal length must be positive");
        SIMGEN_REQUIRE(height >= 8 && width >= 8, config, "camera image size must be >= 8");
        SIMGEN_REQUIRE(width * 4 == height * 7, config,
                       "camera aspect must be 7/4 (got " << width << "x" << height << ")");
        SIMGEN_REQUIRE(max_depth > 0, config, "max depth must be positive");
    }
};

enum class RenderMode { plain, enriched };

struct RenderedFrame {
    int h = 0, w = 0;
    std::vector<float> depth;      // [0,1], 1 = no hit
    std::vector<uint8_t> semantic; // SemClass ids
    std::vector<int32_t> instance; // object id, 0 = none
    ImageF rgb;                    // 3 x h x w in [0,1]

    SemClass sem_at(int y, int x) const { return SemClass(semantic[size_t(y) * w + size_t(x)]); }
};

namespace detail_render {

inline uint32_t hash_u32(uint32_t x) {
    x ^= x >> 16;
    x *= 0x7feb352du;
    x ^= x >> 15;
    x *= 0x846ca68bu;
    x ^= x >> 16;
    return x;
}

inline double hash01(uint32_t a, uint32_t b, uint32_t c) {
    return double(hash_u32(a * 0x9e3779b9u ^ hash_u32(b) ^ hash_u32(c * 0x85ebca6bu))) /
           4294967296.0;
}

struct Rgb {
    double r = 0, g = 0, b = 0;
    Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
    Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
};

inline Rgb mix(const Rgb& a, const Rgb& b, double u) {
    return a * (1.0 - u) + b * u;
}

// height-extruded box in the 2.5-D world
struct RenderBox {
    OrientedBox2 fp;
    double z1 = 0;  // top (bottom is the ground plane)
    SemClass sem = sem_void;
    int instance = 0;
    uint32_t color_key = 0;
};

struct Ray {
    Vec2 origin;
    double oz;
    Vec2 dir2;   // horizontal part: fwd + right*u
    double dz;   // vertical part (up positive)
    // p(t) = (origin + dir2*t_xy..., oz + dz*t) with t = forward distance
};

// Ray/box hit at parameter t (forward distance); returns the face normal for
// shading: 0=+x(front) 1=-x(rear) 2=+y 3=-y 4=top
struct BoxHit {
    double t = 1e18;
    int face = 4;
    double u = 0, v = 0;  // local surface coordinates for texturing
};

inline bool ray_box(const Ray& ray, const RenderBox& box, BoxHit& hit) {
    double ch = std::cos(box.fp.heading), sh = std::sin(box.fp.heading);
    Vec2 rel = ray.origin - box.fp.center;
    // local frame: x along heading, y left
    double ox = rel.x * ch + rel.y * sh;
    double oy = -rel.x * sh + rel.y * ch;
    double dx = ray.dir2.x * ch + ray.dir2.y * sh;
    double dy = -ray.dir2.x * sh + ray.dir2.y * ch;
    double oz = ray.oz, dz = ray.dz;
    double hx = box.fp.length * 0.5, hy = box.fp.width * 0.5;
    double tmin = 1e-6, tmax = 1e18;
    int face = -1;
    auto slab = [&](double o, double d, double lo, double hi, int f_lo, int f_hi) {
        if (std::abs(d) < 1e-12) return o >= lo && o <= hi;
        double t1 = (lo - o) / d, t2 = (hi - o) / d;
        int f1 = f_lo, f2 = f_hi;
        if (t1 > t2) {
            std::swap(t1, t2);
            std::swap(f1, f2);
        }
        if (t1 > tmin) {
            tmin = t1;
            face = f1;
        }
        tmax = std::min(tmax, t2);
        return tmin <= tmax;
    };
    if (!slab(ox, dx, -hx, hx, 1, 0)) return false;
    if (!slab(oy, dy, -hy, hy, 3, 2)) return false;
    if (!slab(oz, dz, 0.0, box.z1, 5, 4)) return false;
    if (face < 0 || tmin >= hit.t) return false;
    hit.t = tmin;
    hit.face = face;
    double px = ox + dx * tmin, py = oy + dy * tmin, pz = oz + dz * tmin;
    if (face == 4 || face == 5) {
        hit.u = px;
        hit.v = py;
    } else if (face <= 1) {
        hit.u = py;
        hit.v = pz;
    } else {
        hit.u = px;
        hit.v = pz;
    }
    return true;
}

inline Rgb class_flat_color(SemClass sem) {
    auto& p = kPalette[sem];
    return {p[0] / 255.0, p[1] / 255.0, p[2] / 255.0};
}

// deterministic saturated body color per object id
inline Rgb body_color(uint32_t key) {
    double hue = hash01(key, 11, 7) * 6.0;
    double s = 0.55 + 0.4 * hash01(key, 3, 5);
    double v = 0.5 + 0.45 * hash01(key, 17, 13);
    int i = int(hue);
    double f = hue - i;
    double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

struct Shading {
    Vec2 sun_dir2;      // horizontal sun direction
    double sun_up = 0;  // vertical component
    double ambient = 0.5;
    double direct = 0.5;
};

inline double face_light(const Shading& sh, const RenderBox& box, int face) {
    // face normals in world
    Vec2 f{std::cos(box.fp.heading), std::sin(box.fp.heading)};
    Vec2 n2{0, 0};
    double nz = 0;
    switch (face) {
        case 0: n2 = f; break;
        case 1: n2 = f * -1.0; break;
        case 2: n2 = f.perp(); break;
        case 3: n2 = f.perp() * -1.0; break;
        default: nz = 1.0; break;
    }
    double lambert = std::max(0.0, n2.dot(sh.sun_dir2) + nz * sh.sun_up);
    return sh.ambient + sh.direct * lambert;
}

}  // namespace detail_render

// Procedural static background (enriched mode): buildings and trees placed
// deterministically from the map geometry and the render seed.
inline std::vector<detail_render::RenderBox> background_boxes(const SceneMap& map, Setting setting,
                                                              uint64_t seed) {
    using namespace detail_render;
    std::vector<RenderBox> boxes;
    if (map.lanes.empty()) return boxes;
    double building_p, tree_p;
    double h_lo, h_hi;
    switch (setting) {
        case Setting::urban: building_p = 0.85; tree_p = 0.45; h_lo = 7; h_hi = 26; break;
        case Setting::rural: building_p = 0.30; tree_p = 0.75; h_lo = 4; h_hi = 8; break;
        case Setting::highway: building_p = 0.12; tree_p = 0.35; h_lo = 5; h_hi = 10; break;
        case Setting::desert: building_p = 0.08; tree_p = 0.10; h_lo = 3; h_hi = 6; break;
        case Setting::mountain: building_p = 0.20; tree_p = 0.55; h_lo = 4; h_hi = 9; break;
        default: building_p = 0.3; tree_p = 0.3; h_lo = 4; h_hi = 10; break;
    }
    // the primary road: first lane's centerline, offset by total road width
    const auto& ref = map.lanes[0].points;
    double road_len = polyline_length(ref);
    double road_half = map.lanes[0].width * double(std::min<size_t>(map.lanes.size(), 4)) * 0.5;
    int slot = 0;
    for (int side = -1; side <= 1; side += 2) {
        for (double s = 6.0; s < road_len - 6.0; ++slot) {
            Rng rng(seed ^ 0xb0c5, uint64_t(slot) * 2 + (side > 0 ? 1 : 0));
            double gap = 10.0 + rng.next_double() * 18.0;
            double roll = rng.next_double();
            double heading;
            if (roll < building_p) {
                double depth = 8.0 + rng.next_double() * 10.0;
                double wide = 8.0 + rng.next_double() * 12.0;
                double setback = road_half + 3.5 + rng.next_double() * 7.0 + depth * 0.5;
                Vec2 c = point_at_arclength(ref, s + wide * 0.5, side * setback, &heading);
                RenderBox b;
                b.fp = {c, heading, wide, depth};
                b.z1 = h_lo + rng.next_double() * (h_hi - h_lo);
                b.sem = sem_building;
                b.color_key = uint32_t(hash_u32(uint32_t(slot * 2654435761u) ^ uint32_t(seed)));
                boxes.push_back(b);
                s += wide + gap * 0.35;
            } else if (roll < building_p + tree_p) {
                double setback = road_half + 1.5 + rng.next_double() * 4.0;
                Vec2 c = point_at_arclength(ref, s, side * setback, &heading);
                RenderBox b;
                b.fp = {c, heading, 1.6, 1.6};
                b.z1 = 3.0 + rng.next_double() * 4.0;
                b.sem = sem_tree;
                b.color_key = uint32_t(hash_u32(uint32_t(slot * 0x9e3779b9u) ^ uint32_t(seed >> 3)));
                boxes.push_back(b);
                s += 4.0 + gap * 0.3;
            } else {
                s += gap;
            }
        }
    }
    return boxes;
}

// Front pinhole raycast over the 2.5-D world. Pure function of
// (state, camera, mode, seed).
inline RenderedFrame render_front(const WorldState& state, const CameraSpec& cam, RenderMode mode,
                                  uint64_t seed) {
    using namespace detail_render;
    cam.validate();
    const auto& rec = *state.record;
    const int H = cam.height, W = cam.width;
    RenderedFrame fr;
    fr.h = H;
    fr.w = W;
    fr.depth.assign(size_t(H) * W, 1.0f);
    fr.semantic.assign(size_t(H) * W, uint8_t(sem_void));
    fr.instance.assign(size_t(H) * W, 0);
    fr.rgb = ImageF::make(H, W, 3);

    const ObjectState& ego = state.ego();
    Vec2 fwd{std::cos(ego.pose.heading), std::sin(ego.pose.heading)};
    Vec2 right = fwd.perp() * -1.0;
    Vec2 cam_pos = ego.pose.pos() + fwd * cam.forward_offset;
    const double cam_h = cam.mount_height;
    const bool enriched = mode == RenderMode::enriched;

    // dynamic boxes
    std::vector<RenderBox> boxes;
    for (auto& o : state.objects) {
        if (o.id == ego.id) continue;
        RenderBox b;
        b.fp = o.footprint();
        b.z1 = o.height;
        b.sem = semantic_of(o.cls);
        b.instance = o.id;
        b.color_key = uint32_t(o.id) * 0x45d9f3bu;
        boxes.push_back(b);
    }
    if (enriched) {
        auto bg = background_boxes(rec.map, rec.meta.setting, seed);
        boxes.insert(boxes.end(), bg.begin(), bg.end());
    }

    // lighting by time of day
    Shading sh;
    double sun_az = 0.8;
    switch (rec.meta.time) {
        case TimeOfDay::day: sh.sun_up = 0.8; sh.ambient = 0.55; sh.direct = 0.45; break;
        case TimeOfDay::dawn: sh.sun_up = 0.25; sh.ambient = 0.45; sh.direct = 0.5; break;
        case TimeOfDay::dusk: sh.sun_up = 0.2; sh.ambient = 0.4; sh.direct = 0.5; break;
        case TimeOfDay::night: sh.sun_up = 0.5; sh.ambient = 0.45; sh.direct = 0.2; break;
    }
    sh.sun_dir2 = Vec2{std::cos(sun_az), std::sin(sun_az)} * std::sqrt(std::max(0.0, 1.0 - sh.sun_up * sh.sun_up));
    if (rec.meta.weather == Weather::overcast || rec.meta.weather == Weather::fog ||
        rec.meta.weather == Weather::snow) {
        sh.ambient += sh.direct * 0.6;
        sh.direct *= 0.25;
    }

    // weather/time grading constants
    Rgb tint{1, 1, 1};
    double brightness = 1.0;
    switch (rec.meta.time) {
        case TimeOfDay::day: break;
        case TimeOfDay::dawn: tint = {1.1, 0.9, 0.75}; brightness = 0.8; break;
        case TimeOfDay::dusk: tint = {1.12, 0.82, 0.68}; brightness = 0.7; break;
        case TimeOfDay::night: tint = {0.55, 0.62, 0.95}; brightness = 0.32; break;
    }
    double fog_density = 0.0;
    Rgb fog_color{0.75, 0.77, 0.8};
    switch (rec.meta.weather) {
        case Weather::clear: break;
        case Weather::rain: brightness *= 0.75; tint = {tint.r * 0.85, tint.g * 0.9, tint.b}; fog_density = 0.004; break;
        case Weather::fog: fog_density = 0.02; break;
        case Weather::snow: fog_density = 0.009; fog_color = {0.85, 0.85, 0.88}; break;
        case Weather::overcast: brightness *= 0.82; fog_density = 0.002; break;
    }
    const bool snow = rec.meta.weather == Weather::snow;

    // sky colors by time/weather
    Rgb sky_zenith{0.2, 0.45, 0.8}, sky_horizon{0.65, 0.78, 0.9};
    if (rec.meta.weather == Weather::overcast || rec.meta.weather == Weather::snow ||
        rec.meta.weather == Weather::fog) {
        sky_zenith = {0.55, 0.58, 0.62};
        sky_horizon = {0.72, 0.74, 0.78};
    } else if (rec.meta.weather == Weather::rain) {
        sky_zenith = {0.35, 0.4, 0.48};
        sky_horizon = {0.55, 0.58, 0.64};
    }
    if (rec.meta.time == TimeOfDay::dawn || rec.meta.time == TimeOfDay::dusk) {
        sky_horizon = {0.95, 0.62, 0.4};
        sky_zenith = {0.3, 0.35, 0.6};
    } else if (rec.meta.time == TimeOfDay::night) {
        sky_zenith = {0.03, 0.04, 0.1};
        sky_horizon = {0.1, 0.12, 0.22};
    }

    // terrain by setting
    Rgb terrain;
    switch (rec.meta.setting) {
        case Setting::urban: terrain = {0.45, 0.44, 0.42}; break;
        case Setting::rural: terrain = {0.3, 0.5, 0.22}; break;
        case Setting::highway: terrain = {0.36, 0.45, 0.28}; break;
        case Setting::desert: terrain = {0.78, 0.68, 0.45}; break;
        case Setting::mountain: terrain = {0.45, 0.42, 0.38}; break;
    }
    if (snow) terrain = {0.88, 0.89, 0.92};

    for (int yi = 0; yi < H; ++yi) {
        for (int xi = 0; xi < W; ++xi) {
            double u = (double(xi) + 0.5 - double(W) / 2.0) / cam.focal_px;
            double v = (double(yi) + 0.5 - double(H) / 2.0) / cam.focal_px;
            Ray ray;
            ray.origin = cam_pos;
            ray.oz = cam_h;
            ray.dir2 = fwd + right * u;
            ray.dz = -v;

            double best_t = 1e18;
            SemClass sem = sem_void;
            int inst = 0;
            Rgb col{0, 0, 0};
            bool hit_any = false;

            // ground plane
            if (v > 1e-9) {
                double tg = cam_h / v;
                Vec2 gp = ray.origin + ray.dir2 * tg;
                SemClass gsem = sem_void;
                // classify against lanes and intersections
                double marking = 0.15;
                for (auto& lane : rec.map.lanes) {
                    auto proj = project_to_polyline(lane.points, gp);
                    double d = std::abs(proj.lateral);
                    if (proj.dist > lane.width * 0.5 + marking + 0.5) continue;
                    if (d <= lane.width * 0.5 - marking) {
                        if (gsem != sem_lane_marking) gsem = sem_road;
                    } else if (d <= lane.width * 0.5 + marking) {
                        gsem = sem_lane_marking;
                    }
                }
                for (auto& poly : rec.map.intersections)
                    if (gsem == sem_void && point_in_polygon(poly, gp)) gsem = sem_road;

                if (gsem == sem_road || gsem == sem_lane_marking) {
                    best_t = tg;
                    hit_any = true;
                    sem = gsem;
                    if (gsem == sem_lane_marking) {
                        col = snow ? Rgb{0.8, 0.8, 0.82} : Rgb{0.85, 0.83, 0.78};
                    } else {
                        double shade = enriched ? 0.3 + 0.08 * hash01(uint32_t(std::floor(gp.x * 7)),
                                                                      uint32_t(std::floor(gp.y * 7)),
                                                                      uint32_t(seed))
                                                : 0.32;
                        if (snow && enriched) shade += 0.2;
                        col = {shade, shade, shade * 1.04};
                    }
                } else if (enriched) {
                    best_t = tg;
                    hit_any = true;
                    sem = sem_void;  // terrain
                    double n = 0.85 + 0.3 * hash01(uint32_t(std::floor(gp.x * 3)),
                                                   uint32_t(std::floor(gp.y * 3)), uint32_t(seed));
                    col = terrain * n;
                }
            }

            // boxes
            bool emissive = false;
            const bool night = rec.meta.time == TimeOfDay::night;
            BoxHit bh;
            bh.t = best_t;
            const RenderBox* hit_box = nullptr;
            for (auto& b : boxes) {
                if (!enriched && is_background_class(b.sem)) continue;
                if (ray_box(ray, b, bh)) hit_box = &b;
            }
            if (hit_box) {
                best_t = bh.t;
                hit_any = true;
                sem = hit_box->sem;
                inst = hit_box->instance;
                double light = face_light(sh, *hit_box, bh.face);
                if (!enriched) {
                    // flat shading with per-face brightness only
                    Rgb base = class_flat_color(sem);
                    double flat = bh.face == 4 ? 1.0 : (bh.face <= 1 ? 0.82 : 0.68);
                    col = base * flat;
                } else if (sem == sem_vehicle || sem == sem_pedestrian) {
                    Rgb base = body_color(hit_box->color_key);
                    if (sem == sem_vehicle && bh.face != 4 && bh.v > hit_box->z1 * 0.55)
                        base = {0.12, 0.14, 0.18};  // glass band
                    col = base * light;
                    if (night && sem == sem_vehicle && bh.face <= 1 &&
                        bh.v < hit_box->z1 * 0.5) {
                        // headlights and taillights stay bright after grading
                        col = bh.face == 0 ? Rgb{1.0, 0.95, 0.72} : Rgb{0.85, 0.08, 0.06};
                        emissive = true;
                    }
                } else if (sem == sem_building) {
                    double fv = 0.45 + 0.3 * hash01(hit_box->color_key, 1, 2);
                    Rgb base{fv, fv * (0.92 + 0.1 * hash01(hit_box->color_key, 5, 2)),
                             fv * (0.85 + 0.1 * hash01(hit_box->color_key, 9, 4))};
                    if (bh.face != 4) {
                        // window grid on facades
                        double gx = std::sin(bh.u * 2.2) * std::sin(bh.v * 2.0);
                        if (gx > 0.45) {
                            if (night &&
                                hash01(uint32_t(bh.u * 3.1 + 50), uint32_t(bh.v * 2.7 + 50),
                                       hit_box->color_key) < 0.6) {
                                col = {0.55, 0.46, 0.26};  // lit window
                                emissive = true;
                            } else {
                                base = {0.1, 0.12, 0.16};
                            }
                        }
                    }
                    if (!emissive) col = base * light;
                } else if (sem == sem_tree) {
                    double n = 0.7 + 0.45 * hash01(uint32_t(bh.u * 13 + 100), uint32_t(bh.v * 13 + 100),
                                                   hit_box->color_key);
                    Rgb base = snow ? Rgb{0.6, 0.65, 0.6} : Rgb{0.08, 0.32, 0.1};
                    col = base * (n * light);
                }
            } else if (enriched && night && hit_any && sem == sem_lane_marking) {
                // retroreflective markings keep contrast after dark
                col = {0.5, 0.49, 0.42};
                emissive = true;
            }

            // sky
            if (!hit_any) {
                if (enriched) {
                    double elev = std::clamp(-v * 2.2, 0.0, 1.0);
                    col = mix(sky_horizon, sky_zenith, elev);
                    sem = sem_sky;
                } else {
                    fr.depth[size_t(yi) * W + xi] = 1.0f;
                    continue;  // plain void: black, no hit
                }
            }

            double depth01 = hit_any ? std::min(best_t / cam.max_depth, 1.0) : 1.0;
            if (enriched) {
                // grading: fog with distance, then global tint/brightness + grain
                if (fog_density > 0 && hit_any) {
                    double f = 1.0 - std::exp(-best_t * fog_density);
                    col = mix(col, fog_color, f);
                } else if (fog_density > 0) {
                    col = mix(col, fog_color, 0.55);
                }
                if (!emissive)
                    col = {col.r * tint.r * brightness, col.g * tint.g * brightness,
                           col.b * tint.b * brightness};
                double grain = (hash01(uint32_t(xi), uint32_t(yi), uint32_t(seed ^ 0x5eed)) - 0.5) * 0.03;
                col = {col.r + grain, col.g + grain, col.b + grain};
            }
            size_t px = size_t(yi) * W + xi;
            fr.depth[px] = float(depth01);
            fr.semantic[px] = uint8_t(sem);
            fr.instance[px] = (sem == sem_vehicle || sem == sem_pedestrian) ? inst : 0;
            fr.rgb.at(0, yi, xi) = float(std::clamp(col.r, 0.0, 1.0));
            fr.rgb.at(1, yi, xi) = float(std::clamp(col.g, 0.0, 1.0));
            fr.rgb.at(2, yi, xi) = float(std::clamp(col.b, 0.0, 1.0));
        }
    }
    return fr;
}

// Ego-centered, ego-heading-up orthographic raster of lanes and objects.
inline ImageF render_topdown(const WorldState& state, double extent_m, int resolution) {
    SIMGEN_REQUIRE(extent_m > 0, contract, "top-down extent must be positive");
    SIMGEN_REQUIRE(resolution >= 8, config, "top-down resolution too small");
    using namespace detail_render;
    const auto& rec = *state.record;
    const ObjectState& ego = state.ego();
    Vec2 fwd{std::cos(ego.pose.heading), std::sin(ego.pose.heading)};
    Vec2 right = fwd.perp() * -1.0;
    const double m_per_px = extent_m / double(resolution);

    ImageF img = ImageF::make(resolution, resolution, 3, 0.12f);
    for (int r = 0; r < resolution; ++r)
        for (int c = 0; c < resolution; ++c) {
            double local_fwd = (double(resolution) / 2.0 - (double(r) + 0.5)) * m_per_px;
            double local_right = ((double(c) + 0.5) - double(resolution) / 2.0) * m_per_px;
            Vec2 p = ego.pose.pos() + fwd * local_fwd + right * local_right;
            Rgb col{0.12, 0.14, 0.12};  // background
            // lanes
            bool road = false, marking = false;
            for (auto& lane : rec.map.lanes) {
                auto proj = project_to_polyline(lane.points, p);
                double d = std::abs(proj.lateral);
                if (proj.dist > lane.width * 0.5 + 0.4) continue;
                if (d <= lane.width * 0.5 - 0.15)
                    road = true;
                else if (d <= lane.width * 0.5 + 0.15)
                    marking = true;
            }
            for (auto& poly : rec.map.intersections)
                if (point_in_polygon(poly, p)) road = true;
            if (marking)
                col = {0.85, 0.85, 0.85};
            else if (road)
                col = {0.35, 0.35, 0.37};
            // objects on top
            for (auto& o : state.objects) {
                OrientedBox2 box = o.footprint();
                Vec2 rel = p - box.center;
                double ch = std::cos(box.heading), sh2 = std::sin(box.heading);
                double lx = rel.x * ch + rel.y * sh2;
                double ly = -rel.x * sh2 + rel.y * ch;
                if (std::abs(lx) <= box.length * 0.5 && std::abs(ly) <= box.width * 0.5) {
                    if (o.id == ego.id) {
                        col = {0.95, 0.95, 0.95};
                    } else {
                        col = class_flat_color(semantic_of(o.cls));
                    }
                }
            }
            img.at(0, r, c) = float(col.r);
            img.at(1, r, c) = float(col.g);
            img.at(2, r, c) = float(col.b);
        }
    return img;
}

}  // namespace simgen
