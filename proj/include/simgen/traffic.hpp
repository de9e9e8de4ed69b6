#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "simgen/rng.hpp"
#include "simgen/scene.hpp"

namespace simgen {

// ---------------------------------------------------------------------------
// World state at a time instant
// ---------------------------------------------------------------------------

struct ObjectState {
    int id = 0;
    ObjectClass cls = ObjectClass::car;
    double length = 0, width = 0, height = 0;
    Pose pose;
    double speed = 0;

    OrientedBox2 footprint() const {
        return {pose.pos(), pose.heading, length, width};
    }
};

struct WorldState {
    const SceneRecord* record = nullptr;
    double t = 0;
    std::vector<ObjectState> objects;  // same order as record->tracks

    const ObjectState* find(int id) const {
        for (auto& o : objects)
            if (o.id == id) return &o;
        return nullptr;
    }
    const ObjectState& ego() const { return *find(record->ego_id); }
};

enum class StepPolicy { replay, idm, adversarial_overlay };

// ---------------------------------------------------------------------------
// IDM car-following over logged routes
// ---------------------------------------------------------------------------

struct IdmParams {
    double desired_speed = 12.0;  // overridden per agent from its log
    double time_headway = 1.5;
    double max_accel = 2.0;
    double comfort_brake = 3.0;
    double min_gap = 2.0;
    double exponent = 4.0;
};

inline double idm_accel(const IdmParams& p, double v, double gap, double dv) {
    double s_star = p.min_gap + std::max(0.0, v * p.time_headway +
                                                 v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_brake)));
    double free_term = std::pow(v / std::max(p.desired_speed, 0.1), p.exponent);
    double int_term = gap > 1e-6 ? (s_star / gap) * (s_star / gap) : 1e6;
    return p.max_accel * (1.0 - free_term - int_term);
}

namespace detail_traffic {

struct RouteAgent {
    size_t track_idx;
    std::vector<Vec2> route;  // logged positions (deduplicated)
    double route_len = 0;
    double s = 0;   // arclength progressed
    double v = 0;   // current speed
    double v0 = 0;  // desired speed from the log
    bool moving = false;
};

inline double logged_speed(const SceneRecord& rec, const ObjectTrack& tr, int64_t i) {
    int64_t last = int64_t(tr.poses.size()) - 1;
    int64_t j = std::min(i + 1, last);
    int64_t k = std::max<int64_t>(0, j - 1);
    if (j == k) return 0.0;
    Vec2 d = tr.poses[size_t(j)].pos() - tr.poses[size_t(k)].pos();
    return d.norm() * SceneRecord::kSampleHz;
}

}  // namespace detail_traffic

// World state at time t under the given control policy.
//   replay: interpolates the logged poses.
//   idm: vehicles re-derive speeds from the car-following law along their
//        logged routes; pedestrians replay.
//   adversarial_overlay: replay of a (typically perturbed) record.
inline WorldState step_scene(const SceneRecord& rec, double t, StepPolicy policy) {
    SIMGEN_REQUIRE(t >= 0 && t <= rec.duration + 1e-9, range,
                   "step_scene: t=" << t << " outside [0, " << rec.duration << "]");
    WorldState ws;
    ws.record = &rec;
    ws.t = t;
    ws.objects.reserve(rec.tracks.size());
    for (auto& tr : rec.tracks) {
        ObjectState os;
        os.id = tr.id;
        os.cls = tr.cls;
        os.length = tr.length;
        os.width = tr.width;
        os.height = tr.height;
        os.pose = rec.pose_at(tr, t);
        os.speed = detail_traffic::logged_speed(rec, tr, int64_t(std::floor(t * SceneRecord::kSampleHz)));
        ws.objects.push_back(os);
    }
    if (policy != StepPolicy::idm) return ws;

    // IDM pass: integrate vehicle speeds from 0 to t along logged routes.
    using detail_traffic::RouteAgent;
    std::vector<RouteAgent> agents;
    for (size_t i = 0; i < rec.tracks.size(); ++i) {
        auto& tr = rec.tracks[i];
        if (tr.cls == ObjectClass::pedestrian) continue;
        RouteAgent a;
        a.track_idx = i;
        for (auto& p : tr.poses)
            if (a.route.empty() || (p.pos() - a.route.back()).norm() > 1e-6)
                a.route.push_back(p.pos());
        a.route_len = polyline_length(a.route);
        a.moving = a.route.size() >= 2 && a.route_len > 0.5;
        a.v = detail_traffic::logged_speed(rec, tr, 0);
        double total_t = rec.duration > 0 ? rec.duration : 1.0;
        a.v0 = std::max(a.route_len / total_t, a.v);
        agents.push_back(std::move(a));
    }
    const double dt = 0.025;  // substepped below the sample rate: keeps the
                              // min-gap invariant from Euler overshoot
    for (double tau = 0; tau + 1e-9 < t; tau += dt) {
        double step = std::min(dt, t - tau);
        for (auto& a : agents) {
            if (!a.moving) continue;
            auto& tr = rec.tracks[a.track_idx];
            // leader: nearest vehicle ahead within lateral reach of my route
            double best_gap = 1e18, leader_v = 0;
            bool have_leader = false;
            for (auto& b : agents) {
                if (&b == &a) continue;
                auto& trb = rec.tracks[b.track_idx];
                Vec2 bpos = b.moving ? point_at_arclength(b.route, b.s, 0.0)
                                     : trb.poses[0].pos();
                auto proj = project_to_polyline(a.route, bpos);
                if (std::abs(proj.lateral) > 2.0) continue;
                double gap = proj.s - a.s - 0.5 * trb.length - 0.5 * tr.length;
                if (proj.s > a.s && gap < best_gap) {
                    best_gap = gap;
                    leader_v = b.moving ? b.v : 0.0;
                    have_leader = true;
                }
            }
            IdmParams prm;
            prm.desired_speed = a.v0;
            double acc;
            if (have_leader)
                acc = idm_accel(prm, a.v, std::max(best_gap, 0.05), a.v - leader_v);
            else
                acc = prm.max_accel * (1.0 - std::pow(a.v / std::max(a.v0, 0.1), prm.exponent));
            a.v = std::max(0.0, a.v + acc * step);
            a.s = std::min(a.s + a.v * step, a.route_len);
        }
    }
    for (auto& a : agents) {
        if (!a.moving) continue;
        double heading;
        Vec2 p = point_at_arclength(a.route, a.s, 0.0, &heading);
        auto& os = ws.objects[a.track_idx];
        os.pose = {p.x, p.y, heading};
        os.speed = a.v;
    }
    return ws;
}

// ---------------------------------------------------------------------------
// Procedural scene generation
// ---------------------------------------------------------------------------

struct SceneConfig {
    double density = 6.0;  // expected traffic object count
    Setting setting = Setting::urban;
    Weather weather = Weather::clear;
    TimeOfDay time = TimeOfDay::day;
    double duration = 10.0;
};

namespace detail_traffic {

inline std::vector<Vec2> arc_centerline(Vec2 start, double heading0, double curvature,
                                        double length, double step = 5.0) {
    std::vector<Vec2> pts;
    Vec2 p = start;
    double h = heading0;
    pts.push_back(p);
    for (double s = step; s <= length + 1e-6; s += step) {
        p = p + Vec2{std::cos(h), std::sin(h)} * step;
        h += curvature * step;
        pts.push_back(p);
    }
    return pts;
}

inline void object_dims(ObjectClass cls, Rng& rng, double& len, double& wid, double& hgt) {
    switch (cls) {
        case ObjectClass::car:
            len = 4.2 + rng.next_double() * 0.8;
            wid = 1.8 + rng.next_double() * 0.2;
            hgt = 1.4 + rng.next_double() * 0.3;
            break;
        case ObjectClass::truck:
            len = 7.0 + rng.next_double() * 3.0;
            wid = 2.4 + rng.next_double() * 0.3;
            hgt = 2.8 + rng.next_double() * 0.8;
            break;
        case ObjectClass::pedestrian:
            len = 0.5;
            wid = 0.5;
            hgt = 1.6 + rng.next_double() * 0.3;
            break;
        case ObjectClass::cyclist:
            len = 1.8;
            wid = 0.6;
            hgt = 1.6 + rng.next_double() * 0.2;
            break;
    }
}

}  // namespace detail_traffic

inline SceneRecord generate_procedural_scene(uint64_t seed, const SceneConfig& cfg) {
    SIMGEN_REQUIRE(cfg.density >= 0, contract, "density must be non-negative");
    Rng rng(seed, 0xd1ce);
    SceneRecord rec;
    rec.duration = cfg.duration;
    rec.meta.weather = cfg.weather;
    rec.meta.time = cfg.time;
    rec.meta.setting = cfg.setting;

    // map sizing by setting
    int lane_count;
    double ego_speed, curvature;
    switch (cfg.setting) {
        case Setting::highway:
            lane_count = 3 + int(rng.next_below(2));
            ego_speed = 18.0 + rng.next_double() * 6.0;
            curvature = (rng.next_double() - 0.5) * 0.002;
            break;
        case Setting::urban:
            lane_count = 2 + int(rng.next_below(2));
            ego_speed = 7.0 + rng.next_double() * 5.0;
            curvature = (rng.next_double() - 0.5) * 0.006;
            break;
        default:
            lane_count = 1 + int(rng.next_below(2));
            ego_speed = 10.0 + rng.next_double() * 6.0;
            curvature = (rng.next_double() - 0.5) * 0.012;
            break;
    }
    const double lane_width = 3.5;
    double map_len = 160.0 + ego_speed * cfg.duration + cfg.density * 8.0;
    auto base = detail_traffic::arc_centerline({0, 0}, 0.0, curvature, map_len);
    for (int i = 0; i < lane_count; ++i) {
        LanePolyline lane;
        lane.width = lane_width;
        double offset = (double(i) - double(lane_count - 1) / 2.0) * lane_width;
        for (size_t k = 0; k < base.size(); ++k) {
            double heading;
            Vec2 p = point_at_arclength(base, double(k) * 5.0, offset, &heading);
            lane.points.push_back(p);
        }
        rec.map.lanes.push_back(std::move(lane));
    }
    if (cfg.setting == Setting::urban) {
        // crossing road near mid-map, recorded as an intersection polygon
        double cx = map_len * (0.45 + rng.next_double() * 0.1);
        double heading;
        Vec2 c = point_at_arclength(base, cx, 0.0, &heading);
        Vec2 f{std::cos(heading), std::sin(heading)};
        Vec2 r = f.perp();
        double half = lane_width * double(lane_count) * 0.5 + 1.0;
        double reach = 18.0;
        LanePolyline cross;
        cross.width = lane_width * 2.0;
        cross.points = {c - r * reach, c + r * reach};
        rec.map.lanes.push_back(cross);
        rec.map.intersections.push_back(
            {c - f * half - r * half, c + f * half - r * half, c + f * half + r * half,
             c - f * half + r * half});
    }

    // rollout helper: constant-speed lane following with IDM capping against
    // the leader on the same lane
    struct Spawn {
        int lane;
        double s, lat, speed;
        ObjectClass cls;
        double len, wid, hgt;
    };
    std::vector<Spawn> spawns;
    auto lane_len = [&](int li) { return polyline_length(rec.map.lanes[size_t(li)].points); };

    // ego
    Spawn ego;
    ego.lane = int(rng.next_below(uint64_t(lane_count)));
    ego.s = 15.0 + rng.next_double() * 10.0;
    ego.lat = 0.0;
    ego.speed = ego_speed;
    ego.cls = ObjectClass::car;
    detail_traffic::object_dims(ObjectClass::car, rng, ego.len, ego.wid, ego.hgt);
    spawns.push_back(ego);

    int want = int(std::lround(cfg.density));
    int placed = 0, attempts = 0;
    const int max_attempts = 60 * (want + 1);
    while (placed < want) {
        SIMGEN_REQUIRE(attempts++ < max_attempts, generation,
                       "cannot place " << want << " objects on this map (placed " << placed
                                       << " after " << max_attempts
                                       << " attempts); lower the density");
        Spawn sp;
        double roll = rng.next_double();
        if (cfg.setting == Setting::highway || roll < 0.7) {
            sp.cls = rng.next_double() < 0.8 ? ObjectClass::car : ObjectClass::truck;
        } else if (roll < 0.9) {
            sp.cls = ObjectClass::pedestrian;
        } else {
            sp.cls = ObjectClass::cyclist;
        }
        detail_traffic::object_dims(sp.cls, rng, sp.len, sp.wid, sp.hgt);
        sp.lane = int(rng.next_below(uint64_t(lane_count)));
        double ll = lane_len(sp.lane);
        // traffic clusters around the ego, the camera's field of regard;
        // the band stretches when the requested density needs the room
        double reach = 75.0 + std::max(0.0, cfg.density - 8.0) * 12.0;
        double lo = std::max(10.0, ego.s - 25.0);
        double hi = std::min(ll - 20.0, ego.s + reach);
        sp.s = lo + rng.next_double() * std::max(hi - lo, 1.0);
        if (sp.cls == ObjectClass::pedestrian) {
            sp.lat = (rng.next_bernoulli(0.5) ? 1.0 : -1.0) *
                     (lane_width * double(lane_count) * 0.5 + 1.0 + rng.next_double() * 2.0);
            sp.speed = 0.8 + rng.next_double() * 0.7;
        } else if (sp.cls == ObjectClass::cyclist) {
            sp.lat = (rng.next_bernoulli(0.5) ? 1.0 : -1.0) *
                     (lane_width * double(lane_count) * 0.5 + 0.6);
            sp.speed = 3.0 + rng.next_double() * 3.0;
        } else {
            sp.lat = 0.0;
            sp.speed = std::max(2.0, ego_speed * (0.7 + rng.next_double() * 0.6));
        }
        // overlap check against existing spawns at t=0
        double h0;
        Vec2 p0 = point_at_arclength(rec.map.lanes[size_t(sp.lane)].points, sp.s, sp.lat, &h0);
        OrientedBox2 box{p0, h0, sp.len + 1.0, sp.wid + 0.5};
        bool ok = true;
        for (auto& other : spawns) {
            double ho;
            Vec2 po = point_at_arclength(rec.map.lanes[size_t(other.lane)].points, other.s,
                                         other.lat, &ho);
            if (boxes_overlap(box, OrientedBox2{po, ho, other.len + 1.0, other.wid + 0.5})) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        spawns.push_back(sp);
        ++placed;
    }

    // roll out trajectories at 10 Hz; vehicles follow lanes with IDM against
    // the nearest same-lane leader so spawned gaps stay collision-free
    int64_t steps = rec.sample_count();
    const double dt = 1.0 / SceneRecord::kSampleHz;
    std::vector<double> s(spawns.size()), v(spawns.size());
    for (size_t i = 0; i < spawns.size(); ++i) {
        s[i] = spawns[i].s;
        v[i] = spawns[i].speed;
    }
    std::vector<ObjectTrack> tracks(spawns.size());
    for (size_t i = 0; i < spawns.size(); ++i) {
        tracks[i].id = int(i) + 1;
        tracks[i].cls = spawns[i].cls;
        tracks[i].length = spawns[i].len;
        tracks[i].width = spawns[i].wid;
        tracks[i].height = spawns[i].hgt;
        tracks[i].poses.reserve(size_t(steps));
    }
    for (int64_t k = 0; k < steps; ++k) {
        for (size_t i = 0; i < spawns.size(); ++i) {
            auto& sp = spawns[i];
            const auto& lane_pts = rec.map.lanes[size_t(sp.lane)].points;
            double heading;
            Vec2 p = point_at_arclength(lane_pts, s[i], sp.lat, &heading);
            if (sp.cls == ObjectClass::pedestrian && sp.lat < 0) heading = wrap_angle(heading + M_PI);
            tracks[i].poses.push_back({p.x, p.y, wrap_angle(heading)});
        }
        if (k + 1 == steps) break;
        for (size_t i = 0; i < spawns.size(); ++i) {
            auto& sp = spawns[i];
            bool vehicle = sp.cls == ObjectClass::car || sp.cls == ObjectClass::truck;
            double acc = 0.0;
            if (vehicle) {
                double best_gap = 1e18, leader_v = 0;
                bool have = false;
                for (size_t jx = 0; jx < spawns.size(); ++jx) {
                    if (jx == i || spawns[jx].lane != sp.lane ||
                        std::abs(spawns[jx].lat - sp.lat) > 1.5)
                        continue;
                    double gap = s[jx] - s[i] - 0.5 * spawns[jx].len - 0.5 * sp.len;
                    if (s[jx] > s[i] && gap < best_gap) {
                        best_gap = gap;
                        leader_v = v[jx];
                        have = true;
                    }
                }
                IdmParams prm;
                prm.desired_speed = sp.speed;
                acc = have ? idm_accel(prm, v[i], std::max(best_gap, 0.05), v[i] - leader_v)
                           : prm.max_accel *
                                 (1.0 - std::pow(v[i] / std::max(sp.speed, 0.1), prm.exponent));
                acc = std::clamp(acc, -6.0, 2.5);
            }
            v[i] = std::max(0.0, v[i] + acc * dt);
            double llen = lane_len(sp.lane);
            s[i] = std::min(s[i] + v[i] * dt, llen - 1.0);
        }
    }
    rec.tracks = std::move(tracks);
    rec.ego_id = 1;
    rec.validate();
    return rec;
}

// ---------------------------------------------------------------------------
// Adversarial perturbation (rule-based candidate prior, exhaustive scoring)
// ---------------------------------------------------------------------------

enum class AdversaryMode {
    keep_lane = 0,
    brake,
    accelerate,
    lane_left,
    lane_right,
    cut_in,
};

inline const char* to_string(AdversaryMode m) {
    switch (m) {
        case AdversaryMode::keep_lane: return "keep-lane";
        case AdversaryMode::brake: return "brake";
        case AdversaryMode::accelerate: return "accelerate";
        case AdversaryMode::lane_left: return "lane-left";
        case AdversaryMode::lane_right: return "lane-right";
        case AdversaryMode::cut_in: return "cut-in";
    }
    return "?";
}

struct CandidateScore {
    AdversaryMode mode;
    double min_dist = 0;
    double min_time = 0;
};

struct AdversarialResult {
    SceneRecord record;
    AdversaryMode chosen;
    std::vector<CandidateScore> scores;  // all evaluated candidates
};

namespace detail_traffic {

// Candidate adversary trajectory; all candidates share the logged route
// geometry but alter the speed/lateral/pursuit profile.
inline std::vector<Pose> candidate_trajectory(const SceneRecord& rec, const ObjectTrack& adv,
                                              AdversaryMode mode) {
    const int64_t n = rec.sample_count();
    const double dt = 1.0 / SceneRecord::kSampleHz;
    if (mode == AdversaryMode::keep_lane) return adv.poses;

    std::vector<Vec2> route;
    for (auto& p : adv.poses)
        if (route.empty() || (p.pos() - route.back()).norm() > 1e-6) route.push_back(p.pos());
    double v0 = logged_speed(rec, adv, 0);
    const ObjectTrack* ego = rec.find_track(rec.ego_id);

    std::vector<Pose> out;
    out.reserve(size_t(n));
    if (mode == AdversaryMode::cut_in) {
        // lead pursuit against the ego's replayed path: steer toward the
        // earliest future ego position the adversary can actually reach
        Pose cur = adv.poses[0];
        double ego_v = logged_speed(rec, *ego, 0);
        double v = std::clamp(std::max(v0 * 1.3, ego_v * 1.25 + 3.0), 3.0, 30.0);
        const double max_yaw_rate = 1.2;
        for (int64_t k = 0; k < n; ++k) {
            out.push_back(cur);
            if (k + 1 == n) break;
            double now = double(k) * dt;
            Pose target = rec.pose_at(*ego, std::min(now, rec.duration));
            for (double tau = now; tau <= rec.duration + 1e-9; tau += dt) {
                Pose ep = rec.pose_at(*ego, std::min(tau, rec.duration));
                double reach = v * (tau - now);
                target = ep;
                if ((ep.pos() - cur.pos()).norm() <= reach + 0.5) break;
            }
            double want = std::atan2(target.y - cur.y, target.x - cur.x);
            double dh = std::clamp(wrap_angle(want - cur.heading), -max_yaw_rate * dt,
                                   max_yaw_rate * dt);
            cur.heading = wrap_angle(cur.heading + dh);
            cur.x += std::cos(cur.heading) * v * dt;
            cur.y += std::sin(cur.heading) * v * dt;
        }
        return out;
    }

    if (route.size() < 2) return adv.poses;  // parked object: profile modes degenerate
    double route_len = polyline_length(route);
    double s = 0, v = v0, lat = 0, lat_target = 0, accel = 0;
    double vmax = std::min(v0 * 1.8 + 6.0, 30.0);
    switch (mode) {
        case AdversaryMode::brake: accel = -3.5; break;
        case AdversaryMode::accelerate: accel = 2.5; break;
        case AdversaryMode::lane_left: lat_target = 3.5; break;
        case AdversaryMode::lane_right: lat_target = -3.5; break;
        default: break;
    }
    for (int64_t k = 0; k < n; ++k) {
        double heading;
        Vec2 p = point_at_arclength(route, s, lat, &heading);
        out.push_back({p.x, p.y, wrap_angle(heading)});
        if (k + 1 == n) break;
        v = std::clamp(v + accel * dt, 0.0, vmax);
        s = std::min(s + v * dt, route_len + 5.0);
        // lateral ramp over 2 s with a smoothstep profile
        double u = std::min(1.0, double(k) * dt / 2.0);
        lat = lat_target * (3.0 * u * u - 2.0 * u * u * u);
    }
    return out;
}

}  // namespace detail_traffic

// Default adversary pick: roll the cut-in candidate for every traffic
// vehicle and take the one that gets closest to the ego within the horizon.
inline int nearest_vehicle_adversary(const SceneRecord& rec, double horizon = 5.0) {
    const ObjectTrack* ego = rec.find_track(rec.ego_id);
    int best = -1;
    double best_score = 1e18;
    const double dt = 1.0 / SceneRecord::kSampleHz;
    const double t_end = std::min(horizon, rec.duration);
    for (auto& t : rec.tracks) {
        if (t.id == rec.ego_id) continue;
        if (t.cls != ObjectClass::car && t.cls != ObjectClass::truck) continue;
        auto traj = detail_traffic::candidate_trajectory(rec, t, AdversaryMode::cut_in);
        double score = 1e18;
        for (double tau = dt; tau <= t_end + 1e-9; tau += dt) {
            int64_t k = std::min<int64_t>(int64_t(std::lround(tau * SceneRecord::kSampleHz)),
                                          int64_t(traj.size()) - 1);
            score = std::min(score,
                             (traj[size_t(k)].pos() - rec.pose_at(*ego, tau).pos()).norm());
        }
        if (score < best_score) {
            best_score = score;
            best = t.id;
        }
    }
    return best;
}

// footprint-overlap collision check between ego and one object over [0, horizon]
inline bool reaches_collision(const SceneRecord& rec, int object_id, double horizon) {
    const ObjectTrack* ego = rec.find_track(rec.ego_id);
    const ObjectTrack* obj = rec.find_track(object_id);
    SIMGEN_REQUIRE(ego && obj, contract, "reaches_collision: missing track");
    const double dt = 1.0 / SceneRecord::kSampleHz;
    for (double t = 0; t <= std::min(horizon, rec.duration) + 1e-9; t += dt) {
        Pose pe = rec.pose_at(*ego, t);
        Pose po = rec.pose_at(*obj, t);
        OrientedBox2 be{pe.pos(), pe.heading, ego->length, ego->width};
        OrientedBox2 bo{po.pos(), po.heading, obj->length, obj->width};
        if (boxes_overlap(be, bo)) return true;
    }
    return false;
}

// Replaces the adversary's track by the candidate that minimizes the
// ego-adversary distance over the horizon. Ties break by earliest minimum.
inline AdversarialResult adversarial_perturb(const SceneRecord& rec, int adversary_id,
                                             double horizon, int modes) {
    SIMGEN_REQUIRE(adversary_id != rec.ego_id, contract,
                   "adversary must differ from the ego vehicle");
    const ObjectTrack* adv = rec.find_track(adversary_id);
    SIMGEN_REQUIRE(adv != nullptr, contract, "adversary id " << adversary_id << " not in tracks");
    SIMGEN_REQUIRE(modes >= 1 && modes <= 6, config, "modes must be in [1,6]");
    SIMGEN_REQUIRE(horizon > 0, contract, "horizon must be positive");

    // feasibility: adversary must start near the mapped road network
    {
        double best = 1e18;
        for (auto& lane : rec.map.lanes) {
            auto proj = project_to_polyline(lane.points, adv->poses[0].pos());
            best = std::min(best, proj.dist - lane.width * 0.5);
        }
        SIMGEN_REQUIRE(best < 12.0, perturbation,
                       "adversary " << adversary_id
                                    << " is off-map; no feasible candidate trajectories");
    }

    const ObjectTrack* ego = rec.find_track(rec.ego_id);
    const double dt = 1.0 / SceneRecord::kSampleHz;
    const double t_end = std::min(horizon, rec.duration);

    AdversarialResult result;
    result.record = rec;
    double best_dist = 1e18, best_time = 1e18;
    std::vector<Pose> best_traj;
    for (int m = 0; m < modes; ++m) {
        auto mode = AdversaryMode(m);
        auto traj = detail_traffic::candidate_trajectory(rec, *adv, mode);
        CandidateScore sc;
        sc.mode = mode;
        sc.min_dist = 1e18;
        // scored over (0, horizon]: at t=0 every candidate still sits on the
        // logged pose, which would tie all scores on receding adversaries
        for (double t = dt; t <= t_end + 1e-9; t += dt) {
            int64_t k = std::min<int64_t>(int64_t(std::lround(t * SceneRecord::kSampleHz)),
                                          int64_t(traj.size()) - 1);
            Pose ep = rec.pose_at(*ego, t);
            double d = (traj[size_t(k)].pos() - ep.pos()).norm();
            if (d < sc.min_dist) {
                sc.min_dist = d;
                sc.min_time = t;
            }
        }
        result.scores.push_back(sc);
        bool better = sc.min_dist < best_dist ||
                      (sc.min_dist == best_dist && sc.min_time < best_time);
        if (better) {
            best_dist = sc.min_dist;
            best_time = sc.min_time;
            best_traj = std::move(traj);
            result.chosen = mode;
        }
    }
    result.record.find_track(adversary_id)->poses = std::move(best_traj);
    return result;
}

}  // namespace simgen
