#include "cfdrive/checklist.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace cfdrive {

const char* to_string(ViolationKind k) noexcept {
    switch (k) {
        case ViolationKind::Collision: return "collision";
        case ViolationKind::OutOfDrivableArea: return "out_of_drivable_area";
        case ViolationKind::RedLight: return "red_light";
    }
    return "?";
}

std::vector<double> sub_step_grid(double horizon, double dt) {
    std::vector<double> grid;
    if (!(horizon > 0.0) || !(dt > 0.0)) return grid;
    for (std::size_t k = 1;; ++k) {
        const double t = static_cast<double>(k) * dt;
        if (t >= horizon - kTimeEps) break;
        grid.push_back(t);
    }
    grid.push_back(horizon);
    return grid;
}

OrientedBox ego_box_at(const Trajectory& traj, const EgoFootprint& ego, double t) {
    return {traj.position_at(t), traj.heading_at(t), ego.length, ego.width};
}

namespace {

OrientedBox to_world(const Pose2& key, const OrientedBox& b) {
    return {transform_point(key, b.center), normalize_angle(key.yaw + b.yaw), b.length, b.width};
}

// Sample times inside (t_prev, t_next]: multiples of the sweep resolution plus t_next itself.
// Times are built as n * resolution so they coincide bit-for-bit with any grid of that step.
std::vector<double> sweep_times(double t_prev, double t_next, double resolution) {
    std::vector<double> out;
    if (resolution > 0.0) {
        const auto lo = static_cast<long long>(std::floor(t_prev / resolution + 1e-6)) + 1;
        const auto hi = static_cast<long long>(std::floor(t_next / resolution + 1e-6));
        for (long long n = lo; n <= hi; ++n) out.push_back(static_cast<double>(n) * resolution);
    }
    if (out.empty() || std::abs(out.back() - t_next) > kTimeEps) out.push_back(t_next);
    return out;
}

// First grid time whose interval contains a sample where `hit(t)` holds.
template <typename Hit, typename Skip>
std::optional<double> first_hit(const std::vector<double>& grid, double resolution, Hit&& hit, Skip&& skip) {
    double prev = 0.0;
    for (double t_k : grid) {
        if (!skip(prev, t_k)) {
            for (double t : sweep_times(prev, t_k, resolution)) {
                if (hit(t)) return t_k;
            }
        }
        prev = t_k;
    }
    return std::nullopt;
}

}  // namespace

std::vector<Violation> check_collision(const Scene& scene, const Trajectory& traj, const RuleConfig& cfg) {
    std::vector<Violation> out;
    if (traj.empty() || scene.agents.empty()) return out;
    const Pose2 key = scene.key_pose();
    const std::vector<double> grid = sub_step_grid(traj.horizon(), cfg.dt);
    const double ego_radius = 0.5 * std::hypot(scene.ego.length, scene.ego.width);
    const double ego_vmax = traj.max_speed();

    for (const AgentTrack& agent : scene.agents) {
        const double agent_radius = 0.5 * std::hypot(agent.length, agent.width);
        const double vmax = ego_vmax + agent.max_speed();
        auto hit = [&](double t) {
            const OrientedBox ego = to_world(key, ego_box_at(traj, scene.ego, t));
            return boxes_overlap(ego, agent.box_at(scene.key_time + t));
        };
        // Centers cannot close the gap within the interval.
        auto skip = [&](double t0, double t1) {
            const Vec2 ego_c = transform_point(key, traj.position_at(t0));
            const Vec2 agent_c = agent.pose_at(scene.key_time + t0).position();
            return distance(ego_c, agent_c) - vmax * (t1 - t0) > ego_radius + agent_radius + 1e-6;
        };
        if (auto t = first_hit(grid, cfg.sweep_resolution, hit, skip)) {
            out.push_back({ViolationKind::Collision, agent.id, *t, traj.position_at(*t)});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.time < b.time; });
    return out;
}

std::vector<Violation> check_drivable(const Scene& scene, const Trajectory& traj, const RuleConfig& cfg) {
    std::vector<Violation> out;
    // A scene without drivable rings carries no map to check against.
    if (traj.empty() || scene.drivable.polygon.outer.empty()) return out;
    const Pose2 key = scene.key_pose();
    const std::vector<double> grid = sub_step_grid(traj.horizon(), cfg.dt);
    auto hit = [&](double t) {
        const OrientedBox ego = to_world(key, ego_box_at(traj, scene.ego, t));
        for (const Vec2& c : ego.corners()) {
            if (!point_in_polygon(c, scene.drivable.polygon)) return true;
        }
        return false;
    };
    auto never = [](double, double) { return false; };
    if (auto t = first_hit(grid, cfg.sweep_resolution, hit, never)) {
        out.push_back({ViolationKind::OutOfDrivableArea, {}, *t, traj.position_at(*t)});
    }
    return out;
}

std::optional<std::string> assign_lane(const Scene& scene, Vec2 ego_point, std::optional<double> heading,
                                       const RuleConfig& cfg) {
    const Pose2 key = scene.key_pose();
    const Vec2 p = transform_point(key, ego_point);
    const LaneCenterline* best = nullptr;
    double best_lat = 0.0;
    for (const LaneCenterline& lane : scene.lanes) {
        const LateralProjection proj = polyline_lateral(p, lane.polyline);
        const double lat = std::abs(proj.lateral);
        if (lat > cfg.lane_max_lateral + kGeomEps) continue;
        if (heading) {
            const double dpsi = std::abs(normalize_angle(key.yaw + *heading - proj.heading));
            if (dpsi > cfg.lane_max_heading + kGeomEps) continue;
        }
        if (!best || lat < best_lat || (lat == best_lat && lane.id < best->id)) {
            best = &lane;
            best_lat = lat;
        }
    }
    if (!best) return std::nullopt;
    return best->id;
}

RedLightResult check_red_light_detail(const Scene& scene, const Trajectory& traj, const RuleConfig& cfg) {
    RedLightResult res;
    if (traj.empty() || scene.signals.empty()) return res;
    const Pose2 key = scene.key_pose();
    const std::vector<double> grid = sub_step_grid(traj.horizon(), cfg.dt);

    for (const TrafficSignal& sig : scene.signals) {
        Vec2 prev{};
        double prev_t = 0.0;
        for (const Waypoint& w : traj.waypoints()) {
            const Vec2 a = transform_point(key, prev);
            const Vec2 b = transform_point(key, w.position());
            const auto hit = segments_intersect({a, b}, sig.stop_line);
            const Vec2 seg = w.position() - prev;
            const double seg_len = norm(seg);
            if (hit && seg_len > kGeomEps) {
                const double u = std::clamp(distance(*hit, a) / seg_len, 0.0, 1.0);
                const double t_cross = prev_t + u * (w.t - prev_t);
                if (t_cross > kTimeEps) {
                    if (sig.state_at(scene.key_time + t_cross) == SignalState::Red) {
                        const Vec2 at = prev + u * seg;
                        const auto lane = assign_lane(scene, at, std::atan2(seg.y, seg.x), cfg);
                        bool gated_in = true;
                        if (lane) {
                            const LaneCenterline* l = scene.find_lane(*lane);
                            gated_in = std::find(sig.controlled_lanes.begin(), sig.controlled_lanes.end(), *lane) !=
                                           sig.controlled_lanes.end() ||
                                       (l && std::find(l->signal_ids.begin(), l->signal_ids.end(), sig.id) !=
                                                 l->signal_ids.end());
                        } else {
                            res.fallback_used = true;
                        }
                        if (gated_in) {
                            const auto it = std::lower_bound(grid.begin(), grid.end(), t_cross - kTimeEps);
                            const double t_report = it == grid.end() ? grid.back() : *it;
                            res.violations.push_back({ViolationKind::RedLight, sig.id, t_report, at});
                        }
                    }
                    break;  // first crossing of this stop line decides
                }
            }
            prev = w.position();
            prev_t = w.t;
        }
    }
    std::stable_sort(res.violations.begin(), res.violations.end(),
                     [](const Violation& a, const Violation& b) { return a.time < b.time; });
    return res;
}

std::vector<Violation> check_red_light(const Scene& scene, const Trajectory& traj, const RuleConfig& cfg) {
    return check_red_light_detail(scene, traj, cfg).violations;
}

LaneBehavior detect_lane_change(const Scene& scene, const std::vector<std::optional<std::string>>& lanes) {
    if (lanes.empty()) return LaneBehavior::Unknown;
    for (const auto& l : lanes) {
        if (!l) return LaneBehavior::Unknown;
    }
    LaneBehavior result = LaneBehavior::LaneKeeping;
    for (std::size_t i = 1; i < lanes.size(); ++i) {
        const std::string& from = *lanes[i - 1];
        const std::string& to = *lanes[i];
        if (from == to) continue;
        const LaneCenterline* lane = scene.find_lane(from);
        if (!lane) return LaneBehavior::Unknown;
        if (std::find(lane->successors.begin(), lane->successors.end(), to) != lane->successors.end()) continue;
        LaneBehavior change;
        if (lane->left && *lane->left == to) {
            change = LaneBehavior::LaneChangeLeft;
        } else if (lane->right && *lane->right == to) {
            change = LaneBehavior::LaneChangeRight;
        } else {
            return LaneBehavior::Unknown;  // jump to an unrelated lane
        }
        if (result != LaneBehavior::LaneKeeping && result != change) return LaneBehavior::Unknown;
        result = change;
    }
    return result;
}

std::vector<std::optional<std::string>> lane_sequence(const Scene& scene, const Trajectory& traj,
                                                      const RuleConfig& cfg) {
    std::vector<double> times{0.0};
    for (double t : sub_step_grid(traj.horizon(), cfg.dt)) times.push_back(t);
    std::vector<std::optional<std::string>> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(assign_lane(scene, traj.position_at(t), traj.heading_at(t), cfg));
    return out;
}

CounterfactualVerdict run_checklist(const Scene& scene, const Trajectory& traj, const RuleConfig& cfg,
                                    std::string trajectory_id) {
    cfg.validate(traj.period());
    CounterfactualVerdict v;
    v.trajectory_id = std::move(trajectory_id);
    v.violations = check_collision(scene, traj, cfg);
    const RedLightResult red = check_red_light_detail(scene, traj, cfg);
    v.red_light_fallback = red.fallback_used;
    v.violations.insert(v.violations.end(), red.violations.begin(), red.violations.end());
    const auto drivable = check_drivable(scene, traj, cfg);
    v.violations.insert(v.violations.end(), drivable.begin(), drivable.end());
    std::stable_sort(v.violations.begin(), v.violations.end(), [](const Violation& a, const Violation& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.culprit < b.culprit;
    });
    v.safe = v.violations.empty();
    v.lane_sequence = lane_sequence(scene, traj, cfg);
    v.decision = classify_decision(traj, cfg);
    v.decision.lane = detect_lane_change(scene, v.lane_sequence);
    return v;
}

std::string verdict_string(const Scene& scene, const CounterfactualVerdict& verdict) {
    if (verdict.safe) return "Safe";
    std::vector<std::string> parts;
    std::set<std::string> seen;
    auto add = [&](std::string s) {
        if (seen.insert(s).second) parts.push_back(std::move(s));
    };
    for (const Violation& v : verdict.violations) {
        if (v.kind != ViolationKind::Collision) continue;
        const AgentTrack* a = scene.find_agent(v.culprit);
        add("Collision with " + (a ? a->category : v.culprit));
    }
    for (const Violation& v : verdict.violations) {
        if (v.kind == ViolationKind::RedLight) add("Running a red light");
    }
    for (const Violation& v : verdict.violations) {
        if (v.kind == ViolationKind::OutOfDrivableArea) add("Out of the drivable area");
    }
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += "; ";
        out += parts[i];
    }
    return out;
}

}  // namespace cfdrive
