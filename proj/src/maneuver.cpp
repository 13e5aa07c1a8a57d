#include "cfdrive/maneuver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cfdrive/error.hpp"
#include "cfdrive/keyframe.hpp"

namespace cfdrive {

using nlohmann::json;

void RuleConfig::validate(double period) const {
    const std::pair<const char*, double> fields[] = {
        {"dt", dt},
        {"lane_max_lateral", lane_max_lateral},
        {"lane_max_heading", lane_max_heading},
        {"close_radius", close_radius},
        {"close_window", close_window},
        {"stop_displacement", stop_displacement},
        {"stop_speed", stop_speed},
        {"slow_speed", slow_speed},
        {"moderate_speed", moderate_speed},
        {"accel_delta", accel_delta},
        {"straight_heading", straight_heading},
        {"uturn_heading", uturn_heading},
    };
    for (const auto& [name, value] : fields) {
        if (!(value > 0.0)) throw ValidationError(std::string("rules.") + name, "must be positive");
    }
    if (sweep_resolution < 0.0) throw ValidationError("rules.sweep_resolution", "must be >= 0");
    if (dt > period + kTimeEps) throw ValidationError("rules.dt", "must not exceed the trajectory period");
}

const char* to_string(SpeedClass v) noexcept {
    switch (v) {
        case SpeedClass::Stop: return "Stop";
        case SpeedClass::MovingSlowly: return "Moving Slowly";
        case SpeedClass::ModerateSpeed: return "Moderate Speed";
        case SpeedClass::Fast: return "Fast";
    }
    return "?";
}

const char* to_string(Longitudinal v) noexcept {
    switch (v) {
        case Longitudinal::Accelerating: return "Accelerating";
        case Longitudinal::Decelerating: return "Decelerating";
        case Longitudinal::ConstantSpeed: return "Constant Speed";
    }
    return "?";
}

const char* to_string(Lateral v) noexcept {
    switch (v) {
        case Lateral::GoStraight: return "Go Straight";
        case Lateral::LeftTurn: return "Left Turn";
        case Lateral::RightTurn: return "Right Turn";
        case Lateral::UTurn: return "U-Turn";
    }
    return "?";
}

const char* to_string(LaneBehavior v) noexcept {
    switch (v) {
        case LaneBehavior::LaneKeeping: return "Lane Keeping";
        case LaneBehavior::LaneChangeLeft: return "Lane Change Left";
        case LaneBehavior::LaneChangeRight: return "Lane Change Right";
        case LaneBehavior::Unknown: return "Unknown";
    }
    return "?";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const E (&values)[N], const char* what) {
    for (E v : values) {
        if (s == to_string(v)) return v;
    }
    throw ParseError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

SpeedClass parse_speed_class(std::string_view s) {
    constexpr SpeedClass all[] = {SpeedClass::Stop, SpeedClass::MovingSlowly, SpeedClass::ModerateSpeed,
                                  SpeedClass::Fast};
    return parse_enum(s, all, "speed class");
}

Longitudinal parse_longitudinal(std::string_view s) {
    constexpr Longitudinal all[] = {Longitudinal::Accelerating, Longitudinal::Decelerating,
                                    Longitudinal::ConstantSpeed};
    return parse_enum(s, all, "longitudinal class");
}

Lateral parse_lateral(std::string_view s) {
    constexpr Lateral all[] = {Lateral::GoStraight, Lateral::LeftTurn, Lateral::RightTurn, Lateral::UTurn};
    return parse_enum(s, all, "lateral class");
}

LaneBehavior parse_lane_behavior(std::string_view s) {
    constexpr LaneBehavior all[] = {LaneBehavior::LaneKeeping, LaneBehavior::LaneChangeLeft,
                                    LaneBehavior::LaneChangeRight, LaneBehavior::Unknown};
    return parse_enum(s, all, "lane behavior");
}

std::string HighLevelDecision::to_string() const {
    std::string out = cfdrive::to_string(speed);
    if (lane != LaneBehavior::Unknown) {
        out += ", ";
        out += cfdrive::to_string(lane);
    }
    out += ", ";
    out += cfdrive::to_string(lateral);
    return out;
}

HighLevelDecision classify_decision(const Trajectory& traj, const RuleConfig& cfg) {
    HighLevelDecision d;
    struct Step {
        Vec2 delta;
        double dt;
    };
    // Segments with positive duration and length; duplicates from degenerate resamples drop out.
    std::vector<Step> steps;
    Vec2 prev{};
    double prev_t = 0.0;
    double path = 0.0;
    for (const Waypoint& w : traj.waypoints()) {
        const Vec2 delta = w.position() - prev;
        const double dt = w.t - prev_t;
        if (dt > 0.0 && norm(delta) > kGeomEps) {
            steps.push_back({delta, dt});
            path += norm(delta);
        }
        prev = w.position();
        prev_t = std::max(prev_t, w.t);
    }
    const double duration = prev_t;
    const double displacement = norm(prev);
    const double mean_speed = duration > 0.0 ? path / duration : 0.0;

    if (steps.empty() || displacement < cfg.stop_displacement || mean_speed < cfg.stop_speed) {
        return d;  // Stop, Constant Speed, Go Straight
    }

    if (mean_speed < cfg.slow_speed) {
        d.speed = SpeedClass::MovingSlowly;
    } else if (mean_speed < cfg.moderate_speed) {
        d.speed = SpeedClass::ModerateSpeed;
    } else {
        d.speed = SpeedClass::Fast;
    }

    const double v_start = norm(steps.front().delta) / steps.front().dt;
    const double v_end = norm(steps.back().delta) / steps.back().dt;
    if (v_end - v_start > cfg.accel_delta) {
        d.longitudinal = Longitudinal::Accelerating;
    } else if (v_start - v_end > cfg.accel_delta) {
        d.longitudinal = Longitudinal::Decelerating;
    } else {
        d.longitudinal = Longitudinal::ConstantSpeed;
    }

    const Vec2 a = steps.front().delta;
    const Vec2 b = steps.back().delta;
    const double dpsi = normalize_angle(std::atan2(b.y, b.x) - std::atan2(a.y, a.x));
    if (std::abs(dpsi) < cfg.straight_heading) {
        d.lateral = Lateral::GoStraight;
    } else if (std::abs(dpsi) >= cfg.uturn_heading) {
        d.lateral = Lateral::UTurn;
    } else {
        d.lateral = dpsi > 0.0 ? Lateral::LeftTurn : Lateral::RightTurn;
    }
    return d;
}

ManeuverLibrary cluster_trajectories(const std::vector<Trajectory>& trajs, std::size_t k, std::uint64_t seed,
                                     const RuleConfig& config) {
    if (trajs.empty()) throw std::invalid_argument("cluster_trajectories: empty input");
    if (k > trajs.size()) {
        throw std::invalid_argument("cluster_trajectories: k (" + std::to_string(k) + ") exceeds trajectory count (" +
                                    std::to_string(trajs.size()) + ")");
    }
    const std::size_t n_wp = trajs[0].size();
    const double period = trajs[0].period();
    std::vector<std::vector<double>> feats;
    feats.reserve(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        if (trajs[i].size() != n_wp || std::abs(trajs[i].period() - period) > kTimeEps) {
            throw std::invalid_argument("cluster_trajectories: trajectory " + std::to_string(i) +
                                        " does not share the horizon/period of the first");
        }
        feats.push_back(trajs[i].feature());
    }
    KMeansOptions opts;
    opts.k = k;
    opts.seed = seed;
    const KMeansResult km = kmeans(feats, opts);

    ManeuverLibrary lib;
    lib.period = period;
    lib.horizon = trajs[0].horizon();
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : km.assignments) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<Vec2> pts;
        for (std::size_t w = 0; w < n_wp; ++w) pts.push_back({km.centroids[c][2 * w], km.centroids[c][2 * w + 1]});
        ManeuverEntry e;
        e.trajectory = Trajectory::from_points(pts, period);
        e.decision = classify_decision(e.trajectory, config);
        e.cluster_size = sizes[c];
        lib.entries.push_back(std::move(e));
    }
    return lib;
}

std::vector<std::size_t> candidate_order(const ManeuverLibrary& lib) {
    std::vector<std::size_t> idx(lib.entries.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = lib.entries[a];
        const auto& eb = lib.entries[b];
        if (ea.cluster_size != eb.cluster_size) return ea.cluster_size > eb.cluster_size;
        return ea.decision.to_string() < eb.decision.to_string();
    });
    return idx;
}

Trajectory scale_progress(const Trajectory& traj, double factor) {
    std::vector<Vec2> path{{0.0, 0.0}};
    for (const Waypoint& w : traj.waypoints()) path.push_back(w.position());
    const double total = polyline_length(path);
    // Arclength reached at each waypoint along the original path.
    std::vector<Waypoint> out;
    double walked = 0.0;
    Vec2 prev{};
    for (const Waypoint& w : traj.waypoints()) {
        walked += distance(prev, w.position());
        prev = w.position();
        const double s = factor * walked;
        Vec2 p;
        if (s <= total || total == 0.0) {
            p = polyline_point_at(path, s);
        } else {
            // Past the end: continue along the final non-degenerate segment.
            Vec2 dir{1.0, 0.0};
            for (std::size_t i = path.size() - 1; i > 0; --i) {
                const Vec2 d = path[i] - path[i - 1];
                if (norm(d) > kGeomEps) {
                    dir = (1.0 / norm(d)) * d;
                    break;
                }
            }
            p = path.back() + (s - total) * dir;
        }
        out.push_back({w.t, p.x, p.y});
    }
    return Trajectory(std::move(out), traj.period());
}

std::vector<Trajectory> instantiate_candidates(const Scene& scene, const ManeuverLibrary& lib,
                                               const CandidateOptions& opts) {
    if (lib.entries.empty()) throw std::invalid_argument("instantiate_candidates: empty library");
    std::vector<Trajectory> out;
    double ego_speed = 0.0;
    if (opts.speed_align) ego_speed = ego_speed_at_key(scene);
    for (std::size_t i : candidate_order(lib)) {
        if (out.size() >= opts.limit) break;
        const Trajectory& t = lib.entries[i].trajectory;
        if (opts.speed_align && !t.empty()) {
            const Waypoint& w0 = t.waypoints().front();
            const double v0 = norm(w0.position()) / w0.t;
            out.push_back(v0 > kGeomEps ? scale_progress(t, ego_speed / v0) : t);
        } else {
            out.push_back(t);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Library files

std::string dump_library(const ManeuverLibrary& lib) {
    json j{{"schema", kLibrarySchema}, {"horizon", lib.horizon}, {"period", lib.period}, {"entries", json::array()}};
    for (const auto& e : lib.entries) {
        json wps = json::array();
        for (const Waypoint& w : e.trajectory.waypoints()) wps.push_back(json::array({w.x, w.y}));
        j["entries"].push_back({{"waypoints", wps},
                                {"speed", to_string(e.decision.speed)},
                                {"longitudinal", to_string(e.decision.longitudinal)},
                                {"lateral", to_string(e.decision.lateral)},
                                {"label", e.decision.to_string()},
                                {"cluster_size", e.cluster_size}});
    }
    return j.dump(2);
}

ManeuverLibrary parse_library(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("library: ") + e.what(), 0, e.byte);
    }
    if (j.value("schema", "") != kLibrarySchema) throw ValidationError("schema", "expected omnidrive_library_v1");
    ManeuverLibrary lib;
    lib.horizon = j.value("horizon", kDefaultHorizon);
    lib.period = j.value("period", kDefaultPeriod);
    const auto& entries = j.at("entries");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& je = entries[i];
        const std::string path = "entries[" + std::to_string(i) + "]";
        std::vector<Vec2> pts;
        for (const auto& p : je.at("waypoints")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        ManeuverEntry e;
        e.trajectory = Trajectory::from_points(pts, lib.period);
        if (std::abs(e.trajectory.horizon() - lib.horizon) > kTimeEps) {
            throw ValidationError(path + ".waypoints", "waypoint count does not match horizon/period");
        }
        e.decision.speed = parse_speed_class(je.at("speed").get<std::string>());
        e.decision.longitudinal = parse_longitudinal(je.at("longitudinal").get<std::string>());
        e.decision.lateral = parse_lateral(je.at("lateral").get<std::string>());
        e.cluster_size = je.value("cluster_size", std::size_t{1});
        lib.entries.push_back(std::move(e));
    }
    return lib;
}

void save_library(const ManeuverLibrary& lib, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write library file " + path.string());
    out << dump_library(lib) << '\n';
}

ManeuverLibrary load_library(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open library file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_library(buf.str());
}

}  // namespace cfdrive
