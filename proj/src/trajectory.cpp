#include "cfdrive/trajectory.hpp"

#include <cmath>
#include <string>

#include "cfdrive/error.hpp"

namespace cfdrive {

Trajectory::Trajectory(std::vector<Waypoint> waypoints, double period)
    : waypoints_(std::move(waypoints)), period_(period) {
    if (!(period_ > 0.0)) throw ValidationError("trajectory.period", "must be positive");
    double prev = 0.0;
    for (std::size_t i = 0; i < waypoints_.size(); ++i) {
        const Waypoint& w = waypoints_[i];
        const std::string field = "trajectory.waypoints[" + std::to_string(i) + "]";
        if (!std::isfinite(w.t) || !std::isfinite(w.x) || !std::isfinite(w.y)) {
            throw ValidationError(field, "non-finite value");
        }
        if (!(w.t > prev)) throw ValidationError(field + ".t", "times must be strictly increasing and > 0");
        prev = w.t;
    }
}

Trajectory Trajectory::from_points(std::span<const Vec2> points, double period) {
    std::vector<Waypoint> wps;
    wps.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        wps.push_back({static_cast<double>(i + 1) * period, points[i].x, points[i].y});
    }
    return Trajectory(std::move(wps), period);
}

Trajectory Trajectory::unchecked(std::vector<Waypoint> waypoints, double period) {
    Trajectory t;
    t.waypoints_ = std::move(waypoints);
    t.period_ = period;
    return t;
}

Vec2 Trajectory::position_at(double t) const noexcept {
    if (waypoints_.empty() || t <= 0.0) return {};
    Vec2 prev_p{};
    double prev_t = 0.0;
    for (const Waypoint& w : waypoints_) {
        if (t <= w.t) {
            const double span = w.t - prev_t;
            if (span <= 0.0) return w.position();
            const double u = (t - prev_t) / span;
            return prev_p + u * (w.position() - prev_p);
        }
        prev_p = w.position();
        prev_t = w.t;
    }
    return prev_p;
}

double Trajectory::heading_at(double t) const noexcept {
    double heading = 0.0;
    Vec2 prev_p{};
    for (const Waypoint& w : waypoints_) {
        const Vec2 d = w.position() - prev_p;
        if (norm(d) > kGeomEps) heading = std::atan2(d.y, d.x);
        if (t <= w.t + kTimeEps) return heading;
        prev_p = w.position();
    }
    return heading;
}

double Trajectory::max_speed() const noexcept {
    double best = 0.0;
    Vec2 prev_p{};
    double prev_t = 0.0;
    for (const Waypoint& w : waypoints_) {
        const double dt = w.t - prev_t;
        if (dt > 0.0) best = std::max(best, distance(w.position(), prev_p) / dt);
        prev_p = w.position();
        prev_t = w.t;
    }
    return best;
}

std::vector<double> Trajectory::feature() const {
    std::vector<double> f;
    f.reserve(2 * waypoints_.size());
    for (const Waypoint& w : waypoints_) {
        f.push_back(w.x);
        f.push_back(w.y);
    }
    return f;
}

}  // namespace cfdrive
