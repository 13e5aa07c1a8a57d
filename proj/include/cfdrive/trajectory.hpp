#pragma once

#include <span>
#include <vector>

#include "cfdrive/geometry.hpp"

namespace cfdrive {

inline constexpr double kDefaultHorizon = 3.0;
inline constexpr double kDefaultPeriod = 0.5;

struct Waypoint {
    double t{0};  // seconds after the key timestamp
    double x{0};  // meters forward
    double y{0};  // meters leftward

    [[nodiscard]] Vec2 position() const noexcept { return {x, y}; }
    friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

/// Timed ego-frame waypoints. The implicit start is the origin at t = 0 with heading 0.
class Trajectory {
public:
    Trajectory() = default;

    /// Validates strictly increasing times starting after 0.
    explicit Trajectory(std::vector<Waypoint> waypoints, double period = kDefaultPeriod);

    /// Waypoints at t = period, 2 period, ...
    static Trajectory from_points(std::span<const Vec2> points, double period = kDefaultPeriod);

    /// Builds without validating monotone times (degenerate resamples in tests).
    static Trajectory unchecked(std::vector<Waypoint> waypoints, double period = kDefaultPeriod);

    [[nodiscard]] std::span<const Waypoint> waypoints() const noexcept { return waypoints_; }
    [[nodiscard]] std::size_t size() const noexcept { return waypoints_.size(); }
    [[nodiscard]] bool empty() const noexcept { return waypoints_.empty(); }
    [[nodiscard]] double period() const noexcept { return period_; }
    [[nodiscard]] double horizon() const noexcept {
        return waypoints_.empty() ? 0.0 : waypoints_.back().t;
    }

    /// Linear interpolation in (0, horizon]; the origin for t <= 0, the last point past the end.
    [[nodiscard]] Vec2 position_at(double t) const noexcept;

    /// Direction of the segment containing t (segment i covers (t_{i-1}, t_i]).
    /// Zero-length segments keep the previous heading; the initial heading is 0.
    [[nodiscard]] double heading_at(double t) const noexcept;

    /// Upper bound on ego speed over the whole trajectory.
    [[nodiscard]] double max_speed() const noexcept;

    /// 12-dim style feature: concatenated (x, y).
    [[nodiscard]] std::vector<double> feature() const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;

private:
    std::vector<Waypoint> waypoints_;
    double period_{kDefaultPeriod};
};

/// Time tolerance used when matching sample times against waypoint times.
inline constexpr double kTimeEps = 1e-9;

}  // namespace cfdrive
