#pragma once

#include <numbers>

namespace cfdrive {

inline constexpr double deg2rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }

/// Thresholds shared by the checklist, the maneuver classifier, and attention.
struct RuleConfig {
    // Sweep
    double dt{0.1};                  // reporting sub-step, seconds
    double sweep_resolution{1e-3};   // refinement inside each sub-step; 0 disables
    // Lane assignment
    double lane_max_lateral{3.5};
    double lane_max_heading{deg2rad(45.0)};
    // Close objects
    double close_radius{10.0};
    double close_window{3.0};
    // Maneuver classification
    double stop_displacement{1.0};
    double stop_speed{0.5};
    double slow_speed{4.0};
    double moderate_speed{10.0};
    double accel_delta{2.0};
    double straight_heading{deg2rad(15.0)};
    double uturn_heading{deg2rad(120.0)};

    /// Throws ValidationError when a field is non-positive or dt exceeds `period`.
    void validate(double period) const;
};

}  // namespace cfdrive
