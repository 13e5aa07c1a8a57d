#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfdrive/maneuver.hpp"
#include "cfdrive/rule_config.hpp"
#include "cfdrive/scene.hpp"
#include "cfdrive/trajectory.hpp"

namespace cfdrive {

enum class ViolationKind { Collision, OutOfDrivableArea, RedLight };

[[nodiscard]] const char* to_string(ViolationKind k) noexcept;

struct Violation {
    ViolationKind kind{ViolationKind::Collision};
    std::string culprit;  // agent id for Collision, signal id for RedLight, empty otherwise
    double time{0};       // on the dt grid, in (0, horizon]
    Vec2 location;        // ego-frame ego center at `time`

    friend bool operator==(const Violation&, const Violation&) = default;
};

struct CounterfactualVerdict {
    std::string trajectory_id;
    HighLevelDecision decision;
    bool safe{true};
    std::vector<Violation> violations;
    std::vector<std::optional<std::string>> lane_sequence;  // one entry per grid time 0, dt, ..., horizon
    bool red_light_fallback{false};  // some stop-line crossing had no lane assignment to gate on
};

/// Reporting grid k * dt for k = 1..N with the last point clamped to the horizon.
[[nodiscard]] std::vector<double> sub_step_grid(double horizon, double dt);

/// Ego footprint at time t along the trajectory, in the ego frame.
[[nodiscard]] OrientedBox ego_box_at(const Trajectory& traj, const EgoFootprint& ego, double t);

[[nodiscard]] std::vector<Violation> check_collision(const Scene& scene, const Trajectory& traj,
                                                     const RuleConfig& config = {});
[[nodiscard]] std::vector<Violation> check_drivable(const Scene& scene, const Trajectory& traj,
                                                    const RuleConfig& config = {});

struct RedLightResult {
    std::vector<Violation> violations;
    bool fallback_used{false};
};
[[nodiscard]] RedLightResult check_red_light_detail(const Scene& scene, const Trajectory& traj,
                                                    const RuleConfig& config = {});
[[nodiscard]] std::vector<Violation> check_red_light(const Scene& scene, const Trajectory& traj,
                                                     const RuleConfig& config = {});

/// Lane with the smallest |lateral| among lanes within the lateral and heading gates.
/// `heading` (ego frame) is optional; without it only the lateral gate applies.
[[nodiscard]] std::optional<std::string> assign_lane(const Scene& scene, Vec2 ego_point,
                                                     std::optional<double> heading,
                                                     const RuleConfig& config = {});

[[nodiscard]] LaneBehavior detect_lane_change(const Scene& scene,
                                              const std::vector<std::optional<std::string>>& lanes);

[[nodiscard]] std::vector<std::optional<std::string>> lane_sequence(const Scene& scene, const Trajectory& traj,
                                                                    const RuleConfig& config = {});

[[nodiscard]] CounterfactualVerdict run_checklist(const Scene& scene, const Trajectory& traj,
                                                  const RuleConfig& config = {}, std::string trajectory_id = {});

/// Human-readable verdict line: "Safe" or e.g. "Out of the drivable area".
[[nodiscard]] std::string verdict_string(const Scene& scene, const CounterfactualVerdict& verdict);

}  // namespace cfdrive
