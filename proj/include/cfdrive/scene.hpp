#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfdrive/geometry.hpp"
#include "cfdrive/trajectory.hpp"

namespace cfdrive {

inline constexpr const char* kSceneSchema = "omnidrive_scene_v1";
inline constexpr double kDefaultEgoLength = 4.08;
inline constexpr double kDefaultEgoWidth = 1.85;
inline constexpr double kDefaultLaneWidth = 3.5;

struct Pose2 {
    double x{0};
    double y{0};
    double yaw{0};  // radians, counter-clockwise from +x, in (-pi, pi]

    [[nodiscard]] Vec2 position() const noexcept { return {x, y}; }
};

struct TimedPose {
    double t{0};  // absolute seconds
    Pose2 pose;
};

/// Linear in position, shortest-arc in yaw. Clamps outside the sample range.
[[nodiscard]] Pose2 interpolate_pose(const std::vector<TimedPose>& poses, double t);

/// `frame` ∘ `local`: maps a pose expressed in `frame` into the parent frame.
[[nodiscard]] Pose2 compose(const Pose2& frame, const Pose2& local) noexcept;
/// Inverse of compose: expresses a parent-frame pose in `frame`.
[[nodiscard]] Pose2 relative(const Pose2& frame, const Pose2& world) noexcept;
[[nodiscard]] Vec2 transform_point(const Pose2& frame, Vec2 local) noexcept;
[[nodiscard]] Vec2 inverse_transform_point(const Pose2& frame, Vec2 world) noexcept;

struct AgentTrack {
    std::string id;
    std::string category;
    double length{0};
    double width{0};
    std::vector<TimedPose> poses;
    std::optional<Vec2> velocity;  // world-frame m/s at the key timestamp

    /// Pose at absolute time: interpolated inside the log, held before it, and
    /// extrapolated at constant velocity after it.
    [[nodiscard]] Pose2 pose_at(double t) const;
    /// Velocity used for extrapolation past the last logged pose.
    [[nodiscard]] Vec2 tail_velocity() const noexcept;
    /// Upper bound on center speed over all time.
    [[nodiscard]] double max_speed() const noexcept;
    [[nodiscard]] OrientedBox box_at(double t) const;
};

struct LaneCenterline {
    std::string id;
    std::vector<Vec2> polyline;
    std::vector<std::string> successors;
    std::optional<std::string> left;
    std::optional<std::string> right;
    std::vector<std::string> signal_ids;
    double width{kDefaultLaneWidth};
};

struct DrivableArea {
    Polygon polygon;
};

enum class SignalState { Red, Yellow, Green, Unknown };

[[nodiscard]] const char* to_string(SignalState s) noexcept;

struct SignalInterval {
    double start{0};
    double end{0};
    SignalState state{SignalState::Unknown};
};

struct TrafficSignal {
    std::string id;
    Segment stop_line;
    std::vector<std::string> controlled_lanes;
    std::vector<SignalInterval> states;

    /// State at absolute time; intervals are half-open [start, end).
    [[nodiscard]] SignalState state_at(double t) const noexcept;
};

struct EgoFootprint {
    double length{kDefaultEgoLength};
    double width{kDefaultEgoWidth};
};

struct Scene {
    std::string scene_id;
    double key_time{0};
    std::vector<TimedPose> ego_poses;
    EgoFootprint ego;
    std::vector<AgentTrack> agents;
    std::vector<LaneCenterline> lanes;
    DrivableArea drivable;
    std::vector<TrafficSignal> signals;
    std::optional<std::string> caption;

    [[nodiscard]] Pose2 key_pose() const;
    [[nodiscard]] const LaneCenterline* find_lane(std::string_view id) const noexcept;
    [[nodiscard]] const AgentTrack* find_agent(std::string_view id) const noexcept;
};

struct LoadOptions {
    bool strict{true};  // reject unknown fields
};

[[nodiscard]] Scene load_scene(const std::filesystem::path& path, const LoadOptions& opts = {});
[[nodiscard]] Scene parse_scene(std::string_view text, const LoadOptions& opts = {});
/// Re-checks every invariant; throws ValidationError naming the field.
void validate_scene(const Scene& scene);
[[nodiscard]] std::string dump_scene(const Scene& scene);

/// Every scene file (*.json) in a directory, sorted by filename, or a single file.
[[nodiscard]] std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& path);

[[nodiscard]] Pose2 to_ego_frame(const Scene& scene, const Pose2& world);
[[nodiscard]] Pose2 to_world_frame(const Scene& scene, const Pose2& ego);
[[nodiscard]] Vec2 to_ego_frame(const Scene& scene, Vec2 world);
[[nodiscard]] Vec2 to_world_frame(const Scene& scene, Vec2 ego);

/// Logged ego future resampled at `period` out to `horizon`, in the key-time ego frame.
[[nodiscard]] Trajectory expert_trajectory(const Scene& scene, double horizon = kDefaultHorizon,
                                           double period = kDefaultPeriod);

/// Ego speed at the key timestamp from the logged poses (central difference where possible).
[[nodiscard]] double ego_speed_at_key(const Scene& scene);

}  // namespace cfdrive
