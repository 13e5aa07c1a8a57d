#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfdrive/rule_config.hpp"
#include "cfdrive/scene.hpp"
#include "cfdrive/trajectory.hpp"

namespace cfdrive {

enum class SpeedClass { Stop, MovingSlowly, ModerateSpeed, Fast };
enum class Longitudinal { Accelerating, Decelerating, ConstantSpeed };
enum class Lateral { GoStraight, LeftTurn, RightTurn, UTurn };
enum class LaneBehavior { LaneKeeping, LaneChangeLeft, LaneChangeRight, Unknown };

[[nodiscard]] const char* to_string(SpeedClass v) noexcept;
[[nodiscard]] const char* to_string(Longitudinal v) noexcept;
[[nodiscard]] const char* to_string(Lateral v) noexcept;
[[nodiscard]] const char* to_string(LaneBehavior v) noexcept;

struct HighLevelDecision {
    SpeedClass speed{SpeedClass::Stop};
    Longitudinal longitudinal{Longitudinal::ConstantSpeed};
    Lateral lateral{Lateral::GoStraight};
    LaneBehavior lane{LaneBehavior::Unknown};

    /// "speed, lane_behavior, lateral", lane behavior omitted when Unknown.
    [[nodiscard]] std::string to_string() const;

    friend bool operator==(const HighLevelDecision&, const HighLevelDecision&) = default;
};

/// Parses the enum spellings used by to_string(); throws ParseError.
[[nodiscard]] SpeedClass parse_speed_class(std::string_view s);
[[nodiscard]] Longitudinal parse_longitudinal(std::string_view s);
[[nodiscard]] Lateral parse_lateral(std::string_view s);
[[nodiscard]] LaneBehavior parse_lane_behavior(std::string_view s);

/// Threshold classifier; lane behavior is always Unknown here (set by the checklist).
[[nodiscard]] HighLevelDecision classify_decision(const Trajectory& traj, const RuleConfig& config = {});

struct ManeuverEntry {
    Trajectory trajectory;
    HighLevelDecision decision;
    std::size_t cluster_size{0};
};

struct ManeuverLibrary {
    double horizon{kDefaultHorizon};
    double period{kDefaultPeriod};
    std::vector<ManeuverEntry> entries;
};

/// k-means over concatenated waypoint features; centers labeled by classify_decision.
[[nodiscard]] ManeuverLibrary cluster_trajectories(const std::vector<Trajectory>& trajs, std::size_t k,
                                                   std::uint64_t seed, const RuleConfig& config = {});

struct CandidateOptions {
    std::size_t limit{static_cast<std::size_t>(-1)};
    bool speed_align{false};  // rescale progress along the path to the ego speed at key time
};

/// Library entries ordered by cluster size descending, then decision label, then index.
[[nodiscard]] std::vector<Trajectory> instantiate_candidates(const Scene& scene, const ManeuverLibrary& lib,
                                                             const CandidateOptions& opts = {});

/// Same ordering as instantiate_candidates, as indices into lib.entries.
[[nodiscard]] std::vector<std::size_t> candidate_order(const ManeuverLibrary& lib);

/// Re-times a trajectory so progress along its path is scaled by `factor`.
[[nodiscard]] Trajectory scale_progress(const Trajectory& traj, double factor);

inline constexpr const char* kLibrarySchema = "omnidrive_library_v1";
[[nodiscard]] std::string dump_library(const ManeuverLibrary& lib);
[[nodiscard]] ManeuverLibrary parse_library(std::string_view text);
void save_library(const ManeuverLibrary& lib, const std::filesystem::path& path);
[[nodiscard]] ManeuverLibrary load_library(const std::filesystem::path& path);

}  // namespace cfdrive
