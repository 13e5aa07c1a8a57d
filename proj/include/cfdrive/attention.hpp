#pragma once

#include <string>
#include <vector>

#include "cfdrive/rule_config.hpp"
#include "cfdrive/scene.hpp"
#include "cfdrive/trajectory.hpp"

namespace cfdrive {

struct CloseObject {
    std::string agent_id;
    double min_distance{0};
    double time_of_min{0};
};

/// Agents whose center comes within `close_radius` of the time-matched ego position
/// for some grid time in (0, min(close_window, horizon)]. Sorted by distance, then id.
[[nodiscard]] std::vector<CloseObject> close_objects(const Scene& scene, const Trajectory& traj,
                                                     const RuleConfig& config = {});

struct AttentionObject {
    std::string agent_id;
    std::string category;
    Vec2 position;  // ego frame at key time
};

struct AttentionLane {
    std::string lane_id;
    std::string shape;            // "straight lane", "left turn lane", ...
    std::vector<Vec2> samples;    // 4 equal-arclength ego-frame samples
    std::vector<AttentionObject> children;
};

struct AttentionTree {
    std::vector<AttentionLane> lanes;
    std::vector<AttentionObject> orphans;

    /// "|--- " tree, coordinates "(+x.x, +y.y)", orphans listed after lanes.
    [[nodiscard]] std::string render() const;
};

/// Attaches each close agent to the lane assigned at its key-time position. The lane
/// under the ego at t = 0 is always listed first, even without children.
[[nodiscard]] AttentionTree build_attention_tree(const Scene& scene, const std::vector<CloseObject>& close,
                                                 const RuleConfig& config = {});

/// "+8.2" style: explicit sign, fixed decimals, no negative zero.
[[nodiscard]] std::string format_signed(double v, int decimals);
[[nodiscard]] std::string format_point(Vec2 p, int decimals);

}  // namespace cfdrive
