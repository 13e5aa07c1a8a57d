#include "cfdrive/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "cfdrive/checklist.hpp"

namespace cfdrive {

std::string format_signed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.*f", decimals, v);
    std::string s(buf);
    // Values that round to zero print as "+0.00", never "-0.00".
    if (s[0] == '-' && s.find_first_not_of("0.", 1) == std::string::npos) s[0] = '+';
    return s;
}

std::string format_point(Vec2 p, int decimals) {
    return "(" + format_signed(p.x, decimals) + ", " + format_signed(p.y, decimals) + ")";
}

std::vector<CloseObject> close_objects(const Scene& scene, const Trajectory& traj, const RuleConfig& cfg) {
    std::vector<CloseObject> out;
    if (traj.empty()) return out;
    const Pose2 key = scene.key_pose();
    const double end = std::min(cfg.close_window, traj.horizon());
    const std::vector<double> grid = sub_step_grid(end, cfg.dt);
    for (const AgentTrack& a : scene.agents) {
        CloseObject best{a.id, std::numeric_limits<double>::infinity(), 0.0};
        for (double t : grid) {
            const Vec2 ego = transform_point(key, traj.position_at(t));
            const double d = distance(ego, a.pose_at(scene.key_time + t).position());
            if (d < best.min_distance) {
                best.min_distance = d;
                best.time_of_min = t;
            }
        }
        if (best.min_distance < cfg.close_radius) out.push_back(best);
    }
    std::stable_sort(out.begin(), out.end(), [](const CloseObject& a, const CloseObject& b) {
        if (a.min_distance != b.min_distance) return a.min_distance < b.min_distance;
        return a.agent_id < b.agent_id;
    });
    return out;
}

namespace {

std::string lane_shape(const std::vector<Vec2>& pts, const RuleConfig& cfg) {
    const Vec2 a = pts[1] - pts[0];
    const Vec2 b = pts[pts.size() - 1] - pts[pts.size() - 2];
    const double dpsi = normalize_angle(std::atan2(b.y, b.x) - std::atan2(a.y, a.x));
    if (std::abs(dpsi) < cfg.straight_heading) return "straight lane";
    if (std::abs(dpsi) >= cfg.uturn_heading) return "u-turn lane";
    return dpsi > 0.0 ? "left turn lane" : "right turn lane";
}

AttentionLane make_lane(const Scene& scene, const LaneCenterline& lane, const RuleConfig& cfg) {
    const Pose2 key = scene.key_pose();
    std::vector<Vec2> local;
    local.reserve(lane.polyline.size());
    for (const Vec2& p : lane.polyline) local.push_back(inverse_transform_point(key, p));
    AttentionLane out;
    out.lane_id = lane.id;
    out.shape = lane_shape(local, cfg);
    const double len = polyline_length(local);
    for (int i = 0; i < 4; ++i) out.samples.push_back(polyline_point_at(local, len * i / 3.0));
    return out;
}

}  // namespace

AttentionTree build_attention_tree(const Scene& scene, const std::vector<CloseObject>& close,
                                   const RuleConfig& cfg) {
    AttentionTree tree;
    std::map<std::string, std::size_t> lane_index;
    auto lane_slot = [&](const std::string& id) {
        auto it = lane_index.find(id);
        if (it != lane_index.end()) return it->second;
        tree.lanes.push_back(make_lane(scene, *scene.find_lane(id), cfg));
        lane_index[id] = tree.lanes.size() - 1;
        return tree.lanes.size() - 1;
    };

    if (auto ego_lane = assign_lane(scene, {0.0, 0.0}, 0.0, cfg)) lane_slot(*ego_lane);

    std::vector<std::pair<std::string, AttentionObject>> attached;
    for (const CloseObject& c : close) {
        const AgentTrack* agent = scene.find_agent(c.agent_id);
        if (!agent) continue;
        const Vec2 pos = to_ego_frame(scene, agent->pose_at(scene.key_time).position());
        AttentionObject obj{agent->id, agent->category, pos};
        if (auto lane = assign_lane(scene, pos, std::nullopt, cfg)) {
            attached.emplace_back(*lane, std::move(obj));
        } else {
            tree.orphans.push_back(std::move(obj));
        }
    }
    // Lanes beyond the ego lane are listed by id for a stable rendering.
    std::vector<std::string> others;
    for (const auto& [lane, obj] : attached) {
        if (!lane_index.count(lane)) others.push_back(lane);
    }
    std::sort(others.begin(), others.end());
    others.erase(std::unique(others.begin(), others.end()), others.end());
    for (const auto& id : others) lane_slot(id);
    for (auto& [lane, obj] : attached) tree.lanes[lane_index.at(lane)].children.push_back(std::move(obj));
    return tree;
}

std::string AttentionTree::render() const {
    std::string out;
    for (const AttentionLane& lane : lanes) {
        out += "|--- " + lane.shape + " [";
        for (std::size_t i = 0; i < lane.samples.size(); ++i) {
            if (i) out += ", ";
            out += format_point(lane.samples[i], 1);
        }
        out += "]\n";
        for (const AttentionObject& o : lane.children) {
            out += "|    |--- " + o.category + " at " + format_point(o.position, 1) + "\n";
        }
    }
    if (!orphans.empty()) {
        out += "|--- unassigned objects\n";
        for (const AttentionObject& o : orphans) {
            out += "|    |--- " + o.category + " at " + format_point(o.position, 1) + "\n";
        }
    }
    return out;
}

}  // namespace cfdrive
