#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdrive/scene.hpp"

// Hand-built scenes for unit tests. The ego sits at the world origin facing +x at
// key_time 0, so world and ego frames coincide unless a test moves it.
namespace testutil {

using nlohmann::json;

inline json pose(double t, double x, double y, double yaw = 0.0) { return {{"t", t}, {"x", x}, {"y", y}, {"yaw", yaw}}; }

inline json straight_scene(const std::string& id = "s", double speed = 2.0) {
    json poses = json::array();
    for (int k = -2; k <= 8; ++k) poses.push_back(pose(0.5 * k, speed * 0.5 * k, 0.0));
    return {{"schema", cfdrive::kSceneSchema},
            {"scene_id", id},
            {"key_time", 0.0},
            {"ego_poses", poses},
            {"agents", json::array()},
            {"lanes", json::array()},
            {"drivable", {{"outer", json::array()}, {"holes", json::array()}}},
            {"signals", json::array()}};
}

inline json static_agent(const std::string& id, const std::string& category, double x, double y, double yaw = 0.0,
                         double length = 4.0, double width = 2.0) {
    return {{"id", id},
            {"category", category},
            {"length", length},
            {"width", width},
            {"poses", json::array({pose(-1.0, x, y, yaw), pose(10.0, x, y, yaw)})}};
}

inline json lane(const std::string& id, std::vector<std::array<double, 2>> pts) {
    json p = json::array();
    for (const auto& q : pts) p.push_back(json::array({q[0], q[1]}));
    return {{"id", id}, {"polyline", p}, {"successors", json::array()}};
}

inline json rect(double x0, double y0, double x1, double y1) {
    return json::array({json::array({x0, y0}), json::array({x1, y0}), json::array({x1, y1}), json::array({x0, y1})});
}

inline cfdrive::Scene build(const json& j) { return cfdrive::parse_scene(j.dump()); }

/// Applies one rigid motion to every world-frame coordinate in a scene document.
inline json moved(json j, double dx, double dy, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    auto pt = [&](json& p) {
        const double x = p[0].get<double>(), y = p[1].get<double>();
        p = json::array({c * x - s * y + dx, s * x + c * y + dy});
    };
    auto ps = [&](json& p) {
        const double x = p["x"].get<double>(), y = p["y"].get<double>();
        p["x"] = c * x - s * y + dx;
        p["y"] = s * x + c * y + dy;
        double yaw = p["yaw"].get<double>() + theta;
        yaw = std::atan2(std::sin(yaw), std::cos(yaw));
        p["yaw"] = yaw;
    };
    for (json& p : j["ego_poses"]) ps(p);
    for (json& a : j["agents"]) {
        for (json& p : a["poses"]) ps(p);
        if (a.contains("velocity")) {
            const double vx = a["velocity"][0].get<double>(), vy = a["velocity"][1].get<double>();
            a["velocity"] = json::array({c * vx - s * vy, s * vx + c * vy});
        }
    }
    for (json& l : j["lanes"])
        for (json& p : l["polyline"]) pt(p);
    for (json& r : j["drivable"]["outer"])
        for (json& p : r) pt(p);
    for (json& r : j["drivable"]["holes"])
        for (json& p : r) pt(p);
    for (json& sg : j["signals"])
        for (json& p : sg["stop_line"]) pt(p);
    return j;
}

}  // namespace testutil
