#include "cfdrive/records.hpp"

#include <fstream>
#include <sstream>

#include "cfdrive/error.hpp"

namespace cfdrive {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

SceneVerdicts make_scene_verdicts(const Scene& scene, const SceneAnalysis& a) {
    SceneVerdicts v;
    v.scene_id = a.scene_id;
    v.trajectories.push_back(a.expert);
    for (const EvaluatedTrajectory& s : a.simulated) v.trajectories.push_back(s);
    for (const EvaluatedTrajectory& t : v.trajectories) v.verdict_strings.push_back(verdict_string(scene, t.verdict));
    return v;
}

json to_json(const Violation& v) {
    return {{"kind", to_string(v.kind)},
            {"culprit", v.culprit},
            {"time", v.time},
            {"location", json::array({v.location.x, v.location.y})}};
}

Violation violation_from_json(const json& j) {
    Violation v;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "collision") {
        v.kind = ViolationKind::Collision;
    } else if (kind == "out_of_drivable_area") {
        v.kind = ViolationKind::OutOfDrivableArea;
    } else if (kind == "red_light") {
        v.kind = ViolationKind::RedLight;
    } else {
        throw ParseError("unknown violation kind '" + kind + "'");
    }
    v.culprit = j.value("culprit", std::string());
    v.time = j.at("time").get<double>();
    v.location = {j.at("location").at(0).get<double>(), j.at("location").at(1).get<double>()};
    return v;
}

json to_json(const HighLevelDecision& d) {
    return {{"speed", to_string(d.speed)},
            {"longitudinal", to_string(d.longitudinal)},
            {"lateral", to_string(d.lateral)},
            {"lane", to_string(d.lane)},
            {"label", d.to_string()}};
}

HighLevelDecision decision_from_json(const json& j) {
    HighLevelDecision d;
    d.speed = parse_speed_class(j.at("speed").get<std::string>());
    d.longitudinal = parse_longitudinal(j.at("longitudinal").get<std::string>());
    d.lateral = parse_lateral(j.at("lateral").get<std::string>());
    d.lane = parse_lane_behavior(j.value("lane", std::string("Unknown")));
    return d;
}

json trajectory_to_json(const Trajectory& t) {
    json wps = json::array();
    for (const Waypoint& w : t.waypoints()) wps.push_back(json::array({w.t, w.x, w.y}));
    return {{"period", t.period()}, {"waypoints", wps}};
}

Trajectory trajectory_from_json(const json& j) {
    std::vector<Waypoint> wps;
    for (const auto& w : j.at("waypoints")) wps.push_back({w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()});
    return Trajectory(std::move(wps), j.value("period", kDefaultPeriod));
}

json to_json(const SceneVerdicts& v) {
    json trajs = json::array();
    for (std::size_t i = 0; i < v.trajectories.size(); ++i) {
        const EvaluatedTrajectory& t = v.trajectories[i];
        json violations = json::array();
        for (const Violation& x : t.verdict.violations) violations.push_back(to_json(x));
        json lanes = json::array();
        for (const auto& l : t.verdict.lane_sequence) lanes.push_back(l ? json(*l) : json(nullptr));
        json jt = trajectory_to_json(t.trajectory);
        jt["id"] = t.id;
        jt["decision"] = to_json(t.verdict.decision);
        jt["safe"] = t.verdict.safe;
        jt["verdict"] = i < v.verdict_strings.size() ? v.verdict_strings[i] : std::string();
        jt["violations"] = violations;
        jt["lane_sequence"] = lanes;
        jt["red_light_fallback"] = t.verdict.red_light_fallback;
        trajs.push_back(jt);
    }
    return {{"scene_id", v.scene_id}, {"trajectories", trajs}};
}

SceneVerdicts scene_verdicts_from_json(const json& j) {
    SceneVerdicts v;
    v.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& jt : j.at("trajectories")) {
        EvaluatedTrajectory t;
        t.id = jt.at("id").get<std::string>();
        t.trajectory = trajectory_from_json(jt);
        t.verdict.trajectory_id = t.id;
        t.verdict.decision = decision_from_json(jt.at("decision"));
        t.verdict.safe = jt.at("safe").get<bool>();
        for (const auto& x : jt.at("violations")) t.verdict.violations.push_back(violation_from_json(x));
        for (const auto& l : jt.value("lane_sequence", json::array())) {
            t.verdict.lane_sequence.push_back(l.is_null() ? std::nullopt : std::optional<std::string>(l.get<std::string>()));
        }
        t.verdict.red_light_fallback = jt.value("red_light_fallback", false);
        v.verdict_strings.push_back(jt.value("verdict", std::string()));
        v.trajectories.push_back(std::move(t));
    }
    return v;
}

std::string dump_verdicts_jsonl(const std::vector<SceneVerdicts>& all) {
    std::string out;
    for (const SceneVerdicts& v : all) out += to_json(v).dump() + "\n";
    return out;
}

namespace {

template <typename F>
void for_each_json_line(std::string_view text, const char* what, F&& f) {
    std::size_t start = 0, line_no = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        const std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            f(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(std::string(what) + ": " + e.what(), line_no, e.byte);
        } catch (const json::exception& e) {
            throw ParseError(std::string(what) + ": " + e.what(), line_no);
        }
    }
}

}  // namespace

std::vector<SceneVerdicts> parse_verdicts_jsonl(std::string_view text) {
    std::vector<SceneVerdicts> out;
    for_each_json_line(text, "verdicts", [&](const json& j) { out.push_back(scene_verdicts_from_json(j)); });
    return out;
}

std::vector<SceneVerdicts> load_verdicts(const std::filesystem::path& path) {
    return parse_verdicts_jsonl(read_text_file(path));
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
    std::vector<Prediction> out;
    for_each_json_line(read_text_file(path), "predictions", [&](const json& j) {
        std::vector<Vec2> pts;
        for (const auto& p : j.at("waypoints")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        out.push_back({j.at("scene_id").get<std::string>(),
                       Trajectory::from_points(pts, j.value("period", kDefaultPeriod))});
    });
    return out;
}

std::string dump_predictions_jsonl(const std::vector<Prediction>& preds) {
    std::string out;
    for (const Prediction& p : preds) {
        json wps = json::array();
        for (const Waypoint& w : p.trajectory.waypoints()) wps.push_back(json::array({w.x, w.y}));
        out += json{{"scene_id", p.scene_id}, {"period", p.trajectory.period()}, {"waypoints", wps}}.dump() + "\n";
    }
    return out;
}

}  // namespace cfdrive
