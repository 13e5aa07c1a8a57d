#include "cfdrive/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cfdrive/error.hpp"

namespace cfdrive {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Frames

Pose2 compose(const Pose2& frame, const Pose2& local) noexcept {
    const double c = std::cos(frame.yaw);
    const double s = std::sin(frame.yaw);
    return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y,
            normalize_angle(frame.yaw + local.yaw)};
}

Pose2 relative(const Pose2& frame, const Pose2& world) noexcept {
    const double c = std::cos(frame.yaw);
    const double s = std::sin(frame.yaw);
    const double dx = world.x - frame.x;
    const double dy = world.y - frame.y;
    return {c * dx + s * dy, -s * dx + c * dy, normalize_angle(world.yaw - frame.yaw)};
}

Vec2 transform_point(const Pose2& frame, Vec2 local) noexcept {
    const Pose2 p = compose(frame, {local.x, local.y, 0.0});
    return {p.x, p.y};
}

Vec2 inverse_transform_point(const Pose2& frame, Vec2 world) noexcept {
    const Pose2 p = relative(frame, {world.x, world.y, 0.0});
    return {p.x, p.y};
}

Pose2 interpolate_pose(const std::vector<TimedPose>& poses, double t) {
    if (poses.empty()) throw std::invalid_argument("interpolate_pose: empty pose list");
    if (t <= poses.front().t) return poses.front().pose;
    if (t >= poses.back().t) return poses.back().pose;
    const auto hi = std::upper_bound(poses.begin(), poses.end(), t,
                                     [](double v, const TimedPose& p) { return v < p.t; });
    const TimedPose& b = *hi;
    const TimedPose& a = *(hi - 1);
    const double span = b.t - a.t;
    const double u = span > 0.0 ? (t - a.t) / span : 0.0;
    return {a.pose.x + u * (b.pose.x - a.pose.x), a.pose.y + u * (b.pose.y - a.pose.y),
            normalize_angle(a.pose.yaw + u * normalize_angle(b.pose.yaw - a.pose.yaw))};
}

// ---------------------------------------------------------------------------
// Scene members

Vec2 AgentTrack::tail_velocity() const noexcept {
    if (velocity) return *velocity;
    if (poses.size() >= 2) {
        const TimedPose& a = poses[poses.size() - 2];
        const TimedPose& b = poses.back();
        const double dt = b.t - a.t;
        if (dt > 0.0) return {(b.pose.x - a.pose.x) / dt, (b.pose.y - a.pose.y) / dt};
    }
    return {};
}

Pose2 AgentTrack::pose_at(double t) const {
    const TimedPose& last = poses.back();
    if (t <= last.t) return interpolate_pose(poses, t);
    const Vec2 v = tail_velocity();
    const double dt = t - last.t;
    return {last.pose.x + v.x * dt, last.pose.y + v.y * dt, last.pose.yaw};
}

double AgentTrack::max_speed() const noexcept {
    double best = norm(tail_velocity());
    for (std::size_t i = 1; i < poses.size(); ++i) {
        const double dt = poses[i].t - poses[i - 1].t;
        if (dt > 0.0) {
            best = std::max(best, distance(poses[i].pose.position(), poses[i - 1].pose.position()) / dt);
        }
    }
    return best;
}

OrientedBox AgentTrack::box_at(double t) const {
    const Pose2 p = pose_at(t);
    return {{p.x, p.y}, p.yaw, length, width};
}

const char* to_string(SignalState s) noexcept {
    switch (s) {
        case SignalState::Red: return "red";
        case SignalState::Yellow: return "yellow";
        case SignalState::Green: return "green";
        case SignalState::Unknown: break;
    }
    return "unknown";
}

SignalState TrafficSignal::state_at(double t) const noexcept {
    for (const SignalInterval& iv : states) {
        if (t >= iv.start && t < iv.end) return iv.state;
    }
    return SignalState::Unknown;
}

Pose2 Scene::key_pose() const { return interpolate_pose(ego_poses, key_time); }

const LaneCenterline* Scene::find_lane(std::string_view id) const noexcept {
    for (const auto& l : lanes) {
        if (l.id == id) return &l;
    }
    return nullptr;
}

const AgentTrack* Scene::find_agent(std::string_view id) const noexcept {
    for (const auto& a : agents) {
        if (a.id == id) return &a;
    }
    return nullptr;
}

Pose2 to_ego_frame(const Scene& scene, const Pose2& world) { return relative(scene.key_pose(), world); }
Pose2 to_world_frame(const Scene& scene, const Pose2& ego) { return compose(scene.key_pose(), ego); }
Vec2 to_ego_frame(const Scene& scene, Vec2 world) {
    return inverse_transform_point(scene.key_pose(), world);
}
Vec2 to_world_frame(const Scene& scene, Vec2 ego) { return transform_point(scene.key_pose(), ego); }

// ---------------------------------------------------------------------------
// Expert trajectory

Trajectory expert_trajectory(const Scene& scene, double horizon, double period) {
    if (!(period > 0.0) || !(horizon > 0.0)) {
        throw ValidationError("expert_trajectory", "horizon and period must be positive");
    }
    const double last = scene.ego_poses.back().t;
    const double needed = scene.key_time + horizon;
    if (last + kTimeEps < needed) {
        std::ostringstream os;
        os << "ego_poses cover up to t=" << last << " but key_time + horizon = " << needed;
        throw ValidationError("ego_poses", os.str());
    }
    const Pose2 key = scene.key_pose();
    const auto count = static_cast<std::size_t>(std::llround(horizon / period));
    std::vector<Waypoint> wps;
    wps.reserve(count);
    for (std::size_t i = 1; i <= count; ++i) {
        const double t = static_cast<double>(i) * period;
        const Pose2 p = relative(key, interpolate_pose(scene.ego_poses, scene.key_time + t));
        wps.push_back({t, p.x, p.y});
    }
    return Trajectory(std::move(wps), period);
}

double ego_speed_at_key(const Scene& scene) {
    const auto& poses = scene.ego_poses;
    const double h = 0.25;
    const double t0 = std::max(poses.front().t, scene.key_time - h);
    const double t1 = std::min(poses.back().t, scene.key_time + h);
    if (!(t1 > t0)) return 0.0;
    const Pose2 a = interpolate_pose(poses, t0);
    const Pose2 b = interpolate_pose(poses, t1);
    return distance(a.position(), b.position()) / (t1 - t0);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Reader {
public:
    Reader(const json& j, std::string path, bool strict) : j_(j), path_(std::move(path)), strict_(strict) {}

    [[nodiscard]] const std::string& path() const noexcept { return path_; }

    [[nodiscard]] std::string child_path(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    void require_object() const {
        if (!j_.is_object()) throw ValidationError(path_.empty() ? "$" : path_, "expected an object");
    }

    // Strict mode: every present key must be in `allowed`.
    void check_keys(std::initializer_list<std::string_view> allowed) const {
        if (!strict_) return;
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
                throw ValidationError(child_path(it.key()), "unknown field (strict mode)");
            }
        }
    }

    [[nodiscard]] bool has(std::string_view key) const { return j_.contains(key) && !j_.at(std::string(key)).is_null(); }

    [[nodiscard]] const json& at(std::string_view key) const {
        if (!has(key)) throw ValidationError(child_path(key), "missing required field");
        return j_.at(std::string(key));
    }

    [[nodiscard]] double number(std::string_view key) const {
        const json& v = at(key);
        if (!v.is_number()) throw ValidationError(child_path(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(child_path(key), "must be finite");
        return d;
    }

    [[nodiscard]] double number_or(std::string_view key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    [[nodiscard]] std::string string(std::string_view key) const {
        const json& v = at(key);
        if (!v.is_string()) throw ValidationError(child_path(key), "expected a string");
        return v.get<std::string>();
    }

    [[nodiscard]] std::vector<std::string> strings_or_empty(std::string_view key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        const json& v = at(key);
        if (!v.is_array()) throw ValidationError(child_path(key), "expected an array of strings");
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) {
                throw ValidationError(child_path(key) + "[" + std::to_string(i) + "]", "expected a string");
            }
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }

    [[nodiscard]] const json& array(std::string_view key) const {
        const json& v = at(key);
        if (!v.is_array()) throw ValidationError(child_path(key), "expected an array");
        return v;
    }

private:
    const json& j_;
    std::string path_;
    bool strict_;
};

std::string index_path(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

Vec2 parse_point(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ValidationError(path, "expected [x, y]");
    }
    const Vec2 p{j[0].get<double>(), j[1].get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError(path, "must be finite");
    return p;
}

std::vector<Vec2> parse_points(const json& j, const std::string& path) {
    if (!j.is_array()) throw ValidationError(path, "expected an array of points");
    std::vector<Vec2> pts;
    pts.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) pts.push_back(parse_point(j[i], index_path(path, i)));
    return pts;
}

TimedPose parse_timed_pose(const json& j, const std::string& path, bool strict) {
    Reader r(j, path, strict);
    r.require_object();
    r.check_keys({"t", "x", "y", "yaw"});
    return {r.number("t"), {r.number("x"), r.number("y"), normalize_angle(r.number_or("yaw", 0.0))}};
}

std::vector<TimedPose> parse_poses(const json& j, const std::string& path, bool strict) {
    if (!j.is_array()) throw ValidationError(path, "expected an array of poses");
    std::vector<TimedPose> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_timed_pose(j[i], index_path(path, i), strict));
    return out;
}

// Accepts explicitly closed rings and stores them open.
Ring parse_ring(const json& j, const std::string& path) {
    Ring ring = parse_points(j, path);
    if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
    return ring;
}

SignalState parse_state(const std::string& s, const std::string& path) {
    if (s == "red") return SignalState::Red;
    if (s == "yellow") return SignalState::Yellow;
    if (s == "green") return SignalState::Green;
    if (s == "unknown") return SignalState::Unknown;
    throw ValidationError(path, "state must be one of red, yellow, green, unknown");
}

std::size_t line_of_offset(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json point_json(Vec2 p) { return json::array({p.x, p.y}); }

json ring_json(const Ring& r) {
    json a = json::array();
    for (const Vec2& p : r) a.push_back(point_json(p));
    return a;
}

json poses_json(const std::vector<TimedPose>& poses) {
    json a = json::array();
    for (const auto& p : poses) a.push_back({{"t", p.t}, {"x", p.pose.x}, {"y", p.pose.y}, {"yaw", p.pose.yaw}});
    return a;
}

void check_increasing(const std::vector<TimedPose>& poses, const std::string& path) {
    for (std::size_t i = 1; i < poses.size(); ++i) {
        if (!(poses[i].t > poses[i - 1].t)) {
            throw ValidationError(index_path(path, i) + ".t", "timestamps must be strictly increasing");
        }
    }
}

void check_ring(const Ring& ring, const std::string& path) {
    std::set<std::pair<double, double>> distinct;
    for (const Vec2& p : ring) distinct.insert({p.x, p.y});
    if (distinct.size() < 3) throw ValidationError(path, "ring needs at least 3 distinct vertices");
}

}  // namespace

Scene parse_scene(std::string_view text, const LoadOptions& opts) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t line = line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError("line " + std::to_string(line) + ": " + e.what(), line, e.byte);
    }

    const bool strict = opts.strict;
    Reader root(doc, "", strict);
    root.require_object();
    root.check_keys({"schema", "scene_id", "key_time", "ego", "ego_poses", "agents", "lanes", "drivable",
                     "signals", "caption"});
    const std::string schema = root.string("schema");
    if (schema != kSceneSchema) {
        throw ValidationError("schema", "unsupported schema version '" + schema + "'");
    }

    Scene s;
    s.scene_id = root.string("scene_id");
    s.key_time = root.number("key_time");
    if (root.has("ego")) {
        Reader ego(root.at("ego"), "ego", strict);
        ego.require_object();
        ego.check_keys({"length", "width"});
        s.ego.length = ego.number_or("length", kDefaultEgoLength);
        s.ego.width = ego.number_or("width", kDefaultEgoWidth);
    }
    s.ego_poses = parse_poses(root.array("ego_poses"), "ego_poses", strict);

    if (root.has("agents")) {
        const json& agents = root.array("agents");
        for (std::size_t i = 0; i < agents.size(); ++i) {
            const std::string path = index_path("agents", i);
            Reader r(agents[i], path, strict);
            r.require_object();
            r.check_keys({"id", "category", "length", "width", "poses", "velocity"});
            AgentTrack a;
            a.id = r.string("id");
            a.category = r.string("category");
            a.length = r.number("length");
            a.width = r.number("width");
            a.poses = parse_poses(r.array("poses"), r.child_path("poses"), strict);
            if (r.has("velocity")) a.velocity = parse_point(r.at("velocity"), r.child_path("velocity"));
            s.agents.push_back(std::move(a));
        }
    }

    if (root.has("lanes")) {
        const json& lanes = root.array("lanes");
        for (std::size_t i = 0; i < lanes.size(); ++i) {
            const std::string path = index_path("lanes", i);
            Reader r(lanes[i], path, strict);
            r.require_object();
            r.check_keys({"id", "polyline", "successors", "left", "right", "signal_ids", "width"});
            LaneCenterline l;
            l.id = r.string("id");
            l.polyline = parse_points(r.at("polyline"), r.child_path("polyline"));
            l.successors = r.strings_or_empty("successors");
            if (r.has("left")) l.left = r.string("left");
            if (r.has("right")) l.right = r.string("right");
            l.signal_ids = r.strings_or_empty("signal_ids");
            l.width = r.number_or("width", kDefaultLaneWidth);
            s.lanes.push_back(std::move(l));
        }
    }

    {
        Reader r(root.at("drivable"), "drivable", strict);
        r.require_object();
        r.check_keys({"outer", "holes"});
        if (r.has("outer")) {
            const json& outer = r.array("outer");
            for (std::size_t i = 0; i < outer.size(); ++i) {
                s.drivable.polygon.outer.push_back(parse_ring(outer[i], index_path("drivable.outer", i)));
            }
        }
        if (r.has("holes")) {
            const json& holes = r.array("holes");
            for (std::size_t i = 0; i < holes.size(); ++i) {
                s.drivable.polygon.holes.push_back(parse_ring(holes[i], index_path("drivable.holes", i)));
            }
        }
    }

    if (root.has("signals")) {
        const json& signals = root.array("signals");
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const std::string path = index_path("signals", i);
            Reader r(signals[i], path, strict);
            r.require_object();
            r.check_keys({"id", "stop_line", "controlled_lanes", "states"});
            TrafficSignal sig;
            sig.id = r.string("id");
            const std::vector<Vec2> line = parse_points(r.at("stop_line"), r.child_path("stop_line"));
            if (line.size() != 2) throw ValidationError(r.child_path("stop_line"), "expected exactly two points");
            sig.stop_line = {line[0], line[1]};
            sig.controlled_lanes = r.strings_or_empty("controlled_lanes");
            if (r.has("states")) {
                const json& states = r.array("states");
                for (std::size_t k = 0; k < states.size(); ++k) {
                    const std::string sp = index_path(r.child_path("states"), k);
                    Reader sr(states[k], sp, strict);
                    sr.require_object();
                    sr.check_keys({"start", "end", "state"});
                    sig.states.push_back(
                        {sr.number("start"), sr.number("end"), parse_state(sr.string("state"), sp + ".state")});
                }
            }
            s.signals.push_back(std::move(sig));
        }
    }

    if (root.has("caption")) s.caption = root.string("caption");

    validate_scene(s);
    return s;
}

void validate_scene(const Scene& s) {
    if (s.scene_id.empty()) throw ValidationError("scene_id", "must be non-empty");
    if (!(s.ego.length > 0.0) || !(s.ego.width > 0.0)) {
        throw ValidationError("ego", "footprint length and width must be positive");
    }
    if (s.ego_poses.size() < 2) throw ValidationError("ego_poses", "need at least 2 samples");
    check_increasing(s.ego_poses, "ego_poses");
    if (s.key_time < s.ego_poses.front().t - kTimeEps || s.key_time > s.ego_poses.back().t + kTimeEps) {
        throw ValidationError("key_time", "not covered by ego_poses");
    }

    std::set<std::string> agent_ids;
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        const auto& a = s.agents[i];
        const std::string path = index_path("agents", i);
        if (a.id.empty()) throw ValidationError(path + ".id", "must be non-empty");
        if (!agent_ids.insert(a.id).second) throw ValidationError(path + ".id", "duplicate agent id '" + a.id + "'");
        if (!(a.length > 0.0)) throw ValidationError(path + ".length", "must be positive");
        if (!(a.width > 0.0)) throw ValidationError(path + ".width", "must be positive");
        if (a.poses.empty()) throw ValidationError(path + ".poses", "need at least one pose");
        check_increasing(a.poses, path + ".poses");
    }

    std::set<std::string> lane_ids;
    for (std::size_t i = 0; i < s.lanes.size(); ++i) {
        const std::string path = index_path("lanes", i);
        if (!lane_ids.insert(s.lanes[i].id).second) {
            throw ValidationError(path + ".id", "duplicate lane id '" + s.lanes[i].id + "'");
        }
    }
    std::set<std::string> signal_ids;
    for (std::size_t i = 0; i < s.signals.size(); ++i) {
        if (!signal_ids.insert(s.signals[i].id).second) {
            throw ValidationError(index_path("signals", i) + ".id", "duplicate signal id");
        }
    }

    auto require_lane = [&](const std::string& id, const std::string& path) {
        if (!lane_ids.count(id)) throw ValidationError(path, "unknown lane id '" + id + "'");
    };

    for (std::size_t i = 0; i < s.lanes.size(); ++i) {
        const auto& l = s.lanes[i];
        const std::string path = index_path("lanes", i);
        if (l.polyline.size() < 2) throw ValidationError(path + ".polyline", "need at least 2 points");
        for (std::size_t k = 1; k < l.polyline.size(); ++k) {
            if (l.polyline[k] == l.polyline[k - 1]) {
                throw ValidationError(index_path(path + ".polyline", k), "repeats the previous point");
            }
        }
        if (!(l.width > 0.0)) throw ValidationError(path + ".width", "must be positive");
        for (std::size_t k = 0; k < l.successors.size(); ++k) {
            require_lane(l.successors[k], index_path(path + ".successors", k));
        }
        if (l.left) require_lane(*l.left, path + ".left");
        if (l.right) require_lane(*l.right, path + ".right");
        for (std::size_t k = 0; k < l.signal_ids.size(); ++k) {
            if (!signal_ids.count(l.signal_ids[k])) {
                throw ValidationError(index_path(path + ".signal_ids", k), "unknown signal id '" + l.signal_ids[k] + "'");
            }
        }
    }

    for (std::size_t i = 0; i < s.drivable.polygon.outer.size(); ++i) {
        check_ring(s.drivable.polygon.outer[i], index_path("drivable.outer", i));
    }
    for (std::size_t i = 0; i < s.drivable.polygon.holes.size(); ++i) {
        check_ring(s.drivable.polygon.holes[i], index_path("drivable.holes", i));
    }

    for (std::size_t i = 0; i < s.signals.size(); ++i) {
        const auto& sig = s.signals[i];
        const std::string path = index_path("signals", i);
        if (sig.stop_line.a == sig.stop_line.b) throw ValidationError(path + ".stop_line", "degenerate segment");
        for (std::size_t k = 0; k < sig.controlled_lanes.size(); ++k) {
            require_lane(sig.controlled_lanes[k], index_path(path + ".controlled_lanes", k));
        }
        std::vector<SignalInterval> sorted = sig.states;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
        for (std::size_t k = 0; k < sorted.size(); ++k) {
            if (!(sorted[k].end > sorted[k].start)) {
                throw ValidationError(path + ".states", "interval end must be after start");
            }
            if (k > 0 && sorted[k].start < sorted[k - 1].end) {
                throw ValidationError(path + ".states", "intervals overlap");
            }
        }
    }
}

Scene load_scene(const std::filesystem::path& path, const LoadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open scene file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scene(buf.str(), opts);
}

std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::vector<fs::path> out;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
        }
        std::sort(out.begin(), out.end());
    } else {
        out.push_back(path);
    }
    return out;
}

std::string dump_scene(const Scene& s) {
    json j;
    j["schema"] = kSceneSchema;
    j["scene_id"] = s.scene_id;
    j["key_time"] = s.key_time;
    j["ego"] = {{"length", s.ego.length}, {"width", s.ego.width}};
    j["ego_poses"] = poses_json(s.ego_poses);
    json agents = json::array();
    for (const auto& a : s.agents) {
        json ja{{"id", a.id}, {"category", a.category}, {"length", a.length}, {"width", a.width},
                {"poses", poses_json(a.poses)}};
        if (a.velocity) ja["velocity"] = point_json(*a.velocity);
        agents.push_back(std::move(ja));
    }
    j["agents"] = std::move(agents);
    json lanes = json::array();
    for (const auto& l : s.lanes) {
        json jl{{"id", l.id}, {"polyline", ring_json(l.polyline)}, {"successors", l.successors},
                {"signal_ids", l.signal_ids}, {"width", l.width}};
        if (l.left) jl["left"] = *l.left;
        if (l.right) jl["right"] = *l.right;
        lanes.push_back(std::move(jl));
    }
    j["lanes"] = std::move(lanes);
    json outer = json::array();
    for (const auto& r : s.drivable.polygon.outer) outer.push_back(ring_json(r));
    json holes = json::array();
    for (const auto& r : s.drivable.polygon.holes) holes.push_back(ring_json(r));
    j["drivable"] = {{"outer", outer}, {"holes", holes}};
    json signals = json::array();
    for (const auto& sig : s.signals) {
        json states = json::array();
        for (const auto& iv : sig.states) {
            states.push_back({{"start", iv.start}, {"end", iv.end}, {"state", to_string(iv.state)}});
        }
        signals.push_back({{"id", sig.id},
                           {"stop_line", json::array({point_json(sig.stop_line.a), point_json(sig.stop_line.b)})},
                           {"controlled_lanes", sig.controlled_lanes},
                           {"states", states}});
    }
    j["signals"] = std::move(signals);
    if (s.caption) j["caption"] = *s.caption;
    return j.dump(2);
}

}  // namespace cfdrive
