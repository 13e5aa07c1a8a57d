#include "cfdrive/review.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <ctime>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include <httplib.h>

#include "cfdrive/error.hpp"
#include "cfdrive/llm.hpp"

namespace cfdrive {

using nlohmann::json;

const char* to_string(ReviewVerdict v) noexcept {
    switch (v) {
        case ReviewVerdict::Accept: return "accept";
        case ReviewVerdict::Reject: return "reject";
        case ReviewVerdict::Edit: return "edit";
    }
    return "?";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json to_json(const ReviewDecision& d) {
    json j{{"item_id", d.item_id},
           {"revision", d.revision},
           {"verdict", to_string(d.verdict)},
           {"gap_tags", d.gap_tags},
           {"note", d.note},
           {"reviewer", d.reviewer},
           {"timestamp", d.timestamp}};
    if (d.verdict == ReviewVerdict::Edit) j["text"] = d.edit_text;
    return j;
}

std::optional<ReviewDecision> parse_review_decision(const json& j, std::vector<FieldError>& errors) {
    const std::size_t before = errors.size();
    if (!j.is_object()) {
        errors.push_back({"$", "expected an object"});
        return std::nullopt;
    }
    ReviewDecision d;
    if (!j.contains("item_id") || !j["item_id"].is_string() || j["item_id"].get<std::string>().empty()) {
        errors.push_back({"item_id", "required non-empty string"});
    } else {
        d.item_id = j["item_id"].get<std::string>();
    }
    if (!j.contains("revision") || !j["revision"].is_number_integer() || j["revision"].get<long long>() < 1) {
        errors.push_back({"revision", "required integer >= 1"});
    } else {
        d.revision = j["revision"].get<int>();
    }
    const std::string verdict = j.contains("verdict") && j["verdict"].is_string() ? j["verdict"].get<std::string>() : "";
    if (verdict == "accept") {
        d.verdict = ReviewVerdict::Accept;
    } else if (verdict == "reject") {
        d.verdict = ReviewVerdict::Reject;
    } else if (verdict == "edit") {
        d.verdict = ReviewVerdict::Edit;
        if (!j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty()) {
            errors.push_back({"text", "required non-empty string for an edit"});
        } else {
            d.edit_text = j["text"].get<std::string>();
        }
    } else {
        errors.push_back({"verdict", "must be one of accept, reject, edit"});
    }
    if (j.contains("gap_tags")) {
        if (!j["gap_tags"].is_array()) {
            errors.push_back({"gap_tags", "expected an array of strings"});
        } else {
            for (std::size_t i = 0; i < j["gap_tags"].size(); ++i) {
                const json& t = j["gap_tags"][i];
                if (!t.is_string() || t.get<std::string>().empty()) {
                    errors.push_back({"gap_tags[" + std::to_string(i) + "]", "expected a non-empty string"});
                } else {
                    d.gap_tags.push_back(t.get<std::string>());
                }
            }
        }
    }
    for (const char* key : {"note", "reviewer", "timestamp"}) {
        if (!j.contains(key)) continue;
        if (!j[key].is_string()) {
            errors.push_back({key, "expected a string"});
            continue;
        }
        std::string v = j[key].get<std::string>();
        if (std::strcmp(key, "note") == 0) d.note = std::move(v);
        if (std::strcmp(key, "reviewer") == 0) d.reviewer = std::move(v);
        if (std::strcmp(key, "timestamp") == 0) d.timestamp = std::move(v);
    }
    if (errors.size() != before) return std::nullopt;
    return d;
}

json ReviewStats::to_json() const {
    return {{"total", total},       {"pending", pending}, {"accepted", accepted},
            {"rejected", rejected}, {"edited", edited},   {"gap_tags", gap_tags}};
}

// ---------------------------------------------------------------------------
// Store

ReviewStore::ReviewStore(std::vector<QAItem> items, std::filesystem::path log_path)
    : items_(std::move(items)), state_(items_.size()), log_path_(std::move(log_path)) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!index_.emplace(items_[i].id, i).second) throw ValidationError("qa", "duplicate item id " + items_[i].id);
    }
    replay();
}

void ReviewStore::apply(const ReviewDecision& d) {
    const auto it = index_.find(d.item_id);
    if (it == index_.end()) return;
    ItemState& s = state_[it->second];
    if (d.revision != s.revision + 1) return;
    s.revision = d.revision;
    s.latest = d;
}

void ReviewStore::replay() {
    if (log_path_.empty() || !std::filesystem::exists(log_path_)) return;
    const std::string text = read_text_file(log_path_);
    std::size_t start = 0, line_no = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        const bool complete = end != std::string::npos;
        if (!complete) end = text.size();
        ++line_no;
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<FieldError> errors;
        std::optional<ReviewDecision> d;
        try {
            d = parse_review_decision(json::parse(line), errors);
        } catch (const json::parse_error&) {
        }
        if (!d) {
            // A torn final line is what a crash mid-append leaves; it was never acknowledged.
            if (!complete) break;
            throw ParseError("review log: malformed decision", line_no);
        }
        apply(*d);
    }
}

SubmitResult ReviewStore::submit(ReviewDecision d) {
    std::unique_lock lock(mutex_);
    const auto it = index_.find(d.item_id);
    if (it == index_.end()) return {SubmitStatus::UnknownItem, 0};
    const int current = state_[it->second].revision;
    if (d.revision != current + 1) return {SubmitStatus::Conflict, current};
    if (!log_path_.empty()) {
        if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
        const std::string line = to_json(d).dump() + "\n";
        const int fd = ::open(log_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd < 0) throw Error("cannot open review log " + log_path_.string() + ": " + std::strerror(errno));
        std::size_t written = 0;
        while (written < line.size()) {
            const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                ::close(fd);
                throw Error("review log write failed: " + std::string(std::strerror(errno)));
            }
            written += static_cast<std::size_t>(n);
        }
        if (::fsync(fd) != 0) {
            ::close(fd);
            throw Error("review log fsync failed: " + std::string(std::strerror(errno)));
        }
        ::close(fd);
    }
    apply(d);
    return {SubmitStatus::Ok, d.revision};
}

QAItem ReviewStore::materialize(std::size_t i) const {
    QAItem q = items_[i];
    const ItemState& s = state_[i];
    if (!s.latest) return q;
    switch (s.latest->verdict) {
        case ReviewVerdict::Accept:
            q.review_state = ReviewState::Accepted;
            q.edited_answer.reset();
            break;
        case ReviewVerdict::Reject:
            q.review_state = ReviewState::Rejected;
            q.edited_answer.reset();
            break;
        case ReviewVerdict::Edit:
            q.review_state = ReviewState::Edited;
            q.edited_answer = s.latest->edit_text;
            break;
    }
    return q;
}

std::vector<QAItem> ReviewStore::items() const {
    std::shared_lock lock(mutex_);
    std::vector<QAItem> out;
    for (std::size_t i = 0; i < items_.size(); ++i) out.push_back(materialize(i));
    return out;
}

std::vector<QAItem> ReviewStore::items_for_scene(std::string_view scene_id) const {
    std::shared_lock lock(mutex_);
    std::vector<QAItem> out;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].provenance.scene_id == scene_id) out.push_back(materialize(i));
    }
    return out;
}

int ReviewStore::revision(std::string_view item_id) const {
    std::shared_lock lock(mutex_);
    const auto it = index_.find(item_id);
    return it == index_.end() ? -1 : state_[it->second].revision;
}

ReviewStats ReviewStore::stats_where(std::string_view scene_id) const {
    ReviewStats st;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!scene_id.empty() && items_[i].provenance.scene_id != scene_id) continue;
        ++st.total;
        const ItemState& s = state_[i];
        if (!s.latest) {
            ++st.pending;
            continue;
        }
        switch (s.latest->verdict) {
            case ReviewVerdict::Accept: ++st.accepted; break;
            case ReviewVerdict::Reject: ++st.rejected; break;
            case ReviewVerdict::Edit: ++st.edited; break;
        }
        for (const std::string& tag : s.latest->gap_tags) ++st.gap_tags[tag];
    }
    return st;
}

ReviewStats ReviewStore::stats() const {
    std::shared_lock lock(mutex_);
    return stats_where({});
}

ReviewStats ReviewStore::stats_for_scene(std::string_view scene_id) const {
    std::shared_lock lock(mutex_);
    if (scene_id.empty()) return {};
    return stats_where(scene_id);
}

ExportSummary ReviewStore::export_reviewed(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::vector<QAItem> out;
    std::map<std::string, std::size_t> histogram;
    std::map<std::string, std::vector<std::string>> tagged;
    bool any_reviewed = false;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const ItemState& s = state_[i];
        if (!s.latest) continue;
        any_reviewed = true;
        for (const std::string& tag : s.latest->gap_tags) {
            ++histogram[tag];
            tagged[tag].push_back(items_[i].id);
        }
        if (s.latest->verdict == ReviewVerdict::Reject) continue;
        QAItem q = materialize(i);
        if (q.edited_answer) q.answer = *q.edited_answer;
        out.push_back(std::move(q));
    }
    write_file_atomic(path, dump_qa_jsonl(out));
    ExportSummary summary;
    summary.exported = out.size();
    summary.all_pending = !any_reviewed;
    summary.gaps_path = path;
    summary.gaps_path += ".gaps.json";
    write_file_atomic(summary.gaps_path, json{{"gap_tags", histogram}, {"items", tagged}}.dump(2) + "\n");
    return summary;
}

// ---------------------------------------------------------------------------
// Service

struct ReviewService::Http {
    httplib::Server server;
};

ReviewService::ReviewService(const ServiceConfig& config) : config_(config), http_(std::make_shared<Http>()) {
    if (!config_.scenes.empty()) {
        for (const auto& f : list_scene_files(config_.scenes)) scenes_.push_back(load_scene(f));
        std::sort(scenes_.begin(), scenes_.end(),
                  [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; });
    }
    if (!config_.verdicts.empty() && std::filesystem::exists(config_.verdicts)) {
        for (SceneVerdicts& v : load_verdicts(config_.verdicts)) {
            std::string id = v.scene_id;
            verdicts_.emplace(std::move(id), std::move(v));
        }
    }
    std::vector<QAItem> items;
    if (!config_.qa.empty() && std::filesystem::exists(config_.qa)) items = load_qa(config_.qa);
    store_ = std::make_unique<ReviewStore>(std::move(items), config_.log);
}

namespace {

json point(Vec2 p) { return json::array({p.x, p.y}); }

json ring_json(const Scene& s, const Ring& r) {
    json out = json::array();
    for (const Vec2& p : r) out.push_back(point(to_ego_frame(s, p)));
    return out;
}

}  // namespace

HttpReply ReviewService::list_scenes() const {
    json list = json::array();
    for (const Scene& s : scenes_) {
        const ReviewStats st = store_->stats_for_scene(s.scene_id);
        std::size_t unsafe = 0, trajectories = 0;
        if (auto it = verdicts_.find(s.scene_id); it != verdicts_.end()) {
            trajectories = it->second.trajectories.size();
            for (const auto& t : it->second.trajectories) unsafe += t.verdict.safe ? 0 : 1;
        }
        list.push_back({{"scene_id", s.scene_id},
                        {"qa_total", st.total},
                        {"pending", st.pending},
                        {"accepted", st.accepted},
                        {"rejected", st.rejected},
                        {"edited", st.edited},
                        {"trajectories", trajectories},
                        {"unsafe_trajectories", unsafe}});
    }
    return {200, {{"scenes", list}}};
}

HttpReply ReviewService::scene_payload(const std::string& scene_id) const {
    const auto sit = std::find_if(scenes_.begin(), scenes_.end(),
                                  [&](const Scene& s) { return s.scene_id == scene_id; });
    if (sit == scenes_.end()) return {404, {{"error", "unknown scene"}, {"scene_id", scene_id}}};
    const Scene& s = *sit;

    json lanes = json::array();
    for (const LaneCenterline& l : s.lanes) {
        json jl{{"id", l.id}, {"polyline", ring_json(s, l.polyline)}, {"successors", l.successors}};
        jl["left"] = l.left ? json(*l.left) : json(nullptr);
        jl["right"] = l.right ? json(*l.right) : json(nullptr);
        lanes.push_back(jl);
    }
    json outer = json::array(), holes = json::array();
    for (const Ring& r : s.drivable.polygon.outer) outer.push_back(ring_json(s, r));
    for (const Ring& r : s.drivable.polygon.holes) holes.push_back(ring_json(s, r));

    json agents = json::array();
    for (const AgentTrack& a : s.agents) {
        const Pose2 p = to_ego_frame(s, a.pose_at(s.key_time));
        json track = json::array();
        for (int k = 0; k <= 6; ++k) {
            const double t = 0.5 * k;
            const Pose2 q = to_ego_frame(s, a.pose_at(s.key_time + t));
            track.push_back(json::array({t, q.x, q.y, q.yaw}));
        }
        agents.push_back({{"id", a.id},
                          {"category", a.category},
                          {"length", a.length},
                          {"width", a.width},
                          {"x", p.x},
                          {"y", p.y},
                          {"yaw", p.yaw},
                          {"track", track}});
    }
    json signals = json::array();
    for (const TrafficSignal& sig : s.signals) {
        signals.push_back({{"id", sig.id},
                           {"stop_line", json::array({point(to_ego_frame(s, sig.stop_line.a)),
                                                      point(to_ego_frame(s, sig.stop_line.b))})},
                           {"state_at_key", to_string(sig.state_at(s.key_time))}});
    }
    json trajectories = json::array();
    if (auto it = verdicts_.find(scene_id); it != verdicts_.end()) {
        const json jv = to_json(it->second);
        for (std::size_t i = 0; i < jv["trajectories"].size(); ++i) {
            json t = jv["trajectories"][i];
            t["role"] = i == 0 ? "expert" : "simulated";
            trajectories.push_back(t);
        }
    }
    return {200,
            {{"scene_id", s.scene_id},
             {"frame", "ego"},
             {"key_time", s.key_time},
             {"ego", {{"length", s.ego.length}, {"width", s.ego.width}}},
             {"lanes", lanes},
             {"drivable", {{"outer", outer}, {"holes", holes}}},
             {"agents", agents},
             {"signals", signals},
             {"trajectories", trajectories},
             {"violation_kinds", json::array({"collision", "out_of_drivable_area", "red_light"})}}};
}

HttpReply ReviewService::scene_qa(const std::string& scene_id) const {
    const bool known = std::any_of(scenes_.begin(), scenes_.end(), [&](const Scene& s) { return s.scene_id == scene_id; });
    const std::vector<QAItem> items = store_->items_for_scene(scene_id);
    if (!known && items.empty()) return {404, {{"error", "unknown scene"}, {"scene_id", scene_id}}};
    json list = json::array();
    for (const QAItem& q : items) {
        json j = to_json(q);
        j["revision"] = store_->revision(q.id);
        list.push_back(j);
    }
    return {200, {{"scene_id", scene_id}, {"items", list}}};
}

HttpReply ReviewService::post_review(std::string_view body, const std::string& reviewer_header) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        return {400, {{"errors", json::array({{{"field", "$"}, {"message", std::string("invalid JSON: ") + e.what()}}})}}};
    }
    std::vector<FieldError> errors;
    std::optional<ReviewDecision> d = parse_review_decision(j, errors);
    if (!d) {
        json list = json::array();
        for (const FieldError& e : errors) list.push_back({{"field", e.field}, {"message", e.message}});
        return {400, {{"errors", list}}};
    }
    if (d->reviewer.empty()) d->reviewer = reviewer_header.empty() ? "anonymous" : reviewer_header;
    d->timestamp = utc_timestamp();
    const SubmitResult r = store_->submit(*d);
    switch (r.status) {
        case SubmitStatus::UnknownItem: return {404, {{"error", "unknown item"}, {"item_id", d->item_id}}};
        case SubmitStatus::Conflict:
            return {409, {{"error", "stale revision"}, {"item_id", d->item_id}, {"current_revision", r.current_revision}}};
        case SubmitStatus::Ok: break;
    }
    std::string state = to_string(d->verdict == ReviewVerdict::Accept   ? ReviewState::Accepted
                                  : d->verdict == ReviewVerdict::Reject ? ReviewState::Rejected
                                                                        : ReviewState::Edited);
    return {200, {{"item_id", d->item_id}, {"revision", r.current_revision}, {"review_state", state}}};
}

HttpReply ReviewService::stats() const { return {200, store_->stats().to_json()}; }

void ReviewService::serve() {
    httplib::Server& svr = http_->server;
    auto send = [](httplib::Response& res, const HttpReply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    svr.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                             {"Access-Control-Allow-Headers", "Content-Type, X-Reviewer"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    svr.Get("/scenes", [this, send](const httplib::Request&, httplib::Response& res) { send(res, list_scenes()); });
    svr.Get(R"(/scenes/([^/]+)/qa)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, scene_qa(req.matches[1]));
    });
    svr.Get(R"(/scenes/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, scene_payload(req.matches[1]));
    });
    svr.Get("/stats", [this, send](const httplib::Request&, httplib::Response& res) { send(res, stats()); });
    svr.Post("/reviews", [this, send](const httplib::Request& req, httplib::Response& res) {
        try {
            send(res, post_review(req.body, req.get_header_value("X-Reviewer")));
        } catch (const std::exception& e) {
            send(res, {500, {{"error", e.what()}}});
        }
    });
    if (!config_.static_dir.empty() && std::filesystem::is_directory(config_.static_dir)) {
        svr.set_mount_point("/", config_.static_dir.string());
    }
    int port = config_.port;
    if (port == 0) {
        port = svr.bind_to_any_port(config_.bind);
        if (port < 0) throw Error("cannot bind " + config_.bind);
    } else if (!svr.bind_to_port(config_.bind, port)) {
        throw Error("cannot bind " + config_.bind + ":" + std::to_string(port));
    }
    bound_port_ = port;
    svr.listen_after_bind();
}

void ReviewService::stop() { http_->server.stop(); }

void ReviewService::wait_until_ready() const {
    while (bound_port_.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    http_->server.wait_until_ready();
}

}  // namespace cfdrive
