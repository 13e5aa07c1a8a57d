#include "cfdrive/promptqa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cfdrive/error.hpp"

namespace cfdrive {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Trajectory text

namespace {

std::string point_text(const Waypoint& w) { return format_point(w.position(), 2); }

}  // namespace

std::string serialize_trajectory(const Trajectory& traj) {
    std::string out = "[PT";
    for (const Waypoint& w : traj.waypoints()) out += ", " + point_text(w);
    out += "]";
    return out;
}

std::string serialize_trajectory_elided(const Trajectory& traj, std::size_t head, std::size_t tail) {
    const auto wps = traj.waypoints();
    if (wps.size() <= head + tail) return serialize_trajectory(traj);
    std::string out = "[PT";
    for (std::size_t i = 0; i < head; ++i) out += ", " + point_text(wps[i]);
    out += ", ...";
    for (std::size_t i = wps.size() - tail; i < wps.size(); ++i) out += ", " + point_text(wps[i]);
    out += "]";
    return out;
}

namespace {

class TrajectoryParser {
public:
    TrajectoryParser(std::string_view text, ParseMode mode) : s_(text), lenient_(mode == ParseMode::Lenient) {}

    std::vector<Vec2> run() {
        skip_ws();
        expect("[");
        skip_ws();
        expect("PT");
        std::vector<Vec2> pts;
        for (;;) {
            skip_ws();
            if (peek() == ']') {
                ++pos_;
                break;
            }
            expect(",");
            space();
            expect("(");
            skip_ws();
            const double x = number();
            skip_ws();
            expect(",");
            space();
            const double y = number();
            skip_ws();
            expect(")");
            pts.push_back({x, y});
        }
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing text");
        if (pts.empty()) throw ParseError("empty trajectory", 0, pos_);
        return pts;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("trajectory text: " + what + " at offset " + std::to_string(pos_ + 1), 0, pos_ + 1);
    }

    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    void skip_ws() {
        if (!lenient_) return;
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    // Exactly one space in strict mode, any whitespace in lenient mode.
    void space() {
        if (lenient_) {
            skip_ws();
        } else if (peek() == ' ') {
            ++pos_;
        } else {
            fail("expected ' '");
        }
    }

    void expect(std::string_view tok) {
        if (s_.substr(pos_, tok.size()) != tok) fail("expected '" + std::string(tok) + "'");
        pos_ += tok.size();
    }

    double number() {
        bool neg = false;
        if (peek() == '+' || peek() == '-') {
            neg = peek() == '-';
            ++pos_;
        }
        if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected a number");
        const char* begin = s_.data() + pos_;
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(begin, s_.data() + s_.size(), v, std::chars_format::fixed);
        if (ec != std::errc()) fail("expected a number");
        pos_ += static_cast<std::size_t>(ptr - begin);
        return neg ? -v : v;
    }

    std::string_view s_;
    bool lenient_;
    std::size_t pos_{0};
};

}  // namespace

Trajectory parse_trajectory(std::string_view text, ParseMode mode, double period) {
    return Trajectory::from_points(TrajectoryParser(text, mode).run(), period);
}

std::optional<Trajectory> find_trajectory(std::string_view text, double period) {
    std::size_t from = 0;
    while ((from = text.find("[PT", from)) != std::string_view::npos) {
        const std::size_t end = text.find(']', from);
        if (end == std::string_view::npos) return std::nullopt;
        try {
            return parse_trajectory(text.substr(from, end - from + 1), ParseMode::Lenient, period);
        } catch (const ParseError&) {
            from += 3;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Prompt

std::string render_prompt(const PromptContext& ctx) {
    std::string out;
    if (ctx.caption) out += "Caption:\n" + *ctx.caption + "\n\n";
    for (const SimulatedBlock& b : ctx.simulated) {
        out += "Simulated decision: " + b.decision + "\n";
        out += "Simulated trajectory: " + b.trajectory + ".\n";
        out += b.verdict + "\n\n";
    }
    out += "Expert decision: " + ctx.expert.decision + "\n";
    out += "Expert trajectory: " + ctx.expert.trajectory + ".\n";
    out += "Objects need attention:\n";
    out += ctx.expert.attention.empty() ? std::string("(none)\n") : ctx.expert.attention;
    return out;
}

SceneAnalysis analyze_scene(const Scene& scene, const std::vector<Trajectory>& candidates, const RuleConfig& cfg) {
    SceneAnalysis a;
    a.scene_id = scene.scene_id;
    a.caption = scene.caption;
    const double horizon = candidates.empty() ? kDefaultHorizon : candidates.front().horizon();
    const double period = candidates.empty() ? kDefaultPeriod : candidates.front().period();
    const Trajectory expert = expert_trajectory(scene, horizon, period);
    a.expert = {"expert", expert, run_checklist(scene, expert, cfg, "expert")};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::string id = "cand_" + std::to_string(i);
        a.simulated.push_back({id, candidates[i], run_checklist(scene, candidates[i], cfg, id)});
    }
    a.close = close_objects(scene, expert, cfg);
    a.attention = build_attention_tree(scene, a.close, cfg);
    for (const AgentTrack& agent : scene.agents) a.categories.emplace_back(agent.id, agent.category);
    a.lane_count = scene.lanes.size();
    return a;
}

PromptContext make_prompt_context(const Scene& scene, const SceneAnalysis& a) {
    PromptContext ctx;
    ctx.caption = a.caption;
    for (const EvaluatedTrajectory& s : a.simulated) {
        ctx.simulated.push_back(
            {s.verdict.decision.to_string(), serialize_trajectory(s.trajectory), verdict_string(scene, s.verdict)});
    }
    ctx.expert = {a.expert.verdict.decision.to_string(), serialize_trajectory(a.expert.trajectory),
                  a.attention.render()};
    return ctx;
}

// ---------------------------------------------------------------------------
// Enums

const char* to_string(ConversationType t) noexcept {
    switch (t) {
        case ConversationType::SceneDescription: return "SceneDescription";
        case ConversationType::Attention: return "Attention";
        case ConversationType::Counterfactual: return "Counterfactual";
        case ConversationType::Planning: return "Planning";
        case ConversationType::General: return "General";
    }
    return "?";
}

ConversationType parse_conversation_type(std::string_view s) {
    for (ConversationType t : kAllConversationTypes) {
        if (s == to_string(t)) return t;
    }
    throw ParseError("unknown conversation type '" + std::string(s) + "'");
}

const char* to_string(ReviewState s) noexcept {
    switch (s) {
        case ReviewState::Pending: return "pending";
        case ReviewState::Accepted: return "accepted";
        case ReviewState::Rejected: return "rejected";
        case ReviewState::Edited: return "edited";
    }
    return "?";
}

ReviewState parse_review_state(std::string_view s) {
    for (ReviewState r : {ReviewState::Pending, ReviewState::Accepted, ReviewState::Rejected, ReviewState::Edited}) {
        if (s == to_string(r)) return r;
    }
    throw ParseError("unknown review state '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// QA records

json to_json(const QAItem& item) {
    json j{{"id", item.id},
           {"conversation_type", to_string(item.type)},
           {"question", item.question},
           {"answer", item.answer},
           {"provenance",
            {{"scene_id", item.provenance.scene_id},
             {"trajectory_ids", item.provenance.trajectory_ids},
             {"backend", item.provenance.backend},
             {"template_version", item.provenance.template_version}}},
           {"review_state", to_string(item.review_state)}};
    if (item.edited_answer) j["edited_answer"] = *item.edited_answer;
    if (item.categories) {
        json cats = json::array();
        for (Category c : *item.categories) cats.push_back(to_string(c));
        j["categories"] = cats;
    }
    return j;
}

QAItem qa_from_json(const json& j) {
    try {
        QAItem q;
        q.id = j.at("id").get<std::string>();
        q.type = parse_conversation_type(j.at("conversation_type").get<std::string>());
        q.question = j.at("question").get<std::string>();
        q.answer = j.at("answer").get<std::string>();
        const json& p = j.at("provenance");
        q.provenance.scene_id = p.at("scene_id").get<std::string>();
        q.provenance.trajectory_ids = p.value("trajectory_ids", std::vector<std::string>{});
        q.provenance.backend = p.at("backend").get<std::string>();
        q.provenance.template_version = p.value("template_version", std::string(kTemplateVersion));
        q.review_state = parse_review_state(j.value("review_state", std::string("pending")));
        if (j.contains("edited_answer")) q.edited_answer = j.at("edited_answer").get<std::string>();
        if (j.contains("categories")) {
            CategorySet cats;
            for (const auto& c : j.at("categories")) cats.insert(parse_category(c.get<std::string>()));
            q.categories = cats;
        }
        if (q.question.empty() || q.answer.empty()) throw ValidationError(q.id, "empty question or answer");
        return q;
    } catch (const json::exception& e) {
        throw ParseError(std::string("QA record: ") + e.what());
    }
}

std::string dump_qa_jsonl(const std::vector<QAItem>& items) {
    std::string out;
    for (const QAItem& q : items) out += to_json(q).dump() + "\n";
    return out;
}

std::vector<QAItem> parse_qa_jsonl(std::string_view text) {
    std::vector<QAItem> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        const std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            out.push_back(qa_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("QA line: ") + e.what(), line_no, e.byte);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no, e.offset());
        }
    }
    return out;
}

std::vector<QAItem> load_qa(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open QA file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_qa_jsonl(buf.str());
}

// ---------------------------------------------------------------------------
// Templates

std::string decision_phrase(const HighLevelDecision& d) {
    if (d.speed == SpeedClass::Stop) return "come to a stop";
    std::string out;
    switch (d.longitudinal) {
        case Longitudinal::Accelerating: out = "accelerate"; break;
        case Longitudinal::Decelerating: out = "slow down"; break;
        case Longitudinal::ConstantSpeed: out = "keep a steady speed"; break;
    }
    switch (d.lateral) {
        case Lateral::GoStraight: out += " and go straight"; break;
        case Lateral::LeftTurn: out += " and make a left turn"; break;
        case Lateral::RightTurn: out += " and make a right turn"; break;
        case Lateral::UTurn: out += " and make a U-turn"; break;
    }
    if (d.lane == LaneBehavior::LaneChangeLeft) out += ", changing into the left lane";
    if (d.lane == LaneBehavior::LaneChangeRight) out += ", changing into the right lane";
    return out;
}

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string category_of(const SceneAnalysis& a, const std::string& agent_id) {
    for (const auto& [id, cat] : a.categories) {
        if (id == agent_id) return cat;
    }
    return agent_id;
}

std::optional<Vec2> attention_position(const SceneAnalysis& a, const std::string& agent_id) {
    for (const AttentionLane& l : a.attention.lanes) {
        for (const AttentionObject& o : l.children) {
            if (o.agent_id == agent_id) return o.position;
        }
    }
    for (const AttentionObject& o : a.attention.orphans) {
        if (o.agent_id == agent_id) return o.position;
    }
    return std::nullopt;
}

std::string counterfactual_template(const SceneAnalysis& a, const EvaluatedTrajectory& subject) {
    const CounterfactualVerdict& v = subject.verdict;
    const std::string horizon = fixed(subject.trajectory.horizon(), 0);
    if (v.safe) {
        return "Following this trajectory is safe. Within the next " + horizon +
               " seconds the ego vehicle keeps clear of every object and stays within the road.";
    }
    std::string out = "Choosing to " + decision_phrase(v.decision) + " here is dangerous.";
    std::map<std::string, bool> seen;
    for (const Violation& x : v.violations) {
        if (x.kind != ViolationKind::Collision || seen[x.culprit]) continue;
        seen[x.culprit] = true;
        out += " The ego vehicle would collide with the " + category_of(a, x.culprit) + " about " + fixed(x.time, 1) +
               " s from now.";
    }
    for (const Violation& x : v.violations) {
        if (x.kind != ViolationKind::RedLight) continue;
        out += " It would run a red light about " + fixed(x.time, 1) + " s from now.";
        break;
    }
    for (const Violation& x : v.violations) {
        if (x.kind != ViolationKind::OutOfDrivableArea) continue;
        out += " It would leave the drivable area about " + fixed(x.time, 1) + " s from now.";
        break;
    }
    return out;
}

std::string object_list(const SceneAnalysis& a, std::size_t limit, bool with_distance) {
    std::string out;
    for (std::size_t i = 0; i < a.close.size() && i < limit; ++i) {
        const CloseObject& c = a.close[i];
        if (i) out += "; ";
        out += "the " + category_of(a, c.agent_id);
        if (auto p = attention_position(a, c.agent_id)) out += " at " + format_point(*p, 1);
        if (with_distance) out += ", " + fixed(c.min_distance, 1) + " m from your path";
    }
    return out;
}

std::string attention_template(const SceneAnalysis& a) {
    if (a.close.empty()) {
        return "No objects come within 10 meters of the planned path in the next 3 seconds, so no object needs "
               "special attention.";
    }
    return "You should pay attention to " + std::to_string(a.close.size()) +
           (a.close.size() == 1 ? " object: " : " objects: ") + object_list(a, a.close.size(), true) + ".";
}

std::string planning_template(const SceneAnalysis& a) {
    std::string out = "The most suitable trajectory to follow would be " + serialize_trajectory(a.expert.trajectory) +
                      ". The recommended decision is " + a.expert.verdict.decision.to_string() + ".";
    if (!a.close.empty()) out += " Keep an eye on " + object_list(a, 3, false) + ".";
    if (a.expert.verdict.safe) out += " This trajectory stays within the road and keeps clear of nearby objects.";
    return out;
}

std::string general_template(const SceneAnalysis& a) {
    if (a.close.empty()) return "No objects need attention right now.";
    std::vector<std::pair<std::string, int>> counts;
    for (const CloseObject& c : a.close) {
        const std::string cat = category_of(a, c.agent_id);
        auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& p) { return p.first == cat; });
        if (it == counts.end()) {
            counts.emplace_back(cat, 1);
        } else {
            ++it->second;
        }
    }
    std::string out = std::to_string(a.close.size()) + (a.close.size() == 1 ? " object needs" : " objects need") +
                      " attention: ";
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i) out += i + 1 == counts.size() ? " and " : ", ";
        out += std::to_string(counts[i].second) + " " + counts[i].first;
    }
    return out + ".";
}

std::string scene_template(const SceneAnalysis& a) {
    if (a.caption && !a.caption->empty()) return *a.caption;
    const HighLevelDecision& d = a.expert.verdict.decision;
    return "The ego vehicle is in a " + lower(to_string(d.speed)) + " state and its logged path is classified as " +
           d.to_string() + ". The map lists " + std::to_string(a.lane_count) + " lane(s) nearby and " +
           std::to_string(a.close.size()) + " object(s) need attention.";
}

const char* system_prompt(ConversationType t) {
    switch (t) {
        case ConversationType::SceneDescription:
            return "You are a driving assistant. Describe the driving scene from the ego vehicle's point of view.";
        case ConversationType::Attention:
            return "You are a driving assistant. Name the traffic elements the ego vehicle should watch, with their "
                   "ego-frame coordinates.";
        case ConversationType::Counterfactual:
            return "You are a driving assistant. Explain the consequences of the proposed trajectory. Mention every "
                   "rule it violates (collision, running a red light, leaving the drivable area) or state that it "
                   "is safe.";
        case ConversationType::Planning:
            return "You are a driving assistant. Recommend the next action, quote the expert trajectory verbatim, and "
                   "justify it.";
        case ConversationType::General:
            return "You are a driving assistant. Answer the question briefly using the scene facts.";
    }
    return "";
}

}  // namespace

std::string TemplateBackend::answer(const QaTask& task) {
    const SceneAnalysis& a = *task.analysis;
    switch (task.type) {
        case ConversationType::SceneDescription: return scene_template(a);
        case ConversationType::Attention: return attention_template(a);
        case ConversationType::Counterfactual: return counterfactual_template(a, *task.subject);
        case ConversationType::Planning: return planning_template(a);
        case ConversationType::General: return general_template(a);
    }
    return {};
}

std::string LlmBackend::answer(const QaTask& task) {
    LlmRequest req;
    req.model = model_;
    req.messages = task.messages;
    req.seed = seed_ + static_cast<std::uint64_t>(task.attempt);
    return client_.complete(req);
}

// ---------------------------------------------------------------------------
// Generation

namespace {

bool covers(const CategorySet& got, const CategorySet& want) {
    return std::includes(got.begin(), got.end(), want.begin(), want.end());
}

}  // namespace

GenerateResult generate_qa(const PromptContext& ctx, const SceneAnalysis& analysis, QaBackend& backend,
                           const GenerateOptions& opts) {
    GenerateResult result;
    const std::string prompt = render_prompt(ctx);
    TemplateBackend fallback;

    auto make_task = [&](ConversationType type, std::string question, const EvaluatedTrajectory* subject) {
        QaTask task{type, std::move(question), {}, &analysis, subject, 0};
        std::string user = prompt + "\n";
        if (subject) {
            user += "Trajectory under consideration: " + serialize_trajectory(subject->trajectory) + "\n";
            user += "Checklist result: " + render_categories(verdict_categories(subject->verdict)) + "\n";
        }
        user += "Question: " + task.question;
        task.messages = {{"system", system_prompt(type)}, {"user", user}};
        return task;
    };

    for (ConversationType type : opts.types) {
        std::vector<std::pair<QaTask, std::vector<std::string>>> tasks;
        switch (type) {
            case ConversationType::SceneDescription:
                tasks.push_back({make_task(type, "Can you describe the current driving scene?", nullptr), {}});
                break;
            case ConversationType::Attention:
                tasks.push_back({make_task(type, "What traffic elements should I be aware of while driving in this area?",
                                           nullptr),
                                 {"expert"}});
                break;
            case ConversationType::Counterfactual: {
                std::vector<const EvaluatedTrajectory*> subjects;
                for (const EvaluatedTrajectory& s : analysis.simulated) subjects.push_back(&s);
                subjects.push_back(&analysis.expert);
                for (const EvaluatedTrajectory* s : subjects) {
                    const std::string q = "If I decide to " + decision_phrase(s->verdict.decision) +
                                          " following the trajectory " + serialize_trajectory(s->trajectory) +
                                          ", what could be the consequences?";
                    tasks.push_back({make_task(type, q, s), {s->id}});
                }
                break;
            }
            case ConversationType::Planning:
                tasks.push_back(
                    {make_task(type, "What should be my next action given the current driving situation, and why?",
                               nullptr),
                     {"expert"}});
                break;
            case ConversationType::General:
                tasks.push_back(
                    {make_task(type, "How many objects around the ego vehicle need attention, and what are they?",
                               nullptr),
                     {"expert"}});
                break;
        }

        for (std::size_t n = 0; n < tasks.size(); ++n) {
            QaTask& task = tasks[n].first;
            QAItem item;
            item.id = analysis.scene_id + "/" + to_string(type) + "/" + std::to_string(n);
            item.type = type;
            item.question = task.question;
            item.provenance = {analysis.scene_id, tasks[n].second, backend.name(), kTemplateVersion};
            try {
                std::string answer = backend.answer(task);
                if (type == ConversationType::Counterfactual) {
                    const CategorySet want = verdict_categories(task.subject->verdict);
                    item.categories = want;
                    for (int k = 0; k < opts.regenerate_attempts && !covers(extract_keywords(answer), want); ++k) {
                        task.attempt = k + 1;
                        answer = backend.answer(task);
                    }
                    if (!covers(extract_keywords(answer), want)) {
                        answer = fallback.answer(task);
                        if (backend.name() != fallback.name()) {
                            item.provenance.backend = "template (fallback from " + backend.name() + ")";
                        }
                    }
                }
                if (answer.empty()) throw LlmError("empty answer");
                item.answer = std::move(answer);
                result.items.push_back(std::move(item));
            } catch (const std::exception& e) {
                result.errors.push_back({item.id, e.what()});
            }
        }
    }
    return result;
}

}  // namespace cfdrive
