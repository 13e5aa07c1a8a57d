#include "cfdrive/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "cfdrive/attention.hpp"
#include "cfdrive/checklist.hpp"
#include "cfdrive/error.hpp"
#include "cfdrive/keyframe.hpp"
#include "cfdrive/metrics.hpp"
#include "cfdrive/records.hpp"
#include "cfdrive/review.hpp"
#include "cfdrive/scene.hpp"

namespace cfdrive {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

fs::path PipelineConfig::library_path() const {
    return paths.library.empty() ? paths.output / "library.json" : paths.library;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where.empty() ? "config" : where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ValidationError(where.empty() ? key : where + "." + key, "unknown key");
        }
    }
}

template <typename T>
void read_into(const json& j, const char* key, T& dst, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + "." + key, "wrong type");
    }
}

void read_path(const json& j, const char* key, fs::path& dst) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ValidationError(std::string("paths.") + key, "expected a string");
    dst = j.at(key).get<std::string>();
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    check_keys(j, {"paths", "rules", "selection", "library", "backend", "conversation_types", "seed", "jobs"}, "");
    if (j.contains("paths")) {
        const json& p = j["paths"];
        check_keys(p, {"scenes", "embeddings", "library", "keyframes", "output", "cache"}, "paths");
        read_path(p, "scenes", c.paths.scenes);
        read_path(p, "embeddings", c.paths.embeddings);
        read_path(p, "library", c.paths.library);
        read_path(p, "keyframes", c.paths.keyframes);
        read_path(p, "output", c.paths.output);
        read_path(p, "cache", c.paths.cache);
    }
    if (j.contains("rules")) {
        const json& r = j["rules"];
        check_keys(r,
                   {"dt", "sweep_resolution", "lane_max_lateral", "lane_max_heading_deg", "close_radius",
                    "close_window", "stop_displacement", "stop_speed", "slow_speed", "moderate_speed", "accel_delta",
                    "straight_heading_deg", "uturn_heading_deg"},
                   "rules");
        RuleConfig& rc = c.rules;
        read_into(r, "dt", rc.dt, "rules");
        read_into(r, "sweep_resolution", rc.sweep_resolution, "rules");
        read_into(r, "lane_max_lateral", rc.lane_max_lateral, "rules");
        read_into(r, "close_radius", rc.close_radius, "rules");
        read_into(r, "close_window", rc.close_window, "rules");
        read_into(r, "stop_displacement", rc.stop_displacement, "rules");
        read_into(r, "stop_speed", rc.stop_speed, "rules");
        read_into(r, "slow_speed", rc.slow_speed, "rules");
        read_into(r, "moderate_speed", rc.moderate_speed, "rules");
        read_into(r, "accel_delta", rc.accel_delta, "rules");
        double deg = 0;
        if (r.contains("lane_max_heading_deg")) {
            read_into(r, "lane_max_heading_deg", deg, "rules");
            rc.lane_max_heading = deg2rad(deg);
        }
        if (r.contains("straight_heading_deg")) {
            read_into(r, "straight_heading_deg", deg, "rules");
            rc.straight_heading = deg2rad(deg);
        }
        if (r.contains("uturn_heading_deg")) {
            read_into(r, "uturn_heading_deg", deg, "rules");
            rc.uturn_heading = deg2rad(deg);
        }
    }
    if (j.contains("selection")) {
        check_keys(j["selection"], {"fraction", "dynamics_k"}, "selection");
        read_into(j["selection"], "fraction", c.selection.fraction, "selection");
        read_into(j["selection"], "dynamics_k", c.selection.dynamics_k, "selection");
    }
    if (j.contains("library")) {
        check_keys(j["library"], {"k", "limit", "speed_align"}, "library");
        read_into(j["library"], "k", c.library.k, "library");
        read_into(j["library"], "limit", c.library.limit, "library");
        read_into(j["library"], "speed_align", c.library.speed_align, "library");
    }
    if (j.contains("backend")) {
        const json& b = j["backend"];
        check_keys(b,
                   {"kind", "base_url", "model", "token_env", "timeout_ms", "retries", "max_in_flight",
                    "regenerate_attempts"},
                   "backend");
        read_into(b, "kind", c.backend.kind, "backend");
        read_into(b, "base_url", c.backend.http.base_url, "backend");
        read_into(b, "model", c.backend.http.model, "backend");
        read_into(b, "token_env", c.backend.http.api_key_env, "backend");
        long long ms = c.backend.http.timeout.count();
        read_into(b, "timeout_ms", ms, "backend");
        c.backend.http.timeout = std::chrono::milliseconds(ms);
        read_into(b, "retries", c.backend.http.retries, "backend");
        read_into(b, "max_in_flight", c.backend.http.max_in_flight, "backend");
        read_into(b, "regenerate_attempts", c.backend.regenerate_attempts, "backend");
    }
    if (j.contains("conversation_types")) {
        if (!j["conversation_types"].is_array()) throw ValidationError("conversation_types", "expected an array");
        c.conversation_types.clear();
        for (const json& t : j["conversation_types"]) {
            if (!t.is_string()) throw ValidationError("conversation_types", "expected strings");
            try {
                c.conversation_types.push_back(parse_conversation_type(t.get<std::string>()));
            } catch (const Error& e) {
                throw ValidationError("conversation_types", e.what());
            }
        }
    }
    read_into(j, "seed", c.seed, "config");
    read_into(j, "jobs", c.jobs, "config");
    return c;
}

json to_json(const PipelineConfig& c) {
    json types = json::array();
    for (ConversationType t : c.conversation_types) types.push_back(to_string(t));
    const auto deg = [](double rad) { return rad * 180.0 / std::numbers::pi; };
    return {{"paths",
             {{"scenes", c.paths.scenes.string()},
              {"embeddings", c.paths.embeddings.string()},
              {"library", c.paths.library.string()},
              {"keyframes", c.paths.keyframes.string()},
              {"output", c.paths.output.string()},
              {"cache", c.paths.cache.string()}}},
            {"rules",
             {{"dt", c.rules.dt},
              {"sweep_resolution", c.rules.sweep_resolution},
              {"lane_max_lateral", c.rules.lane_max_lateral},
              {"lane_max_heading_deg", deg(c.rules.lane_max_heading)},
              {"close_radius", c.rules.close_radius},
              {"close_window", c.rules.close_window},
              {"stop_displacement", c.rules.stop_displacement},
              {"stop_speed", c.rules.stop_speed},
              {"slow_speed", c.rules.slow_speed},
              {"moderate_speed", c.rules.moderate_speed},
              {"accel_delta", c.rules.accel_delta},
              {"straight_heading_deg", deg(c.rules.straight_heading)},
              {"uturn_heading_deg", deg(c.rules.uturn_heading)}}},
            {"selection", {{"fraction", c.selection.fraction}, {"dynamics_k", c.selection.dynamics_k}}},
            {"library", {{"k", c.library.k}, {"limit", c.library.limit}, {"speed_align", c.library.speed_align}}},
            {"backend",
             {{"kind", c.backend.kind},
              {"base_url", c.backend.http.base_url},
              {"model", c.backend.http.model},
              {"token_env", c.backend.http.api_key_env},
              {"timeout_ms", c.backend.http.timeout.count()},
              {"retries", c.backend.http.retries},
              {"max_in_flight", c.backend.http.max_in_flight},
              {"regenerate_attempts", c.backend.regenerate_attempts}}},
            {"conversation_types", types},
            {"seed", c.seed},
            {"jobs", c.jobs}};
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), 0, e.byte);
    }
    return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stages

namespace {

class StageLog {
public:
    StageLog(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}

    void scene(const char* stage, const std::string& scene_id, double ms, const char* status, json extra = {}) {
        json line{{"stage", stage}, {"scene", scene_id}, {"status", status}, {"ms", std::round(ms * 1000.0) / 1000.0}};
        if (extra.is_object()) line.update(extra);
        emit(line);
    }
    void event(const char* stage, const char* status, json extra = {}) {
        json line{{"stage", stage}, {"status", status}};
        if (extra.is_object()) line.update(extra);
        emit(line);
    }

private:
    void emit(const json& line) {
        if (quiet_) return;
        std::lock_guard lock(mutex_);
        err_ << line.dump() << '\n';
    }
    std::ostream& err_;
    bool quiet_;
    std::mutex mutex_;
};

/// Runs f(i) for i in [0, n) on up to `jobs` threads. Exceptions are rethrown after all finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first) first = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

struct SceneFailure {
    fs::path file;
    std::string message;
};

struct LoadedScenes {
    std::vector<Scene> scenes;  // sorted by scene id
    std::vector<SceneFailure> failures;
};

LoadedScenes load_scene_set(const fs::path& where, std::size_t jobs) {
    const std::vector<fs::path> files = list_scene_files(where);
    std::vector<std::optional<Scene>> loaded(files.size());
    std::vector<std::string> messages(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        try {
            loaded[i] = load_scene(files[i]);
        } catch (const std::exception& e) {
            messages[i] = e.what();
        }
    });
    LoadedScenes out;
    std::map<std::string, fs::path> seen;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!loaded[i]) {
            out.failures.push_back({files[i], messages[i]});
            continue;
        }
        auto [it, fresh] = seen.emplace(loaded[i]->scene_id, files[i]);
        if (!fresh) {
            out.failures.push_back({files[i], "duplicate scene_id '" + loaded[i]->scene_id + "' (also in " +
                                                  it->second.string() + ")"});
            continue;
        }
        out.scenes.push_back(std::move(*loaded[i]));
    }
    std::sort(out.scenes.begin(), out.scenes.end(),
              [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; });
    return out;
}

std::set<std::string> read_keyframe_selection(const fs::path& path) {
    const json j = json::parse(read_text_file(path));
    return j.at("selected").get<std::set<std::string>>();
}

std::string jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const json& r : rows) out += r.dump() + "\n";
    return out;
}

struct Runner {
    PipelineConfig cfg;
    std::ostream& out;
    std::ostream& err;
    StageLog log;

    Runner(PipelineConfig c, std::ostream& o, std::ostream& e, bool quiet)
        : cfg(std::move(c)), out(o), err(e), log(e, quiet) {}

    fs::path output(const char* name) const { return cfg.paths.output / name; }

    void write(const fs::path& path, std::string_view content) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_file_atomic(path, content);
    }

    /// Scenes for a pipeline stage; any load failure aborts the stage.
    std::vector<Scene> scenes(const char* stage) {
        if (cfg.paths.scenes.empty()) throw ValidationError("paths.scenes", "no scenes given (use --scenes)");
        LoadedScenes set = load_scene_set(cfg.paths.scenes, cfg.jobs);
        if (!set.failures.empty()) {
            for (const auto& f : set.failures) err << "error: " << f.file.string() << ": " << f.message << '\n';
            throw ValidationError("scenes", std::to_string(set.failures.size()) + " scene file(s) failed to load");
        }
        if (!cfg.paths.keyframes.empty()) {
            const std::set<std::string> keep = read_keyframe_selection(cfg.paths.keyframes);
            std::erase_if(set.scenes, [&](const Scene& s) { return !keep.count(s.scene_id); });
            log.event(stage, "filtered", {{"keyframes", cfg.paths.keyframes.string()}, {"scenes", set.scenes.size()}});
        }
        return std::move(set.scenes);
    }

    std::optional<ManeuverLibrary> library(const char* stage, bool required) {
        const fs::path p = cfg.library_path();
        if (!fs::exists(p)) {
            if (required) throw ValidationError("paths.library", "library not found: " + p.string());
            log.event(stage, "no_library", {{"path", p.string()}});
            return std::nullopt;
        }
        return load_library(p);
    }

    CandidateOptions candidate_options() const {
        CandidateOptions o;
        o.limit = cfg.library.limit;
        o.speed_align = cfg.library.speed_align;
        return o;
    }

    /// Per-scene analysis shared by check, attention, prompts, and generate.
    std::vector<SceneAnalysis> analyze(const char* stage, const std::vector<Scene>& scenes) {
        const std::optional<ManeuverLibrary> lib = library(stage, false);
        std::vector<SceneAnalysis> out(scenes.size());
        parallel_for(scenes.size(), cfg.jobs, [&](std::size_t i) {
            const auto t0 = std::chrono::steady_clock::now();
            std::vector<Trajectory> candidates;
            if (lib) candidates = instantiate_candidates(scenes[i], *lib, candidate_options());
            out[i] = analyze_scene(scenes[i], candidates, cfg.rules);
            std::size_t unsafe = out[i].expert.verdict.safe ? 0 : 1;
            for (const auto& s : out[i].simulated) unsafe += s.verdict.safe ? 0 : 1;
            log.scene(stage, scenes[i].scene_id, elapsed_ms(t0), "ok",
                      {{"trajectories", 1 + out[i].simulated.size()}, {"unsafe", unsafe}});
        });
        return out;
    }

    int validate(const fs::path& where) {
        if (where.empty()) throw ValidationError("scenes", "no scenes given");
        const std::vector<fs::path> files = list_scene_files(where);
        LoadedScenes set = load_scene_set(where, cfg.jobs);
        std::map<fs::path, std::string> failed;
        for (const auto& f : set.failures) failed[f.file] = f.message;
        for (const fs::path& f : files) {
            if (auto it = failed.find(f); it != failed.end()) {
                out << "FAIL " << f.string() << ": " << it->second << '\n';
            } else {
                out << "ok   " << f.string() << '\n';
            }
        }
        out << files.size() - set.failures.size() << "/" << files.size() << " scene files valid\n";
        return set.failures.empty() ? 0 : 1;
    }

    int keyframes() {
        const std::vector<Scene> all = scenes("keyframes");
        std::vector<std::pair<std::string, Trajectory>> trajs;
        for (const Scene& s : all) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                trajs.emplace_back(s.scene_id, expert_trajectory(s));
                log.scene("keyframes", s.scene_id, elapsed_ms(t0), "ok");
            } catch (const Error& e) {
                log.scene("keyframes", s.scene_id, elapsed_ms(t0), "skipped", {{"reason", e.what()}});
            }
        }
        json result{{"seed", cfg.seed}};
        std::set<std::string> selected;
        if (!trajs.empty()) {
            const std::size_t k = std::min(cfg.selection.dynamics_k, trajs.size());
            const std::vector<std::string> dyn = select_dynamics(trajs, k, cfg.seed);
            result["dynamics"] = dyn;
            result["dynamics_k"] = k;
            selected.insert(dyn.begin(), dyn.end());
        } else {
            result["dynamics"] = json::array();
        }
        if (!cfg.paths.embeddings.empty()) {
            const std::vector<EmbeddingRecord> records = load_embeddings(cfg.paths.embeddings);
            const std::vector<std::string> sem = select_semantic(records, cfg.selection.fraction, cfg.seed);
            result["semantic"] = sem;
            result["fraction"] = cfg.selection.fraction;
            selected.insert(sem.begin(), sem.end());
        } else {
            result["semantic"] = json::array();
        }
        result["selected"] = selected;
        const fs::path p = output("keyframes.json");
        write(p, result.dump(2) + "\n");
        out << "wrote " << p.string() << " (" << selected.size() << " selected)\n";
        return 0;
    }

    int build_library() {
        const std::vector<Scene> all = scenes("build-library");
        std::vector<Trajectory> trajs;
        for (const Scene& s : all) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                trajs.push_back(expert_trajectory(s));
                log.scene("build-library", s.scene_id, elapsed_ms(t0), "ok");
            } catch (const Error& e) {
                log.scene("build-library", s.scene_id, elapsed_ms(t0), "skipped", {{"reason", e.what()}});
            }
        }
        if (trajs.empty()) throw ValidationError("scenes", "no scene has a full expert trajectory");
        const std::size_t k = std::min(cfg.library.k, trajs.size());
        if (k < cfg.library.k) log.event("build-library", "k_clamped", {{"requested", cfg.library.k}, {"k", k}});
        const ManeuverLibrary lib = cluster_trajectories(trajs, k, cfg.seed, cfg.rules);
        const fs::path p = cfg.library_path();
        write(p, dump_library(lib));
        out << "wrote " << p.string() << " (" << lib.entries.size() << " maneuvers)\n";
        return 0;
    }

    int simulate() {
        const std::vector<Scene> all = scenes("simulate");
        const ManeuverLibrary lib = *library("simulate", true);
        const std::vector<std::size_t> order = candidate_order(lib);
        std::vector<json> rows(all.size());
        parallel_for(all.size(), cfg.jobs, [&](std::size_t i) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::vector<Trajectory> cands = instantiate_candidates(all[i], lib, candidate_options());
            json list = json::array();
            for (std::size_t c = 0; c < cands.size(); ++c) {
                json jt = trajectory_to_json(cands[c]);
                jt["id"] = "cand_" + std::to_string(c);
                jt["library_index"] = order[c];
                jt["decision"] = lib.entries[order[c]].decision.to_string();
                list.push_back(jt);
            }
            rows[i] = {{"scene_id", all[i].scene_id}, {"candidates", list}};
            log.scene("simulate", all[i].scene_id, elapsed_ms(t0), "ok", {{"candidates", cands.size()}});
        });
        const fs::path p = output("candidates.jsonl");
        write(p, jsonl(rows));
        out << "wrote " << p.string() << " (" << rows.size() << " scenes)\n";
        return 0;
    }

    int check() {
        const std::vector<Scene> all = scenes("check");
        const std::vector<SceneAnalysis> analyses = analyze("check", all);
        std::vector<SceneVerdicts> verdicts;
        for (std::size_t i = 0; i < all.size(); ++i) verdicts.push_back(make_scene_verdicts(all[i], analyses[i]));
        const fs::path p = output("verdicts.jsonl");
        write(p, dump_verdicts_jsonl(verdicts));
        for (const SceneVerdicts& v : verdicts) {
            for (std::size_t t = 0; t < v.trajectories.size(); ++t) {
                out << v.scene_id << '\t' << v.trajectories[t].id << '\t'
                    << v.trajectories[t].verdict.decision.to_string() << '\t' << v.verdict_strings[t] << '\n';
            }
        }
        out << "wrote " << p.string() << " (" << verdicts.size() << " scenes)\n";
        return 0;
    }

    int attention() {
        const std::vector<Scene> all = scenes("attention");
        const std::vector<SceneAnalysis> analyses = analyze("attention", all);
        std::vector<json> rows;
        for (const SceneAnalysis& a : analyses) {
            json close = json::array();
            for (const CloseObject& c : a.close) {
                close.push_back({{"agent_id", c.agent_id}, {"min_distance", c.min_distance}, {"time_of_min", c.time_of_min}});
            }
            rows.push_back({{"scene_id", a.scene_id}, {"close", close}, {"tree", a.attention.render()}});
        }
        const fs::path p = output("attention.jsonl");
        write(p, jsonl(rows));
        out << "wrote " << p.string() << " (" << rows.size() << " scenes)\n";
        return 0;
    }

    int prompts() {
        const std::vector<Scene> all = scenes("prompts");
        const std::vector<SceneAnalysis> analyses = analyze("prompts", all);
        std::vector<json> rows;
        for (std::size_t i = 0; i < all.size(); ++i) {
            rows.push_back({{"scene_id", all[i].scene_id},
                            {"template_version", kTemplateVersion},
                            {"prompt", render_prompt(make_prompt_context(all[i], analyses[i]))}});
        }
        const fs::path p = output("prompts.jsonl");
        write(p, jsonl(rows));
        out << "wrote " << p.string() << " (" << rows.size() << " scenes)\n";
        return 0;
    }

    int generate() {
        const std::vector<Scene> all = scenes("generate");
        const std::vector<SceneAnalysis> analyses = analyze("generate", all);

        std::unique_ptr<LlmClient> http;
        std::unique_ptr<CachedLlmClient> cached;
        std::unique_ptr<QaBackend> backend;
        if (cfg.backend.kind == "template") {
            backend = std::make_unique<TemplateBackend>();
        } else if (cfg.backend.kind == "http") {
            http = std::make_unique<HttpLlmClient>(cfg.backend.http);
            LlmClient* client = http.get();
            if (!cfg.paths.cache.empty()) {
                cached = std::make_unique<CachedLlmClient>(*http, cfg.paths.cache);
                client = cached.get();
            }
            backend = std::make_unique<LlmBackend>(*client, cfg.backend.http.model, cfg.seed);
        } else {
            throw ValidationError("backend.kind", "must be template or http, got '" + cfg.backend.kind + "'");
        }

        GenerateOptions opts;
        opts.types = cfg.conversation_types;
        opts.regenerate_attempts = cfg.backend.regenerate_attempts;
        std::vector<GenerateResult> results(all.size());
        parallel_for(all.size(), cfg.jobs, [&](std::size_t i) {
            const auto t0 = std::chrono::steady_clock::now();
            results[i] = generate_qa(make_prompt_context(all[i], analyses[i]), analyses[i], *backend, opts);
            log.scene("generate", all[i].scene_id, elapsed_ms(t0), results[i].errors.empty() ? "ok" : "partial",
                      {{"items", results[i].items.size()}, {"errors", results[i].errors.size()}});
        });

        std::vector<QAItem> items;
        std::vector<json> errors;
        for (GenerateResult& r : results) {
            std::move(r.items.begin(), r.items.end(), std::back_inserter(items));
            for (const GenerationError& e : r.errors) errors.push_back({{"item_id", e.item_id}, {"message", e.message}});
        }
        const fs::path p = output("qa.jsonl");
        write(p, dump_qa_jsonl(items));
        const fs::path ep = output("qa_errors.jsonl");
        if (!errors.empty()) {
            write(ep, jsonl(errors));
        } else if (fs::exists(ep)) {
            fs::remove(ep);
        }
        if (cached) log.event("generate", "cache", {{"hits", cached->hits()}, {"misses", cached->misses()}});
        out << "wrote " << p.string() << " (" << items.size() << " items, " << errors.size() << " errors)\n";
        return errors.empty() ? 0 : 1;
    }

    int evaluate(const fs::path& pred, const fs::path& answers, const fs::path& refs, bool allow_undefined) {
        json report = json::object();
        bool undefined = false;
        std::ostringstream text;

        if (!pred.empty()) {
            const std::vector<Scene> all = scenes("evaluate");
            std::map<std::string, const Scene*, std::less<>> by_id;
            for (const Scene& s : all) by_id[s.scene_id] = &s;
            std::vector<PlanningSample> samples;
            for (Prediction& p : load_predictions(pred)) {
                const auto it = by_id.find(p.scene_id);
                if (it == by_id.end()) throw ValidationError("pred", "unknown scene_id '" + p.scene_id + "'");
                samples.push_back({it->second, std::move(p.trajectory)});
            }
            std::sort(samples.begin(), samples.end(),
                      [](const PlanningSample& a, const PlanningSample& b) { return a.scene->scene_id < b.scene->scene_id; });
            if (samples.empty()) {
                undefined = true;
                report["open_loop"] = nullptr;
                text << "open-loop: no samples\n";
            } else {
                const OpenLoopReport r = evaluate_open_loop(samples, cfg.rules);
                const auto hv = [](const HorizonValues& v) {
                    return json{{"1s", v.at[0]}, {"2s", v.at[1]}, {"3s", v.at[2]}, {"avg", v.avg()}};
                };
                report["open_loop"] = {{"samples", r.samples},
                                       {"l2", hv(r.l2)},
                                       {"collision", hv(r.collision)},
                                       {"intersection", hv(r.intersection)}};
                for (const HorizonValues* v : {&r.l2, &r.collision, &r.intersection}) {
                    for (double x : v->at) undefined = undefined || !std::isfinite(x);
                }
                text << r.table();
            }
        }

        if (!answers.empty()) {
            const std::vector<QAItem> ans = load_qa(answers);
            std::map<std::string, QAItem> ref;
            for (QAItem& q : load_qa(refs.empty() ? answers : refs)) ref.emplace(q.id, std::move(q));
            std::vector<std::string> cf_answers;
            std::vector<CategorySet> cf_truth;
            std::map<std::string, std::string> candidates;
            std::map<std::string, std::vector<std::string>> references;
            for (const QAItem& a : ans) {
                const auto it = ref.find(a.id);
                if (it == ref.end()) throw ValidationError("qa", "no reference for item '" + a.id + "'");
                const QAItem& r = it->second;
                const std::string& answer_text = a.edited_answer ? *a.edited_answer : a.answer;
                if (r.type == ConversationType::Counterfactual) {
                    if (!r.categories) throw ValidationError("qa", "reference '" + r.id + "' has no categories");
                    cf_answers.push_back(answer_text);
                    cf_truth.push_back(*r.categories);
                }
                candidates[a.id] = answer_text;
                references[a.id] = {r.edited_answer ? *r.edited_answer : r.answer};
            }
            json cf = json::object();
            const CounterfactualPR pr = counterfactual_pr(cf_answers, cf_truth);
            const auto counts = [&](const CategoryCounts& c) {
                const auto p = c.precision(), rc = c.recall();
                const bool present = c.tp + c.fp + c.fn > 0;
                if (present && (!p || !rc)) undefined = true;
                return json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
                            {"precision", p ? json(*p) : json(nullptr)}, {"recall", rc ? json(*rc) : json(nullptr)},
                            {"present", present}};
            };
            for (const auto& [cat, c] : pr.per_category) cf[to_string(cat)] = counts(c);
            cf["micro"] = counts(pr.micro);
            cf["samples"] = cf_answers.size();
            if (cf_answers.empty()) undefined = true;
            report["counterfactual"] = cf;
            text << "counterfactual (" << cf_answers.size() << " answers)\n";
            for (const auto& [cat, c] : pr.per_category) {
                const auto p = c.precision(), rc = c.recall();
                text << "  " << std::left << std::setw(14) << to_string(cat) << " P="
                     << (p ? std::to_string(*p * 100.0).substr(0, 6) + "%" : std::string("undefined")) << " R="
                     << (rc ? std::to_string(*rc * 100.0).substr(0, 6) + "%" : std::string("undefined")) << '\n';
            }
            if (!candidates.empty()) {
                const CiderResult c = cider(candidates, references);
                report["cider"] = {{"mean", c.mean}, {"items", c.per_id.size()}};
                text << "CIDEr " << std::fixed << std::setprecision(4) << c.mean << '\n';
            }
        }
        if (pred.empty() && answers.empty()) throw ValidationError("evaluate", "nothing to evaluate (give --pred and/or --qa)");

        report["undefined"] = undefined;
        const fs::path p = output("eval.json");
        write(p, report.dump(2) + "\n");
        out << text.str();
        out << "wrote " << p.string() << '\n';
        if (undefined && !allow_undefined) {
            err << "error: undefined aggregates in report (pass --allow-undefined to accept)\n";
            return 1;
        }
        return 0;
    }

    ServiceConfig service_config(const fs::path& log_path) const {
        ServiceConfig sc;
        sc.scenes = cfg.paths.scenes;
        sc.verdicts = output("verdicts.jsonl");
        sc.qa = output("qa.jsonl");
        sc.log = log_path.empty() ? output("reviews.log") : log_path;
        return sc;
    }

    int serve(ServiceConfig sc) {
        // SIGINT/SIGTERM are taken synchronously by a watcher thread.
        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &set, nullptr);
        ReviewService svc(sc);
        std::thread watcher([&svc, set] {
            int sig = 0;
            sigwait(&set, &sig);
            svc.stop();
        });
        watcher.detach();
        std::thread announce([&] {
            svc.wait_until_ready();
            out << "serving on http://" << sc.bind << ":" << svc.bound_port() << std::endl;
        });
        svc.serve();
        announce.join();
        return 0;
    }

    int export_review(const fs::path& dest, const fs::path& log_path) {
        const fs::path qa = output("qa.jsonl");
        ReviewStore store(load_qa(qa), log_path.empty() ? output("reviews.log") : log_path);
        const fs::path p = dest.empty() ? output("reviewed.jsonl") : dest;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        const ExportSummary s = store.export_reviewed(p);
        if (s.all_pending) err << "warning: no item has been reviewed; export is empty\n";
        out << "wrote " << p.string() << " (" << s.exported << " items), gaps in " << s.gaps_path.string() << '\n';
        return 0;
    }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Counterfactual driving-scene pipeline", "cfdrive"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, scenes, output, library, embeddings, keyframes, cache, backend;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    bool quiet = false;
    app.add_option("--config", config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
    auto* o_scenes = app.add_option("--scenes", scenes, "Scene directory or file");
    auto* o_out = app.add_option("--out", output, "Output directory");
    auto* o_lib = app.add_option("--library", library, "Maneuver library file");
    auto* o_emb = app.add_option("--embeddings", embeddings, "Embedding file for semantic selection");
    auto* o_kf = app.add_option("--keyframes", keyframes, "Restrict to scenes selected in this keyframes file");
    auto* o_cache = app.add_option("--cache", cache, "LLM response cache directory");
    auto* o_seed = app.add_option("--seed", seed, "Seed for every stochastic step");
    auto* o_jobs = app.add_option("--jobs,-j", jobs, "Scenes processed in parallel")->check(CLI::PositiveNumber);
    app.add_flag("--quiet,-q", quiet, "Suppress per-scene log lines");

    auto* validate = app.add_subcommand("validate", "Load and validate scene files");
    std::string validate_path;
    validate->add_option("path", validate_path, "Scene directory or file");

    auto* kf = app.add_subcommand("keyframes", "Select key frames by embeddings and trajectory clusters");
    double fraction = 0;
    std::size_t dyn_k = 0;
    auto* o_fraction = kf->add_option("--fraction", fraction, "Semantic selection fraction")->check(CLI::Range(1e-9, 1.0));
    auto* o_dyn_k = kf->add_option("--dynamics-k", dyn_k, "Trajectory clusters")->check(CLI::PositiveNumber);

    auto* build = app.add_subcommand("build-library", "Cluster expert trajectories into a maneuver library");
    std::size_t lib_k = 0;
    auto* o_lib_k = build->add_option("--k", lib_k, "Number of maneuvers")->check(CLI::PositiveNumber);

    std::size_t limit = 0;
    bool speed_align = false;
    std::vector<CLI::Option*> limit_opts, align_opts;
    auto* simulate = app.add_subcommand("simulate", "Instantiate library maneuvers in each scene");
    auto* check = app.add_subcommand("check", "Run the checklist on expert and candidate trajectories");
    auto* attention = app.add_subcommand("attention", "Find close objects and build the attention tree");
    auto* prompts = app.add_subcommand("prompts", "Render generation prompts");
    auto* generate = app.add_subcommand("generate", "Generate QA items");
    for (CLI::App* sub : {simulate, check, attention, prompts, generate}) {
        limit_opts.push_back(sub->add_option("--limit", limit, "Candidates per scene"));
        align_opts.push_back(sub->add_flag("--speed-align", speed_align, "Scale candidates to the ego speed"));
    }
    auto* o_backend = generate->add_option("--backend", backend, "template or http")
                          ->check(CLI::IsMember({"template", "http"}));

    auto* evaluate = app.add_subcommand("evaluate", "Open-loop planning and QA metrics");
    std::string pred, answers, refs;
    bool allow_undefined = false;
    evaluate->add_option("--pred", pred, "Predicted trajectories (JSONL)")->check(CLI::ExistingFile);
    evaluate->add_option("--qa", answers, "Answers to score (QA JSONL)")->check(CLI::ExistingFile);
    evaluate->add_option("--ref", refs, "Reference QA (defaults to --qa)")->check(CLI::ExistingFile);
    evaluate->add_flag("--allow-undefined", allow_undefined, "Exit 0 even when an aggregate is undefined");

    auto* serve = app.add_subcommand("serve", "Serve scenes, verdicts and QA for review");
    int port = 8080;
    std::string bind = "127.0.0.1", static_dir, log_path, cors = "*";
    serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--bind", bind, "Bind address");
    serve->add_option("--static", static_dir, "Built review UI bundle served under /");
    serve->add_option("--review-log", log_path, "Review log (default <out>/reviews.log)");
    serve->add_option("--cors-origin", cors, "Access-Control-Allow-Origin value");

    auto* exp = app.add_subcommand("export-review", "Export accepted and edited QA items");
    std::string export_path;
    exp->add_option("--dest", export_path, "Export file (default <out>/reviewed.jsonl)");
    exp->add_option("--review-log", log_path, "Review log (default <out>/reviews.log)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
        if (o_scenes->count()) cfg.paths.scenes = scenes;
        if (o_out->count()) cfg.paths.output = output;
        if (o_lib->count()) cfg.paths.library = library;
        if (o_emb->count()) cfg.paths.embeddings = embeddings;
        if (o_kf->count()) cfg.paths.keyframes = keyframes;
        if (o_cache->count()) cfg.paths.cache = cache;
        if (o_seed->count()) cfg.seed = seed;
        if (o_jobs->count()) cfg.jobs = jobs;
        if (o_fraction->count()) cfg.selection.fraction = fraction;
        if (o_dyn_k->count()) cfg.selection.dynamics_k = dyn_k;
        if (o_lib_k->count()) cfg.library.k = lib_k;
        for (auto* o : limit_opts) if (o->count()) cfg.library.limit = limit;
        for (auto* o : align_opts) if (o->count()) cfg.library.speed_align = speed_align;
        if (o_backend->count()) cfg.backend.kind = backend;
        if (cfg.jobs == 0) throw ValidationError("jobs", "must be at least 1");
        if (!(cfg.selection.fraction > 0 && cfg.selection.fraction <= 1)) {
            throw ValidationError("selection.fraction", "must be in (0, 1]");
        }
        cfg.rules.validate(kDefaultPeriod);

        Runner run(std::move(cfg), out, err, quiet);
        if (*validate) return run.validate(validate_path.empty() ? run.cfg.paths.scenes : fs::path(validate_path));
        if (*kf) return run.keyframes();
        if (*build) return run.build_library();
        if (*simulate) return run.simulate();
        if (*check) return run.check();
        if (*attention) return run.attention();
        if (*prompts) return run.prompts();
        if (*generate) return run.generate();
        if (*evaluate) return run.evaluate(pred, answers, refs, allow_undefined);
        if (*serve) {
            ServiceConfig sc = run.service_config(log_path);
            sc.bind = bind;
            sc.port = port;
            sc.static_dir = static_dir;
            sc.cors_origin = cors;
            return run.serve(sc);
        }
        if (*exp) return run.export_review(export_path, log_path);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"cfdrive"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cfdrive
