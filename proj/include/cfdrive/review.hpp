#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdrive/promptqa.hpp"
#include "cfdrive/records.hpp"
#include "cfdrive/scene.hpp"

namespace cfdrive {

enum class ReviewVerdict { Accept, Reject, Edit };
[[nodiscard]] const char* to_string(ReviewVerdict v) noexcept;

struct ReviewDecision {
    std::string item_id;
    int revision{0};
    ReviewVerdict verdict{ReviewVerdict::Accept};
    std::string edit_text;  // Edit only
    std::vector<std::string> gap_tags;
    std::string note;
    std::string reviewer;
    std::string timestamp;  // ISO 8601 UTC, set by the service
};

struct FieldError {
    std::string field;
    std::string message;
};

[[nodiscard]] nlohmann::json to_json(const ReviewDecision& d);
/// Collects every field problem instead of stopping at the first.
[[nodiscard]] std::optional<ReviewDecision> parse_review_decision(const nlohmann::json& j,
                                                                  std::vector<FieldError>& errors);

struct ReviewStats {
    std::size_t total{0};
    std::size_t pending{0};
    std::size_t accepted{0};
    std::size_t rejected{0};
    std::size_t edited{0};
    std::map<std::string, std::size_t> gap_tags;  // over each item's latest decision
    [[nodiscard]] nlohmann::json to_json() const;
    friend bool operator==(const ReviewStats&, const ReviewStats&) = default;
};

enum class SubmitStatus { Ok, UnknownItem, Conflict };

struct SubmitResult {
    SubmitStatus status{SubmitStatus::Ok};
    int current_revision{0};
};

struct ExportSummary {
    std::size_t exported{0};
    bool all_pending{false};
    std::filesystem::path gaps_path;
};

/// QA items plus an append-only decision log. State is a fold over the log; a decision
/// is durable (fsync) before submit() returns. Safe for concurrent callers.
class ReviewStore {
public:
    ReviewStore(std::vector<QAItem> items, std::filesystem::path log_path);

    [[nodiscard]] SubmitResult submit(ReviewDecision decision);

    [[nodiscard]] std::vector<QAItem> items() const;
    [[nodiscard]] std::vector<QAItem> items_for_scene(std::string_view scene_id) const;
    [[nodiscard]] int revision(std::string_view item_id) const;
    [[nodiscard]] ReviewStats stats() const;
    [[nodiscard]] ReviewStats stats_for_scene(std::string_view scene_id) const;

    /// Accepted and edited items (edits applied) as QA JSONL at `path`, plus `<path>.gaps.json`
    /// with the gap-tag histogram and tagged item ids. Output is deterministic.
    ExportSummary export_reviewed(const std::filesystem::path& path) const;

private:
    struct ItemState {
        int revision{0};
        std::optional<ReviewDecision> latest;
    };

    void apply(const ReviewDecision& d);
    void replay();
    [[nodiscard]] QAItem materialize(std::size_t index) const;
    [[nodiscard]] ReviewStats stats_where(std::string_view scene_id) const;

    std::vector<QAItem> items_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<ItemState> state_;
    std::filesystem::path log_path_;
    mutable std::shared_mutex mutex_;
};

struct ServiceConfig {
    std::string bind{"127.0.0.1"};
    int port{8080};
    std::filesystem::path scenes;    // directory or single scene file
    std::filesystem::path verdicts;  // verdict JSONL from `check`
    std::filesystem::path qa;        // QA JSONL from `generate`
    std::filesystem::path log;       // review log (created when missing)
    std::filesystem::path static_dir;
    std::string cors_origin{"*"};
};

struct HttpReply {
    int status{200};
    nlohmann::json body;
};

/// Endpoint logic independent of the HTTP layer.
class ReviewService {
public:
    explicit ReviewService(const ServiceConfig& config);

    [[nodiscard]] HttpReply list_scenes() const;
    [[nodiscard]] HttpReply scene_payload(const std::string& scene_id) const;
    [[nodiscard]] HttpReply scene_qa(const std::string& scene_id) const;
    [[nodiscard]] HttpReply post_review(std::string_view body, const std::string& reviewer_header);
    [[nodiscard]] HttpReply stats() const;

    [[nodiscard]] ReviewStore& store() noexcept { return *store_; }

    /// Blocks serving HTTP until stop() is called. port 0 picks a free port (see bound_port()).
    void serve();
    void stop();
    [[nodiscard]] int bound_port() const noexcept { return bound_port_.load(); }
    /// Waits until the listener is accepting connections.
    void wait_until_ready() const;

private:
    ServiceConfig config_;
    std::vector<Scene> scenes_;
    std::map<std::string, SceneVerdicts, std::less<>> verdicts_;
    std::unique_ptr<ReviewStore> store_;
    struct Http;
    std::shared_ptr<Http> http_;
    std::atomic<int> bound_port_{0};
};

[[nodiscard]] std::string utc_timestamp();

}  // namespace cfdrive
