#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdrive/attention.hpp"
#include "cfdrive/checklist.hpp"
#include "cfdrive/llm.hpp"
#include "cfdrive/metrics.hpp"
#include "cfdrive/scene.hpp"
#include "cfdrive/trajectory.hpp"

namespace cfdrive {

inline constexpr const char* kTemplateVersion = "tmpl-v1";

// ---------------------------------------------------------------------------
// Trajectory text

/// "[PT, (+x.xx, +y.yy), ...]" with 2 decimals, explicit signs, comma-space separators.
[[nodiscard]] std::string serialize_trajectory(const Trajectory& traj);
/// Keeps the first `head` and last `tail` points with ", ..., " between them when elided.
[[nodiscard]] std::string serialize_trajectory_elided(const Trajectory& traj, std::size_t head = 2,
                                                      std::size_t tail = 1);

enum class ParseMode { Strict, Lenient };

/// Inverse of serialize_trajectory. Strict mode requires the exact spacing of the serializer;
/// lenient mode accepts any whitespace between tokens. Throws ParseError with a 1-based offset.
[[nodiscard]] Trajectory parse_trajectory(std::string_view text, ParseMode mode = ParseMode::Strict,
                                          double period = kDefaultPeriod);

/// First "[PT ...]" span in free text, parsed leniently. Empty when absent or malformed.
[[nodiscard]] std::optional<Trajectory> find_trajectory(std::string_view text, double period = kDefaultPeriod);

// ---------------------------------------------------------------------------
// Prompt context

struct SimulatedBlock {
    std::string decision;
    std::string trajectory;  // serialized
    std::string verdict;     // verdict_string()
};

struct ExpertBlock {
    std::string decision;
    std::string trajectory;
    std::string attention;  // AttentionTree::render()
};

struct PromptContext {
    std::optional<std::string> caption;
    std::vector<SimulatedBlock> simulated;
    ExpertBlock expert;
};

[[nodiscard]] std::string render_prompt(const PromptContext& ctx);

// ---------------------------------------------------------------------------
// Everything generation needs for one scene

struct EvaluatedTrajectory {
    std::string id;
    Trajectory trajectory;
    CounterfactualVerdict verdict;
};

struct SceneAnalysis {
    std::string scene_id;
    std::optional<std::string> caption;
    EvaluatedTrajectory expert;
    std::vector<EvaluatedTrajectory> simulated;
    std::vector<CloseObject> close;
    AttentionTree attention;
    std::vector<std::pair<std::string, std::string>> categories;  // agent id -> category
    std::size_t lane_count{0};
};

/// Runs the checklist on the expert and each candidate, finds close objects, builds the tree.
[[nodiscard]] SceneAnalysis analyze_scene(const Scene& scene, const std::vector<Trajectory>& candidates,
                                          const RuleConfig& config = {});

[[nodiscard]] PromptContext make_prompt_context(const Scene& scene, const SceneAnalysis& analysis);

// ---------------------------------------------------------------------------
// QA items

enum class ConversationType { SceneDescription, Attention, Counterfactual, Planning, General };

inline constexpr std::array<ConversationType, 5> kAllConversationTypes{
    ConversationType::SceneDescription, ConversationType::Attention, ConversationType::Counterfactual,
    ConversationType::Planning, ConversationType::General};

[[nodiscard]] const char* to_string(ConversationType t) noexcept;
[[nodiscard]] ConversationType parse_conversation_type(std::string_view s);

enum class ReviewState { Pending, Accepted, Rejected, Edited };
[[nodiscard]] const char* to_string(ReviewState s) noexcept;
[[nodiscard]] ReviewState parse_review_state(std::string_view s);

struct Provenance {
    std::string scene_id;
    std::vector<std::string> trajectory_ids;
    std::string backend;
    std::string template_version{kTemplateVersion};
};

struct QAItem {
    std::string id;  // "<scene>/<type>/<n>"
    ConversationType type{ConversationType::General};
    std::string question;
    std::string answer;
    Provenance provenance;
    ReviewState review_state{ReviewState::Pending};
    std::optional<std::string> edited_answer;
    /// Ground-truth verdict categories for Counterfactual items.
    std::optional<CategorySet> categories;
};

[[nodiscard]] nlohmann::json to_json(const QAItem& item);
[[nodiscard]] QAItem qa_from_json(const nlohmann::json& j);
/// One compact JSON object per line.
[[nodiscard]] std::string dump_qa_jsonl(const std::vector<QAItem>& items);
[[nodiscard]] std::vector<QAItem> parse_qa_jsonl(std::string_view text);
[[nodiscard]] std::vector<QAItem> load_qa(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Backends

/// One question to answer, with the structured facts behind it.
struct QaTask {
    ConversationType type;
    std::string question;
    std::vector<ChatMessage> messages;      // prompt for text backends
    const SceneAnalysis* analysis{nullptr};
    const EvaluatedTrajectory* subject{nullptr};  // Counterfactual only
    int attempt{0};                               // regeneration round
};

class QaBackend {
public:
    virtual ~QaBackend() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual std::string answer(const QaTask& task) = 0;
};

/// Deterministic fixed-phrase answers built from the structured facts.
class TemplateBackend final : public QaBackend {
public:
    [[nodiscard]] std::string name() const override { return "template"; }
    [[nodiscard]] std::string answer(const QaTask& task) override;
};

/// Sends the task messages to an LLM client.
class LlmBackend final : public QaBackend {
public:
    LlmBackend(LlmClient& client, std::string model, std::uint64_t seed = 0)
        : client_(client), model_(std::move(model)), seed_(seed) {}
    [[nodiscard]] std::string name() const override { return "llm:" + model_; }
    [[nodiscard]] std::string answer(const QaTask& task) override;

private:
    LlmClient& client_;
    std::string model_;
    std::uint64_t seed_;
};

struct GenerateOptions {
    std::vector<ConversationType> types{kAllConversationTypes.begin(), kAllConversationTypes.end()};
    /// Extra backend attempts when a Counterfactual answer misses a verdict keyword.
    int regenerate_attempts{1};
};

struct GenerationError {
    std::string item_id;
    std::string message;
};

struct GenerateResult {
    std::vector<QAItem> items;
    std::vector<GenerationError> errors;
};

[[nodiscard]] GenerateResult generate_qa(const PromptContext& ctx, const SceneAnalysis& analysis, QaBackend& backend,
                                         const GenerateOptions& options = {});

/// Question wording for a counterfactual about `decision`, e.g. "accelerate and make a left turn".
[[nodiscard]] std::string decision_phrase(const HighLevelDecision& decision);

}  // namespace cfdrive
