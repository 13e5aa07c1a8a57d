#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdrive/promptqa.hpp"

namespace cfdrive {

/// Checklist output for one scene: the expert first, then simulated candidates.
struct SceneVerdicts {
    std::string scene_id;
    std::vector<EvaluatedTrajectory> trajectories;
    std::vector<std::string> verdict_strings;  // verdict_string() per trajectory
};

[[nodiscard]] SceneVerdicts make_scene_verdicts(const Scene& scene, const SceneAnalysis& analysis);

[[nodiscard]] nlohmann::json to_json(const Violation& v);
[[nodiscard]] Violation violation_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const HighLevelDecision& d);
[[nodiscard]] HighLevelDecision decision_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json trajectory_to_json(const Trajectory& t);
[[nodiscard]] Trajectory trajectory_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const SceneVerdicts& v);
[[nodiscard]] SceneVerdicts scene_verdicts_from_json(const nlohmann::json& j);

/// One compact JSON object per scene per line.
[[nodiscard]] std::string dump_verdicts_jsonl(const std::vector<SceneVerdicts>& all);
[[nodiscard]] std::vector<SceneVerdicts> parse_verdicts_jsonl(std::string_view text);
[[nodiscard]] std::vector<SceneVerdicts> load_verdicts(const std::filesystem::path& path);

/// Predicted trajectories for `evaluate --pred`: {"scene_id": ..., "waypoints": [[x, y], ...], "period": p} per line.
struct Prediction {
    std::string scene_id;
    Trajectory trajectory;
};
[[nodiscard]] std::vector<Prediction> load_predictions(const std::filesystem::path& path);
[[nodiscard]] std::string dump_predictions_jsonl(const std::vector<Prediction>& preds);

[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

}  // namespace cfdrive
