#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdrive/keyframe.hpp"
#include "cfdrive/llm.hpp"
#include "cfdrive/maneuver.hpp"
#include "cfdrive/promptqa.hpp"
#include "cfdrive/rule_config.hpp"

namespace cfdrive {

struct PipelinePaths {
    std::filesystem::path scenes;
    std::filesystem::path embeddings;
    std::filesystem::path library;    // defaults to <output>/library.json
    std::filesystem::path keyframes;  // selection file; restricts scenes when set
    std::filesystem::path output{"out"};
    std::filesystem::path cache;      // LLM response cache
};

struct SelectionConfig {
    double fraction{0.2};
    std::size_t dynamics_k{kDefaultDynamicsClusters};
};

struct LibraryConfig {
    std::size_t k{kDefaultDynamicsClusters};
    std::size_t limit{static_cast<std::size_t>(-1)};
    bool speed_align{false};
};

struct BackendConfig {
    std::string kind{"template"};  // template | http
    HttpLlmConfig http;
    int regenerate_attempts{1};
};

struct PipelineConfig {
    PipelinePaths paths;
    RuleConfig rules;
    SelectionConfig selection;
    LibraryConfig library;
    BackendConfig backend;
    std::vector<ConversationType> conversation_types{kAllConversationTypes.begin(), kAllConversationTypes.end()};
    std::uint64_t seed{0};
    std::size_t jobs{1};

    [[nodiscard]] std::filesystem::path library_path() const;
};

/// Unknown keys are rejected (ValidationError naming the key path).
[[nodiscard]] PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const PipelineConfig& config);
[[nodiscard]] PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cfdrive
