#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfdrive/checklist.hpp"
#include "cfdrive/rule_config.hpp"
#include "cfdrive/scene.hpp"
#include "cfdrive/trajectory.hpp"

namespace cfdrive {

// ---------------------------------------------------------------------------
// Open-loop planning

inline constexpr std::array<double, 3> kMetricHorizons{1.0, 2.0, 3.0};

/// Per-horizon values at 1 s, 2 s, 3 s plus their mean.
struct HorizonValues {
    std::array<double, 3> at{0.0, 0.0, 0.0};
    [[nodiscard]] double avg() const noexcept { return (at[0] + at[1] + at[2]) / 3.0; }
};

/// Distance at the waypoint nearest each horizon time (endpoint convention, not cumulative).
/// Throws std::invalid_argument when periods differ or a horizon is not covered.
[[nodiscard]] HorizonValues l2_at_horizons(const Trajectory& pred, const Trajectory& gt);

struct PlanningSample {
    const Scene* scene{nullptr};
    Trajectory pred;
};

/// Percentage of samples whose check_collision result has a violation at or before each horizon.
[[nodiscard]] HorizonValues collision_rate(const std::vector<PlanningSample>& samples, const RuleConfig& config = {});
/// Same, using check_drivable.
[[nodiscard]] HorizonValues intersection_rate(const std::vector<PlanningSample>& samples,
                                              const RuleConfig& config = {});

struct OpenLoopReport {
    HorizonValues l2;
    HorizonValues collision;
    HorizonValues intersection;
    std::size_t samples{0};

    /// Plain-text table with the L2 (m) / Collision (%) / Intersection (%) column groups.
    [[nodiscard]] std::string table() const;
};

/// L2 is averaged over samples against each scene's expert trajectory.
[[nodiscard]] OpenLoopReport evaluate_open_loop(const std::vector<PlanningSample>& samples,
                                                const RuleConfig& config = {});

// ---------------------------------------------------------------------------
// Counterfactual keywords

enum class Category { Safety, Collision, RedLight, DrivableArea };
using CategorySet = std::set<Category>;

inline constexpr std::array<Category, 4> kAllCategories{Category::Safety, Category::Collision, Category::RedLight,
                                                        Category::DrivableArea};

[[nodiscard]] const char* to_string(Category c) noexcept;
/// The phrase used in generated text: "safety", "collision", "running a red light", "out of the drivable area".
[[nodiscard]] const char* keyword_phrase(Category c) noexcept;
[[nodiscard]] Category parse_category(std::string_view s);

/// {Safety} for a safe verdict, otherwise the violated categories.
[[nodiscard]] CategorySet verdict_categories(const CounterfactualVerdict& verdict);

/// Case-insensitive synonym matcher over word tokens. Safety words preceded by a
/// negation ("not", "never", "n't", "no") within two tokens are ignored.
[[nodiscard]] CategorySet extract_keywords(std::string_view answer);

/// Comma-separated keyword phrases, in category order.
[[nodiscard]] std::string render_categories(const CategorySet& set);

struct CategoryCounts {
    std::size_t tp{0};
    std::size_t fp{0};
    std::size_t fn{0};
    /// Empty when undefined (no positives predicted / none in ground truth).
    [[nodiscard]] std::optional<double> precision() const noexcept;
    [[nodiscard]] std::optional<double> recall() const noexcept;
};

struct CounterfactualPR {
    std::map<Category, CategoryCounts> per_category;
    CategoryCounts micro;
};

[[nodiscard]] CounterfactualPR counterfactual_pr(const std::vector<CategorySet>& preds,
                                                 const std::vector<CategorySet>& gts);
[[nodiscard]] CounterfactualPR counterfactual_pr(const std::vector<std::string>& answers,
                                                 const std::vector<CategorySet>& gts);

// ---------------------------------------------------------------------------
// Language

/// Lowercased alphanumeric runs; everything else separates tokens. No stemming.
[[nodiscard]] std::vector<std::string> tokenize(std::string_view text);

struct CiderResult {
    std::map<std::string, double> per_id;
    double mean{0};
};

/// TF-IDF n-gram (1..4) cosine similarity averaged over n and references, times 10.
/// Document frequencies and the corpus size come from `references`. Every candidate id
/// must have references.
[[nodiscard]] CiderResult cider(const std::map<std::string, std::string>& candidates,
                                const std::map<std::string, std::vector<std::string>>& references);

/// 0.4 * gpt + 0.2 * (language + match + accuracy).
[[nodiscard]] double composite_score(double gpt, double language, double match, double accuracy) noexcept;

}  // namespace cfdrive
