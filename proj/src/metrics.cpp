#include "cfdrive/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cfdrive/error.hpp"

namespace cfdrive {

namespace {

const Waypoint& nearest_waypoint(const Trajectory& traj, double t) {
    const auto wps = traj.waypoints();
    const Waypoint* best = nullptr;
    for (const Waypoint& w : wps) {
        if (!best || std::abs(w.t - t) < std::abs(best->t - t)) best = &w;
    }
    if (!best || std::abs(best->t - t) > 0.5 * traj.period() + kTimeEps) {
        throw std::invalid_argument("trajectory does not cover t=" + std::to_string(t));
    }
    return *best;
}

template <typename Check>
HorizonValues violation_rate(const std::vector<PlanningSample>& samples, const RuleConfig& cfg, Check&& check) {
    HorizonValues out;
    if (samples.empty()) return out;
    std::array<std::size_t, 3> hits{0, 0, 0};
    for (const PlanningSample& s : samples) {
        if (!s.scene) throw std::invalid_argument("planning sample without scene");
        const std::vector<Violation> v = check(*s.scene, s.pred, cfg);
        if (v.empty()) continue;
        const double first = std::min_element(v.begin(), v.end(), [](const Violation& a, const Violation& b) {
                                 return a.time < b.time;
                             })->time;
        for (std::size_t h = 0; h < 3; ++h) {
            if (first <= kMetricHorizons[h] + kTimeEps) ++hits[h];
        }
    }
    for (std::size_t h = 0; h < 3; ++h) out.at[h] = 100.0 * static_cast<double>(hits[h]) / samples.size();
    return out;
}

}  // namespace

HorizonValues l2_at_horizons(const Trajectory& pred, const Trajectory& gt) {
    if (std::abs(pred.period() - gt.period()) > kTimeEps) {
        throw std::invalid_argument("l2_at_horizons: trajectories have different periods");
    }
    HorizonValues out;
    for (std::size_t h = 0; h < 3; ++h) {
        const Waypoint& p = nearest_waypoint(pred, kMetricHorizons[h]);
        const Waypoint& g = nearest_waypoint(gt, kMetricHorizons[h]);
        out.at[h] = distance(p.position(), g.position());
    }
    return out;
}

HorizonValues collision_rate(const std::vector<PlanningSample>& samples, const RuleConfig& cfg) {
    return violation_rate(samples, cfg, [](const Scene& s, const Trajectory& t, const RuleConfig& c) {
        return check_collision(s, t, c);
    });
}

HorizonValues intersection_rate(const std::vector<PlanningSample>& samples, const RuleConfig& cfg) {
    return violation_rate(samples, cfg, [](const Scene& s, const Trajectory& t, const RuleConfig& c) {
        return check_drivable(s, t, c);
    });
}

OpenLoopReport evaluate_open_loop(const std::vector<PlanningSample>& samples, const RuleConfig& cfg) {
    OpenLoopReport r;
    r.samples = samples.size();
    if (samples.empty()) return r;
    for (const PlanningSample& s : samples) {
        if (!s.scene) throw std::invalid_argument("planning sample without scene");
        const Trajectory gt = expert_trajectory(*s.scene, s.pred.horizon(), s.pred.period());
        const HorizonValues l2 = l2_at_horizons(s.pred, gt);
        for (std::size_t h = 0; h < 3; ++h) r.l2.at[h] += l2.at[h];
    }
    for (double& v : r.l2.at) v /= static_cast<double>(samples.size());
    r.collision = collision_rate(samples, cfg);
    r.intersection = intersection_rate(samples, cfg);
    return r;
}

std::string OpenLoopReport::table() const {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-28s| %-28s| %-28s\n", "L2 (m)", "Collision (%)", "Intersection (%)");
    out += buf;
    std::string head;
    for (int g = 0; g < 3; ++g) {
        std::snprintf(buf, sizeof buf, "%6s %6s %6s %6s | ", "1s", "2s", "3s", "Avg.");
        head += buf;
    }
    head.resize(head.size() - 3);
    out += head + "\n";
    std::string row;
    for (const HorizonValues* v : {&l2, &collision, &intersection}) {
        std::snprintf(buf, sizeof buf, "%6.2f %6.2f %6.2f %6.2f | ", v->at[0], v->at[1], v->at[2], v->avg());
        row += buf;
    }
    row.resize(row.size() - 3);
    out += row + "\n";
    return out;
}

// ---------------------------------------------------------------------------

const char* to_string(Category c) noexcept {
    switch (c) {
        case Category::Safety: return "safety";
        case Category::Collision: return "collision";
        case Category::RedLight: return "red_light";
        case Category::DrivableArea: return "drivable_area";
    }
    return "?";
}

const char* keyword_phrase(Category c) noexcept {
    switch (c) {
        case Category::Safety: return "safety";
        case Category::Collision: return "collision";
        case Category::RedLight: return "running a red light";
        case Category::DrivableArea: return "out of the drivable area";
    }
    return "?";
}

Category parse_category(std::string_view s) {
    for (Category c : kAllCategories) {
        if (s == to_string(c)) return c;
    }
    throw ParseError("unknown category '" + std::string(s) + "'");
}

CategorySet verdict_categories(const CounterfactualVerdict& verdict) {
    if (verdict.safe) return {Category::Safety};
    CategorySet out;
    for (const Violation& v : verdict.violations) {
        switch (v.kind) {
            case ViolationKind::Collision: out.insert(Category::Collision); break;
            case ViolationKind::RedLight: out.insert(Category::RedLight); break;
            case ViolationKind::OutOfDrivableArea: out.insert(Category::DrivableArea); break;
        }
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

struct Phrase {
    Category category;
    std::vector<std::string> words;
};

const std::vector<Phrase>& synonym_table() {
    static const std::vector<Phrase> table = [] {
        std::vector<Phrase> t;
        auto add = [&](Category c, std::initializer_list<const char*> phrases) {
            for (const char* p : phrases) t.push_back({c, tokenize(p)});
        };
        add(Category::Safety, {"safe", "safety", "safely"});
        add(Category::Collision, {"collision", "collisions", "collide", "collides", "colliding", "collided", "crash",
                                  "crashes", "crashing", "crashed"});
        add(Category::RedLight, {"red light", "red lights", "red traffic light", "red signal", "run a red",
                                 "running a red", "ran a red", "runs a red"});
        add(Category::DrivableArea, {"drivable area", "driveable area", "drivable region", "road boundary",
                                     "road boundaries", "off the road", "off road", "leave the road", "leaves the road",
                                     "leaving the road"});
        return t;
    }();
    return table;
}

bool negated(const std::vector<std::string>& tokens, std::size_t at) {
    static const std::set<std::string> negations{"not", "never", "no", "t", "nor", "without"};
    for (std::size_t back = 1; back <= 2 && back <= at; ++back) {
        if (negations.count(tokens[at - back])) return true;
    }
    return false;
}

}  // namespace

CategorySet extract_keywords(std::string_view answer) {
    const std::vector<std::string> tokens = tokenize(answer);
    CategorySet out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        for (const Phrase& p : synonym_table()) {
            if (i + p.words.size() > tokens.size()) continue;
            if (!std::equal(p.words.begin(), p.words.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) continue;
            if (p.category == Category::Safety && negated(tokens, i)) continue;
            out.insert(p.category);
        }
    }
    return out;
}

std::string render_categories(const CategorySet& set) {
    std::string out;
    for (Category c : set) {
        if (!out.empty()) out += ", ";
        out += keyword_phrase(c);
    }
    return out;
}

std::optional<double> CategoryCounts::precision() const noexcept {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> CategoryCounts::recall() const noexcept {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

CounterfactualPR counterfactual_pr(const std::vector<CategorySet>& preds, const std::vector<CategorySet>& gts) {
    if (preds.size() != gts.size()) throw std::invalid_argument("counterfactual_pr: size mismatch");
    CounterfactualPR r;
    for (Category c : kAllCategories) r.per_category[c] = {};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (Category c : kAllCategories) {
            const bool p = preds[i].count(c) > 0;
            const bool g = gts[i].count(c) > 0;
            CategoryCounts& cc = r.per_category[c];
            if (p && g) ++cc.tp;
            if (p && !g) ++cc.fp;
            if (!p && g) ++cc.fn;
        }
    }
    for (const auto& [c, cc] : r.per_category) {
        r.micro.tp += cc.tp;
        r.micro.fp += cc.fp;
        r.micro.fn += cc.fn;
    }
    return r;
}

CounterfactualPR counterfactual_pr(const std::vector<std::string>& answers, const std::vector<CategorySet>& gts) {
    std::vector<CategorySet> preds;
    preds.reserve(answers.size());
    for (const std::string& a : answers) preds.push_back(extract_keywords(a));
    return counterfactual_pr(preds, gts);
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kCiderN = 4;

using NgramCounts = std::map<std::string, double>;

// One count map per n; n-grams are joined with a separator that tokens never contain.
std::array<NgramCounts, kCiderN> ngram_counts(std::string_view text) {
    const std::vector<std::string> tokens = tokenize(text);
    std::array<NgramCounts, kCiderN> out;
    for (int n = 1; n <= kCiderN; ++n) {
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string key = tokens[i];
            for (int j = 1; j < n; ++j) key += ' ' + tokens[i + j];
            out[n - 1][key] += 1.0;
        }
    }
    return out;
}

struct TfIdf {
    std::array<NgramCounts, kCiderN> vec;
    std::array<double, kCiderN> norm{};
};

TfIdf weigh(const std::array<NgramCounts, kCiderN>& counts, const std::map<std::string, double>& df, double log_n) {
    TfIdf out;
    for (int n = 0; n < kCiderN; ++n) {
        double sq = 0.0;
        for (const auto& [g, tf] : counts[n]) {
            const auto it = df.find(g);
            const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
            const double w = tf * (log_n - std::log(d));
            out.vec[n][g] = w;
            sq += w * w;
        }
        out.norm[n] = std::sqrt(sq);
    }
    return out;
}

}  // namespace

CiderResult cider(const std::map<std::string, std::string>& candidates,
                  const std::map<std::string, std::vector<std::string>>& references) {
    CiderResult r;
    if (candidates.empty()) return r;
    std::map<std::string, std::vector<std::array<NgramCounts, kCiderN>>> ref_counts;
    std::map<std::string, double> df;
    for (const auto& [id, refs] : references) {
        std::set<std::string> seen;
        auto& slot = ref_counts[id];
        for (const std::string& ref : refs) {
            slot.push_back(ngram_counts(ref));
            for (const auto& m : slot.back()) {
                for (const auto& [g, c] : m) seen.insert(g);
            }
        }
        for (const std::string& g : seen) df[g] += 1.0;
    }
    const double log_n = std::log(static_cast<double>(references.size()));

    double total = 0.0;
    for (const auto& [id, text] : candidates) {
        const auto it = ref_counts.find(id);
        if (it == ref_counts.end() || it->second.empty()) {
            throw std::invalid_argument("cider: no references for '" + id + "'");
        }
        const TfIdf cand = weigh(ngram_counts(text), df, log_n);
        std::array<double, kCiderN> sum{};
        for (const auto& ref : it->second) {
            const TfIdf rv = weigh(ref, df, log_n);
            for (int n = 0; n < kCiderN; ++n) {
                double dotp = 0.0;
                for (const auto& [g, w] : cand.vec[n]) {
                    const auto f = rv.vec[n].find(g);
                    if (f != rv.vec[n].end()) dotp += w * f->second;
                }
                if (cand.norm[n] != 0.0 && rv.norm[n] != 0.0) dotp /= cand.norm[n] * rv.norm[n];
                sum[n] += dotp;
            }
        }
        double mean_n = 0.0;
        for (double s : sum) mean_n += s;
        mean_n /= kCiderN;
        const double score = 10.0 * mean_n / static_cast<double>(it->second.size());
        r.per_id[id] = score;
        total += score;
    }
    r.mean = total / static_cast<double>(candidates.size());
    return r;
}

double composite_score(double gpt, double language, double match, double accuracy) noexcept {
    return 0.4 * gpt + 0.2 * (language + match + accuracy);
}

}  // namespace cfdrive
