#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cfdrive/attention.hpp"
#include "cfdrive/checklist.hpp"
#include "cfdrive/cli.hpp"
#include "cfdrive/error.hpp"
#include "cfdrive/keyframe.hpp"
#include "cfdrive/maneuver.hpp"
#include "cfdrive/metrics.hpp"
#include "cfdrive/promptqa.hpp"
#include "cfdrive/records.hpp"
#include "cfdrive/scene.hpp"

namespace py = pybind11;
using namespace cfdrive;

namespace {

// Structured results cross the boundary as JSON text; the Python package decodes them.
std::string verdict_json(const Scene& scene, const CounterfactualVerdict& v) {
    nlohmann::json violations = nlohmann::json::array();
    for (const Violation& x : v.violations) violations.push_back(to_json(x));
    return nlohmann::json{{"decision", to_json(v.decision)},
                          {"safe", v.safe},
                          {"verdict", verdict_string(scene, v)},
                          {"violations", violations},
                          {"red_light_fallback", v.red_light_fallback}}
        .dump();
}

std::vector<Trajectory> candidates_for(const Scene& scene, const std::optional<std::string>& library) {
    if (!library) return {};
    return instantiate_candidates(scene, load_library(*library));
}

std::vector<PlanningSample> samples(const std::vector<std::pair<const Scene*, Trajectory>>& pairs) {
    std::vector<PlanningSample> out;
    for (const auto& [s, t] : pairs) out.push_back({s, t});
    return out;
}

std::vector<CategorySet> category_sets(const std::vector<std::vector<std::string>>& names) {
    std::vector<CategorySet> out;
    for (const auto& row : names) {
        CategorySet s;
        for (const std::string& n : row) s.insert(parse_category(n));
        out.push_back(std::move(s));
    }
    return out;
}

py::dict counts_dict(const CategoryCounts& c) {
    py::dict d;
    d["tp"] = c.tp;
    d["fp"] = c.fp;
    d["fn"] = c.fn;
    d["precision"] = c.precision();
    d["recall"] = c.recall();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Counterfactual driving-scene engine";

    auto error = py::register_exception<Error>(m, "Error", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", error.ptr());

    py::class_<Scene>(m, "Scene")
        .def_static("load", [](const std::string& path) { return load_scene(path); }, py::arg("path"))
        .def_static("parse", [](const std::string& text) { return parse_scene(text); }, py::arg("text"))
        .def_readonly("scene_id", &Scene::scene_id)
        .def_readonly("key_time", &Scene::key_time)
        .def_property_readonly("agent_ids",
                               [](const Scene& s) {
                                   std::vector<std::string> ids;
                                   for (const AgentTrack& a : s.agents) ids.push_back(a.id);
                                   return ids;
                               })
        .def("dump", [](const Scene& s) { return dump_scene(s); })
        .def("expert_trajectory", [](const Scene& s, double horizon, double period) {
            return expert_trajectory(s, horizon, period);
        }, py::arg("horizon") = kDefaultHorizon, py::arg("period") = kDefaultPeriod)
        .def("__repr__", [](const Scene& s) { return "<Scene " + s.scene_id + ">"; });

    py::class_<Trajectory>(m, "Trajectory")
        .def(py::init([](const std::vector<std::tuple<double, double, double>>& txy, double period) {
                 std::vector<Waypoint> w;
                 for (const auto& [t, x, y] : txy) w.push_back({t, x, y});
                 return Trajectory(std::move(w), period);
             }),
             py::arg("waypoints"), py::arg("period") = kDefaultPeriod)
        .def_static("from_points", [](const std::vector<std::pair<double, double>>& xy, double period) {
            std::vector<Vec2> pts;
            for (const auto& [x, y] : xy) pts.push_back({x, y});
            return Trajectory::from_points(pts, period);
        }, py::arg("points"), py::arg("period") = kDefaultPeriod)
        .def_static("parse", [](const std::string& text, bool lenient, double period) {
            return parse_trajectory(text, lenient ? ParseMode::Lenient : ParseMode::Strict, period);
        }, py::arg("text"), py::arg("lenient") = false, py::arg("period") = kDefaultPeriod)
        .def_property_readonly("waypoints",
                               [](const Trajectory& t) {
                                   std::vector<std::tuple<double, double, double>> out;
                                   for (const Waypoint& w : t.waypoints()) out.emplace_back(w.t, w.x, w.y);
                                   return out;
                               })
        .def_property_readonly("period", &Trajectory::period)
        .def_property_readonly("horizon", &Trajectory::horizon)
        .def("position_at", [](const Trajectory& t, double time) {
            const Vec2 p = t.position_at(time);
            return std::make_pair(p.x, p.y);
        })
        .def("serialize", [](const Trajectory& t) { return serialize_trajectory(t); })
        .def("serialize_elided", [](const Trajectory& t) { return serialize_trajectory_elided(t); })
        .def("__len__", &Trajectory::size)
        .def("__eq__", [](const Trajectory& a, const Trajectory& b) { return a == b; })
        .def("__repr__", [](const Trajectory& t) { return "<Trajectory " + serialize_trajectory(t) + ">"; });

    m.def("classify_decision", [](const Trajectory& t) { return to_json(classify_decision(t)).dump(); });
    m.def("run_checklist", [](const Scene& s, const Trajectory& t) { return verdict_json(s, run_checklist(s, t)); });
    m.def("close_objects", [](const Scene& s, const Trajectory& t) {
        std::vector<std::tuple<std::string, double, double>> out;
        for (const CloseObject& c : close_objects(s, t)) out.emplace_back(c.agent_id, c.min_distance, c.time_of_min);
        return out;
    });
    m.def("analyze_scene", [](const Scene& s, std::optional<std::string> library) {
        const SceneAnalysis a = analyze_scene(s, candidates_for(s, library));
        return to_json(make_scene_verdicts(s, a)).dump();
    }, py::arg("scene"), py::arg("library") = py::none());
    m.def("generate_template_qa", [](const Scene& s, std::optional<std::string> library) {
        const SceneAnalysis a = analyze_scene(s, candidates_for(s, library));
        TemplateBackend backend;
        return dump_qa_jsonl(generate_qa(make_prompt_context(s, a), a, backend).items);
    }, py::arg("scene"), py::arg("library") = py::none());

    m.def("l2_at_horizons", [](const Trajectory& pred, const Trajectory& gt) { return l2_at_horizons(pred, gt).at; });
    m.def("collision_rate", [](const std::vector<std::pair<const Scene*, Trajectory>>& pairs) {
        return collision_rate(samples(pairs)).at;
    });
    m.def("intersection_rate", [](const std::vector<std::pair<const Scene*, Trajectory>>& pairs) {
        return intersection_rate(samples(pairs)).at;
    });
    m.def("extract_keywords", [](const std::string& answer) {
        std::vector<std::string> out;
        for (Category c : extract_keywords(answer)) out.emplace_back(to_string(c));
        return out;
    });
    m.def("counterfactual_pr", [](const std::vector<std::string>& answers,
                                  const std::vector<std::vector<std::string>>& gts) {
        const CounterfactualPR pr = counterfactual_pr(answers, category_sets(gts));
        py::dict per;
        for (const auto& [c, counts] : pr.per_category) per[to_string(c)] = counts_dict(counts);
        py::dict d;
        d["per_category"] = per;
        d["micro"] = counts_dict(pr.micro);
        return d;
    });
    m.def("cider", [](const std::map<std::string, std::string>& candidates,
                      const std::map<std::string, std::vector<std::string>>& references) {
        const CiderResult r = cider(candidates, references);
        return std::make_pair(r.per_id, r.mean);
    });
    m.def("composite_score", &composite_score, py::arg("gpt"), py::arg("language"), py::arg("match"),
          py::arg("accuracy"));

    m.def("kmeans", [](const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed) {
        const KMeansResult r = kmeans(points, {k, seed});
        return std::make_tuple(r.assignments, r.centroids, r.inertia);
    }, py::arg("points"), py::arg("k"), py::arg("seed") = 0);
    m.def("select_semantic", [](const std::vector<std::pair<std::string, std::vector<float>>>& records,
                                double fraction, std::uint64_t seed) {
        std::vector<EmbeddingRecord> recs;
        for (const auto& [id, v] : records) recs.push_back({id, v});
        return select_semantic(recs, fraction, seed);
    }, py::arg("records"), py::arg("fraction"), py::arg("seed") = 0);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
        }
        return std::make_tuple(code, out.str(), err.str());
    });
}
