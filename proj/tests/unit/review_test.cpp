#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "cfdrive/error.hpp"
#include "cfdrive/maneuver.hpp"
#include "cfdrive/records.hpp"
#include "cfdrive/review.hpp"

using namespace cfdrive;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("cfdrive_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

// Writes verdicts.jsonl and qa.jsonl for the left-turn fixture into `dir`.
ServiceConfig left_turn_service(const std::filesystem::path& dir) {
    const Scene scene = load_scene(CFDRIVE_FIXTURES "/left_turn/scene.json");
    const ManeuverLibrary lib = load_library(CFDRIVE_FIXTURES "/left_turn/library.json");
    const SceneAnalysis a = analyze_scene(scene, instantiate_candidates(scene, lib));
    TemplateBackend backend;
    const GenerateResult g = generate_qa(make_prompt_context(scene, a), a, backend);
    std::ofstream(dir / "verdicts.jsonl") << dump_verdicts_jsonl({make_scene_verdicts(scene, a)});
    std::ofstream(dir / "qa.jsonl") << dump_qa_jsonl(g.items);
    ServiceConfig c;
    c.port = 0;
    c.scenes = CFDRIVE_FIXTURES "/left_turn/scene.json";
    c.verdicts = dir / "verdicts.jsonl";
    c.qa = dir / "qa.jsonl";
    c.log = dir / "reviews.log";
    return c;
}

std::vector<QAItem> left_turn_items() {
    const auto dir = temp_dir("items");
    const ServiceConfig c = left_turn_service(dir);
    auto items = load_qa(c.qa);
    std::filesystem::remove_all(dir);
    return items;
}

ReviewDecision decision(const std::string& id, int rev, ReviewVerdict v, std::string text = {},
                        std::vector<std::string> tags = {}) {
    ReviewDecision d;
    d.item_id = id;
    d.revision = rev;
    d.verdict = v;
    d.edit_text = std::move(text);
    d.gap_tags = std::move(tags);
    d.reviewer = "tester";
    d.timestamp = "2026-01-01T00:00:00Z";
    return d;
}

}  // namespace

TEST(ReviewDecisionJson, ValidatesEveryField) {
    std::vector<FieldError> errors;
    const auto bad = parse_review_decision(json{{"item_id", ""}, {"revision", 0}, {"verdict", "edit"}, {"gap_tags", {1}}},
                                           errors);
    EXPECT_FALSE(bad.has_value());
    std::set<std::string> fields;
    for (const FieldError& e : errors) fields.insert(e.field);
    EXPECT_TRUE(fields.count("item_id"));
    EXPECT_TRUE(fields.count("revision"));
    EXPECT_TRUE(fields.count("text"));
    EXPECT_TRUE(fields.count("gap_tags[0]"));

    errors.clear();
    const auto ok = parse_review_decision(
        json{{"item_id", "s/Planning/0"}, {"revision", 2}, {"verdict", "edit"}, {"text", "better"}, {"gap_tags", {"hallucination"}}},
        errors);
    ASSERT_TRUE(ok.has_value()) << errors.size();
    EXPECT_EQ(ok->edit_text, "better");
    const json back = to_json(*ok);
    EXPECT_EQ(back.at("verdict"), "edit");
    EXPECT_EQ(back.at("text"), "better");
}

TEST(ReviewStoreTest, StateMachineAndConflicts) {
    const auto dir = temp_dir("store");
    const std::vector<QAItem> items = left_turn_items();
    ReviewStore store(items, dir / "log");
    const std::string id = items[0].id;
    EXPECT_EQ(store.revision(id), 0);
    EXPECT_EQ(store.revision("nope"), -1);

    EXPECT_EQ(store.submit(decision(id, 1, ReviewVerdict::Accept)).status, SubmitStatus::Ok);
    const SubmitResult stale = store.submit(decision(id, 1, ReviewVerdict::Reject));
    EXPECT_EQ(stale.status, SubmitStatus::Conflict);
    EXPECT_EQ(stale.current_revision, 1);
    EXPECT_EQ(store.submit(decision(id, 3, ReviewVerdict::Reject)).status, SubmitStatus::Conflict);
    EXPECT_EQ(store.submit(decision("nope", 1, ReviewVerdict::Accept)).status, SubmitStatus::UnknownItem);
    EXPECT_EQ(store.items()[0].review_state, ReviewState::Accepted);

    EXPECT_EQ(store.submit(decision(id, 2, ReviewVerdict::Edit, "Edited.", {"missing_object"})).status, SubmitStatus::Ok);
    EXPECT_EQ(store.items()[0].review_state, ReviewState::Edited);
    EXPECT_EQ(store.items()[0].edited_answer, std::optional<std::string>("Edited."));
    EXPECT_EQ(store.submit(decision(id, 3, ReviewVerdict::Reject)).status, SubmitStatus::Ok);
    EXPECT_EQ(store.items()[0].review_state, ReviewState::Rejected);
    EXPECT_FALSE(store.items()[0].edited_answer.has_value());

    const ReviewStats st = store.stats();
    EXPECT_EQ(st.total, items.size());
    EXPECT_EQ(st.rejected, 1u);
    EXPECT_EQ(st.pending, items.size() - 1);
    EXPECT_TRUE(st.gap_tags.empty());
    std::filesystem::remove_all(dir);
}

TEST(ReviewStoreTest, ReplayReproducesState) {
    const auto dir = temp_dir("replay");
    const std::vector<QAItem> items = left_turn_items();
    ReviewStats before;
    std::vector<QAItem> state;
    {
        ReviewStore store(items, dir / "log");
        ASSERT_EQ(store.submit(decision(items[0].id, 1, ReviewVerdict::Accept)).status, SubmitStatus::Ok);
        ASSERT_EQ(store.submit(decision(items[1].id, 1, ReviewVerdict::Edit, "x", {"wrong_distance"})).status, SubmitStatus::Ok);
        ASSERT_EQ(store.submit(decision(items[2].id, 1, ReviewVerdict::Reject, {}, {"hallucination"})).status, SubmitStatus::Ok);
        ASSERT_EQ(store.submit(decision(items[2].id, 2, ReviewVerdict::Accept)).status, SubmitStatus::Ok);
        before = store.stats();
        state = store.items();
    }
    ReviewStore again(items, dir / "log");
    EXPECT_EQ(again.stats(), before);
    EXPECT_EQ(dump_qa_jsonl(again.items()), dump_qa_jsonl(state));
    EXPECT_EQ(again.revision(items[2].id), 2);
    EXPECT_EQ(before.gap_tags, (std::map<std::string, std::size_t>{{"wrong_distance", 1}}));

    // A torn trailing line is ignored; a malformed complete line is an error.
    std::ofstream(dir / "log", std::ios::app) << R"({"item_id": ")" << items[3].id << R"(", "revis)";
    ReviewStore torn(items, dir / "log");
    EXPECT_EQ(torn.stats(), before);
    std::ofstream(dir / "log", std::ios::app) << "\n";
    EXPECT_THROW(ReviewStore(items, dir / "log"), ParseError);
    std::filesystem::remove_all(dir);
}

TEST(ReviewStoreTest, ConcurrentSubmitsKeepOneWinnerPerRevision) {
    const auto dir = temp_dir("concurrent");
    const std::vector<QAItem> items = left_turn_items();
    ReviewStore store(items, dir / "log");
    std::atomic<int> ok{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (const QAItem& item : items) {
                if (store.submit(decision(item.id, 1, t % 2 ? ReviewVerdict::Accept : ReviewVerdict::Reject)).status ==
                    SubmitStatus::Ok)
                    ++ok;
            }
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(ok, static_cast<int>(items.size()));
    const std::string log = slurp(dir / "log");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), static_cast<long>(items.size()));
    EXPECT_EQ(ReviewStore(items, dir / "log").stats(), store.stats());
    std::filesystem::remove_all(dir);
}

TEST(ReviewStoreTest, ExportContainsAcceptedAndEditedOnly) {
    const auto dir = temp_dir("export");
    const std::vector<QAItem> items = left_turn_items();
    ReviewStore store(items, dir / "log");
    const ExportSummary none = store.export_reviewed(dir / "none.jsonl");
    EXPECT_TRUE(none.all_pending);
    EXPECT_EQ(none.exported, 0u);

    ASSERT_EQ(store.submit(decision(items[0].id, 1, ReviewVerdict::Accept)).status, SubmitStatus::Ok);
    ASSERT_EQ(store.submit(decision(items[1].id, 1, ReviewVerdict::Edit, "Rewritten.", {"tone"})).status, SubmitStatus::Ok);
    ASSERT_EQ(store.submit(decision(items[2].id, 1, ReviewVerdict::Reject, {}, {"hallucination"})).status, SubmitStatus::Ok);
    const ExportSummary s = store.export_reviewed(dir / "out.jsonl");
    EXPECT_FALSE(s.all_pending);
    EXPECT_EQ(s.exported, 2u);
    const std::vector<QAItem> out = load_qa(dir / "out.jsonl");
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].id, items[0].id);
    EXPECT_EQ(out[0].answer, items[0].answer);
    EXPECT_EQ(out[1].id, items[1].id);
    EXPECT_EQ(out[1].answer, "Rewritten.");

    const json gaps = json::parse(slurp(s.gaps_path));
    EXPECT_EQ(gaps.at("gap_tags").at("hallucination"), 1);
    EXPECT_EQ(gaps.at("items").at("tone"), json::array({items[1].id}));

    const std::string first = slurp(dir / "out.jsonl");
    (void)store.export_reviewed(dir / "out.jsonl");
    EXPECT_EQ(slurp(dir / "out.jsonl"), first);
    std::filesystem::remove_all(dir);
}

TEST(ReviewServiceTest, EndpointPayloads) {
    const auto dir = temp_dir("service");
    ReviewService svc(left_turn_service(dir));
    const HttpReply scenes = svc.list_scenes();
    ASSERT_EQ(scenes.status, 200);
    ASSERT_EQ(scenes.body.at("scenes").size(), 1u);
    const json& row = scenes.body.at("scenes")[0];
    EXPECT_EQ(row.at("scene_id"), "left_turn_cone");
    EXPECT_EQ(row.at("qa_total"), 6);
    EXPECT_EQ(row.at("trajectories"), 2);
    EXPECT_EQ(row.at("unsafe_trajectories"), 1);

    const HttpReply scene = svc.scene_payload("left_turn_cone");
    ASSERT_EQ(scene.status, 200);
    EXPECT_EQ(scene.body.at("frame"), "ego");
    EXPECT_EQ(svc.scene_payload("missing").status, 404);
    // Every violation kind in a trajectory verdict is one of the advertised kinds, and the
    // kinds are distinct, so a colour per kind maps one-to-one onto engine categories.
    const json kinds = scene.body.at("violation_kinds");
    EXPECT_EQ(kinds, json::array({"collision", "out_of_drivable_area", "red_light"}));
    bool saw_violation = false;
    for (const json& t : scene.body.at("trajectories")) {
        for (const json& v : t.at("violations")) {
            EXPECT_NE(std::find(kinds.begin(), kinds.end(), v.at("kind")), kinds.end());
            saw_violation = true;
        }
    }
    EXPECT_TRUE(saw_violation);

    const HttpReply qa = svc.scene_qa("left_turn_cone");
    ASSERT_EQ(qa.body.at("items").size(), 6u);
    const std::string id = qa.body.at("items")[0].at("id");

    const HttpReply bad = svc.post_review(R"({"item_id": "", "revision": "x", "verdict": "maybe"})", "");
    EXPECT_EQ(bad.status, 400);
    EXPECT_EQ(bad.body.at("errors").size(), 3u);
    EXPECT_EQ(svc.post_review("{not json", "").status, 400);
    EXPECT_EQ(svc.post_review(R"({"item_id": "zzz", "revision": 1, "verdict": "accept"})", "").status, 404);

    const json body{{"item_id", id}, {"revision", 1}, {"verdict", "accept"}};
    const HttpReply ok = svc.post_review(body.dump(), "alice");
    EXPECT_EQ(ok.status, 200);
    EXPECT_EQ(ok.body.at("review_state"), "accepted");
    const HttpReply conflict = svc.post_review(body.dump(), "bob");
    EXPECT_EQ(conflict.status, 409);
    EXPECT_EQ(conflict.body.at("current_revision"), 1);
    EXPECT_EQ(svc.stats().body.at("accepted"), 1);
    EXPECT_NE(slurp(dir / "reviews.log").find("\"reviewer\":\"alice\""), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(ReviewServiceTest, HttpRoundTripSurvivesRestart) {
    const auto dir = temp_dir("http");
    const ServiceConfig cfg = left_turn_service(dir);
    std::string edited_id;
    {
        ReviewService svc(cfg);
        std::thread server([&] { svc.serve(); });
        svc.wait_until_ready();
        httplib::Client cli("127.0.0.1", svc.bound_port());

        auto scenes = cli.Get("/scenes");
        ASSERT_TRUE(scenes);
        EXPECT_EQ(scenes->status, 200);
        EXPECT_EQ(scenes->get_header_value("Access-Control-Allow-Origin"), "*");
        auto qa = cli.Get("/scenes/left_turn_cone/qa");
        ASSERT_TRUE(qa);
        const json items = json::parse(qa->body).at("items");
        edited_id = items[1].at("id");

        auto post = [&](const json& b) { return cli.Post("/reviews", b.dump(), "application/json"); };
        EXPECT_EQ(post({{"item_id", items[0].at("id")}, {"revision", 1}, {"verdict", "accept"}})->status, 200);
        EXPECT_EQ(post({{"item_id", edited_id}, {"revision", 1}, {"verdict", "edit"}, {"text", "Better."}})->status, 200);
        EXPECT_EQ(post({{"item_id", items[2].at("id")}, {"revision", 1}, {"verdict", "reject"}})->status, 200);
        EXPECT_EQ(post({{"item_id", items[2].at("id")}, {"revision", 1}, {"verdict", "accept"}})->status, 409);

        auto options = cli.Options("/reviews");
        ASSERT_TRUE(options);
        EXPECT_EQ(options->status, 204);
        EXPECT_EQ(cli.Get("/scenes/nope")->status, 404);

        const json st = json::parse(cli.Get("/stats")->body);
        EXPECT_EQ(st.at("accepted"), 1);
        EXPECT_EQ(st.at("edited"), 1);
        EXPECT_EQ(st.at("rejected"), 1);
        EXPECT_EQ(st.at("pending"), 3);
        svc.stop();
        server.join();
    }
    ReviewService restarted(cfg);
    const json st = restarted.stats().body;
    EXPECT_EQ(st.at("accepted"), 1);
    EXPECT_EQ(st.at("edited"), 1);
    EXPECT_EQ(st.at("rejected"), 1);
    const ExportSummary ex = restarted.store().export_reviewed(dir / "reviewed.jsonl");
    EXPECT_EQ(ex.exported, 2u);
    const auto out = load_qa(dir / "reviewed.jsonl");
    EXPECT_EQ(out[1].id, edited_id);
    EXPECT_EQ(out[1].answer, "Better.");
    std::filesystem::remove_all(dir);
}
