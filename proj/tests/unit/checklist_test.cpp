#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cfdrive/checklist.hpp"
#include "cfdrive/error.hpp"
#include "oracles/oracles.hpp"
#include "test_scenes.hpp"

using namespace cfdrive;
using testutil::json;

namespace {

bool on_grid(double t, double horizon, double dt) {
    if (std::abs(t - horizon) < 1e-9) return true;
    const double k = t / dt;
    return std::abs(k - std::round(k)) < 1e-6 && t > 0 && t <= horizon + 1e-9;
}

json red_light_scene(const char* state) {
    json j = testutil::straight_scene("red");
    j["lanes"].push_back(testutil::lane("main", {{{-10, 0}}, {{30, 0}}}));
    j["lanes"][0]["signal_ids"] = json::array({"sig"});
    j["signals"].push_back({{"id", "sig"},
                            {"stop_line", json::array({json::array({3.0, -2.0}), json::array({3.0, 2.0})})},
                            {"controlled_lanes", json::array({"main"})},
                            {"states", json::array({{{"start", -10.0}, {"end", 100.0}, {"state", state}}})}});
    return j;
}

}  // namespace

TEST(Collision, NoAgentsNoViolations) {
    const Scene s = testutil::build(testutil::straight_scene());
    EXPECT_TRUE(check_collision(s, expert_trajectory(s)).empty());
}

TEST(Collision, StationaryBoxOnThePathNearOneSecond) {
    json j = testutil::straight_scene();
    j["agents"].push_back(testutil::static_agent("box", "movable_object.barrier", 5.0, 0.0, 0.0, 2.0, 2.0));
    const Scene s = testutil::build(j);
    const auto v = check_collision(s, expert_trajectory(s));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::Collision);
    EXPECT_EQ(v[0].culprit, "box");
    // Ego front (2t + 2.04) meets the box rear (4.0) at t = 0.98 s.
    EXPECT_NEAR(v[0].time, 0.98, 0.1);
    EXPECT_TRUE(on_grid(v[0].time, 3.0, 0.1));
    EXPECT_NEAR(v[0].location.x, 2.0 * v[0].time, 1e-9);
}

TEST(Collision, FirstOverlapPerAgentOnly) {
    json j = testutil::straight_scene();
    j["agents"].push_back(testutil::static_agent("a", "vehicle.car", 5.0, 0.0));
    j["agents"].push_back(testutil::static_agent("b", "vehicle.car", 4.0, 0.5));
    j["agents"].push_back(testutil::static_agent("far", "vehicle.car", 4.0, 30.0));
    const Scene s = testutil::build(j);
    const auto v = check_collision(s, expert_trajectory(s));
    ASSERT_EQ(v.size(), 2u);
    std::set<std::string> culprits{v[0].culprit, v[1].culprit};
    EXPECT_EQ(culprits, (std::set<std::string>{"a", "b"}));
}

TEST(Collision, MovingAgentUsesMatchingTime) {
    // A crossing car passes x = 4 at t = 2 s; the ego is there at t = 2 s as well.
    json j = testutil::straight_scene();
    json a = testutil::static_agent("crosser", "vehicle.car", 4.0, -10.0, M_PI / 2);
    a["poses"] = json::array({testutil::pose(-1.0, 4.0, -15.0, M_PI / 2), testutil::pose(2.0, 4.0, 0.0, M_PI / 2)});
    j["agents"].push_back(a);
    const Scene s = testutil::build(j);
    const auto v = check_collision(s, expert_trajectory(s));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_GT(v[0].time, 1.3);
    EXPECT_LE(v[0].time, 2.0 + 1e-9);
}

TEST(Drivable, HugeSquareStraightIsFine) {
    json j = testutil::straight_scene();
    j["drivable"]["outer"].push_back(testutil::rect(-1000, -1000, 1000, 1000));
    const Scene s = testutil::build(j);
    EXPECT_TRUE(check_drivable(s, expert_trajectory(s)).empty());
}

TEST(Drivable, CornerLeavingCorridorAndHole) {
    json j = testutil::straight_scene();
    j["drivable"]["outer"].push_back(testutil::rect(-10, -2, 4, 2));
    const Scene s = testutil::build(j);
    const auto v = check_drivable(s, expert_trajectory(s));
    ASSERT_EQ(v.size(), 1u);
    // Front corners pass x = 4 when 2t + 2.04 > 4.
    EXPECT_NEAR(v[0].time, 0.98, 0.1);

    json h = testutil::straight_scene();
    h["drivable"]["outer"].push_back(testutil::rect(-10, -5, 40, 5));
    h["drivable"]["holes"].push_back(testutil::rect(6, -1.5, 7, 1.5));
    const Scene sh = testutil::build(h);
    const auto vh = check_drivable(sh, expert_trajectory(sh));
    ASSERT_EQ(vh.size(), 1u);
    EXPECT_EQ(vh[0].kind, ViolationKind::OutOfDrivableArea);
}

TEST(Drivable, LeftTurnLeftTurnLeavesCorridor) {
    const Scene s = load_scene(CFDRIVE_FIXTURES "/left_turn/scene.json");
    const ManeuverLibrary lib = load_library(CFDRIVE_FIXTURES "/left_turn/library.json");
    const auto v = check_drivable(s, instantiate_candidates(s, lib)[0]);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::OutOfDrivableArea);
}

TEST(RedLight, GreenAtCrossingIsFine) {
    const Scene s = testutil::build(red_light_scene("green"));
    EXPECT_TRUE(check_red_light(s, expert_trajectory(s)).empty());
}

TEST(RedLight, RedCrossingNearOneAndAHalfSeconds) {
    const Scene s = testutil::build(red_light_scene("red"));
    const RedLightResult r = check_red_light_detail(s, expert_trajectory(s));
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_EQ(r.violations[0].culprit, "sig");
    EXPECT_NEAR(r.violations[0].time, 1.5, 0.1 + 1e-9);
    EXPECT_FALSE(r.fallback_used);
}

TEST(RedLight, StoppingBeforeTheLine) {
    const Scene s = testutil::build(red_light_scene("red"));
    const Trajectory stop({{0.5, 1.0, 0}, {1.0, 1.6, 0}, {1.5, 2.0, 0}, {2.0, 2.0, 0}, {2.5, 2.0, 0}, {3.0, 2.0, 0}});
    EXPECT_TRUE(check_red_light(s, stop).empty());
}

TEST(RedLight, UncontrolledLaneIsGatedAndFallbackIsRecorded) {
    json j = red_light_scene("red");
    j["signals"][0]["controlled_lanes"] = json::array({"other"});
    j["lanes"][0]["signal_ids"] = json::array();
    j["lanes"].push_back(testutil::lane("other", {{{-10, 20}}, {{30, 20}}}));
    const Scene gated = testutil::build(j);
    EXPECT_TRUE(check_red_light(gated, expert_trajectory(gated)).empty());

    json nolanes = red_light_scene("red");
    nolanes["lanes"] = json::array();
    nolanes["signals"][0]["controlled_lanes"] = json::array();
    const Scene fb = testutil::build(nolanes);
    const RedLightResult r = check_red_light_detail(fb, expert_trajectory(fb));
    EXPECT_EQ(r.violations.size(), 1u);
    EXPECT_TRUE(r.fallback_used);
    EXPECT_TRUE(run_checklist(fb, expert_trajectory(fb)).red_light_fallback);
}

TEST(LaneAssign, ThresholdsAndNearestLane) {
    json j = testutil::straight_scene();
    j["lanes"].push_back(testutil::lane("a", {{{-10, 0}}, {{30, 0}}}));
    const Scene one = testutil::build(j);
    EXPECT_EQ(assign_lane(one, {2, 0.3}, 0.0), std::optional<std::string>("a"));
    EXPECT_EQ(assign_lane(one, {2, 5.0}, 0.0), std::nullopt);
    EXPECT_EQ(assign_lane(one, {2, 0.0}, M_PI / 2), std::nullopt);
    EXPECT_EQ(assign_lane(one, {2, 0.0}, std::nullopt), std::optional<std::string>("a"));

    j["lanes"].push_back(testutil::lane("b", {{{-10, 3.5}}, {{30, 3.5}}}));
    const Scene two = testutil::build(j);
    EXPECT_EQ(assign_lane(two, {2, 1.0}, 0.0), std::optional<std::string>("a"));
    EXPECT_EQ(assign_lane(two, {2, 2.5}, 0.0), std::optional<std::string>("b"));
    EXPECT_EQ(assign_lane(two, {2, 1.75}, 0.0), std::optional<std::string>("a"));  // tie -> smaller id
}

TEST(LaneChange, TopologyRules) {
    json j = testutil::straight_scene();
    j["lanes"].push_back(testutil::lane("l0", {{{-10, 0}}, {{10, 0}}}));
    j["lanes"].push_back(testutil::lane("l1", {{{-10, -3.5}}, {{10, -3.5}}}));
    j["lanes"].push_back(testutil::lane("l2", {{{10, 0}}, {{30, 0}}}));
    j["lanes"].push_back(testutil::lane("l3", {{{-10, 3.5}}, {{10, 3.5}}}));
    j["lanes"][0]["right"] = "l1";
    j["lanes"][0]["left"] = "l3";
    j["lanes"][0]["successors"] = json::array({"l2"});
    const Scene s = testutil::build(j);
    using L = std::optional<std::string>;
    EXPECT_EQ(detect_lane_change(s, {L("l0"), L("l0"), L("l0")}), LaneBehavior::LaneKeeping);
    EXPECT_EQ(detect_lane_change(s, {L("l0"), L("l1")}), LaneBehavior::LaneChangeRight);
    EXPECT_EQ(detect_lane_change(s, {L("l0"), L("l3")}), LaneBehavior::LaneChangeLeft);
    EXPECT_EQ(detect_lane_change(s, {L("l0"), L("l2")}), LaneBehavior::LaneKeeping);
    EXPECT_EQ(detect_lane_change(s, {std::nullopt, std::nullopt}), LaneBehavior::Unknown);
}

TEST(RunChecklist, StopTrajectoryInEmptySceneIsSafe) {
    const Scene s = testutil::build(testutil::straight_scene("empty", 0.0));
    const CounterfactualVerdict v = run_checklist(s, expert_trajectory(s), {}, "stop");
    EXPECT_TRUE(v.safe);
    EXPECT_TRUE(v.violations.empty());
    EXPECT_EQ(v.decision.speed, SpeedClass::Stop);
    EXPECT_EQ(verdict_string(s, v), "Safe");
    EXPECT_EQ(v.lane_sequence.size(), 31u);
}

TEST(RunChecklist, PropertiesOverRandomScenes) {
    std::mt19937_64 rng(1234);
    RuleConfig cfg;
    for (int n = 0; n < 150; ++n) {
        const oracle::RandomCase rc = oracle::random_case(rng);
        const Trajectory traj(rc.waypoints);
        const CounterfactualVerdict v = run_checklist(rc.scene, traj, cfg);
        EXPECT_EQ(v.safe, v.violations.empty());
        for (const Violation& x : v.violations) EXPECT_TRUE(on_grid(x.time, traj.horizon(), cfg.dt)) << x.time;

        // Rigid motion of the whole world leaves the verdict unchanged.
        json moved = testutil::moved(json::parse(dump_scene(rc.scene)), oracle::uniform(rng, -500, 500),
                                     oracle::uniform(rng, -500, 500), oracle::uniform(rng, -3, 3));
        const CounterfactualVerdict w = run_checklist(testutil::build(moved), traj, cfg);
        ASSERT_EQ(w.violations.size(), v.violations.size());
        for (std::size_t i = 0; i < v.violations.size(); ++i) {
            EXPECT_EQ(w.violations[i].kind, v.violations[i].kind);
            EXPECT_EQ(w.violations[i].culprit, v.violations[i].culprit);
            EXPECT_NEAR(w.violations[i].time, v.violations[i].time, 1e-9);
        }

        // A smaller ego never adds violations.
        Scene small = rc.scene;
        small.ego.length *= 0.6;
        small.ego.width *= 0.6;
        const CounterfactualVerdict u = run_checklist(small, traj, cfg);
        for (const Violation& x : u.violations) {
            const bool in_original = std::any_of(v.violations.begin(), v.violations.end(), [&](const Violation& y) {
                return y.kind == x.kind && y.culprit == x.culprit;
            });
            EXPECT_TRUE(in_original);
        }
    }
}

TEST(RuleConfig, Validation) {
    RuleConfig c;
    EXPECT_NO_THROW(c.validate(0.5));
    c.dt = 0.6;
    EXPECT_THROW(c.validate(0.5), ValidationError);
    c = RuleConfig{};
    c.close_radius = 0;
    EXPECT_THROW(c.validate(0.5), ValidationError);
}
