#include <gtest/gtest.h>

#include "cfdrive/attention.hpp"
#include "cfdrive/checklist.hpp"
#include "cfdrive/maneuver.hpp"
#include "cfdrive/scene.hpp"

using namespace cfdrive;

namespace {

const Scene& left_turn() {
    static const Scene s = load_scene(CFDRIVE_FIXTURES "/left_turn/scene.json");
    return s;
}

}  // namespace

TEST(LeftTurn, ExpertTrajectoryRecoveredInEgoFrame) {
    const Trajectory t = expert_trajectory(left_turn());
    ASSERT_EQ(t.size(), 6u);
    EXPECT_NEAR(t.waypoints()[0].x, 0.76, 1e-6);
    EXPECT_NEAR(t.waypoints()[5].y, 0.12, 1e-6);
}

TEST(LeftTurn, ExpertIsSafeAndLaneKeeping) {
    const CounterfactualVerdict v = run_checklist(left_turn(), expert_trajectory(left_turn()), {}, "expert");
    EXPECT_TRUE(v.safe);
    EXPECT_EQ(v.decision.to_string(), "Moving Slowly, Lane Keeping, Go Straight");
    EXPECT_EQ(verdict_string(left_turn(), v), "Safe");
}

TEST(LeftTurn, LeftTurnLeavesDrivableArea) {
    const ManeuverLibrary lib = load_library(CFDRIVE_FIXTURES "/left_turn/library.json");
    const auto cands = instantiate_candidates(left_turn(), lib, {});
    ASSERT_EQ(cands.size(), 1u);
    const CounterfactualVerdict v = run_checklist(left_turn(), cands[0], {}, "cand_0");
    EXPECT_FALSE(v.safe);
    EXPECT_EQ(v.decision.to_string(), "Moderate Speed, Left Turn");
    EXPECT_EQ(verdict_string(left_turn(), v), "Out of the drivable area");
    ASSERT_EQ(v.violations.size(), 1u);
    EXPECT_EQ(v.violations[0].kind, ViolationKind::OutOfDrivableArea);
}

TEST(LeftTurn, AttentionListsConeAndPedestrian) {
    const auto close = close_objects(left_turn(), expert_trajectory(left_turn()));
    ASSERT_EQ(close.size(), 2u);
    EXPECT_EQ(close[0].agent_id, "cone_0");
    EXPECT_NEAR(close[0].min_distance, 5.278, 1e-3);
    EXPECT_EQ(close[1].agent_id, "ped_0");
    const AttentionTree tree = build_attention_tree(left_turn(), close);
    EXPECT_EQ(tree.render(),
              "|--- straight lane [(-2.6, +0.5), (+1.2, +0.7), (+5.0, +0.9), (+8.8, +1.0)]\n"
              "|    |--- movable_object.trafficcone at (+8.2, +2.4)\n"
              "|--- unassigned objects\n"
              "|    |--- human.pedestrian.moving at (+4.4, -7.2)\n");
}
