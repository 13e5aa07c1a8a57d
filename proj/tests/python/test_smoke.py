import json
import os
from pathlib import Path

import pytest

import cfdrive

FIXTURES = Path(os.environ.get("CFDRIVE_FIXTURES", Path(__file__).resolve().parents[1] / "fixtures"))
LEFT_TURN = FIXTURES / "left_turn" / "scene.json"
LIBRARY = FIXTURES / "left_turn" / "library.json"


@pytest.fixture(scope="module")
def scene():
    return cfdrive.Scene.load(str(LEFT_TURN))


def test_scene_and_expert(scene):
    assert scene.scene_id == "left_turn_cone"
    assert "ped_0" in scene.agent_ids
    expert = scene.expert_trajectory()
    assert len(expert) == 6
    assert expert.serialize_elided() == "[PT, (+0.76, +0.02), (+1.45, +0.03), ..., (+3.44, +0.12)]"
    assert cfdrive.Scene.parse(scene.dump()).scene_id == scene.scene_id


def test_trajectory_round_trip():
    t = cfdrive.Trajectory.from_points([(1.0, 0.5), (2.0, -1.25), (3.5, 0.0)])
    back = cfdrive.Trajectory.parse(t.serialize())
    assert back == t
    assert back.waypoints[1] == (1.0, 2.0, -1.25)
    with pytest.raises(cfdrive.ParseError):
        cfdrive.Trajectory.parse("[PT]")
    with pytest.raises(ValueError):
        cfdrive.Trajectory([(0.5, 1.0, 0.0), (0.5, 2.0, 0.0)])


def test_checklist_and_attention(scene):
    verdict = cfdrive.run_checklist(scene, scene.expert_trajectory())
    assert verdict["safe"]
    assert verdict["verdict"] == "Safe"
    close = {agent for agent, _, _ in cfdrive.close_objects(scene, scene.expert_trajectory())}
    assert close == {"cone_0", "ped_0"}
    record = cfdrive.analyze_scene(scene, LIBRARY)
    assert len(record["trajectories"]) == 2
    assert sum(not t["safe"] for t in record["trajectories"]) == 1


def test_template_generation_closes_the_loop(scene):
    items = cfdrive.generate_template_qa(scene, LIBRARY)
    assert len(items) == 6
    assert items[0]["id"].startswith("left_turn_cone/")
    counterfactual = [i for i in items if i["conversation_type"] == "Counterfactual"]
    assert len(counterfactual) == 2
    record = cfdrive.analyze_scene(scene, LIBRARY)
    names = {"collision": "collision", "red_light": "red_light", "out_of_drivable_area": "drivable_area"}
    by_id = {}
    for t in record["trajectories"]:
        kinds = {v["kind"] for v in t["violations"]}
        by_id[t["id"]] = sorted(names[k] for k in kinds) if kinds else ["safety"]
    truth = [by_id[i["provenance"]["trajectory_ids"][0]] for i in counterfactual]
    pr = cfdrive.counterfactual_pr([i["answer"] for i in counterfactual], truth)
    for counts in pr["per_category"].values():
        if counts["tp"] + counts["fn"]:
            assert counts["precision"] == 1.0 and counts["recall"] == 1.0


def test_metrics(scene):
    expert = scene.expert_trajectory()
    assert cfdrive.l2_at_horizons(expert, expert) == [0.0, 0.0, 0.0]
    rates = cfdrive.collision_rate([(scene, expert)])
    assert rates == sorted(rates)
    assert cfdrive.intersection_rate([(scene, expert)]) == [0.0, 0.0, 0.0]
    assert cfdrive.extract_keywords("It would not be safe; a collision with the cone.") == ["collision"]
    per_id, mean = cfdrive.cider(
        {"x": "alpha beta gamma delta", "y": "one two three four"},
        {"x": ["alpha beta gamma delta"], "y": ["five six seven eight"]},
    )
    assert per_id["x"] == pytest.approx(10.0, abs=1e-6)
    assert mean == pytest.approx(5.0, abs=1e-6)
    assert cfdrive.composite_score(1, 1, 1, 1) == 1.0


def test_clustering_is_seeded():
    pts = [[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]]
    a = cfdrive.kmeans(pts, 2, seed=3)
    assert a == cfdrive.kmeans(pts, 2, seed=3)
    assert a[0][0] == a[0][1] and a[0][2] == a[0][3] and a[0][0] != a[0][2]
    records = [(f"s{i}", [float(i // 5) * 20.0, float(i % 5)]) for i in range(10)]
    chosen = cfdrive.select_semantic(records, 0.2, seed=1)
    assert len(chosen) == 2
    assert {int(c[1:]) // 5 for c in chosen} == {0, 1}


def test_cli_entry_point(tmp_path):
    code, out, _ = cfdrive.run_cli(["-q", "--scenes", str(LEFT_TURN), "--library", str(LIBRARY),
                                    "--out", str(tmp_path), "check"])
    assert code == 0
    assert "left_turn_cone\texpert\tMoving Slowly, Lane Keeping, Go Straight\tSafe" in out
    rows = [json.loads(line) for line in (tmp_path / "verdicts.jsonl").read_text().splitlines()]
    assert rows[0]["scene_id"] == "left_turn_cone"
    code, _, err = cfdrive.run_cli(["frobnicate"])
    assert code == 2
