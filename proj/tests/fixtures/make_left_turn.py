"""Writes the left-turn example scene (left_turn/scene.json) and its one-entry maneuver library.

Everything is authored in the ego frame at the key time and mapped into a world frame
with a non-trivial key pose, so loaders and frame transforms are exercised.
"""
import json
import math
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
OUT = HERE / "left_turn"

KEY = (120.0, -35.0, 0.6)
KEY_TIME = 12.0

EXPERT = [(0.76, 0.02), (1.45, 0.03), (2.05, 0.05), (2.60, 0.07), (3.05, 0.10), (3.44, 0.12)]
LEFT_TURN = [(4.85, -0.08), (9.71, -0.22), (14.5, -0.5), (19.2, -1.1), (24.6, -2.4), (27.42, -0.93)]


def world(p):
    x, y = p
    c, s = math.cos(KEY[2]), math.sin(KEY[2])
    return [round(KEY[0] + c * x - s * y, 9), round(KEY[1] + s * x + c * y, 9)]


def pose(t, p, yaw):
    w = world(p)
    return {"t": round(t, 9), "x": w[0], "y": w[1], "yaw": round(KEY[2] + yaw, 9)}


def ego_poses():
    track = [(-1.0, (-1.5, 0.0)), (-0.5, (-0.76, 0.0)), (0.0, (0.0, 0.0))]
    track += [(0.5 * (i + 1), p) for i, p in enumerate(EXPERT)]
    out = []
    for i, (t, p) in enumerate(track):
        if t == 0.0:
            yaw = 0.0
        else:
            a = track[i - 1][1] if i > 0 else p
            b = p if i > 0 else track[i + 1][1]
            yaw = math.atan2(b[1] - a[1], b[0] - a[0])
        out.append(pose(KEY_TIME + t, p, yaw))
    return out


def static_agent(ident, category, at, size):
    return {
        "id": ident,
        "category": category,
        "length": size[0],
        "width": size[1],
        "poses": [pose(KEY_TIME - 1.0, at, 0.0), pose(KEY_TIME + 4.0, at, 0.0)],
    }


def scene():
    far_car = {
        "id": "car_far",
        "category": "vehicle.car",
        "length": 4.5,
        "width": 1.9,
        "poses": [pose(KEY_TIME - 1.0 + 0.5 * k, (32.0 + 4.0 * k, 4.0), 0.0) for k in range(3)],
    }
    return {
        "schema": "omnidrive_scene_v1",
        "scene_id": "left_turn_cone",
        "key_time": KEY_TIME,
        "caption": (
            "Daytime, light traffic. The ego vehicle rolls slowly toward a gated service road. "
            "A traffic cone stands ahead on the left and a pedestrian walks along the right side."
        ),
        "ego": {"length": 4.08, "width": 1.85},
        "ego_poses": ego_poses(),
        "agents": [
            static_agent("cone_0", "movable_object.trafficcone", (8.2, 2.4), (0.3, 0.3)),
            static_agent("ped_0", "human.pedestrian.moving", (4.4, -7.2), (0.7, 0.7)),
            far_car,
        ],
        "lanes": [
            {
                "id": "lane_straight",
                "polyline": [world(p) for p in [(-2.6, 0.5), (1.2, 0.7), (5.0, 0.9), (8.8, 1.0)]],
                "successors": [],
                "left": "lane_left",
                "signal_ids": ["sig_0"],
            },
            {
                "id": "lane_left",
                "polyline": [world(p) for p in [(-2.6, 4.0), (8.8, 4.5)]],
                "successors": [],
                "right": "lane_straight",
            },
        ],
        "drivable": {"outer": [[world(p) for p in [(-30, -2.5), (18, -2.5), (18, 5.5), (-30, 5.5)]]], "holes": []},
        "signals": [
            {
                "id": "sig_0",
                "stop_line": [world((12.0, -2.0)), world((12.0, 2.5))],
                "controlled_lanes": ["lane_straight"],
                "states": [{"start": 0.0, "end": 100.0, "state": "green"}],
            }
        ],
    }


def library():
    return {
        "schema": "omnidrive_library_v1",
        "horizon": 3.0,
        "period": 0.5,
        "entries": [
            {
                "waypoints": [list(p) for p in LEFT_TURN],
                "speed": "Moderate Speed",
                "longitudinal": "Decelerating",
                "lateral": "Left Turn",
                "label": "Moderate Speed, Left Turn",
                "cluster_size": 1,
            }
        ],
    }


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    (OUT / "scene.json").write_text(json.dumps(scene(), indent=2) + "\n")
    (OUT / "library.json").write_text(json.dumps(library(), indent=2) + "\n")
