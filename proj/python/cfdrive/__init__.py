"""Python bindings for the cfdrive scene engine."""

import json

from ._core import (
    Error,
    ParseError,
    Scene,
    Trajectory,
    ValidationError,
    cider,
    close_objects,
    collision_rate,
    composite_score,
    counterfactual_pr,
    extract_keywords,
    intersection_rate,
    kmeans,
    l2_at_horizons,
    run_cli,
    select_semantic,
)
from . import _core

__all__ = [
    "Error",
    "ParseError",
    "Scene",
    "Trajectory",
    "ValidationError",
    "analyze_scene",
    "cider",
    "classify_decision",
    "close_objects",
    "collision_rate",
    "composite_score",
    "counterfactual_pr",
    "extract_keywords",
    "generate_template_qa",
    "intersection_rate",
    "kmeans",
    "l2_at_horizons",
    "run_checklist",
    "run_cli",
    "select_semantic",
]


def classify_decision(trajectory):
    return json.loads(_core.classify_decision(trajectory))


def run_checklist(scene, trajectory):
    return json.loads(_core.run_checklist(scene, trajectory))


def analyze_scene(scene, library=None):
    """Verdict record for the expert and each library candidate, as written to verdicts.jsonl."""
    return json.loads(_core.analyze_scene(scene, None if library is None else str(library)))


def generate_template_qa(scene, library=None):
    text = _core.generate_template_qa(scene, None if library is None else str(library))
    return [json.loads(line) for line in text.splitlines() if line]
