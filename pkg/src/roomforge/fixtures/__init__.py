"""Example scenes shipped with the package."""

from __future__ import annotations

import json
from importlib import resources

from ..scene import ObjectSpec, SceneDescription, load_scene, parse_object_manifest

SCENES = ("bedroom", "living_room", "kitchen", "dining_room", "workplace")


def scene_doc(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath(f"{name}.json").read_text())


def load(name: str) -> tuple[SceneDescription, list[dict]]:
    """Scene and placement rules for a named fixture."""
    return load_scene(scene_doc(name))


def table_with_cups() -> ObjectSpec:
    return parse_object_manifest(scene_doc("table_with_cups"))[0]
