"""Shipped data files: morphologies, gait scripts, golden videos."""

from importlib import resources


def asset_path(*parts: str) -> str:
    """Absolute path to a shipped asset file."""
    root = resources.files(__package__)
    target = root
    for p in parts:
        target = target / p
    return str(target)


def morphology_path(name: str) -> str:
    return asset_path("morphologies", f"{name}.json")


def gait_path(name: str) -> str:
    return asset_path("gaits", f"{name}.json")
