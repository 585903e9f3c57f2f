"""Paths to packaged seed data (template bank, category map, fixture)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .cornell import CategoryMap


def _data_dir() -> Path:
    return Path(resources.files("textgrasp") / "data")


def fixture_root() -> Path:
    """Bundled 6-image Cornell-style fixture directory."""
    return _data_dir() / "cornell_fixture"


def default_category_map_path() -> Path:
    return _data_dir() / "category_map.json"


def default_category_map() -> CategoryMap:
    return CategoryMap.load(default_category_map_path())


def default_bank_path() -> Path:
    return _data_dir() / "template_bank.json"
