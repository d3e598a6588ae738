"""Frozen calibration constants and oracle values (``data/fixtures.json``)."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

FIXTURES_VERSION = 1


@lru_cache(maxsize=1)
def load_fixtures() -> dict:
    text = resources.files("moistns").joinpath("data/fixtures.json").read_text()
    data = json.loads(text)
    if data.get("version") != FIXTURES_VERSION:
        raise RuntimeError(f"fixtures version {data.get('version')} != {FIXTURES_VERSION}")
    return data
