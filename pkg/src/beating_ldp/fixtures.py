"""Calibrated constants shipped with the package (see ``calibration.py`` to regenerate)."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

FIXTURE_FILE = "fixtures.json"
CONSTANT_KEYS = ("j0", "gap_constant", "C_tilde", "C1", "C2")


@lru_cache(maxsize=1)
def _load() -> dict:
    text = resources.files("beating_ldp").joinpath("data", FIXTURE_FILE).read_text()
    return json.loads(text)


def load_fixtures() -> dict:
    """Constants keyed by name; a fresh copy so callers can't mutate the cache."""
    data = _load()
    return {k: data[k]["value"] for k in CONSTANT_KEYS}


def provenance() -> dict:
    """Full fixture records: value plus how and when it was measured."""
    return json.loads(json.dumps(_load()))
