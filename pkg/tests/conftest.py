"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import json
from collections.abc import Callable
from typing import Any

import numpy as np
import pytest

from spdc_calib.core.records import Branch, PhotonBatch, Pol
from spdc_calib.core.timebase import RandomStream
from spdc_calib.models import DetectorSpec
from spdc_calib.scenario import PRESET_DIR, Scenario, parse_scenario


def photons_at(
    times: list[int] | np.ndarray,
    pol: Pol = Pol.H,
    branch: Branch = Branch.IDLER,
) -> PhotonBatch:
    """Sorted photon batch at the given tick times, all with one polarization."""
    t = np.asarray(times, dtype=np.int64)
    return PhotonBatch(
        t_arrive=t,
        pol=np.full(t.size, int(pol), dtype=np.int8),
        pair_id=np.arange(t.size, dtype=np.int64),
        branch=branch,
    )


def preset_dict(name: str) -> dict[str, Any]:
    """Raw JSON document of a shipped preset."""
    data: dict[str, Any] = json.loads((PRESET_DIR / f"{name}.json").read_text(encoding="utf-8"))
    return data


def scenario_from(data: dict[str, Any]) -> Scenario:
    return parse_scenario(json.dumps(data))


@pytest.fixture
def rng() -> Callable[[str], RandomStream]:
    """Factory of independent streams under a fixed test seed."""

    def make(path: str) -> RandomStream:
        return RandomStream.for_element(12345, path)

    return make


@pytest.fixture
def ideal_detector() -> DetectorSpec:
    """Perfect detector: every photon clicks at its arrival time."""
    return DetectorSpec(eta=1.0, dark_rate=0.0, dead_time=0, jitter_sigma=0)


@pytest.fixture
def lilo3_dict() -> dict[str, Any]:
    return preset_dict("lilo3_coincidence")


@pytest.fixture
def bbo_dict() -> dict[str, Any]:
    return preset_dict("bbo_conditional")
