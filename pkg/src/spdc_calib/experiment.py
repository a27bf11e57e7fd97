"""Wiring of source, optical chains and detectors into acquisitions.

Each stochastic element draws from its own stream keyed by its config path, e.g.
``signal_chain[0]`` or ``detectors.D1``, so acquisitions are reproducible element by
element.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.records import ORIGIN_UNKNOWN, Branch, ClickStream, PhotonBatch, TimeTags
from spdc_calib.core.timebase import RandomStream
from spdc_calib.electronics.counters import count_scaler
from spdc_calib.models import ChainElement, PockelsSpec, PolarizerSpec
from spdc_calib.physics.detection import analog_trace, detect
from spdc_calib.physics.optics import apply_chain
from spdc_calib.physics.source import emit_photons, generate_pairs
from spdc_calib.scenario import Scenario

logger = logging.getLogger(__name__)

# Sub-seed keys of the acquisitions making up one run
BACKGROUND_KEY = 1
SCAN_KEY = 2
SCAN_BACKGROUND_KEY = 3
UNTRIGGERED_SCAN_KEY = 4


@dataclass(frozen=True)
class Acquisition:
    """Clicks of both detectors over one gate.

    Attributes:
        clicks: Click stream per detector id (origins kept for diagnostics only).
        n_pairs: Pairs emitted during the gate.
        gate: Gate length, ticks.
    """

    clicks: dict[str, ClickStream]
    n_pairs: int
    gate: int


def concatenate(acquisitions: list[Acquisition]) -> Acquisition:
    """Join consecutive acquisitions into one, each shifted past the gates before it."""
    if not acquisitions:
        raise InvalidArgumentError("Nothing to concatenate")
    gates = np.array([a.gate for a in acquisitions], dtype=np.int64)
    offsets = np.cumsum(gates) - gates
    clicks: dict[str, ClickStream] = {}
    for detector_id in acquisitions[0].clicks:
        streams = [a.clicks[detector_id] for a in acquisitions]
        clicks[detector_id] = ClickStream(
            detector_id=detector_id,
            t=np.concatenate([c.t + o for c, o in zip(streams, offsets, strict=True)]),
            origin=np.concatenate([c.origin for c in streams]),
        )
    return Acquisition(
        clicks=clicks,
        n_pairs=sum(a.n_pairs for a in acquisitions),
        gate=sum(a.gate for a in acquisitions),
    )


def recorded(tags: dict[str, TimeTags], gate: int) -> Acquisition:
    """Acquisition from recorded time tags, e.g. read back with read_clicks_csv().

    The recording has no lineage, so every origin is ORIGIN_UNKNOWN and n_pairs is 0.
    """
    clicks = {
        detector_id: ClickStream(
            detector_id=detector_id,
            t=stream.t,
            origin=np.full(stream.t.size, ORIGIN_UNKNOWN, dtype=np.int64),
        )
        for detector_id, stream in tags.items()
    }
    return Acquisition(clicks=clicks, n_pairs=0, gate=gate)


def with_polarizer_angle(chain: list[ChainElement], angle_deg: float) -> list[ChainElement]:
    """Copy of a chain with its last polarizer set to angle_deg."""
    index = max(i for i, e in enumerate(chain) if isinstance(e, PolarizerSpec))
    out = list(chain)
    out[index] = chain[index].model_copy(update={"angle_deg": angle_deg})
    return out


def with_pockels_enabled(chain: list[ChainElement], enabled: bool) -> list[ChainElement]:
    """Copy of a chain with every Pockels cell switched on or off."""
    return [
        e.model_copy(update={"enabled": enabled}) if isinstance(e, PockelsSpec) else e
        for e in chain
    ]


def find_pockels(chain: list[ChainElement]) -> PockelsSpec | None:
    return next((e for e in chain if isinstance(e, PockelsSpec)), None)


def _stream(seed: int, path: str) -> RandomStream:
    return RandomStream.for_element(seed, path)


def _propagate(
    s: Scenario,
    seed: int,
    gate: int,
    pair_rate: float | None,
) -> tuple[PhotonBatch, PhotonBatch, int]:
    source = s.source
    if pair_rate is not None:
        source = source.model_copy(update={"pair_rate": pair_rate})
    pairs = generate_pairs(source, gate, _stream(seed, "source"))
    signal = apply_chain(
        emit_photons(pairs, Branch.SIGNAL),
        s.signal_chain,
        lambda i: _stream(seed, f"signal_chain[{i}]"),
    )
    return signal, emit_photons(pairs, Branch.IDLER), len(pairs)


def acquire(
    s: Scenario,
    seed: int,
    gate: int,
    *,
    pair_rate: float | None = None,
    idler_chain: list[ChainElement] | None = None,
) -> Acquisition:
    """Simulate one acquisition: pairs, both chains and both detectors.

    The signal detector is simulated first because its clicks trigger a Pockels cell
    on the idler arm.

    Args:
        s: Scenario.
        seed: Seed of this acquisition.
        gate: Gate length, ticks.
        pair_rate: Pair-rate override (0 switches the down-conversion off).
        idler_chain: Idler-chain override (scan angle, Pockels on/off).
    """
    chain = s.idler_chain if idler_chain is None else idler_chain
    signal, idler, n_pairs = _propagate(s, seed, gate, pair_rate)

    d1 = s.signal_detector
    d1_clicks = detect(
        signal,
        s.detectors[d1],
        gate,
        _stream(seed, f"detectors.{d1}"),
        detector_id=d1,
        stray_rate=s.stray_light_rate.get(d1, 0.0),
    )
    idler_out = apply_chain(
        idler,
        chain,
        lambda i: _stream(seed, f"idler_chain[{i}]"),
        triggers=d1_clicks.t,
    )
    d2 = s.idler_detector
    d2_clicks = detect(
        idler_out,
        s.detectors[d2],
        gate,
        _stream(seed, f"detectors.{d2}"),
        detector_id=d2,
        stray_rate=s.stray_light_rate.get(d2, 0.0),
    )
    logger.debug(
        "Acquisition: %d pairs, %s=%d clicks, %s=%d clicks",
        n_pairs,
        d1,
        len(d1_clicks),
        d2,
        len(d2_clicks),
    )
    return Acquisition(clicks={d1: d1_clicks, d2: d2_clicks}, n_pairs=n_pairs, gate=gate)


def measure_background(s: Scenario, gate: int, seed: int, detector_id: str | None = None) -> int:
    """Trigger-arm counts with the down-conversion switched off.

    Dark and stray-light rates stay as configured, so the result does not depend on the
    pair rate of the main run.
    """
    acquisition = acquire(s, seed, gate, pair_rate=0.0)
    target = detector_id or s.trigger_detector
    return count_scaler(acquisition.clicks[target].t, gate)


def analog_traces(
    s: Scenario,
    seed: int,
    gate: int,
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Binned photocurrents of the signal and idler detectors over one gate."""
    signal, idler, _ = _propagate(s, seed, gate, None)
    idler_out = apply_chain(idler, s.idler_chain, lambda i: _stream(seed, f"idler_chain[{i}]"))
    traces = []
    for detector_id, photons in ((s.signal_detector, signal), (s.idler_detector, idler_out)):
        det = s.detectors[detector_id]
        assert det.analog is not None  # checked by validate_topology
        traces.append(
            analog_trace(photons, det, det.analog, gate, _stream(seed, f"detectors.{detector_id}"))
        )
    return traces[0], traces[1]
