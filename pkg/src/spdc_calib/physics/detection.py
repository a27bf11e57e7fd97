"""Photon-counting and charge-integrating detector models."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from scipy import stats

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.records import ORIGIN_DARK, ORIGIN_STRAY, ClickStream, PhotonBatch
from spdc_calib.core.timebase import (
    RandomStream,
    TimeArray,
    nonparalyzable_keep,
    poisson_stream,
    require_sorted,
)

if TYPE_CHECKING:
    from spdc_calib.models import AnalogSpec, DetectorSpec

logger = logging.getLogger(__name__)


def _detected_times(
    photons: PhotonBatch,
    eta: float,
    rng: RandomStream,
) -> tuple[TimeArray, npt.NDArray[np.int64]]:
    if len(photons) == 0 or eta == 0.0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if eta >= 1.0:
        return photons.t_arrive, photons.pair_id
    fired = rng.generator().random(len(photons)) < eta
    return photons.t_arrive[fired], photons.pair_id[fired]


def detect(
    photons: PhotonBatch,
    spec: DetectorSpec,
    gate: int,
    rng: RandomStream,
    detector_id: str = "D",
    stray_rate: float = 0.0,
) -> ClickStream:
    """Convert photon arrivals into clicks of one photon-counting detector.

    Each photon fires with probability eta. Dark and stray-light clicks are merged in,
    every raw click is jittered, clicks outside [0, gate) are dropped and the
    non-paralyzable dead-time filter is applied last.

    Raises:
        InvalidArgumentError: If photons are not sorted or a rate is negative.
    """
    require_sorted(photons.t_arrive, "photons")
    if stray_rate < 0:
        raise InvalidArgumentError(
            "Stray-light rate must be non-negative",
            details={"detector": detector_id, "stray_rate": stray_rate},
        )

    photon_t, photon_origin = _detected_times(photons, spec.eta, rng.child("efficiency"))
    dark_t = poisson_stream(spec.dark_rate, gate, rng.child("dark"))
    stray_t = poisson_stream(stray_rate, gate, rng.child("stray"))

    t = np.concatenate([photon_t, dark_t, stray_t]).astype(np.int64)
    origin = np.concatenate(
        [
            photon_origin,
            np.full(dark_t.size, ORIGIN_DARK, dtype=np.int64),
            np.full(stray_t.size, ORIGIN_STRAY, dtype=np.int64),
        ]
    )

    if spec.jitter_sigma > 0 and t.size:
        jitter = rng.child("jitter").generator().normal(0.0, spec.jitter_sigma, t.size)
        t = t + np.rint(jitter).astype(np.int64)

    inside = (t >= 0) & (t < gate)
    t, origin = t[inside], origin[inside]
    order = np.argsort(t, kind="stable")
    t, origin = t[order], origin[order]

    keep = nonparalyzable_keep(t, spec.dead_time)
    logger.debug(
        "Detector %s: %d raw clicks, %d after dead time", detector_id, t.size, keep.size
    )
    return ClickStream(detector_id=detector_id, t=t[keep], origin=origin[keep])


# =============================================================================
# Analog Readout
# =============================================================================


def draw_gains(aspec: AnalogSpec, n: int, rng: RandomStream) -> npt.NDArray[np.float64]:
    """Per-detection charge: Normal(gain_mean, gain_rel_std·gain_mean) truncated at 0."""
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    if aspec.gain_rel_std == 0:
        return np.full(n, aspec.gain_mean, dtype=np.float64)
    scale = aspec.gain_rel_std * aspec.gain_mean
    lower = -aspec.gain_mean / scale
    samples = stats.truncnorm.rvs(
        lower, np.inf, loc=aspec.gain_mean, scale=scale, size=n, random_state=rng.generator()
    )
    return np.asarray(samples, dtype=np.float64)


def analog_trace(
    photons: PhotonBatch,
    det: DetectorSpec,
    aspec: AnalogSpec,
    gate: int,
    rng: RandomStream,
) -> npt.NDArray[np.float64]:
    """Binned photocurrent of a charge-integrating detector.

    Every detected photon (and every dark count) deposits an independent gain sample in
    its bin. There is no dead time or jitter in this readout. A last partial bin is
    dropped.

    Returns:
        One value per bin of width aspec.bin_width.
    """
    if aspec.bin_width <= 0:
        raise InvalidArgumentError(
            "Analog bin width must be positive",
            details={"bin_width": aspec.bin_width},
        )
    require_sorted(photons.t_arrive, "photons")

    n_bins = gate // aspec.bin_width
    photon_t, _ = _detected_times(photons, det.eta, rng.child("efficiency"))
    dark_t = poisson_stream(det.dark_rate, gate, rng.child("dark"))
    t = np.concatenate([photon_t, dark_t])
    t = t[(t >= 0) & (t < n_bins * aspec.bin_width)]

    gains = draw_gains(aspec, int(t.size), rng.child("gain"))
    return np.bincount(t // aspec.bin_width, weights=gains, minlength=n_bins).astype(np.float64)
