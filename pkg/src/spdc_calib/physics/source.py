"""Down-conversion pair generation for Type I and Type II phase matching."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.records import Branch, PhotonBatch, Pol
from spdc_calib.core.timebase import RandomStream, TimeArray, poisson_stream

if TYPE_CHECKING:
    from spdc_calib.models import SourceSpec

logger = logging.getLogger(__name__)

# Nominal lab wavelengths (633/789 nm from a 351 nm pump) are rounded to the nm,
# which leaves a residual of ~6.3e-4
ENERGY_TOLERANCE = 1.0e-3


# =============================================================================
# Energy Conservation
# =============================================================================


def conservation_residual(pump_nm: float, signal_nm: float, idler_nm: float) -> float:
    """Dimensionless residual |1/λp − 1/λs − 1/λi| · λp."""
    return abs(1.0 / pump_nm - 1.0 / signal_nm - 1.0 / idler_nm) * pump_nm


@dataclass(frozen=True)
class EnergyCheck:
    """Result of validate_energy_conservation()."""

    residual: float
    passed: bool


def validate_energy_conservation(pump_nm: float, signal_nm: float, idler_nm: float) -> EnergyCheck:
    """Check that pump, signal and idler wavelengths conserve photon energy.

    Raises:
        InvalidArgumentError: If any wavelength is not positive.
    """
    if min(pump_nm, signal_nm, idler_nm) <= 0:
        raise InvalidArgumentError(
            "Wavelengths must be positive",
            details={"pump": pump_nm, "signal": signal_nm, "idler": idler_nm},
        )
    residual = conservation_residual(pump_nm, signal_nm, idler_nm)
    return EnergyCheck(residual=residual, passed=residual <= ENERGY_TOLERANCE)


def idler_wavelength_for(pump_nm: float, signal_nm: float) -> float:
    """Idler wavelength completing the energy balance for a given signal."""
    if signal_nm <= pump_nm or pump_nm <= 0:
        raise InvalidArgumentError(
            "Signal wavelength must exceed a positive pump wavelength",
            details={"pump": pump_nm, "signal": signal_nm},
        )
    return 1.0 / (1.0 / pump_nm - 1.0 / signal_nm)


# =============================================================================
# Pair Generation
# =============================================================================


@dataclass(frozen=True)
class PairBatch:
    """Pair decays of one acquisition, indexed by pair_id.

    Attributes:
        t_emit: Decay time.
        t_signal: Signal emission time (t_emit plus co-emission jitter).
        t_idler: Idler emission time (t_emit plus independent jitter).
        signal_pol: Signal polarization.
        idler_pol: Idler polarization.
        idler_in_channel: Whether the idler geometrically enters the idler channel.
    """

    t_emit: TimeArray
    t_signal: TimeArray
    t_idler: TimeArray
    signal_pol: npt.NDArray[np.int8]
    idler_pol: npt.NDArray[np.int8]
    idler_in_channel: npt.NDArray[np.bool_]

    def __len__(self) -> int:
        return int(self.t_emit.size)


def _jittered(times: TimeArray, sigma: float, gen: np.random.Generator) -> TimeArray:
    if sigma == 0 or times.size == 0:
        return times.copy()
    return times + np.rint(gen.normal(0.0, sigma, times.size)).astype(np.int64)


def generate_pairs(spec: SourceSpec, gate: int, rng: RandomStream) -> PairBatch:
    """Generate the pair decays of one acquisition window.

    Type II pairs are a classical 50/50 mixture of (H, V) and (V, H); Type I pairs are
    both ordinary (H). Double-pair emissions occur naturally from the Poisson process.
    """
    t_emit = poisson_stream(spec.pair_rate, gate, rng.child("decays"))
    n = int(t_emit.size)

    pol_gen = rng.child("polarization").generator()
    if spec.phase_matching == "type_ii":
        signal_pol = pol_gen.integers(0, 2, n).astype(np.int8)
        idler_pol = (1 - signal_pol).astype(np.int8)
    else:
        signal_pol = np.full(n, Pol.H, dtype=np.int8)
        idler_pol = signal_pol.copy()

    overlap_gen = rng.child("collection").generator()
    idler_in_channel = overlap_gen.random(n) < spec.collection_overlap

    jitter_gen = rng.child("co-emission").generator()
    t_signal = _jittered(t_emit, spec.emission_jitter_sigma, jitter_gen)
    t_idler = _jittered(t_emit, spec.emission_jitter_sigma, jitter_gen)

    logger.debug("Generated %d pairs (%s)", n, spec.phase_matching)
    return PairBatch(
        t_emit=t_emit,
        t_signal=t_signal,
        t_idler=t_idler,
        signal_pol=signal_pol,
        idler_pol=idler_pol,
        idler_in_channel=idler_in_channel,
    )


def emit_photons(pairs: PairBatch, branch: Branch) -> PhotonBatch:
    """Per-branch photon stream, sorted by emission time.

    Idlers outside the collection channel are not emitted.
    """
    pair_id = np.arange(len(pairs), dtype=np.int64)
    if branch is Branch.SIGNAL:
        times, pol = pairs.t_signal, pairs.signal_pol
    else:
        keep = pairs.idler_in_channel
        times, pol, pair_id = pairs.t_idler[keep], pairs.idler_pol[keep], pair_id[keep]

    order = np.argsort(times, kind="stable")
    return PhotonBatch(
        t_arrive=np.clip(times[order], 0, None),
        pol=pol[order],
        pair_id=pair_id[order],
        branch=branch,
    )
