"""Photon-stream transforms: losses, polarizers, PBS, delay fiber and Pockels cell."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.records import PhotonBatch, Pol
from spdc_calib.core.timebase import (
    RandomStream,
    TimeArray,
    empty_times,
    nonparalyzable_keep,
    require_sorted,
)

if TYPE_CHECKING:
    from spdc_calib.models import (
        ChainElement,
        FiberSpec,
        LossElement,
        PolarizerSpec,
        PockelsSpec,
    )

logger = logging.getLogger(__name__)


def _thin(
    photons: PhotonBatch,
    probability: float | npt.NDArray[np.float64],
    rng: RandomStream,
) -> PhotonBatch:
    """Keep each photon independently with the given probability."""
    if len(photons) == 0:
        return photons
    keep = rng.generator().random(len(photons)) < probability
    return photons.select(keep)


def apply_loss(photons: PhotonBatch, elem: LossElement, rng: RandomStream) -> PhotonBatch:
    """Bernoulli thinning with the element transmittance; order preserved."""
    if elem.transmittance >= 1.0:
        return photons
    return _thin(photons, elem.transmittance, rng)


# =============================================================================
# Polarization Optics
# =============================================================================


def pass_probability(
    pol: npt.NDArray[np.int8] | int,
    angle_deg: float,
    extinction: float = 0.0,
) -> npt.NDArray[np.float64]:
    """Single-photon Malus law for a polarizer at angle_deg (0 = horizontal)."""
    theta = np.deg2rad(angle_deg)
    cos2 = np.cos(theta) ** 2
    sin2 = np.sin(theta) ** 2
    pol_arr = np.asarray(pol)
    p_h = cos2 + extinction * sin2
    p_v = sin2 + extinction * cos2
    return np.asarray(np.where(pol_arr == Pol.H, p_h, p_v), dtype=np.float64)


def polarizer_pass(photons: PhotonBatch, spec: PolarizerSpec, rng: RandomStream) -> PhotonBatch:
    """Photons transmitted by the polarizer (one Bernoulli trial per photon)."""
    if len(photons) == 0:
        return photons
    return _thin(photons, pass_probability(photons.pol, spec.angle_deg, spec.extinction), rng)


def pbs_route(photons: PhotonBatch) -> tuple[PhotonBatch, PhotonBatch]:
    """Split on a polarizing beam splitter: V to the transmit port, H to the reflect port.

    Returns:
        (transmit_port, reflect_port)
    """
    is_v = photons.pol == Pol.V
    return photons.select(is_v), photons.select(~is_v)


def fiber_delay(photons: PhotonBatch, spec: FiberSpec, rng: RandomStream) -> PhotonBatch:
    """Shift every arrival by the fiber delay and thin by its transmittance.

    The fiber is polarization maintaining.
    """
    delayed = photons.shifted(spec.delay)
    if spec.transmittance >= 1.0:
        return delayed
    return _thin(delayed, spec.transmittance, rng)


# =============================================================================
# Pockels Cell
# =============================================================================


def accepted_triggers(triggers: TimeArray, driver_dead_time: int) -> TimeArray:
    """Triggers the driver fires on: each at least driver_dead_time after the previous one."""
    require_sorted(triggers, "triggers")
    if triggers.size == 0 or driver_dead_time == 0:
        return triggers.copy()
    return triggers[nonparalyzable_keep(triggers, driver_dead_time)]


def pockels_apply(
    idler_photons: PhotonBatch,
    trigger_clicks: TimeArray,
    spec: PockelsSpec,
    rng: RandomStream,
) -> PhotonBatch:
    """Conditionally rotate idler polarization by 90° after accepted D1 triggers.

    Each accepted trigger at t starts a pulse at t + trigger_delay: rise, flat top, fall
    tail. Inside the flat top a photon flips H<->V with probability flip_efficiency; on
    the rise or the fall tail with flip_efficiency/2. The most recent pulse governs
    overlapping envelopes. Timestamps are never modified.

    Raises:
        InvalidArgumentError: If photons or triggers are not sorted.
    """
    require_sorted(idler_photons.t_arrive, "idler_photons")
    require_sorted(trigger_clicks, "trigger_clicks")
    if not spec.enabled or len(idler_photons) == 0:
        return idler_photons

    accepted = accepted_triggers(trigger_clicks, spec.driver_dead_time)
    if accepted.size == 0:
        return idler_photons

    pulse_starts = accepted + np.int64(spec.trigger_delay)
    t = idler_photons.t_arrive
    idx = np.searchsorted(pulse_starts, t, side="right") - 1
    has_pulse = idx >= 0
    offset = np.where(has_pulse, t - pulse_starts[np.maximum(idx, 0)], -1)

    flat_start = spec.rise
    flat_end = spec.rise + spec.flat_top
    tail_end = flat_end + spec.fall_tail
    full = has_pulse & (offset >= flat_start) & (offset <= flat_end)
    partial = has_pulse & ~full & (offset >= 0) & (offset <= tail_end)

    half = spec.flip_efficiency / 2
    probability = np.where(full, spec.flip_efficiency, np.where(partial, half, 0.0))
    flip = rng.generator().random(len(idler_photons)) < probability
    pol = np.where(flip, 1 - idler_photons.pol, idler_photons.pol).astype(np.int8)
    return idler_photons.with_pol(pol)


# =============================================================================
# Chains
# =============================================================================


def apply_chain(
    photons: PhotonBatch,
    chain: Sequence[ChainElement],
    rng_for: Callable[[int], RandomStream],
    triggers: TimeArray | None = None,
) -> PhotonBatch:
    """Propagate photons through an ordered element list.

    Args:
        photons: Input photons, sorted.
        chain: Elements in beam order.
        rng_for: Returns the random stream of the element at a chain index.
        triggers: D1 click times for a Pockels element (empty if None).

    Returns:
        Photons leaving the last element.
    """
    out = photons
    for index, elem in enumerate(chain):
        if elem.kind == "loss":
            out = apply_loss(out, elem, rng_for(index))
        elif elem.kind == "polarizer":
            out = polarizer_pass(out, elem, rng_for(index))
        elif elem.kind == "pbs":
            transmit, reflect = pbs_route(out)
            out = transmit if elem.port == "transmit" else reflect
        elif elem.kind == "fiber":
            out = fiber_delay(out, elem, rng_for(index))
        elif elem.kind == "pockels":
            clicks = triggers if triggers is not None else empty_times()
            out = pockels_apply(out, clicks, elem, rng_for(index))
        else:  # pragma: no cover - discriminated union is exhaustive
            raise InvalidArgumentError(f"Unknown chain element kind: {elem.kind}")
    return out


def chain_transmittance(chain: Sequence[ChainElement], pol: Pol | None = None) -> float:
    """Polarization-independent transmittance implied by a chain's loss and fiber elements.

    Polarizers and the PBS are included only when a definite input polarization is given.
    """
    total = 1.0
    for elem in chain:
        if elem.kind in ("loss", "fiber"):
            total *= elem.transmittance
        elif pol is not None and elem.kind == "polarizer":
            total *= float(pass_probability(int(pol), elem.angle_deg, elem.extinction))
        elif pol is not None and elem.kind == "pbs":
            routed_v = elem.port == "transmit"
            total *= 1.0 if (pol == Pol.V) == routed_v else 0.0
    return total
