"""Coincidence-method estimator and its correction factors.

The estimators only see counts, rates and apparatus constants: never click origins or
the configured ground truth.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError, OutOfRegimeError
from spdc_calib.core.timebase import PS_PER_SECOND
from spdc_calib.reports import CorrectionFactors, CountsSummary, EfficiencyEstimate

logger = logging.getLogger(__name__)


def eta_raw(n_coincidence: int, n_other_arm: int) -> float:
    """Uncorrected efficiency: coincidences per click of the other (trigger) arm."""
    if n_other_arm <= 0:
        raise InvalidArgumentError(
            "Trigger count must be positive",
            details={"n_coincidence": n_coincidence, "n_other_arm": n_other_arm},
        )
    return n_coincidence / n_other_arm


# =============================================================================
# Correction Factors
# =============================================================================


def _first_order_survival(rate: float, duration: int, name: str) -> float:
    if rate < 0 or duration < 0:
        raise InvalidArgumentError(
            f"{name}: rate and duration must be non-negative",
            details={"rate": rate, "duration": duration},
        )
    product = rate * duration / PS_PER_SECOND
    if product >= 1.0:
        raise OutOfRegimeError(
            f"{name}: rate·duration = {product:.3g} is outside the first-order regime",
            details={"rate": rate, "duration": duration, "product": product},
            suggestion="Lower the count rate or the dead time / delay",
        )
    return 1.0 - product


def correction_alpha(stop_rate: float, t_delay: int, stop_dead_time: int = 0) -> float:
    """Probability that no uncorrelated stop pre-empts the correlated one.

    The stop detector cannot fire during its own dead time before the correlated photon,
    so only ``t_delay − stop_dead_time`` of the delay is exposed.

    Raises:
        OutOfRegimeError: If stop_rate times the exposed delay is 1 or more.
    """
    exposed = max(0, t_delay - stop_dead_time)
    return _first_order_survival(stop_rate, exposed, "alpha")


def correction_gamma(rate: float, dead_time: int) -> float:
    """Live-time fraction 1 − rate·dead_time of a non-paralyzable detector.

    With the observed click rate this is exact; the calibration uses the rate and dead
    time of the detector under test.

    Raises:
        OutOfRegimeError: If rate·dead_time is 1 or more.
    """
    return _first_order_survival(rate, dead_time, "gamma")


def correction_beta(raw_start_count: int, valid_start_count: int) -> float:
    """Fraction of scaler triggers that actually armed the converter."""
    if raw_start_count <= 0:
        raise InvalidArgumentError(
            "Raw start count must be positive", details={"raw": raw_start_count}
        )
    if not 0 < valid_start_count <= raw_start_count:
        raise InvalidArgumentError(
            "Valid starts must be positive and not exceed raw starts",
            details={"raw": raw_start_count, "valid": valid_start_count},
        )
    return valid_start_count / raw_start_count


def scale_background(
    n_background: float,
    background_rate: float,
    trigger_rate: float,
    trigger_dead_time: int,
) -> float:
    """Refer a source-off background count to the live time of the source-on run.

    Both runs see the same background photons; a busier trigger detector is dead more
    often, so it registers fewer of them.
    """
    live_on = _first_order_survival(trigger_rate, trigger_dead_time, "trigger live time")
    live_off = _first_order_survival(background_rate, trigger_dead_time, "background live time")
    return n_background * live_on / live_off


# =============================================================================
# Corrected Estimate
# =============================================================================


def eta_corrected(cs: CountsSummary, cf: CorrectionFactors) -> EfficiencyEstimate:
    """Detector efficiency from accidental- and background-subtracted counts.

    value = (N_coincidence − N_accidental) / (N_trigger − N_background) / (T·α·β·γ)

    β is the valid-start survival fraction, so it divides like α and γ. The standard
    uncertainty treats all four counts as independent Poisson variables (coincidence
    variance floored at 1) and adds the transmittance uncertainty in quadrature.

    Raises:
        InvalidArgumentError: If N_trigger − N_background is not positive.
    """
    numerator = cs.n_coincidence - cs.n_accidental
    denominator = cs.n_trigger - cs.n_background
    if denominator <= 0:
        raise InvalidArgumentError(
            "Background-subtracted trigger count must be positive",
            details={"n_trigger": cs.n_trigger, "n_background": cs.n_background},
            suggestion="Lengthen the gate or lower the background rate",
        )

    factor = cf.product
    value = numerator / denominator / factor
    var_num = max(cs.n_coincidence, 1) + cs.n_accidental
    var_den = cs.n_trigger + cs.n_background
    variance = (var_num + numerator**2 * var_den / denominator**2) / (denominator * factor) ** 2
    variance += (value * cf.t_signal_std / cf.t_signal) ** 2

    logger.debug(
        "Corrections: alpha=%.6f beta=%.6f gamma=%.6f T=%.4f",
        cf.alpha,
        cf.beta,
        cf.gamma,
        cf.t_signal,
    )
    return EfficiencyEstimate(
        value=value,
        std_uncertainty=math.sqrt(variance),
        method="coincidence",
        corrections={
            "alpha": cf.alpha,
            "beta": cf.beta,
            "gamma": cf.gamma,
            "t_signal": cf.t_signal,
        },
        counts={
            "n_trigger": cs.n_trigger,
            "n_coincidence": cs.n_coincidence,
            "n_accidental": cs.n_accidental,
            "n_background": cs.n_background,
        },
    )


def bare_detector_efficiency(
    estimate: EfficiencyEstimate,
    transmittances: Sequence[float],
) -> EfficiencyEstimate:
    """Divide out further known losses in front of the detector (filters, windows)."""
    total = math.prod(transmittances)
    if total <= 0 or total > 1:
        raise InvalidArgumentError(
            "Transmittances must lie in (0, 1]", details={"transmittances": list(transmittances)}
        )
    if total == 1.0:
        return estimate
    return estimate.model_copy(
        update={
            "value": estimate.value / total,
            "std_uncertainty": estimate.std_uncertainty / total,
            "corrections": {**estimate.corrections, "bare_transmittance": total},
        }
    )


def scan_signal_transmittance(
    weights: Sequence[float],
    t_signal: Sequence[float],
    pass_kept: npt.ArrayLike,
    pass_rotated: npt.ArrayLike,
    eta_dut: float,
    flip_probability: float,
) -> float:
    """Effective DUT-path transmittance of coincidences pooled over a triggered scan.

    The trigger sits behind a rotating polarizer and a Pockels cell fired by the DUT, so
    a DUT click rotates its own twin with probability flip_probability. Pair classes are
    indexed along the last axis.

    Args:
        weights: Fraction of pairs in each polarization class.
        t_signal: DUT-path transmittance of each class's signal photon.
        pass_kept: Trigger-arm pass probability per angle and class, idler as emitted.
        pass_rotated: The same with the idler rotated by the Pockels cell.
        eta_dut: Click probability of the DUT per photon reaching it.
        flip_probability: Rotation probability of the twin of a DUT click.

    Raises:
        InvalidArgumentError: If the scan registers no triggers or the pooled
            transmittance leaves (0, 1].
    """
    w = np.asarray(weights, dtype=np.float64)
    heralded = w * np.asarray(t_signal, dtype=np.float64)
    kept = np.asarray(pass_kept, dtype=np.float64)
    rotated = np.asarray(pass_rotated, dtype=np.float64)
    if not 0.0 <= eta_dut <= 1.0 or not 0.0 <= flip_probability <= 1.0:
        raise InvalidArgumentError(
            "Click and rotation probabilities must lie in [0, 1]",
            details={"eta_dut": eta_dut, "flip_probability": flip_probability},
        )

    coincident = heralded * ((1.0 - flip_probability) * kept + flip_probability * rotated)
    triggered = w * kept + eta_dut * flip_probability * heralded * (rotated - kept)
    total = float(triggered.sum())
    if total <= 0:
        raise InvalidArgumentError("Scan passes no trigger photons")
    value = float(coincident.sum()) / total
    if not 0.0 < value <= 1.0:
        raise InvalidArgumentError(
            "Pooled scan transmittance outside (0, 1]",
            details={"value": value},
            suggestion="Scan a full half-turn of the polarizer",
        )
    return value


def combine_difference(a: EfficiencyEstimate, b: EfficiencyEstimate) -> tuple[float, float]:
    """Difference a − b and its combined standard uncertainty."""
    return a.value - b.value, math.hypot(a.std_uncertainty, b.std_uncertainty)
