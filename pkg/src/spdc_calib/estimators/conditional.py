"""Conditional polarization-rotation estimator: count-rate law, visibility and LSA fit.

The scanned detector D2 sees the idler through a polarizer at angle θ. Idlers heralded
by a D1 click are rotated by the Pockels cell, so the D2 rate oscillates with a
visibility equal to the effective D1 efficiency.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import optimize

from spdc_calib.core.errors import DegenerateFitError, InvalidArgumentError, OutOfRegimeError
from spdc_calib.core.timebase import PS_PER_SECOND
from spdc_calib.reports import EfficiencyEstimate, LsaFit, VisibilityScan

logger = logging.getLogger(__name__)

MIN_DISTINCT_ANGLES = 5
_MAX_CONDITION = 1.0e12


# =============================================================================
# Count-Rate Law
# =============================================================================


def predicted_w2(
    theta_deg: float | npt.NDArray[np.float64],
    tau_idler: float,
    eta2: float,
    w0: float,
    eta1: float,
    flip_efficiency: float = 1.0,
) -> float | npt.NDArray[np.float64]:
    """D2 count rate behind a polarizer at theta_deg.

    (τ·η2·W0/2)·(1 − η1·ε·cos 2θ); with ε = 1 the ideal-cell law.
    """
    theta = np.deg2rad(theta_deg)
    rate = tau_idler * eta2 * w0 / 2.0 * (1.0 - eta1 * flip_efficiency * np.cos(2.0 * theta))
    return float(rate) if np.ndim(rate) == 0 else np.asarray(rate, dtype=np.float64)


def _net_counts(scan: VisibilityScan) -> npt.NDArray[np.float64]:
    counts = np.asarray(scan.counts, dtype=np.float64)
    if scan.background is None:
        return counts
    return counts - np.asarray(scan.background, dtype=np.float64)


def _angle_distance(angles: npt.NDArray[np.float64], target: float) -> npt.NDArray[np.float64]:
    """Distance between polarizer angles modulo 180°."""
    d = np.mod(angles - target, 180.0)
    return np.minimum(d, 180.0 - d)


def visibility_minmax(scan: VisibilityScan) -> float:
    """(max − min)/(max + min) of the background-subtracted counts.

    Raises:
        InvalidArgumentError: If the scan misses 0° or 90° (±5°) or max + min ≤ 0.
    """
    angles = np.asarray(scan.angles_deg, dtype=np.float64)
    for extreme in (0.0, 90.0):
        if angles.size == 0 or float(_angle_distance(angles, extreme).min()) > 5.0:
            raise InvalidArgumentError(
                f"Scan does not cover {extreme:g}° within 5°",
                details={"angles_deg": scan.angles_deg},
            )
    net = _net_counts(scan)
    hi, lo = float(net.max()), float(net.min())
    if hi + lo <= 0:
        raise InvalidArgumentError(
            "Visibility undefined: max + min of net counts is not positive",
            details={"max": hi, "min": lo},
        )
    return (hi - lo) / (hi + lo)


# =============================================================================
# Least-Squares Adjustment
# =============================================================================


def _model(
    theta_deg: npt.NDArray[np.float64],
    p: npt.NDArray[np.float64],
) -> npt.NDArray[np.float64]:
    amplitude, visibility, phase_deg, offset = p
    cos_term = np.cos(np.deg2rad(2.0 * (theta_deg - phase_deg)))
    return amplitude * (1.0 - visibility * cos_term) + offset


def _initial_guess(
    theta_deg: npt.NDArray[np.float64],
    net: npt.NDArray[np.float64],
    weights: npt.NDArray[np.float64],
) -> npt.NDArray[np.float64]:
    """Exact solution of the offset-free model, which is linear in (A, A·V·cos, A·V·sin)."""
    two_theta = np.deg2rad(2.0 * theta_deg)
    design = np.column_stack([np.ones_like(two_theta), np.cos(two_theta), np.sin(two_theta)])
    if np.linalg.matrix_rank(design) < 3:
        raise DegenerateFitError("Scan angles do not determine amplitude, visibility and phase")
    coef, *_ = np.linalg.lstsq(design * weights[:, None], net * weights, rcond=None)
    a0, c, s = (float(x) for x in coef)
    if a0 <= 0:
        raise DegenerateFitError(
            "Scan mean is not positive; nothing to fit",
            details={"mean_counts": a0},
        )
    modulation = math.hypot(c, s)
    phase = math.degrees(math.atan2(-s, -c)) / 2.0 if modulation > 0 else 0.0
    return np.array([a0, modulation / a0, phase, 0.0])


def lsa_fit_visibility(scan: VisibilityScan) -> LsaFit:
    """Poisson-weighted least-squares fit of A·(1 − V·cos 2(θ−θ0)) + B.

    Counts are background-subtracted before fitting; each point has variance
    max(counts + background, 1). A, V and B are not separately identifiable from a
    sinusoid, so B is held near zero by a prior whose width is the background noise of
    the mean point (one count without a background scan). V̂ is returned non-negative
    with θ0 in [0°, 180°).

    Raises:
        DegenerateFitError: Fewer than five distinct angles or singular normal equations.
    """
    angles = np.asarray(scan.angles_deg, dtype=np.float64)
    distinct = np.unique(np.round(np.mod(angles, 180.0), 9))
    if distinct.size < MIN_DISTINCT_ANGLES:
        raise DegenerateFitError(
            f"Need at least {MIN_DISTINCT_ANGLES} distinct angles, got {distinct.size}",
            details={"angles_deg": scan.angles_deg},
            suggestion="Scan the polarizer over at least half a turn",
        )

    counts = np.asarray(scan.counts, dtype=np.float64)
    if scan.background is None:
        background = np.zeros_like(counts)
        sigma_offset = 1.0
    else:
        background = np.asarray(scan.background, dtype=np.float64)
        sigma_offset = math.sqrt(max(float(background.mean()), 1.0) / counts.size)
    net = counts - background
    sigma = np.sqrt(np.maximum(counts + background, 1.0))

    def residuals(p: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return np.append((_model(angles, p) - net) / sigma, p[3] / sigma_offset)

    p0 = _initial_guess(angles, net, 1.0 / sigma)
    result = optimize.least_squares(residuals, p0, method="lm", xtol=1e-12, ftol=1e-12, gtol=1e-12)
    jac = np.asarray(result.jac)
    normal = jac.T @ jac
    if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > _MAX_CONDITION:
        raise DegenerateFitError(
            "Normal equations are singular",
            details={"params": result.x.tolist()},
            suggestion="A flat, noiseless scan has no defined phase",
        )
    try:
        covariance = np.linalg.inv(normal)
    except np.linalg.LinAlgError as e:
        raise DegenerateFitError("Normal equations are singular") from e

    amplitude, visibility, phase, offset = (float(x) for x in result.x)
    if visibility < 0:
        visibility = -visibility
        phase += 90.0
        flip = np.diag([1.0, -1.0, 1.0, 1.0])
        covariance = flip @ covariance @ flip
    covariance = (covariance + covariance.T) / 2.0

    chi_square = float(np.sum(((_model(angles, result.x) - net) / sigma) ** 2))
    fit = LsaFit(
        amplitude=amplitude,
        visibility=visibility,
        phase_deg=phase % 180.0,
        offset=offset,
        covariance=covariance.tolist(),
        chi_square=chi_square,
        dof=int(counts.size) - 3,
    )
    logger.debug(
        "LSA fit: V=%.5f ± %.5f, phase=%.2f°, chi2/dof=%.2f/%d",
        fit.visibility,
        fit.visibility_std,
        fit.phase_deg,
        fit.chi_square,
        fit.dof,
    )
    return fit


# =============================================================================
# Pockels-Cell Corrections
# =============================================================================


def pockels_live_fraction(
    trigger_rate: float,
    driver_dead_time: int,
    tail_flip_weight: float = 0.0,
) -> float:
    """Mean flip weight of heralded idlers, relative to a fully live driver.

    Triggers inside the driver dead time fire no pulse; their idlers still see the
    previous pulse's fall tail with relative weight tail_flip_weight.

    Raises:
        OutOfRegimeError: If trigger_rate·driver_dead_time is 1 or more.
    """
    if trigger_rate < 0 or driver_dead_time < 0 or not 0.0 <= tail_flip_weight <= 1.0:
        raise InvalidArgumentError(
            "Invalid Pockels live-fraction inputs",
            details={
                "rate": trigger_rate,
                "dead_time": driver_dead_time,
                "weight": tail_flip_weight,
            },
        )
    product = trigger_rate * driver_dead_time / PS_PER_SECOND
    if product >= 1.0:
        raise OutOfRegimeError(
            f"Pockels driver saturated: rate·dead_time = {product:.3g}",
            details={"rate": trigger_rate, "dead_time": driver_dead_time},
            suggestion="Reduce the D1 trigger rate",
        )
    return 1.0 - product * (1.0 - tail_flip_weight)


def unheralded_flip_fraction(
    trigger_rate: float,
    driver_dead_time: int,
    rise: int,
    flat_top: int,
    fall_tail: int,
) -> float:
    """Flip probability, in units of the flip efficiency, of an idler nobody heralded.

    Such an idler arrives at a random time and is rotated if it falls in the envelope of
    a pulse fired for another D1 click: fully in the flat top, half on the rise or tail.
    A pulse's envelope ends when the next accepted trigger fires.
    """
    if trigger_rate <= 0:
        return 0.0
    seconds_per_tick = 1.0 / PS_PER_SECOND
    accepted_rate = trigger_rate / (1.0 + trigger_rate * driver_dead_time * seconds_per_tick)
    guaranteed_tail = max(0, driver_dead_time - rise - flat_top)
    if fall_tail <= guaranteed_tail:
        tail = float(fall_tail)
    else:
        excess = (fall_tail - guaranteed_tail) * seconds_per_tick
        expected_extra = (1.0 - math.exp(-trigger_rate * excess)) / trigger_rate
        tail = guaranteed_tail + expected_extra / seconds_per_tick
    return accepted_rate * (flat_top + (rise + tail) / 2.0) * seconds_per_tick


def estimate_flip_efficiency(fit_with: LsaFit, fit_without: LsaFit) -> float:
    """Pockels flip efficiency from coincidence curves with and without rotation.

    Without rotation the heralded idlers follow one Malus curve; rotating a fraction ε
    scales the modulation by (1 − 2ε), a negative factor showing up as a 90° phase jump.

    Raises:
        InvalidArgumentError: If the reference curve has no modulation.
    """
    if fit_without.visibility <= 0:
        raise InvalidArgumentError(
            "Reference curve has zero visibility",
            details={"visibility": fit_without.visibility},
        )
    shift = math.radians(2.0 * (fit_with.phase_deg - fit_without.phase_deg))
    ratio = math.cos(shift) * fit_with.visibility / fit_without.visibility
    return (1.0 - ratio) / 2.0


# =============================================================================
# Estimate
# =============================================================================


@dataclass(frozen=True)
class ConditionalCorrections:
    """Apparatus factors scaling the fitted visibility.

    Attributes:
        pockels_live_fraction: Net heralded flip weight (driver dead time and random flips).
        flip_efficiency: Pockels-cell rotation probability in the flat top.
        t_signal_polarizer: Transmittance of the D1 path (polarizing cube and optics).
        detector_live_fraction: Live fraction of D1 from its own dead time.
    """

    pockels_live_fraction: float = 1.0
    flip_efficiency: float = 1.0
    t_signal_polarizer: float = 1.0
    detector_live_fraction: float = 1.0
    flip_efficiency_std: float = 0.0
    t_signal_polarizer_std: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "pockels_live_fraction": self.pockels_live_fraction,
            "flip_efficiency": self.flip_efficiency,
            "t_signal_polarizer": self.t_signal_polarizer,
            "detector_live_fraction": self.detector_live_fraction,
        }


def eta_conditional(
    scan: VisibilityScan,
    corrections: ConditionalCorrections,
    fit: LsaFit | None = None,
) -> EfficiencyEstimate:
    """D1 efficiency from the fitted scan visibility divided by the apparatus factors.

    Args:
        scan: Polarizer scan (background included if measured).
        corrections: Apparatus factors, each in (0, 1].
        fit: Fit of this scan, if already computed.

    Raises:
        InvalidArgumentError: If any correction is not in (0, 1].
    """
    factors = corrections.as_dict()
    bad = {name: v for name, v in factors.items() if not 0.0 < v <= 1.0}
    if bad:
        raise InvalidArgumentError("Corrections must lie in (0, 1]", details=bad)

    fit = fit or lsa_fit_visibility(scan)
    product = math.prod(factors.values())
    value = fit.visibility / product
    rel_var = (corrections.flip_efficiency_std / corrections.flip_efficiency) ** 2 + (
        corrections.t_signal_polarizer_std / corrections.t_signal_polarizer
    ) ** 2
    variance = (fit.visibility_std / product) ** 2 + value**2 * rel_var
    return EfficiencyEstimate(
        value=value,
        std_uncertainty=math.sqrt(variance),
        method="conditional_rotation",
        corrections=factors,
        counts={"total_counts": float(sum(scan.counts))},
        details={
            "visibility": fit.visibility,
            "visibility_std": fit.visibility_std,
            "phase_deg": fit.phase_deg,
            "phase_consistent_with_zero": fit.phase_consistent_with_zero,
        },
    )
