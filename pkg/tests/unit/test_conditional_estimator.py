"""Unit tests for the conditional polarization-rotation estimator."""

from __future__ import annotations

import numpy as np
import pytest

from spdc_calib.core.errors import DegenerateFitError, InvalidArgumentError, OutOfRegimeError
from spdc_calib.core.timebase import ns, seconds, us
from spdc_calib.estimators.conditional import (
    ConditionalCorrections,
    estimate_flip_efficiency,
    eta_conditional,
    lsa_fit_visibility,
    pockels_live_fraction,
    predicted_w2,
    unheralded_flip_fraction,
    visibility_minmax,
)
from spdc_calib.reports import LsaFit, VisibilityScan

# Angles where 1000·(1 − 0.5·cos 2θ) is an integer
EXACT_ANGLES = [0.0, 30.0, 45.0, 60.0, 90.0, 120.0, 135.0, 150.0]
EXACT_COUNTS = [500, 750, 1000, 1250, 1500, 1250, 1000, 750]


def _scan(
    angles: list[float],
    counts: list[int],
    background: list[int] | None = None,
) -> VisibilityScan:
    return VisibilityScan(
        angles_deg=angles, counts=counts, integration_time=seconds(10), background=background
    )


def _phase_distance(phase: float, target: float) -> float:
    d = (phase - target) % 180.0
    return min(d, 180.0 - d)


class TestPredictedW2:
    """Tests for predicted_w2()."""

    def test_at_45_degrees(self) -> None:
        """At 45° the rate is half the unpolarized rate, independent of eta1."""
        assert predicted_w2(45.0, 0.9, 0.6, 500.0, 0.486) == pytest.approx(0.9 * 0.6 * 500 / 2)

    def test_perfect_heralding_extinguishes(self) -> None:
        """With eta1 = 1 and an ideal cell the rate vanishes at 0°."""
        assert predicted_w2(0.0, 0.9, 0.6, 500.0, 1.0) == pytest.approx(0.0)

    @pytest.mark.parametrize("eta1", [0.0, 0.25, 0.5, 1.0])
    @pytest.mark.parametrize("epsilon", [0.8, 1.0])
    def test_case_analysis(self, eta1: float, epsilon: float) -> None:
        """Rates at 0° and 90° follow from counting rotated idlers.

        Only H idlers are heralded (their V twins pass the signal-arm PBS). A fraction
        eta1·ε of them is rotated to V; every other idler keeps its polarization.
        """
        tau, eta2, w0 = 0.8, 0.5, 1_000.0
        rotated = 0.5 * eta1 * epsilon
        at_0 = tau * eta2 * w0 * (0.5 - rotated)
        at_90 = tau * eta2 * w0 * (0.5 + rotated)
        assert predicted_w2(0.0, tau, eta2, w0, eta1, epsilon) == pytest.approx(at_0)
        assert predicted_w2(90.0, tau, eta2, w0, eta1, epsilon) == pytest.approx(at_90)

    def test_vectorized(self) -> None:
        """Arrays of angles give arrays of rates."""
        rates = predicted_w2(np.array([0.0, 90.0]), 1.0, 1.0, 2.0, 0.5)
        np.testing.assert_allclose(rates, [0.5, 1.5])


class TestVisibilityMinmax:
    """Tests for visibility_minmax()."""

    def test_flat(self) -> None:
        """A flat scan has zero visibility."""
        assert visibility_minmax(_scan([0.0, 45.0, 90.0], [100, 100, 100])) == 0.0

    def test_full_modulation(self) -> None:
        """A minimum of zero gives visibility one."""
        assert visibility_minmax(_scan([0.0, 45.0, 90.0], [0, 50, 100])) == 1.0

    def test_noiseless_law(self) -> None:
        """The exact count-rate law with eta1 = 0.5 gives V = 0.5."""
        assert visibility_minmax(_scan(EXACT_ANGLES, EXACT_COUNTS)) == pytest.approx(0.5)

    def test_background_subtracted(self) -> None:
        """Background is removed before taking extremes."""
        scan = _scan([0.0, 90.0], [150, 250], background=[50, 50])
        assert visibility_minmax(scan) == pytest.approx(0.5)

    def test_missing_extreme(self) -> None:
        """A scan not covering 90° raises."""
        with pytest.raises(InvalidArgumentError):
            visibility_minmax(_scan([0.0, 30.0, 45.0], [1, 2, 3]))


class TestLsaFitVisibility:
    """Tests for lsa_fit_visibility()."""

    def test_noiseless_recovery(self) -> None:
        """Exact data are reproduced to fit precision."""
        fit = lsa_fit_visibility(_scan(EXACT_ANGLES, EXACT_COUNTS))
        assert fit.amplitude == pytest.approx(1_000.0, rel=1e-6)
        assert fit.visibility == pytest.approx(0.5, rel=1e-6)
        assert _phase_distance(fit.phase_deg, 0.0) < 1e-6
        assert abs(fit.offset) < 1e-6 * 1_000
        assert fit.dof == len(EXACT_ANGLES) - 3
        assert 0.0 <= fit.phase_deg < 180.0

    def test_shifted_phase_normalized(self) -> None:
        """A curve peaking at 0° is reported with positive V and θ0 = 90°."""
        fit = lsa_fit_visibility(_scan(EXACT_ANGLES, EXACT_COUNTS[4:] + EXACT_COUNTS[:4]))
        assert fit.visibility > 0
        assert _phase_distance(fit.phase_deg, 90.0) < 1e-6

    def test_constant_shift_keeps_modulation(self) -> None:
        """Adding a constant changes A and V but not A·V or the phase."""
        base = lsa_fit_visibility(_scan(EXACT_ANGLES, EXACT_COUNTS))
        shifted = lsa_fit_visibility(_scan(EXACT_ANGLES, [c + 200 for c in EXACT_COUNTS]))
        assert shifted.amplitude * shifted.visibility == pytest.approx(
            base.amplitude * base.visibility, rel=1e-5
        )
        assert _phase_distance(shifted.phase_deg, base.phase_deg) < 1e-5

    def test_poisson_noise(self) -> None:
        """V̂ from a Poisson-noised scan lies within 3σ of the true visibility."""
        angles = [float(a) for a in range(0, 181, 10)]
        expected = 1_000.0 * (1 - 0.486 * np.cos(np.deg2rad(2 * np.array(angles))))
        counts = np.random.default_rng(486).poisson(expected).tolist()
        fit = lsa_fit_visibility(_scan(angles, counts))
        assert abs(fit.visibility - 0.486) <= 3 * fit.visibility_std
        assert 0.005 < fit.visibility_std < 0.03

    def test_with_background(self) -> None:
        """The background scan is subtracted before fitting."""
        background = [100] * len(EXACT_ANGLES)
        counts = [c + 100 for c in EXACT_COUNTS]
        fit = lsa_fit_visibility(_scan(EXACT_ANGLES, counts, background=background))
        assert fit.visibility == pytest.approx(0.5, rel=1e-6)

    def test_too_few_angles(self) -> None:
        """Fewer than five distinct angles (mod 180°) raise."""
        scan = _scan([0.0, 45.0, 90.0, 135.0, 180.0], [1, 2, 3, 2, 1])
        with pytest.raises(DegenerateFitError) as exc_info:
            lsa_fit_visibility(scan)
        assert exc_info.value.exit_code == 4

    def test_flat_noiseless(self) -> None:
        """A flat noiseless scan has no defined phase."""
        with pytest.raises(DegenerateFitError):
            lsa_fit_visibility(_scan(EXACT_ANGLES, [1_000] * len(EXACT_ANGLES)))

    def test_empty_scan(self) -> None:
        """An all-zero scan has nothing to fit."""
        with pytest.raises(DegenerateFitError):
            lsa_fit_visibility(_scan(EXACT_ANGLES, [0] * len(EXACT_ANGLES)))


class TestPockelsCorrections:
    """Tests for pockels_live_fraction() and unheralded_flip_fraction()."""

    def test_live_fraction(self) -> None:
        """1 − R·τ for a fully dead driver, halved loss when the tail still flips."""
        assert pockels_live_fraction(5e3, us(10)) == pytest.approx(0.95)
        assert pockels_live_fraction(5e3, us(10), tail_flip_weight=0.5) == pytest.approx(0.975)
        assert pockels_live_fraction(0.0, us(10)) == 1.0

    def test_live_fraction_saturated(self) -> None:
        """R·τ ≥ 1 raises OutOfRegimeError."""
        with pytest.raises(OutOfRegimeError):
            pockels_live_fraction(1e5, us(10))

    def test_live_fraction_invalid(self) -> None:
        """A tail weight outside [0, 1] raises."""
        with pytest.raises(InvalidArgumentError):
            pockels_live_fraction(1e3, us(10), tail_flip_weight=2.0)

    def test_unheralded_no_triggers(self) -> None:
        """Without triggers nothing is flipped at random."""
        assert unheralded_flip_fraction(0.0, us(10), ns(5), ns(180), us(10)) == 0.0

    def test_unheralded_low_rate(self) -> None:
        """At low rate the flipped fraction is the duty cycle of the pulse envelope."""
        rate = 100.0
        q = unheralded_flip_fraction(rate, us(10), ns(5), ns(180), us(10))
        accepted = rate / (1 + rate * 1e-5)
        envelope = 180e-9 + (5e-9 + 10e-6) / 2
        assert q == pytest.approx(accepted * envelope, rel=1e-2)

    def test_unheralded_short_tail(self) -> None:
        """A tail shorter than the dead time is used as is."""
        q = unheralded_flip_fraction(1_000.0, us(10), 0, ns(100), us(1))
        accepted = 1_000.0 / (1 + 1e-2)
        assert q == pytest.approx(accepted * (100e-9 + 1e-6 / 2))


class TestEstimateFlipEfficiency:
    """Tests for estimate_flip_efficiency()."""

    def _fit(self, visibility: float, phase: float) -> LsaFit:
        return LsaFit(
            amplitude=100.0,
            visibility=visibility,
            phase_deg=phase,
            offset=0.0,
            covariance=np.eye(4).tolist(),
            chi_square=0.0,
            dof=16,
        )

    def test_phase_jump(self) -> None:
        """A 90° phase jump means more than half the photons were rotated."""
        flip = estimate_flip_efficiency(self._fit(0.8, 90.0), self._fit(1.0, 0.0))
        assert flip == pytest.approx(0.9)

    def test_same_phase(self) -> None:
        """Reduced modulation at the same phase means few rotations."""
        flip = estimate_flip_efficiency(self._fit(0.8, 0.0), self._fit(1.0, 0.0))
        assert flip == pytest.approx(0.1)

    def test_flat_reference(self) -> None:
        """A reference curve without modulation raises."""
        with pytest.raises(InvalidArgumentError):
            estimate_flip_efficiency(self._fit(0.8, 0.0), self._fit(0.0, 0.0))


class TestEtaConditional:
    """Tests for eta_conditional()."""

    def test_unit_corrections(self) -> None:
        """With unit corrections the estimate is the fitted visibility."""
        estimate = eta_conditional(_scan(EXACT_ANGLES, EXACT_COUNTS), ConditionalCorrections())
        assert estimate.value == pytest.approx(0.5, rel=1e-6)
        assert estimate.method == "conditional_rotation"
        assert estimate.std_uncertainty > 0

    def test_corrections_divide(self) -> None:
        """Flip efficiency and signal-path transmittance scale the visibility up."""
        corrections = ConditionalCorrections(flip_efficiency=0.8, t_signal_polarizer=0.625)
        estimate = eta_conditional(_scan(EXACT_ANGLES, EXACT_COUNTS), corrections)
        assert estimate.value == pytest.approx(1.0, rel=1e-6)

    def test_invalid_correction(self) -> None:
        """A correction of zero raises."""
        with pytest.raises(InvalidArgumentError):
            eta_conditional(
                _scan(EXACT_ANGLES, EXACT_COUNTS), ConditionalCorrections(flip_efficiency=0.0)
            )

    def test_correction_uncertainty_adds(self) -> None:
        """Uncertain apparatus factors widen the estimate."""
        scan = _scan(EXACT_ANGLES, EXACT_COUNTS)
        plain = eta_conditional(scan, ConditionalCorrections(flip_efficiency=0.9))
        uncertain = eta_conditional(
            scan, ConditionalCorrections(flip_efficiency=0.9, flip_efficiency_std=0.02)
        )
        assert uncertain.std_uncertainty > plain.std_uncertainty
