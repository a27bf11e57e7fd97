"""End-to-end orchestration: acquisitions, electronics, estimators and reports.

Estimators receive counts, fitted scans and apparatus constants only. Detector
efficiencies from the scenario are read back solely to validate finished estimates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from spdc_calib.core.errors import DegenerateFitError, InvalidArgumentError
from spdc_calib.core.records import Pol, TimeTags
from spdc_calib.core.timebase import PS_PER_SECOND, RandomStream, derive_seed, to_seconds
from spdc_calib.electronics.counters import (
    Histogram,
    and_gate,
    and_gate_accidentals,
    count_scaler,
    estimate_accidentals,
    merge_histograms,
    off_peak_region,
    tac_process,
    tic_coincidences,
    tic_process,
)
from spdc_calib.estimators.analog import eta_analog, infer_K
from spdc_calib.estimators.coincidence import (
    bare_detector_efficiency,
    combine_difference,
    correction_alpha,
    correction_beta,
    correction_gamma,
    eta_corrected,
    eta_raw,
    scale_background,
    scan_signal_transmittance,
)
from spdc_calib.estimators.conditional import (
    ConditionalCorrections,
    estimate_flip_efficiency,
    eta_conditional,
    lsa_fit_visibility,
    pockels_live_fraction,
    unheralded_flip_fraction,
)
from spdc_calib.experiment import (
    BACKGROUND_KEY,
    SCAN_BACKGROUND_KEY,
    SCAN_KEY,
    UNTRIGGERED_SCAN_KEY,
    Acquisition,
    acquire,
    analog_traces,
    concatenate,
    find_pockels,
    measure_background,
    recorded,
    with_pockels_enabled,
    with_polarizer_angle,
)
from spdc_calib.export import (
    write_clicks_csv,
    write_curves_csv,
    write_histogram_csv,
    write_scan_csv,
)
from spdc_calib.models import AndGateSpec, PolarizerSpec, TacSpec, TicSpec
from spdc_calib.physics.detection import draw_gains
from spdc_calib.physics.optics import chain_transmittance, pass_probability
from spdc_calib.reports import (
    ComparisonSummary,
    CorrectionFactors,
    CountsSummary,
    EfficiencyEstimate,
    LsaFit,
    MethodStatistics,
    TrialReport,
    TrialsReport,
    ValidationOutcome,
    VisibilityScan,
)
from spdc_calib.scenario import Scenario, validate_topology

logger = logging.getLogger(__name__)

HISTOGRAM_FILE = "histogram.csv"
CLICKS_FILE = "clicks.csv"
SCAN_FILE = "scan.csv"
CURVES_FILE = "curves.csv"
REPORT_FILE = "report.json"
TRIALS_FILE = "trials.json"


# =============================================================================
# Coincidence Method
# =============================================================================


@dataclass(frozen=True)
class CoincidenceResult:
    """Estimate of the coincidence pipeline with the inputs it used."""

    estimate: EfficiencyEstimate
    counts: CountsSummary
    corrections: CorrectionFactors
    raw_eta: float
    trigger_raw_eta: float
    histogram: Histogram | None


@dataclass(frozen=True)
class _Electronics:
    n_trigger: int
    n_coincidence: int
    n_accidental: float
    alpha: float
    beta: float
    histogram: Histogram | None
    details: dict[str, float | str | bool]


def _count_coincidences(
    s: Scenario,
    acquisition: Acquisition,
    trigger_id: str,
    dut_id: str,
) -> _Electronics:
    """Run the configured electronics with the trigger as start and the DUT as stop."""
    spec = s.electronics
    gate = acquisition.gate
    starts = acquisition.clicks[trigger_id].tags().t
    dut = acquisition.clicks[dut_id].tags().t
    n_raw = count_scaler(starts, gate)
    stop_rate = count_scaler(dut, gate) / to_seconds(gate) if gate else 0.0
    dut_dead_time = s.detectors[dut_id].dead_time

    if isinstance(spec, AndGateSpec):
        rate_a = n_raw / to_seconds(gate) if gate else 0.0
        return _Electronics(
            n_trigger=n_raw,
            n_coincidence=and_gate(starts, dut, spec.window),
            n_accidental=and_gate_accidentals(rate_a, stop_rate, spec.window, gate),
            alpha=1.0,
            beta=1.0,
            histogram=None,
            details={"electronics": "and_gate"},
        )

    if isinstance(spec, TacSpec):
        window = spec.sca_window
        tac = tac_process(starts, dut + np.int64(spec.stop_delay_line), spec)
        histogram = tac.histogram
        n_coincidence = tac.n_coincidence
        if spec.has_valid_start:
            n_trigger, beta = tac.valid_start_count, 1.0
        else:
            n_trigger = n_raw
            beta = correction_beta(n_raw, tac.valid_start_count) if tac.valid_start_count else 1.0
        details: dict[str, float | str | bool] = {
            "electronics": "tac",
            "valid_starts": float(tac.valid_start_count),
            "raw_starts": float(n_raw),
        }
        off_peak_widths = spec.off_peak_widths
    elif isinstance(spec, TicSpec):
        window = spec.peak_window
        tic = tic_process(starts, dut + np.int64(spec.stop_delay_line), spec)
        histogram = merge_histograms(tic.histograms)
        per_sample = tic_coincidences(tic.histograms, window)
        n_coincidence = sum(per_sample)
        n_trigger, beta = tic.n_measured, 1.0
        ratios = [
            c / h.n_starts_processed
            for c, h in zip(per_sample, tic.histograms, strict=True)
            if h.n_starts_processed
        ]
        details = {
            "electronics": "tic",
            "partial": tic.partial,
            "subsample_ratio_std": float(np.std(ratios, ddof=1)) if len(ratios) > 1 else 0.0,
        }
        off_peak_widths = spec.off_peak_widths
    else:
        raise InvalidArgumentError("Scenario has no coincidence electronics")

    n_accidental = estimate_accidentals(
        histogram, window, off_peak_region(histogram, window, off_peak_widths)
    )
    t_delay = round(window.center)
    return _Electronics(
        n_trigger=n_trigger,
        n_coincidence=n_coincidence,
        n_accidental=n_accidental,
        alpha=correction_alpha(stop_rate, t_delay, dut_dead_time),
        beta=beta,
        histogram=histogram,
        details=details,
    )


def run_coincidence(
    s: Scenario,
    acquisition: Acquisition,
    background_seed: int,
    trigger_id: str | None = None,
    dut_id: str | None = None,
) -> CoincidenceResult:
    """Coincidence-method estimate of the DUT efficiency from one acquisition."""
    trigger_id = trigger_id or s.trigger_detector
    dut_id = dut_id or s.dut_detector
    gate = acquisition.gate
    if gate <= 0:
        raise InvalidArgumentError("Coincidence acquisition needs a positive gate")
    seconds = to_seconds(gate)

    n_trigger_raw = count_scaler(acquisition.clicks[trigger_id].t, gate)
    n_dut = count_scaler(acquisition.clicks[dut_id].t, gate)
    trigger_rate = n_trigger_raw / seconds
    dut_rate = n_dut / seconds

    electronics = _count_coincidences(s, acquisition, trigger_id, dut_id)

    n_bg_raw = measure_background(s, gate, background_seed, detector_id=trigger_id)
    n_background = scale_background(
        n_bg_raw, n_bg_raw / seconds, trigger_rate, s.detectors[trigger_id].dead_time
    )
    if n_trigger_raw:
        n_background *= electronics.n_trigger / n_trigger_raw

    calib = s.calibration
    dut_chain = s.signal_chain if dut_id == s.signal_detector else s.idler_chain
    if calib.signal_transmittance is not None:
        t_signal = calib.signal_transmittance
    else:
        t_signal = chain_transmittance(dut_chain)

    corrections = CorrectionFactors(
        alpha=electronics.alpha,
        beta=electronics.beta,
        gamma=correction_gamma(dut_rate, s.detectors[dut_id].dead_time),
        t_signal=t_signal,
        t_signal_std=calib.signal_transmittance_std,
    )
    counts = CountsSummary(
        n_trigger=electronics.n_trigger,
        n_signal=n_dut,
        n_coincidence=electronics.n_coincidence,
        n_accidental=electronics.n_accidental,
        n_background=n_background,
        t_gate=gate,
        stop_rate=dut_rate,
        start_rate=trigger_rate,
    )
    estimate = eta_corrected(counts, corrections)
    estimate = bare_detector_efficiency(estimate, calib.bare_transmittances)
    estimate = estimate.model_copy(update={"details": {**estimate.details, **electronics.details}})
    logger.info(
        "Coincidence estimate of %s: %.5f ± %.5f", dut_id, estimate.value, estimate.std_uncertainty
    )
    return CoincidenceResult(
        estimate=estimate,
        counts=counts,
        corrections=corrections,
        raw_eta=eta_raw(electronics.n_coincidence, n_trigger_raw) if n_trigger_raw else 0.0,
        trigger_raw_eta=eta_raw(electronics.n_coincidence, n_dut) if n_dut else 0.0,
        histogram=electronics.histogram,
    )


# =============================================================================
# Conditional-Rotation Method
# =============================================================================


@dataclass(frozen=True)
class ScanResult:
    """Polarizer scan with the trigger rate observed while scanning."""

    scan: VisibilityScan
    trigger_rate: float
    coincidences: list[int] | None
    acquisitions: list[Acquisition] | None = None


def run_visibility_scan(
    s: Scenario,
    angles: list[float],
    integration: int,
    *,
    pockels_enabled: bool = True,
    with_background: bool = True,
    with_coincidences: bool = False,
    keep_acquisitions: bool = False,
    seed_key: int = SCAN_KEY,
) -> ScanResult:
    """One acquisition per polarizer angle, each with its own derived sub-seed.

    The paired background scan repeats every angle with the down-conversion off.
    With keep_acquisitions the clicks of every angle are returned as well.
    """
    chain = with_pockels_enabled(s.idler_chain, pockels_enabled)
    d1, d2 = s.signal_detector, s.idler_detector
    counts: list[int] = []
    background: list[int] = []
    coincidences: list[int] = []
    acquisitions: list[Acquisition] = []
    trigger_clicks = 0

    for i, angle in enumerate(angles):
        scan_chain = with_polarizer_angle(chain, angle)
        seed = derive_seed(s.seed, seed_key, i)
        acquisition = acquire(s, seed, integration, idler_chain=scan_chain)
        counts.append(count_scaler(acquisition.clicks[d2].t, integration))
        trigger_clicks += count_scaler(acquisition.clicks[d1].t, integration)
        if with_coincidences:
            coincidences.append(_count_coincidences(s, acquisition, d2, d1).n_coincidence)
        if keep_acquisitions:
            acquisitions.append(acquisition)
        if with_background:
            off = acquire(
                s,
                derive_seed(s.seed, SCAN_BACKGROUND_KEY, seed_key, i),
                integration,
                pair_rate=0.0,
                idler_chain=scan_chain,
            )
            background.append(count_scaler(off.clicks[d2].t, integration))

    total_time = to_seconds(integration) * len(angles)
    scan = VisibilityScan(
        angles_deg=list(angles),
        counts=counts,
        integration_time=integration,
        background=background if with_background else None,
    )
    return ScanResult(
        scan=scan,
        trigger_rate=trigger_clicks / total_time if total_time else 0.0,
        coincidences=coincidences if with_coincidences else None,
        acquisitions=acquisitions if keep_acquisitions else None,
    )


def conditional_corrections(s: Scenario, trigger_rate: float) -> ConditionalCorrections:
    """Apparatus factors for the rotation method from the configured apparatus."""
    pockels = find_pockels(s.idler_chain)
    if pockels is None:
        raise InvalidArgumentError("Idler chain has no Pockels cell")
    tail_weight = 0.5 if pockels.fall_tail >= pockels.driver_dead_time else 0.0
    live = pockels_live_fraction(trigger_rate, pockels.driver_dead_time, tail_weight)
    live -= unheralded_flip_fraction(
        trigger_rate,
        pockels.driver_dead_time,
        pockels.rise,
        pockels.flat_top,
        pockels.fall_tail,
    )
    if trigger_rate > pockels.max_trigger_rate:
        logger.warning(
            "D1 rate %.0f/s exceeds the Pockels driver limit of %.0f/s",
            trigger_rate,
            pockels.max_trigger_rate,
        )

    calib = s.calibration
    d1 = s.detectors[s.signal_detector]
    return ConditionalCorrections(
        pockels_live_fraction=live,
        flip_efficiency=calib.flip_efficiency or pockels.flip_efficiency,
        t_signal_polarizer=calib.signal_transmittance or chain_transmittance(s.signal_chain),
        detector_live_fraction=correction_gamma(trigger_rate, d1.dead_time),
        flip_efficiency_std=calib.flip_efficiency_std,
        t_signal_polarizer_std=calib.signal_transmittance_std,
    )


def _run_conditional(
    s: Scenario,
    *,
    with_coincidences: bool = False,
    keep_acquisitions: bool = False,
) -> tuple[EfficiencyEstimate, LsaFit, ScanResult]:
    result = run_visibility_scan(
        s,
        s.scan.angles_deg,
        s.scan.integration,
        with_coincidences=with_coincidences,
        keep_acquisitions=keep_acquisitions,
    )
    fit = lsa_fit_visibility(result.scan)
    corrections = conditional_corrections(s, result.trigger_rate)
    estimate = eta_conditional(result.scan, corrections, fit=fit)
    estimate = bare_detector_efficiency(estimate, s.calibration.bare_transmittances)
    logger.info(
        "Conditional estimate of %s: %.5f ± %.5f (V=%.5f)",
        s.signal_detector,
        estimate.value,
        estimate.std_uncertainty,
        fit.visibility,
    )
    return estimate, fit, result


# =============================================================================
# Analog Method
# =============================================================================


def _run_analog(s: Scenario) -> EfficiencyEstimate:
    d1 = s.detectors[s.signal_detector]
    d2 = s.detectors[s.idler_detector]
    assert d1.analog is not None and d2.analog is not None  # checked by validate_topology

    pairs_per_bin = s.source.pair_rate * d1.analog.bin_width / PS_PER_SECOND
    if pairs_per_bin > 0.1:
        logger.warning(
            "Analog method used at %.3g pairs per bin; the estimate is biased above ~0.1",
            pairs_per_bin,
        )

    calib = s.calibration
    if calib.analog_k is not None:
        k = calib.analog_k
    else:
        gains = RandomStream.for_element(s.seed, "calibration.gains")
        k = infer_K(
            draw_gains(d1.analog, calib.n_gain_samples, gains.child(s.signal_detector)),
            draw_gains(d2.analog, calib.n_gain_samples, gains.child(s.idler_detector)),
        )

    trace1, trace2 = analog_traces(s, s.seed, s.gate)
    estimate = eta_analog(trace1, trace2, k, n_segments=calib.n_trace_segments)
    t_path = calib.signal_transmittance or chain_transmittance(s.idler_chain, Pol.H)
    estimate = bare_detector_efficiency(estimate, [t_path, *calib.bare_transmittances])
    logger.info(
        "Analog estimate of %s: %.5f ± %.5f",
        s.idler_detector,
        estimate.value,
        estimate.std_uncertainty,
    )
    return estimate


# =============================================================================
# Comparison
# =============================================================================


# Fixed-point iterations of the pooled scan transmittance
_TRANSMITTANCE_ITERATIONS = 50
_TRANSMITTANCE_TOLERANCE = 1.0e-10


def _pair_classes(s: Scenario) -> list[tuple[Pol, Pol, float]]:
    """(signal, idler) polarizations of the emitted pairs with their weights."""
    if s.source.phase_matching == "type_ii":
        return [(Pol.H, Pol.V, 0.5), (Pol.V, Pol.H, 0.5)]
    return [(Pol.H, Pol.H, 1.0)]


def scan_coincidence(s: Scenario, scan: ScanResult) -> CoincidenceResult:
    """Coincidence estimate of D1 from the clicks of a triggered polarizer scan.

    The per-angle acquisitions are joined end to end and counted with D2 as trigger. The
    DUT-path transmittance is pooled over the scan; it depends on the DUT efficiency
    through the heralded rotations, so it is iterated to a fixed point.

    Raises:
        InvalidArgumentError: If the scan kept no acquisitions.
    """
    if not scan.acquisitions:
        raise InvalidArgumentError("Scan kept no acquisitions to count coincidences in")
    d1, d2 = s.signal_detector, s.idler_detector
    result = run_coincidence(
        s,
        concatenate(scan.acquisitions),
        derive_seed(s.seed, SCAN_BACKGROUND_KEY, SCAN_KEY),
        trigger_id=d2,
        dut_id=d1,
    )

    classes = _pair_classes(s)
    weights = [w for _, _, w in classes]
    base = s.calibration.signal_transmittance or chain_transmittance(s.signal_chain)
    unpolarized = chain_transmittance(s.signal_chain)
    t_class = [base * chain_transmittance(s.signal_chain, p) / unpolarized for p, _, _ in classes]
    idler = np.array([int(p) for _, p, _ in classes], dtype=np.int8)
    polarizer = next(e for e in reversed(s.idler_chain) if isinstance(e, PolarizerSpec))
    angles = scan.scan.angles_deg
    kept = np.stack([pass_probability(idler, a, polarizer.extinction) for a in angles])
    rotated = np.stack([pass_probability(1 - idler, a, polarizer.extinction) for a in angles])
    apparatus = conditional_corrections(s, scan.trigger_rate)
    flip = apparatus.flip_efficiency * apparatus.pockels_live_fraction

    corrections = result.corrections
    estimate = eta_corrected(result.counts, corrections)
    for _ in range(_TRANSMITTANCE_ITERATIONS):
        eta_click = min(max(estimate.value * apparatus.detector_live_fraction, 0.0), 1.0)
        t_scan = scan_signal_transmittance(weights, t_class, kept, rotated, eta_click, flip)
        converged = abs(t_scan - corrections.t_signal) < _TRANSMITTANCE_TOLERANCE
        corrections = corrections.model_copy(update={"t_signal": t_scan})
        estimate = eta_corrected(result.counts, corrections)
        if converged:
            break

    estimate = bare_detector_efficiency(estimate, s.calibration.bare_transmittances)
    estimate = estimate.model_copy(update={"details": result.estimate.details})
    logger.info(
        "Scan coincidence estimate of %s: %.5f ± %.5f (T=%.5f)",
        d1,
        estimate.value,
        estimate.std_uncertainty,
        corrections.t_signal,
    )
    return replace(result, estimate=estimate, corrections=corrections)


def run_comparison(s: Scenario, out_dir: Path | None = None) -> TrialReport:
    """Calibrate D1 by both methods from one triggered polarizer scan.

    D2 counts behind the polarizer give the rotation estimate, with a matched background
    scan. The same clicks, D2 as trigger and D1 as DUT, give the coincidence estimate.
    Coincidence curves with and without rotation are recorded at every angle.
    """
    angles = s.scan.angles_deg
    integration = s.scan.integration

    conditional, fit, triggered = _run_conditional(
        s, with_coincidences=True, keep_acquisitions=True
    )
    coincidence = scan_coincidence(s, triggered)
    untriggered = run_visibility_scan(
        s,
        angles,
        integration,
        pockels_enabled=False,
        with_background=False,
        with_coincidences=True,
        seed_key=UNTRIGGERED_SCAN_KEY,
    )

    with_rotation = triggered.coincidences or []
    without_rotation = untriggered.coincidences or []
    flip, shift = _curve_analysis(angles, integration, with_rotation, without_rotation)
    difference, combined = combine_difference(coincidence.estimate, conditional)
    comparison = ComparisonSummary(
        coincidence=coincidence.estimate,
        conditional=conditional,
        difference=difference,
        combined_std=combined,
        flip_efficiency_estimate=flip,
        phase_shift_deg=shift,
    )
    logger.info("Method difference: %.5f ± %.5f", difference, combined)

    files: dict[str, str] = {}
    if out_dir is not None:
        scan = triggered.scan
        write_scan_csv(scan.angles_deg, scan.counts, scan.background, out_dir / SCAN_FILE)
        write_curves_csv(angles, with_rotation, without_rotation, out_dir / CURVES_FILE)
        files = {"scan": SCAN_FILE, "curves": CURVES_FILE}
        if coincidence.histogram is not None:
            write_histogram_csv(coincidence.histogram, out_dir / HISTOGRAM_FILE)
            files["histogram"] = HISTOGRAM_FILE

    return TrialReport(
        scenario=s.name,
        method=s.method,
        seed=s.seed,
        estimates={"coincidence": coincidence.estimate, "conditional_rotation": conditional},
        counts=coincidence.counts,
        corrections=coincidence.corrections,
        raw_eta=coincidence.raw_eta,
        trigger_raw_eta=coincidence.trigger_raw_eta,
        lsa=fit,
        scan=triggered.scan,
        comparison=comparison,
        files=files,
    )


def _curve_analysis(
    angles: list[float],
    integration: int,
    with_rotation: list[int],
    without_rotation: list[int],
) -> tuple[float | None, float | None]:
    """Flip efficiency and phase shift from the two coincidence curves, if fittable."""
    try:
        fit_with, fit_without = (
            lsa_fit_visibility(
                VisibilityScan(angles_deg=angles, counts=counts, integration_time=integration)
            )
            for counts in (with_rotation, without_rotation)
        )
        flip = estimate_flip_efficiency(fit_with, fit_without)
    except (InvalidArgumentError, DegenerateFitError) as e:
        logger.warning("Coincidence curves not fittable: %s", e.message)
        return None, None
    return flip, (fit_with.phase_deg - fit_without.phase_deg) % 180.0


# =============================================================================
# Scenario Runs
# =============================================================================


def validate_estimates(s: Scenario, estimates: dict[str, EfficiencyEstimate]) -> ValidationOutcome:
    """Compare finished estimates with the configured efficiency of the reference detector."""
    if s.validation is None:
        raise InvalidArgumentError("Scenario has no validation section")
    truth = s.detectors[s.validation.ground_truth_detector].eta
    deviations = {
        method: (estimate.value - truth) / estimate.std_uncertainty
        for method, estimate in estimates.items()
    }
    passed = all(abs(d) <= s.validation.n_sigma for d in deviations.values())
    if not passed:
        logger.warning("Validation failed: deviations in sigma %s", deviations)
    return ValidationOutcome(
        ground_truth_eta=truth,
        n_sigma=s.validation.n_sigma,
        passed=passed,
        deviations=deviations,
    )


def run_scenario(
    s: Scenario,
    out_dir: Path | None = None,
    *,
    recorded_clicks: dict[str, TimeTags] | None = None,
    save_clicks: bool = False,
) -> TrialReport:
    """Execute one deterministic trial of a scenario.

    Args:
        s: Scenario; its topology is checked first.
        out_dir: If given, CSV sidecars are written there and named in the report.
        recorded_clicks: Coincidence method only: calibrate these recorded click streams
            instead of simulating an acquisition. The background is still simulated.
        save_clicks: Coincidence method only: also write the click streams to out_dir.

    Raises:
        ConfigError: If the topology does not suit the method.
        InvalidArgumentError: If recorded clicks are given for another method or lack a
            detector of the scenario.
    """
    validate_topology(s)
    if recorded_clicks is not None and s.method != "coincidence":
        raise InvalidArgumentError(
            "Recorded clicks can only be calibrated by the coincidence method",
            details={"method": s.method},
        )
    logger.debug("Running %s (method %s, seed %d)", s.name, s.method, s.seed)

    if s.method == "compare":
        report = run_comparison(s, out_dir)
    elif s.method == "coincidence":
        if recorded_clicks is None:
            acquisition = acquire(s, s.seed, s.gate)
        else:
            missing = {s.trigger_detector, s.dut_detector} - set(recorded_clicks)
            if missing:
                raise InvalidArgumentError(
                    "Recorded clicks lack a scenario detector",
                    details={"missing": sorted(missing), "recorded": sorted(recorded_clicks)},
                )
            acquisition = recorded(recorded_clicks, s.gate)
        result = run_coincidence(s, acquisition, derive_seed(s.seed, BACKGROUND_KEY))
        files: dict[str, str] = {}
        if out_dir is not None and result.histogram is not None:
            write_histogram_csv(result.histogram, out_dir / HISTOGRAM_FILE)
            files["histogram"] = HISTOGRAM_FILE
        if out_dir is not None and save_clicks:
            streams = (clicks.tags() for clicks in acquisition.clicks.values())
            write_clicks_csv(streams, out_dir / CLICKS_FILE)
            files["clicks"] = CLICKS_FILE
        report = TrialReport(
            scenario=s.name,
            method=s.method,
            seed=s.seed,
            estimates={"coincidence": result.estimate},
            counts=result.counts,
            corrections=result.corrections,
            raw_eta=result.raw_eta,
            trigger_raw_eta=result.trigger_raw_eta,
            files=files,
        )
    elif s.method == "conditional_rotation":
        estimate, fit, scan_result = _run_conditional(s)
        scan = scan_result.scan
        files = {}
        if out_dir is not None:
            write_scan_csv(scan.angles_deg, scan.counts, scan.background, out_dir / SCAN_FILE)
            files["scan"] = SCAN_FILE
        report = TrialReport(
            scenario=s.name,
            method=s.method,
            seed=s.seed,
            estimates={"conditional_rotation": estimate},
            lsa=fit,
            scan=scan,
            files=files,
        )
    else:
        report = TrialReport(
            scenario=s.name,
            method=s.method,
            seed=s.seed,
            estimates={"analog": _run_analog(s)},
        )

    if s.validation is not None:
        report = report.model_copy(
            update={"validation": validate_estimates(s, report.estimates)}
        )
    return report


def run_trials(s: Scenario, n: int, n_jobs: int = 1) -> TrialsReport:
    """Repeat a scenario n times; trial k runs with seed derive_seed(seed, k).

    Trials run in parallel when n_jobs != 1; reports are ordered by trial index.

    Raises:
        InvalidArgumentError: If n < 2.
    """
    if n < 2:
        raise InvalidArgumentError(
            "Need at least 2 trials for repetition statistics", details={"n": n}
        )
    validate_topology(s)
    seeds = [derive_seed(s.seed, k) for k in range(n)]
    reports: list[TrialReport] = Parallel(n_jobs=n_jobs)(
        delayed(run_scenario)(s.with_seed(seed)) for seed in seeds
    )
    for k, report in enumerate(reports):
        logger.debug("Trial %d (seed %d) done", k, report.seed)

    statistics: dict[str, MethodStatistics] = {}
    for method in reports[0].estimates:
        values = np.array([r.estimates[method].value for r in reports])
        sigmas = np.array([r.estimates[method].std_uncertainty for r in reports])
        std = float(values.std(ddof=1))
        statistics[method] = MethodStatistics(
            mean=float(values.mean()),
            std=std,
            standard_error=std / math.sqrt(n),
            mean_reported_uncertainty=float(sigmas.mean()),
            n=n,
        )
        logger.info(
            "%s: mean %.5f, std %.5f over %d trials",
            method,
            statistics[method].mean,
            std,
            n,
        )
    return TrialsReport(
        scenario=s.name,
        seed=s.seed,
        n_trials=n,
        statistics=statistics,
        trials=reports,
    )


def write_report(report: TrialReport | TrialsReport, path: Path) -> Path:
    """Write a report as indented JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path
