"""End-to-end runs of the simulation chain with short gates."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from spdc_calib.cli import main
from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.timebase import RandomStream, poisson_stream, seconds, us
from spdc_calib.electronics.counters import and_gate, tac_process
from spdc_calib.estimators.coincidence import correction_alpha, correction_gamma
from spdc_calib.estimators.conditional import lsa_fit_visibility
from spdc_calib.experiment import acquire, concatenate
from spdc_calib.models import DetectorSpec, TacSpec
from spdc_calib.physics.detection import detect
from spdc_calib.reports import TrialReport
from spdc_calib.runner import (
    REPORT_FILE,
    run_scenario,
    run_trials,
    run_visibility_scan,
    scan_coincidence,
    write_report,
)
from tests.conftest import photons_at, preset_dict, scenario_from

pytestmark = pytest.mark.integration

IDEAL = {"dark_rate": 0.0, "dead_time": 0, "jitter_sigma": 0}


def _short(data: dict[str, Any], gate_s: float = 1.0) -> dict[str, Any]:
    data["gate"] = seconds(gate_s)
    return data


def _ideal_and_gate(data: dict[str, Any]) -> dict[str, Any]:
    for detector in data["detectors"].values():
        detector.update(IDEAL)
    data["stray_light_rate"] = {}
    data["electronics"] = {"kind": "and_gate", "window": 5_000}
    return _short(data)


class TestCoincidencePipeline:
    """Coincidence method through source, chains, detectors and electronics."""

    def test_ideal_apparatus(self, lilo3_dict: dict[str, Any]) -> None:
        """Ideal detectors and an AND gate recover the configured efficiency."""
        report = run_scenario(scenario_from(_ideal_and_gate(lilo3_dict)))
        estimate = report.estimates["coincidence"]
        assert estimate.within(0.5, 4.0)
        assert report.validation is not None
        assert report.counts is not None
        assert report.counts.n_background == 0.0

    def test_coincidences_independent_of_trigger_efficiency(
        self, lilo3_dict: dict[str, Any]
    ) -> None:
        """True coincidences follow N·ηs·ηi·Ts·Ti·overlap."""
        s = scenario_from(_ideal_and_gate(lilo3_dict))
        acquisition = acquire(s, 5, s.gate)
        n = and_gate(acquisition.clicks["D1"].t, acquisition.clicks["D2"].t, 5_000)
        expected = acquisition.n_pairs * 0.5 * 0.5 * 0.9 * 0.6 * 0.9
        assert abs(n - expected) <= 5 * np.sqrt(expected)

    def test_tac_peak_over_grass(self, lilo3_dict: dict[str, Any]) -> None:
        """The MCA histogram has a peak far above the flat accidental floor."""
        s = scenario_from(_short(lilo3_dict))
        acquisition = acquire(s, 1, s.gate)
        assert isinstance(s.electronics, TacSpec)
        stops = acquisition.clicks["D1"].t + np.int64(s.electronics.stop_delay_line)
        tac = tac_process(acquisition.clicks["D2"].t, stops, s.electronics)
        counts = tac.histogram.counts
        peak = int(np.argmax(counts))
        assert abs(peak * 100 - 1_000_000) <= 1_000
        off_peak = np.concatenate([counts[: peak - 200], counts[peak + 200 :]])
        assert counts[peak] >= 20 * max(float(np.median(off_peak)), 1.0)

    @pytest.mark.parametrize("electronics", ["lilo3_tic", "lilo3_and_gate"])
    def test_other_electronics(self, electronics: str) -> None:
        """TIC and AND-gate presets produce validated estimates."""
        report = run_scenario(scenario_from(_short(preset_dict(electronics), 2.0)))
        assert report.estimates["coincidence"].within(0.5, 4.0)

    def test_histogram_written(self, lilo3_dict: dict[str, Any], tmp_path: Path) -> None:
        """The TAC histogram sidecar is written and named in the report."""
        report = run_scenario(scenario_from(_short(lilo3_dict)), out_dir=tmp_path)
        assert report.files == {"histogram": "histogram.csv"}
        lines = (tmp_path / "histogram.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "bin_start_ps,count"
        assert len(lines) == 1 + 20_000


class TestCorrectionsAgainstSimulation:
    """First-order corrections against direct Monte Carlo."""

    def test_alpha_preemption(self) -> None:
        """Fraction of starts whose correlated stop is captured matches alpha."""
        gate = seconds(10)
        starts = poisson_stream(1e3, gate, RandomStream(21, 1))
        uncorrelated = poisson_stream(2e4, gate, RandomStream(21, 2))
        stops = np.sort(np.concatenate([starts + us(1), uncorrelated]))
        tac = tac_process(starts, stops, TacSpec())
        captured = tac.n_coincidence / tac.valid_start_count
        stop_rate = stops.size / 10.0
        alpha = correction_alpha(stop_rate, us(1))
        n = tac.valid_start_count
        assert abs(captured - alpha) <= 5 * np.sqrt(alpha * (1 - alpha) / n)

    def test_gamma_live_time(self) -> None:
        """Detected fraction of Poisson photons matches the live-time fraction."""
        gate = seconds(1)
        arrivals = poisson_stream(1e5, gate, RandomStream(22, 1))
        spec = DetectorSpec(eta=1.0, dark_rate=0.0, dead_time=us(1), jitter_sigma=0)
        clicks = detect(photons_at(arrivals), spec, gate, RandomStream(22, 2))
        observed_rate = len(clicks) / 1.0
        live = len(clicks) / arrivals.size
        gamma = correction_gamma(observed_rate, us(1))
        assert abs(live - gamma) <= 5 * np.sqrt(gamma * (1 - gamma) / arrivals.size)


class TestConditionalPipeline:
    """Polarizer scans and the rotation method."""

    def test_scan_shape(self, bbo_dict: dict[str, Any]) -> None:
        """A scan has one point per angle with a matched background."""
        s = scenario_from(bbo_dict)
        result = run_visibility_scan(s, s.scan.angles_deg, seconds(1))
        assert len(result.scan.counts) == 19
        assert result.scan.background is not None
        assert len(result.scan.background) == 19
        assert result.trigger_rate > 0

    def test_zero_integration(self, bbo_dict: dict[str, Any]) -> None:
        """Zero integration time gives zero counts everywhere."""
        s = scenario_from(bbo_dict)
        result = run_visibility_scan(s, s.scan.angles_deg, 0)
        assert result.scan.counts == [0] * 19
        assert result.trigger_rate == 0.0

    def test_counts_scale_with_integration(self, bbo_dict: dict[str, Any]) -> None:
        """Doubling the integration time doubles the counts."""
        s = scenario_from(bbo_dict)
        one = sum(run_visibility_scan(s, [45.0], seconds(2)).scan.counts)
        two = sum(run_visibility_scan(s, [45.0], seconds(4)).scan.counts)
        assert abs(two - 2 * one) <= 5 * np.sqrt(4 * one + two)

    def test_untriggered_scan_is_flat(self, bbo_dict: dict[str, Any]) -> None:
        """Without the Pockels cell the idler arm is unpolarized."""
        s = scenario_from(bbo_dict)
        result = run_visibility_scan(
            s, s.scan.angles_deg, s.scan.integration, pockels_enabled=False
        )
        fit = lsa_fit_visibility(result.scan)
        assert fit.visibility <= 3.5 * fit.visibility_std

    def test_conditional_run(self, bbo_dict: dict[str, Any], tmp_path: Path) -> None:
        """The rotation method recovers the D1 efficiency and writes its scan."""
        bbo_dict["method"] = "conditional_rotation"
        report = run_scenario(scenario_from(bbo_dict), out_dir=tmp_path)
        estimate = report.estimates["conditional_rotation"]
        assert estimate.within(0.486, 3.5)
        assert report.lsa is not None
        assert (tmp_path / "scan.csv").is_file()


class TestComparisonPipeline:
    """Both methods on the same simulated apparatus."""

    def test_compare(self, bbo_dict: dict[str, Any], tmp_path: Path) -> None:
        """Compare reports both estimates, their difference and the curves."""
        report = run_scenario(scenario_from(bbo_dict), out_dir=tmp_path)
        assert set(report.estimates) == {"coincidence", "conditional_rotation"}
        comparison = report.comparison
        assert comparison is not None
        assert comparison.compatible
        assert comparison.phase_shift_deg is not None
        assert 80.0 <= comparison.phase_shift_deg <= 100.0
        assert comparison.flip_efficiency_estimate is not None
        assert comparison.flip_efficiency_estimate > 0.8
        assert comparison.conditional.std_uncertainty > comparison.coincidence.std_uncertainty
        assert set(report.files) == {"scan", "curves", "histogram"}

    def test_shared_clicks(self, bbo_dict: dict[str, Any]) -> None:
        """A Pockels-only change moves both estimates, which come from one scan."""
        bbo_dict["scan"]["integration"] = seconds(1)
        reports: dict[float, TrialReport] = {}
        for flip in (1.0, 0.5):
            bbo_dict["idler_chain"][1]["flip_efficiency"] = flip
            reports[flip] = run_scenario(scenario_from(bbo_dict))
        for method in ("coincidence", "conditional_rotation"):
            assert reports[1.0].estimates[method].value != reports[0.5].estimates[method].value
        half = reports[0.5].estimates["coincidence"]
        assert half.within(0.486, 4.0)
        assert reports[0.5].corrections is not None
        assert 0.4 < reports[0.5].corrections.t_signal < 0.5

    def test_scan_coincidence_needs_clicks(self, bbo_dict: dict[str, Any]) -> None:
        """A scan run without its acquisitions cannot feed the coincidence method."""
        s = scenario_from(bbo_dict)
        result = run_visibility_scan(s, [0.0], seconds(1), with_background=False)
        with pytest.raises(InvalidArgumentError):
            scan_coincidence(s, result)

    def test_concatenate(self, lilo3_dict: dict[str, Any]) -> None:
        """Joined acquisitions keep every click, shifted past the earlier gates."""
        s = scenario_from(lilo3_dict)
        first, second = (acquire(s, seed, seconds(0.1)) for seed in (1, 2))
        joined = concatenate([first, second])
        assert joined.gate == seconds(0.2)
        assert joined.n_pairs == first.n_pairs + second.n_pairs
        for detector_id, clicks in joined.clicks.items():
            n_first = len(first.clicks[detector_id])
            assert len(clicks) == n_first + len(second.clicks[detector_id])
            assert np.all(np.diff(clicks.t) > 0)
            np.testing.assert_array_equal(
                clicks.t[n_first:], second.clicks[detector_id].t + seconds(0.1)
            )


class TestAnalogPipeline:
    """Analog-correlation method on charge-integrating detectors."""

    def test_preset(self) -> None:
        """The low-intensity preset recovers the idler-detector efficiency."""
        report = run_scenario(scenario_from(preset_dict("analog_low_intensity")))
        estimate = report.estimates["analog"]
        assert estimate.within(0.3, 4.0)
        assert estimate.corrections["K"] > 1.0


class TestTrials:
    """Repeated trials with derived seeds."""

    def test_statistics(self, lilo3_dict: dict[str, Any]) -> None:
        """Two trials give finite repetition statistics in trial order."""
        s = scenario_from(_ideal_and_gate(lilo3_dict))
        trials = run_trials(s, 2)
        stats = trials.statistics["coincidence"]
        assert stats.n == 2
        assert np.isfinite(stats.std)
        repeat = run_trials(s, 2)
        for first, again in zip(trials.trials, repeat.trials, strict=True):
            assert first.estimates == again.estimates

    def test_needs_two(self, lilo3_dict: dict[str, Any]) -> None:
        """A single trial has no repetition statistics."""
        with pytest.raises(InvalidArgumentError):
            run_trials(scenario_from(_ideal_and_gate(lilo3_dict)), 1)

    @pytest.mark.slow
    def test_spread_shrinks_with_gate(self, lilo3_dict: dict[str, Any]) -> None:
        """Quadrupling the gate halves the trial-to-trial spread."""
        data = _ideal_and_gate(lilo3_dict)
        spreads = []
        for gate_s in (0.25, 1.0):
            data["gate"] = seconds(gate_s)
            trials = run_trials(scenario_from(data), 100, n_jobs=-1)
            spreads.append(trials.statistics["coincidence"].std)
        assert 1.4 < spreads[0] / spreads[1] < 2.8


class TestDeterminism:
    """Same seed, same outputs."""

    def test_byte_identical(self, lilo3_dict: dict[str, Any], tmp_path: Path) -> None:
        """Two runs with one seed write identical report and histogram files."""
        s = scenario_from(_short(lilo3_dict))
        for name in ("a", "b"):
            write_report(run_scenario(s, out_dir=tmp_path / name), tmp_path / name / REPORT_FILE)
        for file in (REPORT_FILE, "histogram.csv"):
            assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()

    @pytest.mark.parametrize("preset", ["lilo3_coincidence", "bbo_conditional"])
    def test_estimates_ignore_validation(self, preset: str) -> None:
        """Removing the ground-truth section leaves every estimate unchanged."""
        data = preset_dict(preset)
        data["gate"] = seconds(1)
        data.setdefault("scan", {})["integration"] = seconds(1)
        with_truth = run_scenario(scenario_from(data))
        del data["validation"]
        without_truth = run_scenario(scenario_from(data))
        assert without_truth.validation is None
        assert with_truth.estimates == without_truth.estimates


class TestCommandLine:
    """spdc-calib subcommands on real scenarios."""

    def test_calibrate_coincidence(self, lilo3_dict: dict[str, Any], tmp_path: Path) -> None:
        """A run writes its report and exits 0."""
        config = tmp_path / "scenario.json"
        config.write_text(json.dumps(_short(lilo3_dict)), encoding="utf-8")
        out = tmp_path / "out"
        assert main(["calibrate-coincidence", "--config", str(config), "--out", str(out)]) == 0
        report = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
        assert report["method"] == "coincidence"
        assert report["validation"]["ground_truth_eta"] == 0.5
        assert (out / "histogram.csv").is_file()

    def test_validation_failure_exit_code(
        self, lilo3_dict: dict[str, Any], tmp_path: Path
    ) -> None:
        """A ground truth far from the estimate exits 5."""
        lilo3_dict["detectors"]["D1"]["eta"] = 0.5
        lilo3_dict["calibration"] = {"signal_transmittance": 0.45}
        config = tmp_path / "scenario.json"
        config.write_text(json.dumps(_short(lilo3_dict)), encoding="utf-8")
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "o")]) == 5

    def test_trials(self, lilo3_dict: dict[str, Any], tmp_path: Path) -> None:
        """trials writes the aggregate report."""
        config = tmp_path / "scenario.json"
        config.write_text(json.dumps(_short(lilo3_dict, 0.5)), encoding="utf-8")
        out = tmp_path / "out"
        assert main(["trials", "--config", str(config), "-n", "2", "--out", str(out)]) == 0
        aggregate = json.loads((out / "trials.json").read_text(encoding="utf-8"))
        assert aggregate["n_trials"] == 2
        assert len(aggregate["trials"]) == 2

    def test_recorded_clicks_round_trip(self, lilo3_dict: dict[str, Any], tmp_path: Path) -> None:
        """Calibrating saved clicks reproduces the estimate of the run that saved them."""
        config = tmp_path / "scenario.json"
        config.write_text(json.dumps(_short(lilo3_dict)), encoding="utf-8")
        first, second = tmp_path / "first", tmp_path / "second"
        command = ["calibrate-coincidence", "--config", str(config)]
        assert main([*command, "--save-clicks", "--out", str(first)]) == 0
        clicks = first / "clicks.csv"
        assert clicks.is_file()
        assert main([*command, "--clicks", str(clicks), "--out", str(second)]) == 0
        reports = [
            json.loads((out / REPORT_FILE).read_text(encoding="utf-8")) for out in (first, second)
        ]
        assert reports[0]["estimates"] == reports[1]["estimates"]
        assert reports[0]["files"]["clicks"] == "clicks.csv"

    def test_recorded_clicks_need_coincidence(self, bbo_dict: dict[str, Any]) -> None:
        """Only the coincidence method calibrates recorded clicks."""
        with pytest.raises(InvalidArgumentError):
            run_scenario(scenario_from(bbo_dict), recorded_clicks={})

    def test_recorded_clicks_need_both_detectors(self, lilo3_dict: dict[str, Any]) -> None:
        """A recording without the DUT stream is rejected."""
        s = scenario_from(_short(lilo3_dict))
        tags = acquire(s, 1, s.gate).clicks["D2"].tags()
        with pytest.raises(InvalidArgumentError):
            run_scenario(s, recorded_clicks={"D2": tags})
