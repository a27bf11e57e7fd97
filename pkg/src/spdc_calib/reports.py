"""Pydantic records for counts, correction factors, estimates and run reports."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

REPORT_SCHEMA_VERSION = "1"

Method = Literal["coincidence", "conditional_rotation", "analog"]


class ReportModel(BaseModel):
    """Base for report records: frozen, declaration-ordered JSON."""

    model_config = ConfigDict(frozen=True)


class CountsSummary(ReportModel):
    """Scaler and coincidence totals of one acquisition.

    N_accidental and N_background are estimates, hence floats.
    """

    n_trigger: int = Field(ge=0)
    n_signal: int = Field(default=0, ge=0)
    n_coincidence: int = Field(ge=0)
    n_accidental: float = Field(default=0.0, ge=0.0)
    n_background: float = Field(default=0.0, ge=0.0)
    t_gate: int = Field(ge=0)
    stop_rate: float = Field(default=0.0, ge=0.0)
    start_rate: float = Field(default=0.0, ge=0.0)


class CorrectionFactors(ReportModel):
    """Survival fractions applied by the corrected coincidence estimator."""

    alpha: float = Field(default=1.0, gt=0.0, le=1.0)
    beta: float = Field(default=1.0, gt=0.0, le=1.0)
    gamma: float = Field(default=1.0, gt=0.0, le=1.0)
    t_signal: float = Field(default=1.0, gt=0.0, le=1.0)
    t_signal_std: float = Field(default=0.0, ge=0.0)

    @property
    def product(self) -> float:
        return self.alpha * self.beta * self.gamma * self.t_signal


class EfficiencyEstimate(ReportModel):
    """Method-tagged efficiency estimate with the inputs it consumed."""

    value: float
    std_uncertainty: float = Field(gt=0.0)
    method: Method
    corrections: dict[str, float] = {}
    counts: dict[str, float] = {}
    details: dict[str, float | str | bool] = {}

    def within(self, truth: float, n_sigma: float) -> bool:
        """Whether truth lies within n_sigma standard uncertainties."""
        return abs(self.value - truth) <= n_sigma * self.std_uncertainty


class VisibilityScan(ReportModel):
    """Counts of the polarizer-scan detector versus polarizer angle.

    Attributes:
        angles_deg: Polarizer angles.
        counts: Counts per angle.
        integration_time: Acquisition time per angle, ticks.
        background: Matched background counts per angle (source off), if measured.
    """

    angles_deg: list[float]
    counts: list[int]
    integration_time: int = Field(ge=0)
    background: list[int] | None = None

    @model_validator(mode="after")
    def _check_lengths(self) -> VisibilityScan:
        if len(self.angles_deg) != len(self.counts):
            raise ValueError("angles_deg and counts must have equal lengths")
        if self.background is not None and len(self.background) != len(self.counts):
            raise ValueError("background must match counts in length")
        if any(c < 0 for c in self.counts) or any(c < 0 for c in self.background or []):
            raise ValueError("counts must be non-negative")
        return self


class LsaFit(ReportModel):
    """Weighted least-squares fit of A·(1 − V·cos 2(θ−θ0)) + B.

    Covariance rows and columns are ordered (A, V, θ0 in degrees, B).
    """

    amplitude: float
    visibility: float
    phase_deg: float
    offset: float
    covariance: list[list[float]]
    chi_square: float
    dof: int

    @property
    def visibility_std(self) -> float:
        return math.sqrt(max(self.covariance[1][1], 0.0))

    @property
    def phase_std(self) -> float:
        return math.sqrt(max(self.covariance[2][2], 0.0))

    @property
    def phase_consistent_with_zero(self) -> bool:
        """θ0 within 3σ of 0 (mod 180°)."""
        distance = min(self.phase_deg % 180.0, 180.0 - self.phase_deg % 180.0)
        return distance <= 3.0 * self.phase_std


class ComparisonSummary(ReportModel):
    """Side-by-side result of the coincidence and conditional-rotation methods."""

    coincidence: EfficiencyEstimate
    conditional: EfficiencyEstimate
    difference: float
    combined_std: float
    flip_efficiency_estimate: float | None = None
    phase_shift_deg: float | None = None

    @property
    def compatible(self) -> bool:
        return abs(self.difference) <= 3.0 * self.combined_std


class ValidationOutcome(ReportModel):
    """Check of each estimate against the configured ground truth."""

    ground_truth_eta: float
    n_sigma: float
    passed: bool
    deviations: dict[str, float]


class TrialReport(ReportModel):
    """Everything one simulated run produced. File names are relative to the report."""

    schema_version: str = REPORT_SCHEMA_VERSION
    scenario: str
    method: str
    seed: int
    estimates: dict[str, EfficiencyEstimate]
    counts: CountsSummary | None = None
    corrections: CorrectionFactors | None = None
    raw_eta: float | None = None
    trigger_raw_eta: float | None = None
    lsa: LsaFit | None = None
    scan: VisibilityScan | None = None
    comparison: ComparisonSummary | None = None
    validation: ValidationOutcome | None = None
    files: dict[str, str] = {}


class MethodStatistics(ReportModel):
    """Repetition statistics of one method's estimates."""

    mean: float
    std: float
    standard_error: float
    mean_reported_uncertainty: float
    n: int


class TrialsReport(ReportModel):
    """Aggregate of repeated trials, per-trial reports sorted by trial index."""

    schema_version: str = REPORT_SCHEMA_VERSION
    scenario: str
    seed: int
    n_trials: int
    statistics: dict[str, MethodStatistics]
    trials: list[TrialReport]
