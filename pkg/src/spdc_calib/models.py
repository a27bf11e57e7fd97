"""Pydantic models for scenario configuration sections.

Durations are integer picoseconds, rates are per second, wavelengths are nm.
Every model forbids unknown keys so a typo in a scenario file is an error.
"""

from __future__ import annotations

from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from spdc_calib.physics.source import ENERGY_TOLERANCE, conservation_residual

Duration = Annotated[int, Field(ge=0)]
Fraction = Annotated[float, Field(ge=0.0, le=1.0)]


class SpecModel(BaseModel):
    """Base for config sections: frozen, unknown keys rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


# =============================================================================
# Source
# =============================================================================


class SourceSpec(SpecModel):
    """Down-conversion source.

    Attributes:
        pair_rate: Pairs per second at the crystal (W0).
        pump_wavelength: Pump wavelength, nm.
        signal_wavelength: Signal wavelength, nm.
        idler_wavelength: Idler wavelength, nm.
        phase_matching: "type_i" (parallel) or "type_ii" (orthogonal polarizations).
        emission_jitter_sigma: Co-emission spread in ps; draws are rounded to whole ticks.
        collection_overlap: Probability the idler enters its channel given the signal did.
    """

    pair_rate: float = Field(default=1.0e5, ge=0.0)
    pump_wavelength: float = Field(gt=0.0)
    signal_wavelength: float = Field(gt=0.0)
    idler_wavelength: float = Field(gt=0.0)
    phase_matching: Literal["type_i", "type_ii"] = "type_i"
    emission_jitter_sigma: float = Field(default=0.1, ge=0.0)
    collection_overlap: Fraction = 1.0

    @model_validator(mode="after")
    def _check_energy(self) -> SourceSpec:
        residual = conservation_residual(
            self.pump_wavelength, self.signal_wavelength, self.idler_wavelength
        )
        if residual > ENERGY_TOLERANCE:
            raise ValueError(
                f"wavelengths violate energy conservation (residual {residual:.3g} > "
                f"{ENERGY_TOLERANCE:g})"
            )
        return self


# =============================================================================
# Optical Elements
# =============================================================================


class LossElement(SpecModel):
    """Bernoulli loss (filter, lens, crystal transmittance)."""

    kind: Literal["loss"] = "loss"
    transmittance: Fraction = 1.0
    label: str = ""


class PolarizerSpec(SpecModel):
    """Linear polarizer; angle 0 transmits H."""

    kind: Literal["polarizer"] = "polarizer"
    angle_deg: float = 0.0
    extinction: float = Field(default=0.0, ge=0.0, lt=1.0)


class PbsSpec(SpecModel):
    """Polarizing beam splitter; the chain continues on the given port (transmit = V)."""

    kind: Literal["pbs"] = "pbs"
    port: Literal["transmit", "reflect"] = "transmit"


class FiberSpec(SpecModel):
    """Polarization-maintaining delay fiber (50 m single mode by default)."""

    kind: Literal["fiber"] = "fiber"
    delay: Duration = 250_000
    transmittance: Fraction = 1.0


class PockelsSpec(SpecModel):
    """Triggered Pockels cell acting as a switchable half-wave plate.

    The driver fires a pulse trigger_delay after an accepted D1 click: rise, flat top
    (full rotation window), then a long fall tail.
    """

    kind: Literal["pockels"] = "pockels"
    trigger_delay: Duration = 150_000
    rise: Duration = 5_000
    flat_top: Duration = 180_000
    fall_tail: Duration = 10_000_000
    flip_efficiency: Fraction = 1.0
    driver_dead_time: Duration = 10_000_000
    max_trigger_rate: float = Field(default=1.0e4, gt=0.0)
    enabled: bool = True


ChainElement = Annotated[
    LossElement | PolarizerSpec | PbsSpec | FiberSpec | PockelsSpec,
    Field(discriminator="kind"),
]


# =============================================================================
# Detectors
# =============================================================================


class AnalogSpec(SpecModel):
    """Charge-integrating readout of a detector."""

    gain_mean: float = Field(default=1.0, gt=0.0)
    gain_rel_std: float = Field(default=0.0, ge=0.0)
    bin_width: int = Field(default=10_000, gt=0)


class DetectorSpec(SpecModel):
    """Photon-counting detector.

    Attributes:
        eta: Quantum efficiency.
        dark_rate: Dark counts per second.
        dead_time: Non-paralyzable dead time, ticks.
        jitter_sigma: Gaussian timing jitter, ticks.
        analog: Optional analog readout used by the analog-correlation method.
    """

    eta: Fraction
    dark_rate: float = Field(default=200.0, ge=0.0)
    dead_time: Duration = 50_000
    jitter_sigma: Duration = 300
    analog: AnalogSpec | None = None


# =============================================================================
# Electronics
# =============================================================================


class TimeWindow(SpecModel):
    """Window on the start-stop time difference, [lo, hi) in ticks."""

    lo: int
    hi: int

    @model_validator(mode="after")
    def _check_order(self) -> TimeWindow:
        if self.lo >= self.hi:
            raise ValueError(f"window lo ({self.lo}) must be below hi ({self.hi})")
        return self

    @property
    def width(self) -> int:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return (self.lo + self.hi) / 2


class TacSpec(SpecModel):
    """Time-to-amplitude converter with MCA histogram and SCA window."""

    kind: Literal["tac"] = "tac"
    stop_delay_line: int = Field(default=1_000_000, gt=0)
    conversion_dead_time: Duration = 0
    has_valid_start: bool = True
    sca_window: TimeWindow = TimeWindow(lo=998_000, hi=1_002_000)
    mca_bin: int = Field(default=100, gt=0)
    histogram_range: int | None = Field(default=None, gt=0)
    off_peak_widths: float = Field(default=5.0, gt=0.0)

    @property
    def range_ticks(self) -> int:
        return self.histogram_range or 2 * self.stop_delay_line


class TicSpec(SpecModel):
    """Time interval counter collecting a fixed number of start-stop couples."""

    kind: Literal["tic"] = "tic"
    resolution: int = Field(default=25, gt=0)
    histogram_bin: int = Field(default=100, gt=0)
    n_pairs_target: int = Field(default=10_000, gt=0)
    n_subsamples: int = Field(default=5, gt=0)
    stop_delay_line: int = Field(default=1_000_000, gt=0)
    peak_window: TimeWindow = TimeWindow(lo=998_000, hi=1_002_000)
    histogram_range: int | None = Field(default=None, gt=0)
    off_peak_widths: float = Field(default=5.0, gt=0.0)

    @model_validator(mode="after")
    def _check_bins(self) -> TicSpec:
        if self.histogram_bin < self.resolution:
            raise ValueError("histogram_bin must be at least the counter resolution")
        window = self.peak_window
        if window.lo % self.histogram_bin or window.hi % self.histogram_bin:
            raise ValueError(
                f"peak_window [{window.lo}, {window.hi}) must lie on histogram_bin edges"
                f" ({self.histogram_bin})"
            )
        return self

    @property
    def range_ticks(self) -> int:
        return self.histogram_range or 2 * self.stop_delay_line


class AndGateSpec(SpecModel):
    """Two-input AND gate with a symmetric overlap window."""

    kind: Literal["and_gate"] = "and_gate"
    window: int = Field(default=5_000, gt=0)


ElectronicsSpec = Annotated[TacSpec | TicSpec | AndGateSpec, Field(discriminator="kind")]


# =============================================================================
# Estimator Inputs and Run Control
# =============================================================================


class CalibrationInputs(SpecModel):
    """Apparatus numbers characterised outside the twin-photon measurement.

    None means "use the value implied by the configured chain", which stands in for an
    independent transmittance or Pockels-cell characterisation.
    """

    signal_transmittance: float | None = Field(default=None, gt=0.0, le=1.0)
    signal_transmittance_std: float = Field(default=0.0, ge=0.0)
    flip_efficiency: float | None = Field(default=None, gt=0.0, le=1.0)
    flip_efficiency_std: float = Field(default=0.0, ge=0.0)
    bare_transmittances: list[Annotated[float, Field(gt=0.0, le=1.0)]] = []
    analog_k: float | None = Field(default=None, gt=0.0)
    n_gain_samples: int = Field(default=10_000, gt=0)
    n_trace_segments: int = Field(default=20, ge=10)


def _default_angles() -> list[float]:
    return [float(a) for a in range(0, 181, 10)]


class ScanSpec(SpecModel):
    """Polarizer scan for the conditional-rotation method."""

    angles_deg: list[float] = Field(default_factory=_default_angles)
    integration: int = Field(default=10 * 10**12, ge=0)


class ValidationSpec(SpecModel):
    """Ground truth used only to check finished estimates."""

    ground_truth_detector: str
    n_sigma: float = Field(default=3.0, gt=0.0)
