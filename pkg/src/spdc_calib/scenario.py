"""Scenario document: parsing, topology checks, presets and serialization.

A scenario is one JSON document whose sections mirror the simulator modules. Parsing
never returns a scenario whose topology the runner cannot execute.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

from pydantic import Field, ValidationError
from rapidfuzz import fuzz, process

from spdc_calib.core.errors import ConfigError
from spdc_calib.models import (
    AndGateSpec,
    AnalogSpec,
    CalibrationInputs,
    ChainElement,
    DetectorSpec,
    ElectronicsSpec,
    FiberSpec,
    LossElement,
    PbsSpec,
    PockelsSpec,
    PolarizerSpec,
    ScanSpec,
    SourceSpec,
    SpecModel,
    TacSpec,
    TicSpec,
    TimeWindow,
    ValidationSpec,
)

logger = logging.getLogger(__name__)

SCENARIO_SCHEMA_VERSION = "1"
PRESET_DIR = Path(__file__).parent / "presets"

Method = Literal["coincidence", "conditional_rotation", "analog", "compare"]


class Scenario(SpecModel):
    """Complete description of one simulated calibration experiment.

    Attributes:
        signal_detector: Detector behind the signal chain (D1 of the rotation set-up).
        idler_detector: Detector behind the idler chain (D2).
        dut: Arm whose detector the coincidence method calibrates; the other arm triggers.
        gate: Acquisition time of one run, ticks.
    """

    schema_version: Literal["1"] = SCENARIO_SCHEMA_VERSION
    name: str = "scenario"
    source: SourceSpec
    signal_chain: list[ChainElement] = []
    idler_chain: list[ChainElement] = []
    detectors: dict[str, DetectorSpec]
    signal_detector: str = "D1"
    idler_detector: str = "D2"
    dut: Literal["signal", "idler"] = "signal"
    electronics: ElectronicsSpec | None = None
    stray_light_rate: dict[str, float] = {}
    gate: int = Field(gt=0)
    seed: int = Field(default=0, ge=0)
    method: Method = "coincidence"
    calibration: CalibrationInputs = CalibrationInputs()
    scan: ScanSpec = ScanSpec()
    validation: ValidationSpec | None = None

    @property
    def dut_detector(self) -> str:
        return self.signal_detector if self.dut == "signal" else self.idler_detector

    @property
    def trigger_detector(self) -> str:
        return self.idler_detector if self.dut == "signal" else self.signal_detector

    def with_seed(self, seed: int) -> Scenario:
        return self.model_copy(update={"seed": seed})


# =============================================================================
# Topology
# =============================================================================


def _suggest(name: str, choices: list[str]) -> str:
    match = process.extractOne(name, choices, scorer=fuzz.ratio, score_cutoff=60)
    return f"Did you mean '{match[0]}'?" if match else f"Valid choices: {', '.join(choices)}"


def _require_detector(s: Scenario, detector_id: str, path: str) -> None:
    if detector_id not in s.detectors:
        raise ConfigError(
            f"Unknown detector '{detector_id}'",
            details={"path": path, "detector": detector_id},
            suggestion=_suggest(detector_id, sorted(s.detectors)),
        )


def _chain_index(chain: list[ChainElement], kind: str) -> int | None:
    return next((i for i, elem in enumerate(chain) if elem.kind == kind), None)


def validate_topology(s: Scenario) -> Scenario:
    """Check that the scenario wiring suits its method.

    Raises:
        ConfigError: With details["path"] naming the offending element.
    """
    _require_detector(s, s.signal_detector, "signal_detector")
    _require_detector(s, s.idler_detector, "idler_detector")
    if s.signal_detector == s.idler_detector:
        raise ConfigError(
            "Signal and idler arms need distinct detectors",
            details={"path": "idler_detector"},
        )
    for detector_id, rate in s.stray_light_rate.items():
        _require_detector(s, detector_id, f"stray_light_rate.{detector_id}")
        if rate < 0:
            raise ConfigError(
                "Stray-light rate must be non-negative",
                details={"path": f"stray_light_rate.{detector_id}", "value": rate},
            )
    if s.validation is not None:
        _require_detector(s, s.validation.ground_truth_detector, "validation.ground_truth_detector")

    signal_pockels = _chain_index(s.signal_chain, "pockels")
    if signal_pockels is not None:
        raise ConfigError(
            "A Pockels cell is only supported on the idler arm",
            details={"path": f"signal_chain[{signal_pockels}]"},
        )

    if s.method in ("conditional_rotation", "compare"):
        _check_rotation_topology(s)
    if s.method in ("coincidence", "compare"):
        _check_coincidence_topology(s)
    if s.method == "analog":
        for detector_id in (s.signal_detector, s.idler_detector):
            if s.detectors[detector_id].analog is None:
                raise ConfigError(
                    "Analog method needs an analog readout on both detectors",
                    details={"path": f"detectors.{detector_id}.analog"},
                    suggestion='Add "analog": {"gain_mean": 1.0} to the detector',
                )
    return s


def _check_rotation_topology(s: Scenario) -> None:
    if s.source.phase_matching != "type_ii":
        raise ConfigError(
            "Conditional rotation needs orthogonally polarized pairs",
            details={"path": "source.phase_matching", "value": s.source.phase_matching},
            suggestion='Set "phase_matching": "type_ii"',
        )
    pockels = _chain_index(s.idler_chain, "pockels")
    if pockels is None:
        raise ConfigError(
            "Conditional rotation needs a Pockels cell in the idler chain",
            details={"path": "idler_chain"},
        )
    polarizers = [i for i, e in enumerate(s.idler_chain) if e.kind == "polarizer"]
    if not polarizers or polarizers[-1] < pockels:
        raise ConfigError(
            "Conditional rotation needs a polarizer after the Pockels cell",
            details={"path": f"idler_chain[{pockels}]"},
        )
    if len(s.scan.angles_deg) == 0:
        raise ConfigError("Polarizer scan has no angles", details={"path": "scan.angles_deg"})


def _check_coincidence_topology(s: Scenario) -> None:
    if s.electronics is None:
        raise ConfigError(
            "Coincidence method needs coincidence electronics",
            details={"path": "electronics"},
            suggestion='Add an "electronics" section of kind "tac", "tic" or "and_gate"',
        )
    e = s.electronics
    if isinstance(e, TacSpec | TicSpec):
        window = e.sca_window if isinstance(e, TacSpec) else e.peak_window
        name = "sca_window" if isinstance(e, TacSpec) else "peak_window"
        if window.lo < 0 or window.hi > e.range_ticks:
            raise ConfigError(
                "Coincidence window lies outside the histogram range",
                details={"path": f"electronics.{name}", "range": e.range_ticks},
            )


# =============================================================================
# Parsing
# =============================================================================

_CONFIG_MODELS: tuple[type[SpecModel], ...] = (
    Scenario,
    SourceSpec,
    LossElement,
    PolarizerSpec,
    PbsSpec,
    FiberSpec,
    PockelsSpec,
    AnalogSpec,
    DetectorSpec,
    TimeWindow,
    TacSpec,
    TicSpec,
    AndGateSpec,
    CalibrationInputs,
    ScanSpec,
    ValidationSpec,
)


def _known_keys() -> list[str]:
    return sorted({name for model in _CONFIG_MODELS for name in model.model_fields})


def _format_loc(loc: tuple[int | str, ...]) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else part
    return path


def _config_error(e: ValidationError, origin: str) -> ConfigError:
    first = e.errors()[0]
    loc = tuple(first["loc"])
    path = _format_loc(loc)
    suggestion = ""
    if first["type"] == "extra_forbidden" and loc and isinstance(loc[-1], str):
        suggestion = _suggest(loc[-1], _known_keys())
    return ConfigError(
        f"Invalid scenario ({origin}): {path}: {first['msg']}",
        details={"path": path, "errors": [_format_loc(tuple(err["loc"])) for err in e.errors()]},
        suggestion=suggestion,
    )


def parse_scenario(text: str, origin: str = "<string>") -> Scenario:
    """Parse and validate a scenario JSON document.

    Raises:
        ConfigError: On malformed JSON, unknown keys, bad values or bad topology.
    """
    try:
        scenario = Scenario.model_validate_json(text)
    except ValidationError as e:
        raise _config_error(e, origin) from e
    return validate_topology(scenario)


def list_presets() -> list[str]:
    """Names of the scenario presets shipped with the package."""
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a file path or a preset name.

    Raises:
        ConfigError: If the file or preset does not exist or does not validate.
    """
    path = Path(source)
    if not path.is_file():
        if str(source) not in list_presets():
            raise ConfigError(
                f"No scenario file or preset named '{source}'",
                details={"path": str(source)},
                suggestion=_suggest(str(source), list_presets()),
            )
        path = PRESET_DIR / f"{source}.json"

    scenario = parse_scenario(path.read_text(encoding="utf-8"), origin=str(path))
    logger.info("Loaded scenario %s (method %s)", scenario.name, scenario.method)
    return scenario


def dump_scenario(s: Scenario) -> str:
    """Serialize a scenario; parse_scenario(dump_scenario(s)) == s."""
    return s.model_dump_json(indent=2)
