"""Acquisition electronics: scalers, TAC, TIC and AND gate."""

from spdc_calib.electronics.counters import (
    Histogram,
    TacResult,
    TicResult,
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

__all__ = [
    "Histogram",
    "TacResult",
    "TicResult",
    "and_gate",
    "and_gate_accidentals",
    "count_scaler",
    "estimate_accidentals",
    "merge_histograms",
    "off_peak_region",
    "tac_process",
    "tic_coincidences",
    "tic_process",
]
