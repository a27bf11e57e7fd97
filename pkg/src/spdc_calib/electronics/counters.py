"""Scalers and start-stop coincidence electronics working on integer-tick click times.

Every function takes plain sorted time arrays (the origin-free view of a click stream),
so the same code processes simulated clicks and externally recorded time tags.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.timebase import PS_PER_SECOND, TimeArray, require_sorted

if TYPE_CHECKING:
    from spdc_calib.models import TacSpec, TicSpec, TimeWindow

logger = logging.getLogger(__name__)


# =============================================================================
# Histogram
# =============================================================================


@dataclass(frozen=True)
class Histogram:
    """Start-stop time-difference histogram.

    Attributes:
        bin_width: Bin width in ticks.
        origin: Time difference at the left edge of bin 0.
        counts: Non-negative counts per bin.
        n_starts_processed: Starts that could have produced an entry.
    """

    bin_width: int
    origin: int
    counts: npt.NDArray[np.int64]
    n_starts_processed: int

    @classmethod
    def from_differences(
        cls,
        diffs: npt.NDArray[np.int64],
        bin_width: int,
        range_ticks: int,
        n_starts: int,
    ) -> Histogram:
        """Histogram differences in [0, range_ticks); entries outside are not recorded."""
        n_bins = math.ceil(range_ticks / bin_width)
        inside = diffs[(diffs >= 0) & (diffs < range_ticks)]
        counts = np.bincount(inside // bin_width, minlength=n_bins).astype(np.int64)
        return cls(bin_width=bin_width, origin=0, counts=counts, n_starts_processed=n_starts)

    @property
    def bin_starts(self) -> npt.NDArray[np.int64]:
        return self.origin + self.bin_width * np.arange(self.counts.size, dtype=np.int64)

    @property
    def bin_centers(self) -> npt.NDArray[np.float64]:
        return self.bin_starts + self.bin_width / 2

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def count_in(self, window: TimeWindow) -> int:
        """Counts of bins lying entirely inside the window."""
        starts = self.bin_starts
        inside = (starts >= window.lo) & (starts + self.bin_width <= window.hi)
        return int(self.counts[inside].sum())


def merge_histograms(histograms: Sequence[Histogram]) -> Histogram:
    """Bin-wise sum of histograms sharing the same binning."""
    if not histograms:
        raise InvalidArgumentError("Nothing to merge: empty histogram list")
    first = histograms[0]
    for other in histograms[1:]:
        if (other.bin_width, other.origin, other.counts.size) != (
            first.bin_width,
            first.origin,
            first.counts.size,
        ):
            raise InvalidArgumentError(
                "Histograms have different binning",
                details={"bin_width": [first.bin_width, other.bin_width]},
            )
    return Histogram(
        bin_width=first.bin_width,
        origin=first.origin,
        counts=np.sum([h.counts for h in histograms], axis=0).astype(np.int64),
        n_starts_processed=sum(h.n_starts_processed for h in histograms),
    )


# =============================================================================
# Scaler
# =============================================================================


def count_scaler(clicks: TimeArray, gate: int) -> int:
    """Number of clicks integrated over the gate.

    Raises:
        InvalidArgumentError: If a click lies outside [0, gate).
    """
    if clicks.size and (int(clicks.min()) < 0 or int(clicks.max()) >= gate):
        raise InvalidArgumentError(
            "Click outside the scaler gate",
            details={"gate": gate, "min": int(clicks.min()), "max": int(clicks.max())},
        )
    return int(clicks.size)


# =============================================================================
# TAC + MCA + SCA
# =============================================================================


@dataclass(frozen=True)
class TacResult:
    """Output of one TAC acquisition.

    Attributes:
        histogram: MCA histogram of start-stop differences.
        n_coincidence: Entries inside the SCA window.
        valid_start_count: Starts that armed the converter.
        raw_start_count: All starts presented to the converter.
    """

    histogram: Histogram
    n_coincidence: int
    valid_start_count: int
    raw_start_count: int


def _first_stop_after(starts: TimeArray, stops: TimeArray) -> npt.NDArray[np.int64]:
    """Time of the first stop at or after each start, -1 where there is none."""
    idx = np.searchsorted(stops, starts, side="left")
    found = idx < stops.size
    first = np.full(starts.size, -1, dtype=np.int64)
    first[found] = stops[idx[found]]
    return first


def tac_process(starts: TimeArray, stops: TimeArray, spec: TacSpec) -> TacResult:
    """Run the TAC state machine over start and (already delayed) stop streams.

    An idle converter arms on a start, which counts as a valid start. It captures the
    first stop that follows and records the difference, then stays busy for the
    conversion dead time. With no stop inside the range it resets at the range end.
    Starts arriving while the converter is armed or busy are ignored.

    Raises:
        InvalidArgumentError: If either stream is not sorted.
    """
    require_sorted(starts, "starts")
    require_sorted(stops, "stops")

    range_ticks = spec.range_ticks
    dead = spec.conversion_dead_time
    diffs: list[int] = []
    valid = 0
    free_at = -1

    for s, stop in zip(starts.tolist(), _first_stop_after(starts, stops).tolist(), strict=True):
        if s < free_at:
            continue
        valid += 1
        if stop >= 0 and stop - s < range_ticks:
            diffs.append(stop - s)
            free_at = stop + dead
        else:
            free_at = s + range_ticks

    diff_arr = np.asarray(diffs, dtype=np.int64)
    histogram = Histogram.from_differences(diff_arr, spec.mca_bin, range_ticks, valid)
    window = spec.sca_window
    n_coincidence = int(np.count_nonzero((diff_arr >= window.lo) & (diff_arr < window.hi)))
    logger.debug(
        "TAC: %d/%d valid starts, %d conversions, %d in window",
        valid,
        starts.size,
        diff_arr.size,
        n_coincidence,
    )
    return TacResult(
        histogram=histogram,
        n_coincidence=n_coincidence,
        valid_start_count=valid,
        raw_start_count=int(starts.size),
    )


# =============================================================================
# Time Interval Counter
# =============================================================================


@dataclass(frozen=True)
class TicResult:
    """Output of one TIC acquisition.

    Attributes:
        histograms: One histogram per sub-sample, in acquisition order.
        n_measured: Start-stop measurements used (n_pairs_target unless partial).
        partial: True if the streams ended before n_pairs_target measurements.
    """

    histograms: list[Histogram]
    n_measured: int
    partial: bool


def tic_process(starts: TimeArray, stops: TimeArray, spec: TicSpec) -> TicResult:
    """Measure start-stop intervals until n_pairs_target starts have been timed.

    Every start is timed against the first stop at or after it; the interval is floored
    to the counter resolution. Starts without a stop inside the histogram range are
    measurements with no histogram entry. The measurements are split into n_subsamples
    consecutive batches.

    Raises:
        InvalidArgumentError: If either stream is not sorted.
    """
    require_sorted(starts, "starts")
    require_sorted(stops, "stops")

    n_measured = min(int(starts.size), spec.n_pairs_target)
    partial = n_measured < spec.n_pairs_target
    if partial:
        logger.warning(
            "TIC acquisition partial: %d of %d start-stop measurements",
            n_measured,
            spec.n_pairs_target,
        )

    used = starts[:n_measured]
    first = _first_stop_after(used, stops)
    diffs = np.where(first >= 0, first - used, -1)
    diffs = np.where(diffs >= 0, (diffs // spec.resolution) * spec.resolution, -1)

    histograms = [
        Histogram.from_differences(batch, spec.histogram_bin, spec.range_ticks, int(batch.size))
        for batch in np.array_split(diffs, spec.n_subsamples)
    ]
    return TicResult(histograms=histograms, n_measured=n_measured, partial=partial)


def tic_coincidences(histograms: Sequence[Histogram], window: TimeWindow) -> list[int]:
    """Peak-window coincidence count of each sub-sample histogram."""
    return [h.count_in(window) for h in histograms]


# =============================================================================
# AND Gate
# =============================================================================


def and_gate(clicks_a: TimeArray, clicks_b: TimeArray, window: int) -> int:
    """Count coincidences |tA − tB| ≤ window/2, greedy earliest match, each click used once.

    Raises:
        InvalidArgumentError: If either stream is not sorted.
    """
    require_sorted(clicks_a, "clicks_a")
    require_sorted(clicks_b, "clicks_b")
    a = clicks_a.tolist()
    b = clicks_b.tolist()
    i = j = 0
    matched = 0
    while i < len(a) and j < len(b):
        diff = a[i] - b[j]
        if 2 * abs(diff) <= window:
            matched += 1
            i += 1
            j += 1
        elif diff < 0:
            i += 1
        else:
            j += 1
    return matched


def and_gate_accidentals(rate_a: float, rate_b: float, window: int, gate: int) -> float:
    """Expected accidental AND-gate coincidences for uncorrelated Poisson inputs."""
    if rate_a < 0 or rate_b < 0:
        raise InvalidArgumentError(
            "Rates must be non-negative", details={"rate_a": rate_a, "rate_b": rate_b}
        )
    return rate_a * rate_b * (window / PS_PER_SECOND) * (gate / PS_PER_SECOND)


# =============================================================================
# Accidentals
# =============================================================================


def off_peak_region(
    hist: Histogram,
    window: TimeWindow,
    n_widths: float = 5.0,
) -> npt.NDArray[np.bool_]:
    """Bins whose center is farther than n_widths window widths from the window center.

    Both sides are used. Converted twins deplete the grass after the peak, and the two-sided
    mean matches the accidental level of a window centered on the peak.
    """
    return np.abs(hist.bin_centers - window.center) > n_widths * window.width


def estimate_accidentals(
    hist: Histogram,
    window: TimeWindow,
    off_peak: npt.NDArray[np.bool_],
) -> float:
    """Mean off-peak counts per bin scaled to the width of the coincidence window.

    Raises:
        InvalidArgumentError: If the off-peak region is empty or overlaps the window.
    """
    if off_peak.shape != hist.counts.shape:
        raise InvalidArgumentError(
            "Off-peak mask does not match the histogram",
            details={"mask": list(off_peak.shape), "bins": int(hist.counts.size)},
        )
    if not bool(off_peak.any()):
        raise InvalidArgumentError(
            "Off-peak region is empty",
            suggestion="Use a wider histogram range or fewer off-peak window widths",
        )
    starts = hist.bin_starts
    overlaps = (starts < window.hi) & (starts + hist.bin_width > window.lo)
    if bool(np.any(off_peak & overlaps)):
        raise InvalidArgumentError(
            "Off-peak region overlaps the coincidence window",
            details={"window": [window.lo, window.hi]},
        )
    per_bin = float(hist.counts[off_peak].mean())
    return per_bin * window.width / hist.bin_width
