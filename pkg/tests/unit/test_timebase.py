"""Unit tests for the tick time axis, random streams and Poisson generation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.timebase import (
    PS_PER_SECOND,
    STREAM_A,
    STREAM_B,
    RandomStream,
    derive_seed,
    merge_streams,
    nonparalyzable_keep,
    ns,
    poisson_stream,
    require_sorted,
    seconds,
    stream_id_for,
    to_seconds,
    us,
)


class TestUnits:
    """Tests for unit conversions."""

    def test_seconds(self) -> None:
        """One second is 10^12 ticks."""
        assert seconds(1) == PS_PER_SECOND
        assert seconds(0.5) == 500_000_000_000

    def test_sub_second_units(self) -> None:
        """Microseconds and nanoseconds round to whole ticks."""
        assert us(1) == 1_000_000
        assert ns(1.5) == 1_500
        assert ns(0.0004) == 0

    def test_to_seconds(self) -> None:
        """to_seconds() inverts seconds()."""
        assert to_seconds(seconds(2.5)) == pytest.approx(2.5)


class TestStreamIds:
    """Tests for stream_id_for() and derive_seed()."""

    def test_stable(self) -> None:
        """The same path always maps to the same id."""
        assert stream_id_for("idler_chain[2]") == stream_id_for("idler_chain[2]")

    def test_distinct_paths(self) -> None:
        """Different paths give different ids."""
        assert stream_id_for("idler_chain[2]") != stream_id_for("idler_chain[1]")

    def test_fits_64_bits(self) -> None:
        """Ids are unsigned 64-bit integers."""
        assert 0 <= stream_id_for("detectors.D1") < 2**64

    def test_derive_seed_deterministic(self) -> None:
        """derive_seed() is a pure function of its inputs."""
        assert derive_seed(42, 3) == derive_seed(42, 3)
        assert derive_seed(42, 3) != derive_seed(42, 4)
        assert derive_seed(42, 1, 0) != derive_seed(42, 0, 1)

    def test_derive_seed_negative(self) -> None:
        """Negative seeds or keys are rejected."""
        with pytest.raises(InvalidArgumentError):
            derive_seed(-1)
        with pytest.raises(InvalidArgumentError):
            derive_seed(1, -2)


class TestRandomStream:
    """Tests for RandomStream."""

    def test_reproducible(self) -> None:
        """A stream restarts from the same state each time."""
        stream = RandomStream.for_element(7, "source")
        first = stream.generator().random(5)
        second = stream.generator().random(5)
        np.testing.assert_array_equal(first, second)

    def test_elements_independent(self) -> None:
        """Different elements draw different numbers."""
        a = RandomStream.for_element(7, "signal_chain[0]").generator().random(5)
        b = RandomStream.for_element(7, "signal_chain[1]").generator().random(5)
        assert not np.array_equal(a, b)

    def test_child_differs_from_parent(self) -> None:
        """Child streams are independent of their parent."""
        parent = RandomStream.for_element(7, "detectors.D1")
        a = parent.generator().random(5)
        b = parent.child("dark").generator().random(5)
        assert not np.array_equal(a, b)


class TestPoissonStream:
    """Tests for poisson_stream()."""

    def test_zero_rate(self) -> None:
        """Zero rate yields no events."""
        assert poisson_stream(0.0, seconds(1), RandomStream(1, 1)).size == 0

    def test_zero_gate(self) -> None:
        """Zero gate yields no events."""
        assert poisson_stream(1e3, 0, RandomStream(1, 1)).size == 0

    def test_negative_rate(self) -> None:
        """Negative rate raises InvalidArgumentError."""
        with pytest.raises(InvalidArgumentError):
            poisson_stream(-1.0, seconds(1), RandomStream(1, 1))

    def test_strictly_increasing_inside_gate(self) -> None:
        """Events are strictly increasing and inside [0, gate)."""
        gate = seconds(0.1)
        t = poisson_stream(1e5, gate, RandomStream(3, 9))
        assert t.dtype == np.int64
        assert np.all(np.diff(t) > 0)
        assert t.min() >= 0
        assert t.max() < gate

    def test_mean_count(self) -> None:
        """Count is Poisson with mean rate·gate."""
        t = poisson_stream(1e4, seconds(1), RandomStream(11, 5))
        assert abs(t.size - 10_000) <= 5 * np.sqrt(10_000)

    def test_exponential_intervals(self) -> None:
        """Inter-arrival times of 1e5 events follow the exponential law."""
        rate = 1e4
        t = poisson_stream(rate, seconds(10), RandomStream(13, 2))
        assert t.size > 90_000
        intervals = np.diff(t, prepend=0)
        result = stats.kstest(intervals, "expon", args=(0.0, PS_PER_SECOND / rate))
        assert result.pvalue > 1e-3

    def test_count_mean_and_variance(self) -> None:
        """Counts over 100 gates have Poisson mean and dispersion."""
        counts = np.array(
            [poisson_stream(1e3, seconds(1), RandomStream(17, k)).size for k in range(100)]
        )
        mean = counts.mean()
        assert abs(mean - 1000) <= 5 * np.sqrt(1000 / 100)
        dispersion = (counts.size - 1) * counts.var(ddof=1) / mean
        assert 1e-3 < stats.chi2.cdf(dispersion, counts.size - 1) < 1 - 1e-3

    def test_reproducible(self) -> None:
        """Same stream, same events."""
        stream = RandomStream(5, 6)
        np.testing.assert_array_equal(
            poisson_stream(1e3, seconds(1), stream), poisson_stream(1e3, seconds(1), stream)
        )


class TestRequireSorted:
    """Tests for require_sorted()."""

    def test_accepts_ties(self) -> None:
        """Non-decreasing input passes."""
        require_sorted(np.array([1, 1, 2], dtype=np.int64), "x")

    def test_rejects_unsorted(self) -> None:
        """First out-of-order index is reported."""
        with pytest.raises(InvalidArgumentError) as exc_info:
            require_sorted(np.array([1, 3, 2, 4], dtype=np.int64), "stops")
        assert exc_info.value.details == {"stream": "stops", "index": 2}


class TestMergeStreams:
    """Tests for merge_streams()."""

    def test_ties_keep_a_first(self) -> None:
        """At equal ticks, entries of a precede entries of b."""
        merged = merge_streams(
            np.array([5, 10], dtype=np.int64), np.array([5, 7], dtype=np.int64)
        )
        assert merged.times.tolist() == [5, 5, 7, 10]
        assert merged.source.tolist() == [STREAM_A, STREAM_B, STREAM_B, STREAM_A]


class TestNonparalyzableKeep:
    """Tests for nonparalyzable_keep()."""

    def test_blocked_events_do_not_extend(self) -> None:
        """Events inside the dead time are dropped without restarting it."""
        times = np.array([0, 1_000, 5_000, 9_999, 10_001], dtype=np.int64)
        assert nonparalyzable_keep(times, 5_000).tolist() == [0, 2, 4]

    def test_zero_dead_time_drops_duplicates(self) -> None:
        """Spacing is at least one tick even without dead time."""
        times = np.array([5, 5, 6], dtype=np.int64)
        assert nonparalyzable_keep(times, 0).tolist() == [0, 2]

    def test_empty(self) -> None:
        """Empty input, empty output."""
        assert nonparalyzable_keep(np.zeros(0, dtype=np.int64), 100).size == 0

    @settings(max_examples=200, deadline=None)
    @given(
        raw=st.lists(st.integers(min_value=0, max_value=10_000), max_size=60),
        dead_time=st.integers(min_value=0, max_value=2_000),
    )
    def test_spacing_and_blocking(self, raw: list[int], dead_time: int) -> None:
        """Kept events are spaced by the dead time; dropped ones fall inside it."""
        times = np.sort(np.asarray(raw, dtype=np.int64))
        keep = nonparalyzable_keep(times, dead_time)
        spacing = max(dead_time, 1)
        kept = times[keep]
        assert np.all(np.diff(kept) >= spacing)
        if times.size:
            assert keep[0] == 0
        dropped = np.setdiff1d(np.arange(times.size), keep)
        for i in dropped:
            previous = kept[np.searchsorted(keep, i) - 1]
            assert times[i] - previous < spacing
