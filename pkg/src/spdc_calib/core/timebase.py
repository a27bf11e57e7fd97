"""Integer-picosecond time axis, random streams and Poisson event generation.

Every timestamp in the simulator is a signed 64-bit count of picoseconds from the
start of the run. A 1 s gate is 10**12 ticks, so gates up to ~10**6 s fit in int64.

Random numbers come from independent streams keyed by ``(seed, stream_id)``. Each
stochastic element of a scenario owns one stream whose id is derived from its config
path, so adding an element never shifts the draws of any other element.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError

# =============================================================================
# Units
# =============================================================================

TimeArray: TypeAlias = npt.NDArray[np.int64]

PS_PER_SECOND = 10**12
_UINT64_MASK = (1 << 64) - 1


def seconds(value: float) -> int:
    """Convert seconds to integer ticks."""
    return round(value * PS_PER_SECOND)


def us(value: float) -> int:
    """Convert microseconds to integer ticks."""
    return round(value * 1_000_000)


def ns(value: float) -> int:
    """Convert nanoseconds to integer ticks."""
    return round(value * 1_000)


def to_seconds(ticks: int) -> float:
    """Convert integer ticks to seconds."""
    return ticks / PS_PER_SECOND


def empty_times() -> TimeArray:
    """Return an empty timestamp array."""
    return np.zeros(0, dtype=np.int64)


# =============================================================================
# Random Streams
# =============================================================================


def stream_id_for(path: str) -> int:
    """Return a stable 64-bit stream id for a named stochastic element.

    Args:
        path: Config path of the element (e.g. "idler_chain[2].pockels").

    Returns:
        Unsigned 64-bit integer, identical on every platform and Python version.
    """
    digest = hashlib.blake2b(path.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a 64-bit sub-seed from a base seed and integer keys.

    Used for trial k of a repetition run, ``derive_seed(seed, k)``, and for
    per-angle acquisitions of a scan.
    """
    if seed < 0 or any(k < 0 for k in keys):
        raise InvalidArgumentError(
            "Seeds and derivation keys must be non-negative",
            details={"seed": seed, "keys": list(keys)},
        )
    state = np.random.SeedSequence([seed & _UINT64_MASK, *keys]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class RandomStream:
    """One independent random stream.

    Attributes:
        seed: Run seed (64-bit).
        stream_id: Element stream id (64-bit), see stream_id_for().
    """

    seed: int
    stream_id: int

    @classmethod
    def for_element(cls, seed: int, path: str) -> RandomStream:
        """Stream owned by the element at the given config path."""
        return cls(seed=seed, stream_id=stream_id_for(path))

    def child(self, name: str) -> RandomStream:
        """Independent sub-stream for a named sub-process of the same element."""
        return RandomStream(seed=self.seed, stream_id=self.stream_id ^ stream_id_for(name))

    def generator(self) -> np.random.Generator:
        """Fresh numpy generator positioned at the start of this stream."""
        sequence = np.random.SeedSequence(
            self.seed & _UINT64_MASK,
            spawn_key=(self.stream_id & _UINT64_MASK,),
        )
        return np.random.Generator(np.random.PCG64DXSM(sequence))


# =============================================================================
# Stream Operations
# =============================================================================


def require_sorted(times: npt.NDArray[np.int64], name: str) -> None:
    """Raise InvalidArgumentError unless times is non-decreasing."""
    if times.size > 1 and bool(np.any(np.diff(times) < 0)):
        first_bad = int(np.argmax(np.diff(times) < 0))
        raise InvalidArgumentError(
            f"Input stream '{name}' is not sorted",
            details={"stream": name, "index": first_bad + 1},
            suggestion="Sort the timestamps before passing them in",
        )


def poisson_stream(rate: float, gate: int, rng: RandomStream) -> TimeArray:
    """Generate Poisson event times by exponential inter-arrival accumulation.

    Args:
        rate: Events per second (>= 0).
        gate: Acquisition window length in ticks (>= 0).
        rng: Random stream owning these events.

    Returns:
        Strictly increasing int64 timestamps in [0, gate).
    """
    if rate < 0 or gate < 0:
        raise InvalidArgumentError(
            "Poisson rate and gate must be non-negative",
            details={"rate": rate, "gate": gate},
        )
    if rate == 0 or gate == 0:
        return empty_times()

    gen = rng.generator()
    mean_interval = PS_PER_SECOND / rate
    expected = rate * gate / PS_PER_SECOND
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)

    chunks: list[TimeArray] = []
    last = 0
    while True:
        # Intervals of at least one tick keep the stream strictly increasing
        intervals = np.maximum(1, np.rint(gen.exponential(mean_interval, chunk))).astype(np.int64)
        times = last + np.cumsum(intervals)
        chunks.append(times)
        last = int(times[-1])
        if last >= gate:
            break

    merged = np.concatenate(chunks)
    return merged[merged < gate]


@dataclass(frozen=True)
class MergedStream:
    """Sorted union of two streams with the source of each entry.

    Attributes:
        times: Merged timestamps.
        source: 0 for entries from stream a, 1 for stream b.
    """

    times: TimeArray
    source: npt.NDArray[np.int8]


STREAM_A = 0
STREAM_B = 1


def merge_streams(a: TimeArray, b: TimeArray) -> MergedStream:
    """Merge two sorted streams; at equal ticks entries of a come before b."""
    require_sorted(a, "a")
    require_sorted(b, "b")
    times = np.concatenate([np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)])
    source = np.concatenate(
        [np.full(len(a), STREAM_A, dtype=np.int8), np.full(len(b), STREAM_B, dtype=np.int8)]
    )
    order = np.argsort(times, kind="stable")
    return MergedStream(times=times[order], source=source[order])


def nonparalyzable_keep(times: TimeArray, dead_time: int) -> npt.NDArray[np.int64]:
    """Indices of events surviving a non-paralyzable dead time.

    An event is kept iff it is at least dead_time after the previous kept event;
    blocked events do not extend the dead period. Spacing of kept events is at
    least one tick.
    """
    require_sorted(times, "times")
    n = int(times.size)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    spacing = max(int(dead_time), 1)
    if spacing == 1 and (n == 1 or bool(np.all(np.diff(times) > 0))):
        return np.arange(n, dtype=np.int64)

    kept: list[int] = []
    i = 0
    while i < n:
        kept.append(i)
        i = int(np.searchsorted(times, int(times[i]) + spacing, side="left"))
    return np.asarray(kept, dtype=np.int64)
