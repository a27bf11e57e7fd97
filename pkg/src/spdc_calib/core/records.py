"""Columnar event records passed between simulation stages.

Photons and clicks are stored as struct-of-arrays batches so every stage works on
whole numpy columns. Polarization is encoded H = 0, V = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np
import numpy.typing as npt

from spdc_calib.core.timebase import TimeArray, empty_times


class Pol(IntEnum):
    """Linear polarization basis state."""

    H = 0
    V = 1


class Branch(IntEnum):
    """Arm of the down-converted pair."""

    SIGNAL = 0
    IDLER = 1


# Diagnostic click origins; photon clicks carry the pair_id (>= 0) instead
ORIGIN_DARK = -1
ORIGIN_STRAY = -2
# Clicks read back from a recording carry no lineage
ORIGIN_UNKNOWN = -3


@dataclass(frozen=True)
class PhotonBatch:
    """Photons of one branch, sorted by arrival time.

    Attributes:
        t_arrive: Arrival time in ticks.
        pol: Polarization (Pol values).
        pair_id: Index of the originating pair (diagnostic lineage).
        branch: Branch shared by every photon of the batch.
    """

    t_arrive: TimeArray
    pol: npt.NDArray[np.int8]
    pair_id: npt.NDArray[np.int64]
    branch: Branch

    def __len__(self) -> int:
        return int(self.t_arrive.size)

    @classmethod
    def empty(cls, branch: Branch) -> PhotonBatch:
        return cls(
            t_arrive=empty_times(),
            pol=np.zeros(0, dtype=np.int8),
            pair_id=np.zeros(0, dtype=np.int64),
            branch=branch,
        )

    def select(self, mask: npt.NDArray[np.bool_]) -> PhotonBatch:
        """Photons where mask is true, order preserved."""
        return replace(
            self, t_arrive=self.t_arrive[mask], pol=self.pol[mask], pair_id=self.pair_id[mask]
        )

    def with_pol(self, pol: npt.NDArray[np.int8]) -> PhotonBatch:
        return replace(self, pol=pol)

    def shifted(self, delay: int) -> PhotonBatch:
        return replace(self, t_arrive=self.t_arrive + np.int64(delay))


@dataclass(frozen=True)
class TimeTags:
    """Estimator-facing view of one detector's clicks: times only, no origin."""

    detector_id: str
    t: TimeArray

    def __len__(self) -> int:
        return int(self.t.size)


@dataclass(frozen=True)
class ClickStream:
    """Clicks of one detector with their diagnostic origin.

    Attributes:
        detector_id: Detector identifier.
        t: Click times, strictly increasing with spacing >= dead time.
        origin: pair_id for photon clicks, ORIGIN_DARK, ORIGIN_STRAY or ORIGIN_UNKNOWN otherwise.
    """

    detector_id: str
    t: TimeArray
    origin: npt.NDArray[np.int64]

    def __len__(self) -> int:
        return int(self.t.size)

    @classmethod
    def empty(cls, detector_id: str) -> ClickStream:
        return cls(detector_id=detector_id, t=empty_times(), origin=np.zeros(0, dtype=np.int64))

    def tags(self) -> TimeTags:
        """Strip the origin column; estimators and electronics only accept this view."""
        return TimeTags(detector_id=self.detector_id, t=self.t)

    def from_pairs(self) -> npt.NDArray[np.bool_]:
        """Mask of clicks caused by down-converted photons."""
        return self.origin >= 0
