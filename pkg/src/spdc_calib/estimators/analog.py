"""Analog-correlation estimator for charge-integrating detectors.

Valid only at low intensity (much less than one pair per bin): at higher flux,
products of currents from different pairs bias the estimate upward.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import numpy.typing as npt

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.reports import EfficiencyEstimate

logger = logging.getLogger(__name__)

DEFAULT_SEGMENTS = 20
MIN_SEGMENTS = 10


def infer_K(gain1_samples: npt.ArrayLike, gain2_samples: npt.ArrayLike) -> float:
    """Gain-fluctuation factor ⟨g1²⟩/(⟨g1⟩·⟨g2⟩) from calibration gain samples.

    Raises:
        InvalidArgumentError: On empty samples or a zero mean gain.
    """
    g1 = np.asarray(gain1_samples, dtype=np.float64)
    g2 = np.asarray(gain2_samples, dtype=np.float64)
    if g1.size == 0 or g2.size == 0:
        raise InvalidArgumentError(
            "Gain samples must be non-empty", details={"n1": int(g1.size), "n2": int(g2.size)}
        )
    m1, m2 = float(g1.mean()), float(g2.mean())
    if m1 == 0 or m2 == 0:
        raise InvalidArgumentError("Mean gain is zero", details={"mean1": m1, "mean2": m2})
    return float(np.mean(g1**2)) / (m1 * m2)


def eta_analog(
    trace1: npt.ArrayLike,
    trace2: npt.ArrayLike,
    K: float,
    n_segments: int = DEFAULT_SEGMENTS,
) -> EfficiencyEstimate:
    """Efficiency of detector 2 from zero-lag current correlations: K·⟨i1·i2⟩/⟨i1²⟩.

    Correlations are not mean-subtracted. The uncertainty comes from batched means
    over n_segments equal trace segments (a trailing remainder is dropped), floored at
    the contribution of a single correlated event.

    Raises:
        InvalidArgumentError: On unequal lengths, too few segments or ⟨i1²⟩ = 0.
    """
    i1 = np.asarray(trace1, dtype=np.float64)
    i2 = np.asarray(trace2, dtype=np.float64)
    if i1.shape != i2.shape:
        raise InvalidArgumentError(
            "Traces must have equal lengths", details={"len1": int(i1.size), "len2": int(i2.size)}
        )
    if n_segments < MIN_SEGMENTS or i1.size < n_segments:
        raise InvalidArgumentError(
            f"Need at least {MIN_SEGMENTS} segments with one bin each",
            details={"n_segments": n_segments, "bins": int(i1.size)},
        )

    seg_len = i1.size // n_segments
    used = seg_len * n_segments
    cross = (i1[:used] * i2[:used]).reshape(n_segments, seg_len).mean(axis=1)
    auto = (i1[:used] ** 2).reshape(n_segments, seg_len).mean(axis=1)
    auto_mean = float(auto.mean())
    if auto_mean == 0:
        raise InvalidArgumentError(
            "Autocorrelation of trace 1 is zero",
            suggestion="Lengthen the acquisition or check detector 1",
        )

    ratio = float(cross.mean()) / auto_mean
    residual = cross - ratio * auto
    batch_std = K * math.sqrt(float(residual.var(ddof=1)) / n_segments) / auto_mean
    floor = K / max(int(np.count_nonzero(i1[:used])), 1)
    value = K * ratio
    logger.debug("Analog estimate %.5f (K=%.4f, %d segments)", value, K, n_segments)
    return EfficiencyEstimate(
        value=value,
        std_uncertainty=max(batch_std, floor),
        method="analog",
        corrections={"K": K},
        counts={"bins": float(used)},
        details={"n_segments": float(n_segments), "cross": float(cross.mean()), "auto": auto_mean},
    )
