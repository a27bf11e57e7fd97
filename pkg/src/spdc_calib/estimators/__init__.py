"""Calibration estimators: coincidence, conditional rotation and analog correlation."""

from spdc_calib.estimators.analog import eta_analog, infer_K
from spdc_calib.estimators.coincidence import (
    bare_detector_efficiency,
    combine_difference,
    correction_alpha,
    correction_beta,
    correction_gamma,
    eta_corrected,
    eta_raw,
    scale_background,
)
from spdc_calib.estimators.conditional import (
    ConditionalCorrections,
    estimate_flip_efficiency,
    eta_conditional,
    lsa_fit_visibility,
    pockels_live_fraction,
    predicted_w2,
    unheralded_flip_fraction,
    visibility_minmax,
)

__all__ = [
    "ConditionalCorrections",
    "bare_detector_efficiency",
    "combine_difference",
    "correction_alpha",
    "correction_beta",
    "correction_gamma",
    "estimate_flip_efficiency",
    "eta_analog",
    "eta_conditional",
    "eta_corrected",
    "eta_raw",
    "infer_K",
    "lsa_fit_visibility",
    "pockels_live_fraction",
    "predicted_w2",
    "scale_background",
    "unheralded_flip_fraction",
    "visibility_minmax",
]
