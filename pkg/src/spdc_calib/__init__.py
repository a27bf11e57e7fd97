"""Monte Carlo simulator and estimator stack for twin-photon detector calibration."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("spdc-calib")
except PackageNotFoundError:
    __version__ = "0.0.0+unknown"
