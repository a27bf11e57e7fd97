"""Physical model: pair source, optical elements and detectors."""
