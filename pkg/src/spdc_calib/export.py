"""CSV sidecars: histograms, click streams, visibility scans and coincidence curves.

All files use a header row, ``\\n`` line endings and base units (ps, counts) so two runs
with the same seed write byte-identical files.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from spdc_calib.core.errors import InvalidArgumentError
from spdc_calib.core.records import TimeTags
from spdc_calib.electronics.counters import Histogram

logger = logging.getLogger(__name__)

HISTOGRAM_COLUMNS = ("bin_start_ps", "count")
CLICK_COLUMNS = ("detector_id", "t_ps")
SCAN_COLUMNS = ("angle_deg", "counts", "background_counts")
CURVE_COLUMNS = ("angle_deg", "with_rotation", "without_rotation")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.debug("Wrote %s", path)
    return path


def write_histogram_csv(hist: Histogram, path: Path) -> Path:
    """Write one row per bin: left edge in ps and count."""
    return _write_rows(
        path,
        HISTOGRAM_COLUMNS,
        zip(hist.bin_starts.tolist(), hist.counts.tolist(), strict=True),
    )


def write_scan_csv(
    angles_deg: Sequence[float],
    counts: Sequence[int],
    background: Sequence[int] | None,
    path: Path,
) -> Path:
    """Write a polarizer scan; background column is empty when there is none."""
    bg: Sequence[int | str] = background if background is not None else [""] * len(counts)
    return _write_rows(path, SCAN_COLUMNS, zip(angles_deg, counts, bg, strict=True))


def write_curves_csv(
    angles_deg: Sequence[float],
    with_rotation: Sequence[int],
    without_rotation: Sequence[int],
    path: Path,
) -> Path:
    """Write coincidence counts versus polarizer angle with and without Pockels rotation."""
    return _write_rows(
        path, CURVE_COLUMNS, zip(angles_deg, with_rotation, without_rotation, strict=True)
    )


def write_clicks_csv(streams: Iterable[TimeTags], path: Path) -> Path:
    """Write click streams, detector by detector, one row per click."""
    rows = ((tags.detector_id, t) for tags in streams for t in tags.t.tolist())
    return _write_rows(path, CLICK_COLUMNS, rows)


def read_clicks_csv(path: Path) -> dict[str, TimeTags]:
    """Read click streams written by write_clicks_csv() or an external time tagger.

    Rows may be interleaved across detectors; each stream is returned sorted.

    Raises:
        InvalidArgumentError: If the file is missing or its header or a row is malformed.
    """
    if not path.is_file():
        raise InvalidArgumentError("Click-stream file not found", details={"path": str(path)})
    times: dict[str, list[int]] = {}
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CLICK_COLUMNS:
            raise InvalidArgumentError(
                "Not a click-stream CSV",
                details={"path": str(path), "header": header},
                suggestion=f"Expected header: {','.join(CLICK_COLUMNS)}",
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                detector_id, t_ps = row
                times.setdefault(detector_id, []).append(int(t_ps))
            except ValueError as e:
                raise InvalidArgumentError(
                    f"Malformed click row at line {line_no}",
                    details={"path": str(path), "line": line_no, "row": row},
                ) from e
    return {
        detector_id: TimeTags(detector_id=detector_id, t=np.sort(np.asarray(t, dtype=np.int64)))
        for detector_id, t in times.items()
    }
