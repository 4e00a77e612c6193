"""Grid scans of the complex plane with CSV and PGM output."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .operator_model import OperatorModel
from .resolvent import LABELS, ClassifyParams, PointClassification, classify_point

LABEL_GRAY = {"resolvent": 255, "indeterminate": 128, "spectrum": 64, "eigenvalue": 0}
CHANNELS = ("label", "q", "growth")
CSV_HEADER = ["re", "im", "label", "q", "growth", "residual"]


@dataclass(frozen=True)
class ScanRegion:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.re_min < self.re_max:
            raise ValueError(f"re_min ({self.re_min}) must be < re_max ({self.re_max})")
        if not self.im_min < self.im_max:
            raise ValueError(f"im_min ({self.im_min}) must be < im_max ({self.im_max})")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("nx and ny must be >= 2")

    def points(self) -> list[complex]:
        """Grid points in row-major order starting at (re_min, im_min)."""
        re = np.linspace(self.re_min, self.re_max, self.nx)
        im = np.linspace(self.im_min, self.im_max, self.ny)
        return [complex(x, y) for y in im for x in re]


@dataclass(frozen=True)
class ScanResult:
    region: ScanRegion
    labels: list[str]
    q: np.ndarray
    growth: np.ndarray
    residual: np.ndarray
    params: ClassifyParams
    points: list[complex]

    def label_grid(self) -> np.ndarray:
        return np.array(self.labels).reshape(self.region.ny, self.region.nx)


def _classify_chunk(args):
    model, lams, params = args
    out = []
    for lam in lams:
        c: PointClassification = classify_point(model, lam, params)
        out.append((c.label, c.q, c.growth, c.residual))
    return out


def scan(model: OperatorModel, region: ScanRegion, params: ClassifyParams | None = None,
         workers: int = 1) -> ScanResult:
    """Classify every grid point; results are written back by index."""
    params = params or ClassifyParams()
    pts = region.points()
    n = len(pts)
    results: list = [None] * n
    if workers <= 1:
        chunks = [(0, pts)]
        for start, lams in chunks:
            for k, item in enumerate(_classify_chunk((model, lams, params))):
                results[start + k] = item
    else:
        size = max(1, math.ceil(n / (4 * workers)))
        bounds = [(s, pts[s:s + size]) for s in range(0, n, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(s, pool.submit(_classify_chunk, (model, lams, params))) for s, lams in bounds]
            for s, fut in futures:
                for k, item in enumerate(fut.result()):
                    results[s + k] = item
    labels = [r[0] for r in results]
    return ScanResult(region, labels,
                      np.array([r[1] for r in results], dtype=float),
                      np.array([r[2] for r in results], dtype=float),
                      np.array([r[3] for r in results], dtype=float),
                      params, pts)


def _fmt(x: float) -> str:
    return repr(float(x))


def csv_text(result: ScanResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for lam, lab, q, g, r in zip(result.points, result.labels, result.q, result.growth,
                                 result.residual):
        w.writerow([_fmt(lam.real), _fmt(lam.imag), lab, _fmt(q), _fmt(g), _fmt(r)])
    return buf.getvalue()


def export_csv(result: ScanResult, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(csv_text(result))
    except OSError as exc:
        raise OSError(f"cannot write scan CSV to {path}: {exc}") from exc


def read_scan_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        if row["label"] not in LABELS:
            raise ValueError(f"unknown label {row['label']!r} in {path}")
    return rows


def gray_levels(result: ScanResult, channel: str) -> np.ndarray:
    """Gray values (0..255) in row-major grid order.

    * ``label``: fixed levels from ``LABEL_GRAY``.
    * ``q``: ``255 * (1 - q)`` clipped to [0, 255]; q = 0 is the fast-path floor.
    * ``growth``: ``255 * (growth - 1)`` clipped, so growth 1 is black and >= 2 white.

    Missing (NaN) channel values take the label's gray level.
    """
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}, got {channel!r}")
    fallback = np.array([LABEL_GRAY[lab] for lab in result.labels], dtype=float)
    if channel == "label":
        vals = fallback
    elif channel == "q":
        vals = 255.0 * (1.0 - np.clip(result.q, 0.0, 1.0))
    else:
        vals = 255.0 * np.clip(result.growth - 1.0, 0.0, 1.0)
    vals = np.where(np.isnan(vals), fallback, vals)
    return np.rint(vals).astype(int)


def pgm_text(result: ScanResult, channel: str) -> str:
    """Plain PGM (P2). The top image row is im_max, so the picture matches the plane."""
    g = gray_levels(result, channel).reshape(result.region.ny, result.region.nx)[::-1]
    lines = ["P2", f"{result.region.nx} {result.region.ny}", "255"]
    lines += [" ".join(str(v) for v in row) for row in g]
    return "\n".join(lines) + "\n"


def export_heatmap(result: ScanResult, channel: str, path) -> None:
    text = pgm_text(result, channel)
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write heatmap to {path}: {exc}") from exc
