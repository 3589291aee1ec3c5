"""Allocation-deterioration curves and the areas under them.

A curve is sampled on an even grid over allocation scores in [0, 1].  Each
grid point looks at the patients whose score falls in a half-open window
around it and, when there are enough of them, records their deterioration
index.  Sparse windows are dropped; the gaps stay gaps when integrating.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, MeasurementSpec
from .deterioration import DeteriorationConfig, index_from_values
from .errors import InsufficientDataError, ValidationError


@dataclass(frozen=True)
class CurveParams:
    n: int = 50
    l: float = 0.05
    nu: int = 20

    def __post_init__(self):
        if self.n < 3:
            raise ValidationError(f"curve grid needs n >= 3, got {self.n}")
        if not 0 < self.l <= 0.5:
            raise ValidationError(f"window half-width must be in (0, 0.5], got {self.l}")
        if self.nu < 2:
            raise ValidationError(f"nu must be at least 2, got {self.nu}")


@dataclass(frozen=True)
class CurvePoint:
    x: float
    d: float
    n_window: int
    index: int


@dataclass(frozen=True)
class ADCurve:
    points: tuple[CurvePoint, ...]
    params: CurveParams
    group_label: str = ""
    n_records: int = 0

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def d(self) -> np.ndarray:
        return np.array([p.d for p in self.points])

    def scaled(self, factor: float) -> "ADCurve":
        pts = tuple(CurvePoint(p.x, p.d * factor, p.n_window, p.index) for p in self.points)
        return ADCurve(pts, self.params, self.group_label, self.n_records)

    def to_csv(self) -> str:
        lines = ["x,d,n_window"]
        lines += [f"{p.x!r},{p.d!r},{p.n_window}" for p in self.points]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AUCResult:
    area: float
    region_lo: float
    region_hi: float
    segments_used: int
    points_missing: int
    snap_lo: float = 0.0
    snap_hi: float = 0.0


def grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("DAINDEX_THREADS", "1")))
    except ValueError:
        return 1


def build_curve(group: Cohort, spec: MeasurementSpec, stratum: str | None, det_config: DeteriorationConfig,
                params: CurveParams = CurveParams(), group_label: str = "") -> ADCurve:
    """Windowed approximation of the allocation-deterioration curve.

    Only records with both an allocation score and the measurement count
    toward a window.  Window computations run on up to ``DAINDEX_THREADS``
    threads; the curve is assembled in grid order either way.
    """
    recs = group.stratum_records(spec, stratum)
    missing_scores = sum(1 for r in recs if r.allocation_score is None)
    if missing_scores:
        raise ValidationError(f"{missing_scores} record(s) in group {group_label!r} lack an allocation score")
    pairs = [(r.allocation_score, r.measurements[spec.name]) for r in recs if spec.name in r.measurements]
    scores = np.array([p[0] for p in pairs], dtype=float)
    values = np.array([p[1] for p in pairs], dtype=float)
    threshold = spec.threshold(stratum)
    xs = grid(params.n)

    def window(i):
        x = xs[i]
        inside = (scores >= x - params.l) & (scores < x + params.l)
        count = int(inside.sum())
        if count < params.nu:
            return None
        d = index_from_values(values[inside], spec, threshold, det_config).value
        return CurvePoint(float(x), d, count, i)

    workers = _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(window, range(params.n)))
    else:
        results = [window(i) for i in range(params.n)]
    points = tuple(p for p in results if p is not None)
    if len(points) < 2:
        raise InsufficientDataError(
            f"group {group_label!r}: only {len(points)} window(s) reach nu={params.nu}; curve unusable",
            n=len(points),
        )
    return ADCurve(points, params, group_label, int(scores.size))


def simpson(y: np.ndarray, h: float) -> float:
    """Composite Simpson on evenly spaced ``y``.

    With an odd number of intervals the last one falls back to the
    trapezoid rule.  A single point has zero area.
    """
    m = y.size - 1
    if m <= 0:
        return 0.0
    if m == 1:
        return 0.5 * h * (y[0] + y[1])
    even = m if m % 2 == 0 else m - 1
    area = h / 3.0 * (y[0] + 4.0 * y[1:even:2].sum() + 2.0 * y[2:even - 1:2].sum() + y[even])
    if even != m:
        area += 0.5 * h * (y[-2] + y[-1])
    return float(area)


def _runs(indices: np.ndarray) -> list[np.ndarray]:
    if indices.size == 0:
        return []
    breaks = np.nonzero(np.diff(indices) != 1)[0] + 1
    return np.split(np.arange(indices.size), breaks)


def auc(curve: ADCurve, region_lo: float = 0.0, region_hi: float = 1.0) -> AUCResult:
    """Area under the curve over ``[region_lo, region_hi]``.

    Region edges off the grid snap inward to the nearest grid points.  Each
    maximal run of consecutive grid points is integrated on its own; gaps
    contribute nothing.
    """
    if not 0.0 <= region_lo < region_hi <= 1.0:
        raise ValidationError(f"need 0 <= lo < hi <= 1, got [{region_lo}, {region_hi}]")
    n = curve.params.n
    step = 1.0 / (n - 1)
    tol = 1e-9
    lo_idx = int(math.ceil(region_lo * (n - 1) - tol))
    hi_idx = int(math.floor(region_hi * (n - 1) + tol))
    idx = np.array([p.index for p in curve.points])
    d = curve.d
    keep = (idx >= lo_idx) & (idx <= hi_idx)
    if not keep.any():
        raise ValidationError(f"no curve points in region [{region_lo}, {region_hi}]")
    idx, d = idx[keep], d[keep]
    runs = _runs(idx)
    area = sum(simpson(d[r], step) for r in runs)
    snapped_lo, snapped_hi = lo_idx * step, hi_idx * step
    return AUCResult(
        area=float(area),
        region_lo=snapped_lo,
        region_hi=snapped_hi,
        segments_used=len(runs),
        points_missing=int((hi_idx - lo_idx + 1) - idx.size),
        snap_lo=snapped_lo - region_lo,
        snap_hi=region_hi - snapped_hi,
    )


def interpolate(curve: ADCurve, n_points: int = 201) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation across gaps, for plotting only."""
    xs = np.linspace(curve.x[0], curve.x[-1], n_points)
    return xs, np.interp(xs, curve.x, curve.d)
