"""Small statistical kernels: Student-t tail, one-sample t-test, Spearman."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import DegeneracyError, ValidationError


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value ``P(|T| >= |t|)`` for Student's t with ``df`` dof.

    Uses the identity ``P(|T| >= |t|) = I_x(df/2, 1/2)`` with
    ``x = df / (df + t^2)``.
    """
    if df <= 0:
        raise ValidationError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(min(1.0, max(0.0, betainc(0.5 * df, 0.5, x))))


@dataclass(frozen=True)
class MultiRunSummary:
    values: tuple[float, ...]
    mean: float
    ci95: tuple[float, float]
    p_value: float
    n_runs: int
    t_statistic: float
    q25: float
    q75: float

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "mean": self.mean,
            "ci95": list(self.ci95),
            "p_value": self.p_value,
            "t_statistic": self.t_statistic,
            "n_runs": self.n_runs,
            "q25": self.q25,
            "q75": self.q75,
        }


def summarize_runs(values, ci: str = "percentile") -> MultiRunSummary:
    """Mean, 95% interval and one-sample two-sided t-test against zero.

    ``ci="percentile"`` takes the 2.5/97.5 percentiles of the run values;
    ``ci="t"`` gives the usual ``mean +/- t_{0.975} * se`` interval.
    """
    arr = np.asarray(values, dtype=float)
    n = arr.size
    if n < 2:
        raise ValidationError(f"need at least 2 runs for a t-test, got {n}")
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    # rounding noise around a constant is not variance
    if not sd > 8 * np.finfo(float).eps * float(np.abs(arr).max()):
        raise DegeneracyError("run values have zero variance")
    se = sd / math.sqrt(n)
    t = mean / se
    p = student_t_two_sided_p(t, n - 1)
    if ci == "percentile":
        lo, hi = np.percentile(arr, [2.5, 97.5])
    elif ci == "t":
        from scipy.stats import t as t_dist

        half = float(t_dist.ppf(0.975, n - 1)) * se
        lo, hi = mean - half, mean + half
    else:
        raise ValidationError(f"unknown ci mode {ci!r}")
    q25, q75 = np.percentile(arr, [25, 75])
    return MultiRunSummary(tuple(arr.tolist()), mean, (float(lo), float(hi)), p, n, float(t), float(q25), float(q75))


def rank_average(values) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(arr.size, dtype=float)
    sorted_vals = arr[order]
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValidationError(f"Spearman needs at least 3 pairs, got {x.size}")
    rx, ry = rank_average(x), rank_average(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0:
        raise DegeneracyError("Spearman correlation undefined for a constant sequence")
    return float(max(-1.0, min(1.0, np.dot(rx, ry) / denom)))
