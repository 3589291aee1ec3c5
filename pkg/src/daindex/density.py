"""Gaussian kernel density estimation over bounded, possibly discrete samples.

Tail probabilities are computed from the closed-form kernel CDF, so no
quadrature tolerance enters the probability path.  Boundary bias (mass leaking
past ``lb``/``ub``) and pulse-like densities of discrete markers are handled by
moving the integration cutoff to the nearest point where the estimated density
has dropped below ``epsilon``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr

from .cohort import Direction
from .errors import DegeneracyError, InsufficientDataError, ValidationError

DEFAULT_EPSILON = 1e-10
# Leaked-region walks never go further than this many bandwidths past a bound.
LEAK_REACH = 10.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_CHUNK = 2_000_000


def scan_grid_size(lb: float, ub: float) -> int:
    return max(200, int(round(20.0 * (ub - lb))))


@dataclass(frozen=True, eq=False)
class DensityModel:
    """A fitted Gaussian KDE.

    ``sample`` is stored sorted.  The low-density crossing points used by the
    boundary adjustment are computed once on first access and cached; a
    concurrent first access may compute them twice but always gets the same
    array.
    """

    sample: np.ndarray
    bandwidth: float
    lb: float
    ub: float
    discrete: bool = False
    epsilon: float = DEFAULT_EPSILON

    @property
    def n(self) -> int:
        return self.sample.size

    def _kernel_sum(self, x: np.ndarray, fn) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.shape, dtype=float)
        flat = x.ravel()
        res = out.ravel()
        step = max(1, _CHUNK // self.n)
        for start in range(0, flat.size, step):
            z = (flat[start:start + step, None] - self.sample[None, :]) / self.bandwidth
            res[start:start + step] = fn(z).sum(axis=1)
        return res.reshape(x.shape)

    def pdf(self, x):
        """Kernel mixture density at ``x`` (scalar or array)."""
        scalar = np.ndim(x) == 0
        val = self._kernel_sum(x, lambda z: np.exp(-0.5 * z * z)) / (self.n * self.bandwidth * _SQRT_2PI)
        return float(val[0]) if scalar else val

    def cdf(self, x):
        scalar = np.ndim(x) == 0
        val = self._kernel_sum(x, ndtr) / self.n
        return float(val[0]) if scalar else val

    def sf(self, x):
        """Upper tail mass, computed as a kernel sum so small tails keep precision."""
        scalar = np.ndim(x) == 0
        val = self._kernel_sum(x, lambda z: ndtr(-z)) / self.n
        return float(val[0]) if scalar else val

    def grid(self, n_points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Evenly spaced ``(x, pdf(x))`` over the support padded by three bandwidths."""
        if n_points is None:
            n_points = scan_grid_size(self.lb, self.ub)
        pad = 3.0 * self.bandwidth
        xs = np.linspace(self.lb - pad, self.ub + pad, n_points)
        return xs, self.pdf(xs)

    @cached_property
    def left_crossings(self) -> np.ndarray:
        return _scan(self, leftward=True)

    @cached_property
    def right_crossings(self) -> np.ndarray:
        return _scan(self, leftward=False)


def fit_density(sample, bandwidth: float, lb: float, ub: float, discrete: bool = False,
                epsilon: float = DEFAULT_EPSILON) -> DensityModel:
    arr = np.sort(np.asarray(sample, dtype=float).ravel())
    if arr.size < 2:
        raise InsufficientDataError(f"density needs at least 2 values, got {arr.size}", n=arr.size)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("sample contains non-finite values")
    if not (bandwidth > 0 and math.isfinite(bandwidth)):
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    if lb >= ub:
        raise ValidationError(f"need lb < ub, got [{lb}, {ub}]")
    if arr[0] < lb or arr[-1] > ub:
        raise ValidationError(f"sample values outside [{lb}, {ub}]")
    return DensityModel(arr, float(bandwidth), float(lb), float(ub), bool(discrete), float(epsilon))


def silverman_bandwidth(sample) -> float:
    arr = np.asarray(sample, dtype=float)
    sd = arr.std(ddof=1)
    if not sd > 0:
        raise DegeneracyError("sample has zero variance; pass a fixed bandwidth instead")
    return 1.06 * sd * arr.size ** (-0.2)


def bandwidth_grid(sample, n_grid: int = 30) -> np.ndarray:
    h_s = silverman_bandwidth(sample)
    return np.geomspace(0.1 * h_s, 10.0 * h_s, n_grid)


def select_bandwidth(sample, n_folds: int = 5, n_grid: int = 30, seed: int = 0,
                     max_points: int = 2000) -> float:
    """Bandwidth maximising mean held-out log-likelihood under k-fold CV.

    The candidate grid is ``n_grid`` log-spaced values spanning 0.1x to 10x
    Silverman's rule.  Folds are contiguous blocks after a seeded shuffle.
    Samples longer than ``max_points`` are cross-validated on a seeded
    subsample of that size; the grid itself is always anchored on the full
    sample.
    """
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size < 10:
        raise InsufficientDataError(f"bandwidth selection needs at least 10 values, got {arr.size}", n=arr.size)
    grid = bandwidth_grid(arr, n_grid)
    rng = np.random.default_rng(seed)
    order = rng.permutation(arr.size)
    if arr.size > max_points:
        order = order[:max_points]
    shuffled = arr[order]
    folds = np.array_split(np.arange(shuffled.size), n_folds)
    total = np.zeros(grid.size)
    for test_idx in folds:
        mask = np.ones(shuffled.size, dtype=bool)
        mask[test_idx] = False
        train, test = shuffled[mask], shuffled[test_idx]
        d2 = (test[:, None] - train[None, :]) ** 2
        nearest = d2.min(axis=1)
        # shift by the nearest neighbour so the largest term per row is exp(0)
        excess = (d2 - nearest[:, None]).astype(np.float32)
        for j, h in enumerate(grid):
            inv = -0.5 / (h * h)
            ll = np.log(np.exp(excess * np.float32(inv)).sum(axis=1, dtype=np.float64)) + nearest * inv
            total[j] += ll.sum() - test.size * math.log(train.size * h * _SQRT_2PI)
    return float(grid[int(np.argmax(total))])


def _scan(model: DensityModel, leftward: bool) -> np.ndarray:
    """Collect points where the density falls below ``epsilon``.

    Each grid point walks one scan step at a time toward the previous grid
    point while the density stays at or above ``epsilon``; the point where
    it stops is kept if the density there is below ``epsilon``.  The
    outermost grid point (the bound itself) walks into the leaked region,
    at most ``LEAK_REACH`` bandwidths.
    """
    lb, ub, eps = model.lb, model.ub, model.epsilon
    n = scan_grid_size(lb, ub)
    a = np.linspace(lb, ub, n)
    s = (ub - lb) / n
    reach = LEAK_REACH * model.bandwidth
    if leftward:
        limit = np.concatenate(([lb - reach], a[:-1]))
        sign = -1.0
    else:
        limit = np.concatenate((a[1:], [ub + reach]))
        sign = 1.0
    x = a.copy()
    p = model.pdf(x)

    def active_mask():
        inside = x > limit if leftward else x < limit
        return (p >= eps) & inside

    active = active_mask()
    while active.any():
        x[active] += sign * s
        p[active] = model.pdf(x[active])
        active = active_mask()
    found = x[p < eps]
    found = np.clip(found, lb - reach, ub + reach)
    return np.unique(found)


def _is_bound(t: float, bound: float, model: DensityModel) -> bool:
    return math.isclose(t, bound, rel_tol=0.0, abs_tol=1e-12 * max(1.0, model.ub - model.lb))


def adjust_left_boundary(model: DensityModel, t: float) -> float:
    """Move a lower integration cutoff left past mass that belongs above it.

    Returns the largest low-density crossing point below ``t`` when it lies
    above the floor: the largest sample value below ``t`` for discrete
    markers, nothing at all when ``t`` is the lower bound (or no sample value
    lies below ``t``), and ``t`` itself otherwise.  Falls back to ``t``.
    """
    crossings = model.left_crossings
    below = crossings[crossings < t]
    if below.size == 0:
        return float(t)
    t_hat = float(below.max())
    if _is_bound(t, model.lb, model):
        floor = -math.inf
    elif model.discrete:
        smaller = model.sample[model.sample < t]
        floor = float(smaller.max()) if smaller.size else -math.inf
    else:
        floor = float(t)
    return t_hat if t_hat > floor else float(t)


def adjust_right_boundary(model: DensityModel, t: float) -> float:
    """Mirror of :func:`adjust_left_boundary` for upper cutoffs."""
    crossings = model.right_crossings
    above = crossings[crossings > t]
    if above.size == 0:
        return float(t)
    t_hat = float(above.min())
    if _is_bound(t, model.ub, model):
        ceiling = math.inf
    elif model.discrete:
        larger = model.sample[model.sample > t]
        ceiling = float(larger.min()) if larger.size else math.inf
    else:
        ceiling = float(t)
    return t_hat if t_hat < ceiling else float(t)


@dataclass(frozen=True)
class TailProbability:
    value: float
    adjusted_cutoff: float
    raw_cutoff: float
    direction: Direction


def _adjust(model: DensityModel, t: float, direction: Direction) -> float:
    if direction is Direction.HIGHER_IS_WORSE:
        return adjust_left_boundary(model, t)
    return adjust_right_boundary(model, t)


def support_mass(model: DensityModel, direction: Direction) -> float:
    """Kernel mass over the adjusted legitimate support, the renormaliser."""
    if direction is Direction.HIGHER_IS_WORSE:
        return model.sf(adjust_left_boundary(model, model.lb))
    return model.cdf(adjust_right_boundary(model, model.ub))


def tail_probability(model: DensityModel, t: float, direction: Direction = Direction.HIGHER_IS_WORSE
                     ) -> TailProbability:
    """``Pr(M >= t)`` (or ``Pr(M <= t)``) with boundary-adjusted cutoffs.

    The probability is renormalised over the adjusted support, so the tail
    at the bound itself is exactly 1.
    """
    direction = Direction.parse(direction)
    if not model.lb <= t <= model.ub:
        raise ValidationError(f"cutoff {t} outside [{model.lb}, {model.ub}]")
    t_hat = _adjust(model, t, direction)
    mass = model.sf(t_hat) if direction is Direction.HIGHER_IS_WORSE else model.cdf(t_hat)
    value = min(1.0, max(0.0, mass / support_mass(model, direction)))
    return TailProbability(value, t_hat, float(t), direction)


def step_probabilities(model: DensityModel, cutoffs, direction: Direction = Direction.HIGHER_IS_WORSE
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities of consecutive steps starting at each cutoff.

    For higher-is-worse markers ``cutoffs`` ascend and step ``i`` covers
    ``[c_i, c_{i+1})`` with the last step open to +inf; lower-is-worse
    mirrors this with descending cutoffs.  Cutoffs inside the support are
    boundary-adjusted; the result is renormalised like
    :func:`tail_probability`, so the steps sum to the tail at ``cutoffs[0]``.

    Returns ``(probabilities, adjusted_cutoffs)``.
    """
    direction = Direction.parse(direction)
    c = np.asarray(cutoffs, dtype=float)
    adjusted = np.array([
        _adjust(model, float(v), direction) if model.lb <= v <= model.ub else float(v) for v in c
    ])
    if direction is Direction.HIGHER_IS_WORSE:
        adjusted = np.maximum.accumulate(adjusted)
        cum = model.sf(adjusted)
    else:
        adjusted = np.minimum.accumulate(adjusted)
        cum = model.cdf(adjusted)
    probs = cum - np.append(cum[1:], 0.0)
    probs = np.clip(probs, 0.0, None) / support_mass(model, direction)
    return probs, adjusted
