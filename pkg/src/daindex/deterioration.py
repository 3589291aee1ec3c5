"""Deterioration indices: how far a group's readings sit beyond a threshold.

The one-cutoff index is the tail probability past the threshold.  The k-step
index splits the abnormal range into ``k`` steps of width
``ceil((max - t) / k)`` and weights each step's probability, so groups with
more extreme readings score higher.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cohort import Cohort, Direction, MeasurementSpec
from .density import fit_density, select_bandwidth, silverman_bandwidth, step_probabilities
from .errors import InsufficientDataError, ValidationError

DEFAULT_K = 20


class Variant(enum.Enum):
    ONE_CUTOFF = "one_cutoff"
    K_STEP = "k_step"


def linear_weights(k: int) -> tuple[float, ...]:
    """``w(i) = 2i / (k(k+1))``: later (more deteriorated) steps weigh more."""
    return tuple(2.0 * i / (k * (k + 1)) for i in range(1, k + 1))


def uniform_weights(k: int) -> tuple[float, ...]:
    return (1.0 / k,) * k


@dataclass(frozen=True)
class DeteriorationConfig:
    variant: Variant = Variant.K_STEP
    k: int = DEFAULT_K
    weights: tuple[float, ...] = field(default_factory=lambda: linear_weights(DEFAULT_K))
    direction: Direction | None = None
    bandwidth_override: float | None = None
    exact_steps: bool = False
    # stratum=None on a multi-threshold spec: "separate" rejects, "pooled" averages by count
    strata_mode: str = "separate"

    def __post_init__(self):
        if self.variant is Variant.ONE_CUTOFF:
            object.__setattr__(self, "k", 1)
            object.__setattr__(self, "weights", (1.0,))
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "weights", weights)
        if self.k < 1:
            raise ValidationError(f"k must be at least 1, got {self.k}")
        if len(weights) != self.k:
            raise ValidationError(f"expected {self.k} weights, got {len(weights)}")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ValidationError("weights must be non-negative and sum to 1")
        if self.bandwidth_override is not None and not self.bandwidth_override > 0:
            raise ValidationError("bandwidth_override must be positive")
        if self.strata_mode not in ("separate", "pooled"):
            raise ValidationError(f"unknown strata_mode {self.strata_mode!r}")

    @classmethod
    def one_cutoff(cls, **kwargs) -> "DeteriorationConfig":
        return cls(variant=Variant.ONE_CUTOFF, k=1, weights=(1.0,), **kwargs)

    @classmethod
    def k_step(cls, k: int = DEFAULT_K, weights: str | Sequence[float] = "linear", **kwargs
               ) -> "DeteriorationConfig":
        if weights == "linear":
            weights = linear_weights(k)
        elif weights == "uniform":
            weights = uniform_weights(k)
        return cls(variant=Variant.K_STEP, k=k, weights=tuple(weights), **kwargs)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "k": self.k,
            "weights": list(self.weights),
            "direction": None if self.direction is None else self.direction.value,
            "bandwidth_override": self.bandwidth_override,
            "exact_steps": self.exact_steps,
            "strata_mode": self.strata_mode,
        }


@dataclass(frozen=True)
class DeteriorationValue:
    value: float
    n_used: int
    per_step: tuple[tuple[float, float], ...]
    bandwidth: float | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "n_used": self.n_used,
            "bandwidth": self.bandwidth,
            "per_step": [{"probability": p, "weight": w} for p, w in self.per_step],
        }


def step_cutoffs(spec: MeasurementSpec, threshold: float, k: int, direction: Direction,
                 exact: bool = False) -> np.ndarray:
    """Lower edges of the ``k`` steps, ordered from the threshold outward."""
    span = spec.ub - threshold if direction is Direction.HIGHER_IS_WORSE else threshold - spec.lb
    delta = span / k if exact else math.ceil(span / k)
    if not delta > 0:
        raise ValidationError(f"{spec.name}: step width is zero (threshold at the bound)")
    sign = 1.0 if direction is Direction.HIGHER_IS_WORSE else -1.0
    return threshold + sign * delta * np.arange(k)


def _direction(spec: MeasurementSpec, config: DeteriorationConfig) -> Direction:
    return config.direction if config.direction is not None else spec.direction


def choose_bandwidth(values: np.ndarray, config: DeteriorationConfig) -> float:
    if config.bandwidth_override is not None:
        return config.bandwidth_override
    if values.size >= 10:
        return select_bandwidth(values)
    return silverman_bandwidth(values)


def index_from_values(values, spec: MeasurementSpec, threshold: float,
                      config: DeteriorationConfig) -> DeteriorationValue:
    """KDE-based deterioration index of a bare array of readings."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise InsufficientDataError(f"{spec.name}: need at least 2 readings, got {values.size}", n=values.size)
    direction = _direction(spec, config)
    h = choose_bandwidth(values, config)
    model = fit_density(values, h, spec.lb, spec.ub, spec.discrete)
    cutoffs = step_cutoffs(spec, threshold, config.k, direction, config.exact_steps)
    probs, _ = step_probabilities(model, cutoffs, direction)
    w = np.asarray(config.weights)
    value = float(min(1.0, max(0.0, np.dot(w, probs))))
    return DeteriorationValue(value, int(values.size), tuple(zip(probs.tolist(), w.tolist())), h)


def empirical_index(values, spec: MeasurementSpec, config: DeteriorationConfig,
                    threshold: float | None = None) -> DeteriorationValue:
    """Same step formula as the KDE index with raw count fractions.

    Steps are half-open ``[c_i, c_{i+1})`` (mirrored for lower-is-worse) and
    the last one is open-ended, so a reading exactly at the threshold counts.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InsufficientDataError(f"{spec.name}: no readings", n=0)
    if threshold is None:
        threshold = spec.threshold()
    direction = _direction(spec, config)
    cutoffs = step_cutoffs(spec, threshold, config.k, direction, config.exact_steps)
    if direction is Direction.HIGHER_IS_WORSE:
        beyond = np.array([(values >= c).sum() for c in cutoffs], dtype=float)
    else:
        beyond = np.array([(values <= c).sum() for c in cutoffs], dtype=float)
    probs = (beyond - np.append(beyond[1:], 0.0)) / values.size
    w = np.asarray(config.weights)
    return DeteriorationValue(float(np.dot(w, probs)), int(values.size), tuple(zip(probs.tolist(), w.tolist())))


def _strata_for(group: Cohort, spec: MeasurementSpec, stratum: str | None,
                config: DeteriorationConfig) -> list[str | None]:
    if stratum is not None or len(spec.thresholds) == 1:
        return [stratum]
    if config.strata_mode == "pooled":
        return group.strata(spec)
    raise ValidationError(
        f"{spec.name} has per-stratum thresholds {sorted(spec.thresholds)}; name a stratum or use pooled mode"
    )


def group_index(group: Cohort, spec: MeasurementSpec, stratum: str | None,
                config: DeteriorationConfig) -> DeteriorationValue:
    """Deterioration index of a cohort, per stratum or count-weighted across strata."""
    parts = []
    for s in _strata_for(group, spec, stratum, config):
        values = group.values(spec.name, s)
        if values.size < 2:
            where = "" if s is None else f" in stratum {s!r}"
            raise InsufficientDataError(
                f"{spec.name}: need at least 2 readings{where}, got {values.size}", n=values.size
            )
        parts.append(index_from_values(values, spec, spec.threshold(s), config))
    if len(parts) == 1:
        return parts[0]
    total = sum(p.n_used for p in parts)
    value = sum(p.value * p.n_used for p in parts) / total
    k = len(parts[0].per_step)
    per_step = tuple(
        (sum(p.per_step[i][0] * p.n_used for p in parts) / total, parts[0].per_step[i][1]) for i in range(k)
    )
    return DeteriorationValue(value, total, per_step)


def one_cutoff_index(group: Cohort, spec: MeasurementSpec, stratum: str | None = None,
                     config: DeteriorationConfig | None = None) -> DeteriorationValue:
    """Probability of a reading at or beyond the stratum's threshold."""
    base = config or DeteriorationConfig.one_cutoff()
    cfg = DeteriorationConfig.one_cutoff(direction=base.direction, bandwidth_override=base.bandwidth_override,
                                         strata_mode=base.strata_mode)
    return group_index(group, spec, stratum, cfg)


def k_step_index(group: Cohort, spec: MeasurementSpec, stratum: str | None,
                 config: DeteriorationConfig) -> DeteriorationValue:
    return group_index(group, spec, stratum, config)
