"""Synthetic validation: null-inequality datasets and improvement sweeps.

A null dataset takes a random fraction of a base cohort, keeps one group and
relabels a random half of it, so both resulting groups are draws from the same
population.  An improvement sweep then pulls one group's readings toward a
healthy reference with increasing strength; inequality should fall
monotonically.

Every run gets its own seed derived from the master seed and the run index,
so adding runs never changes the earlier ones.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cohort import Cohort, Direction, MeasurementSpec, PatientRecord, split_by_group
from .deterioration import DeteriorationConfig, group_index
from .errors import DegeneracyError, ValidationError
from .inequality import InequalityReport, dataset_inequality, report_from_indices
from .stats import MultiRunSummary, spearman, summarize_runs

MIN_SOURCE_RECORDS = 50

# Normal-range midpoints used as the "healthy" end of an improvement.
HEALTHY_REFERENCE = {
    "creatinine_max": 1.045,
    "creatinine_min": 1.045,
    "alt_min": 15.0,
    "multimorbidity": 1.0,
}


def synthetic_specs() -> dict[str, MeasurementSpec]:
    """Specs for the built-in generator (creatinine in mg/dL, ALT in U/L)."""
    creat = {"male": 1.35, "female": 1.04}
    return {
        "creatinine_max": MeasurementSpec("creatinine_max", 0.0, 50.0, creat, Direction.HIGHER_IS_WORSE,
                                          unit="mg/dL", default_stratum="male"),
        "creatinine_min": MeasurementSpec("creatinine_min", 0.0, 50.0, creat, Direction.HIGHER_IS_WORSE,
                                          unit="mg/dL", default_stratum="male"),
        "alt_min": MeasurementSpec("alt_min", 0.0, 500.0, {"male": 30.0, "female": 19.0},
                                   Direction.HIGHER_IS_WORSE, unit="U/L", default_stratum="male"),
        "multimorbidity": MeasurementSpec("multimorbidity", 0.0, 30.0, {"male": 3.0, "female": 3.0},
                                          Direction.HIGHER_IS_WORSE, discrete=True, unit="count",
                                          default_stratum="male"),
    }


def derive_seed(master: int, index: int) -> int:
    """Independent 63-bit seed for run ``index`` of a ``master``-seeded experiment."""
    seq = np.random.SeedSequence(master, spawn_key=(index,))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def generate_base_cohort(n: int = 60_000, seed: int = 0, male_fraction: float = 0.5) -> Cohort:
    """Seeded cohort whose measurements mimic the shapes of ICU labs.

    Creatinine and ALT are lognormal; the multimorbidity count is Poisson.
    Allocation scores rise with creatinine so the cohort can also feed
    allocation-deterioration curves.
    """
    rng = np.random.default_rng(seed)
    specs = synthetic_specs()
    male = rng.random(n) < male_fraction
    age = np.round(rng.uniform(18.0, 90.0, n), 1)
    mm = np.minimum(rng.poisson(3.0, n), 30)
    log_cmax = rng.normal(np.where(male, 0.0, -0.15), 0.5)
    cmax = np.clip(np.exp(log_cmax), 0.0, 50.0)
    cmin = np.clip(cmax * np.exp(-np.abs(rng.normal(0.25, 0.15, n))), 0.0, 50.0)
    alt = np.clip(np.exp(rng.normal(math.log(20.0), 0.6, n)), 0.0, 500.0)
    z = (log_cmax - log_cmax.mean()) / log_cmax.std()
    score = 1.0 / (1.0 + np.exp(-(1.2 * z + rng.normal(0.0, 0.8, n))))
    records = []
    for i in range(n):
        sex = "male" if male[i] else "female"
        records.append(PatientRecord(
            patient_id=f"p{i:06d}",
            group_label=sex,
            stratum_label=sex,
            measurements={
                "creatinine_max": float(cmax[i]),
                "creatinine_min": float(cmin[i]),
                "alt_min": float(alt[i]),
                "multimorbidity": float(mm[i]),
            },
            allocation_score=float(score[i]),
            age=float(age[i]),
            mm_count=int(mm[i]),
        ))
    return Cohort(tuple(records), specs, frozenset({"male", "female"}))


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    sample_fraction: float = 0.10
    relabel_fraction: float = 0.50
    source_group: str = "male"
    target_group: str = "female"

    def __post_init__(self):
        for name in ("sample_fraction", "relabel_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class ImprovementSpec:
    strengths: tuple[float, ...] = tuple(np.linspace(0.0, 0.5, 10).tolist())
    target_group: str = "female"
    healthy_ref: dict = field(default_factory=lambda: dict(HEALTHY_REFERENCE))

    def __post_init__(self):
        s = tuple(float(v) for v in self.strengths)
        object.__setattr__(self, "strengths", s)
        if list(s) != sorted(s):
            raise ValidationError("strengths must be sorted ascending")
        if any(not 0.0 <= v < 1.0 for v in s):
            raise ValidationError("strengths must lie in [0, 1)")


def generate_null_dataset(base: Cohort, spec: SynthSpec) -> Cohort:
    rng = np.random.default_rng(spec.seed)
    n_take = int(math.floor(spec.sample_fraction * len(base)))
    picked = np.sort(rng.choice(len(base), size=n_take, replace=False))
    source = [base.records[i] for i in picked if base.records[i].group_label == spec.source_group]
    if len(source) < MIN_SOURCE_RECORDS:
        raise ValidationError(
            f"only {len(source)} {spec.source_group!r} record(s) sampled; need at least {MIN_SOURCE_RECORDS}"
        )
    n_relabel = int(math.floor(spec.relabel_fraction * len(source)))
    flip = np.zeros(len(source), dtype=bool)
    flip[rng.choice(len(source), size=n_relabel, replace=False)] = True
    records = [replace(r, group_label=spec.target_group) if f else r for r, f in zip(source, flip)]
    return Cohort(tuple(records), base.specs, frozenset({spec.source_group, spec.target_group}))


def apply_improvement(cohort: Cohort, spec: ImprovementSpec, strength: float, measurement: str) -> Cohort:
    """Contract the target group's readings toward the healthy reference.

    ``v' = v - strength * (v - ref)``, clamped to the measurement bounds.
    """
    if not 0.0 <= strength < 1.0:
        raise ValidationError(f"strength must be in [0, 1), got {strength}")
    mspec = cohort.specs[measurement]
    ref = spec.healthy_ref[measurement]
    if not mspec.contains(ref):
        raise ValidationError(f"healthy reference {ref} outside bounds of {measurement}")
    if strength == 0.0:
        return cohort
    out = []
    for r in cohort.records:
        if r.group_label == spec.target_group and measurement in r.measurements:
            v = r.measurements[measurement]
            new = min(max(v - strength * (v - ref), mspec.lb), mspec.ub)
            r = replace(r, measurements={**r.measurements, measurement: new})
        out.append(r)
    return cohort.with_records(out)


def _map_runs(fn, n_runs: int) -> list:
    try:
        workers = max(1, int(os.environ.get("DAINDEX_THREADS", "1")))
    except ValueError:
        workers = 1
    if workers == 1:
        return [fn(i) for i in range(n_runs)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(n_runs)))


@dataclass(frozen=True)
class NullResult:
    measurement: str
    reports: tuple[InequalityReport, ...]
    summary: MultiRunSummary


def run_null_experiment(base: Cohort, synth: SynthSpec, det_config: DeteriorationConfig, spec: MeasurementSpec,
                        stratum: str | None = None, n_runs: int = 10) -> NullResult:
    """Inequality of target vs source over ``n_runs`` null datasets."""
    if n_runs < 2:
        raise ValidationError(f"need at least 2 runs for a t-test, got {n_runs}")
    stratum = synth.source_group if stratum is None else stratum

    def one(i):
        data = generate_null_dataset(base, replace(synth, seed=derive_seed(synth.seed, i)))
        a, b = split_by_group(data, synth.target_group, synth.source_group)
        return dataset_inequality(a, b, spec, stratum, det_config, (synth.target_group, synth.source_group))

    reports = tuple(_map_runs(one, n_runs))
    return NullResult(spec.name, reports, summarize_runs([r.value for r in reports]))


@dataclass(frozen=True)
class SweepRow:
    strength: float
    summary: MultiRunSummary


@dataclass(frozen=True)
class SweepResult:
    measurement: str
    rows: tuple[SweepRow, ...]
    rho: float

    def to_csv(self) -> str:
        lines = ["measurement,strength,mean,q25,q75"]
        for row in self.rows:
            s = row.summary
            lines.append(f"{self.measurement},{row.strength!r},{s.mean!r},{s.q25!r},{s.q75!r}")
        return "\n".join(lines) + "\n"


def run_improvement_sweep(base: Cohort, synth: SynthSpec, improve: ImprovementSpec,
                          det_config: DeteriorationConfig, spec: MeasurementSpec,
                          stratum: str | None = None, n_runs: int = 10) -> SweepResult:
    """Mean inequality per improvement strength and its Spearman rho with strength.

    Run ``i`` uses the same null dataset at every strength, so the reference
    group's index is computed once per run.
    """
    strengths = improve.strengths
    if len(strengths) < 3:
        raise ValidationError(f"a sweep needs at least 3 strengths for Spearman, got {len(strengths)}")
    if len(set(strengths)) == 1:
        raise DegeneracyError("all strengths are equal; Spearman correlation is undefined")
    if n_runs < 2:
        raise ValidationError(f"need at least 2 runs per strength, got {n_runs}")
    if improve.target_group != synth.target_group:
        raise ValidationError("improvement target must be the relabelled group")
    stratum = synth.source_group if stratum is None else stratum
    labels = (synth.target_group, synth.source_group)

    def one(i):
        data = generate_null_dataset(base, replace(synth, seed=derive_seed(synth.seed, i)))
        a, b = split_by_group(data, *labels)
        db = group_index(b, spec, stratum, det_config)
        values = []
        for s in strengths:
            da = group_index(apply_improvement(a, improve, s, spec.name), spec, stratum, det_config)
            values.append(report_from_indices(da, db, spec.name, labels).value)
        return values

    per_run = np.array(_map_runs(one, n_runs))
    rows = tuple(SweepRow(s, summarize_runs(per_run[:, j])) for j, s in enumerate(strengths))
    rho = spearman(strengths, [r.summary.mean for r in rows])
    return SweepResult(spec.name, rows, rho)
