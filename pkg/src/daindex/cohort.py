"""Cohort loading, validation and stratification.

A cohort is a list of patient records plus the measurement specs that say how
each marker is bounded and where its abnormality threshold sits.  Missing
measurement values are kept as absent keys rather than imputed.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

RESERVED_COLUMNS = ("id", "group", "stratum", "allocation_score", "age", "mm_count")
NORMALISED_MM = "normalised_mm"
MM_REFERENCE_AGE = 65.0


class Direction(enum.Enum):
    HIGHER_IS_WORSE = "higher_is_worse"
    LOWER_IS_WORSE = "lower_is_worse"

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "higher_is_worse": cls.HIGHER_IS_WORSE,
            "higherisworse": cls.HIGHER_IS_WORSE,
            "higher": cls.HIGHER_IS_WORSE,
            "lower_is_worse": cls.LOWER_IS_WORSE,
            "lowerisworse": cls.LOWER_IS_WORSE,
            "lower": cls.LOWER_IS_WORSE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown direction {value!r}") from None


@dataclass(frozen=True)
class MeasurementSpec:
    """Bounds, thresholds and orientation of one prognosis marker.

    ``thresholds`` maps a stratum label to its abnormality cutoff.  Records
    without a stratum (or with one not listed) fall back to
    ``default_stratum``; when that is unset and there is a single threshold,
    that threshold is used.
    """

    name: str
    lb: float
    ub: float
    thresholds: Mapping[str, float]
    direction: Direction = Direction.HIGHER_IS_WORSE
    discrete: bool = False
    unit: str = ""
    default_stratum: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        object.__setattr__(self, "thresholds", dict(self.thresholds))
        if not (math.isfinite(self.lb) and math.isfinite(self.ub)) or self.lb >= self.ub:
            raise ValidationError(f"{self.name}: need finite lb < ub, got [{self.lb}, {self.ub}]")
        if not self.thresholds:
            raise ValidationError(f"{self.name}: thresholds map is empty")
        for stratum, t in self.thresholds.items():
            if not self.lb < t < self.ub:
                raise ValidationError(
                    f"{self.name}: threshold {t} for stratum {stratum!r} outside ({self.lb}, {self.ub})"
                )
        if self.default_stratum is not None and self.default_stratum not in self.thresholds:
            raise ValidationError(f"{self.name}: default stratum {self.default_stratum!r} has no threshold")

    def resolve_stratum(self, stratum: str | None) -> str:
        if stratum is not None and stratum in self.thresholds:
            return stratum
        if self.default_stratum is not None:
            return self.default_stratum
        if len(self.thresholds) == 1:
            return next(iter(self.thresholds))
        raise ValidationError(
            f"{self.name}: no threshold for stratum {stratum!r} and no default stratum declared"
        )

    def threshold(self, stratum: str | None = None) -> float:
        return float(self.thresholds[self.resolve_stratum(stratum)])

    def contains(self, value: float) -> bool:
        return self.lb <= value <= self.ub

    def to_dict(self) -> dict:
        out = {
            "unit": self.unit,
            "lb": self.lb,
            "ub": self.ub,
            "thresholds": dict(self.thresholds),
            "direction": self.direction.value,
            "discrete": self.discrete,
        }
        if self.default_stratum is not None:
            out["default_stratum"] = self.default_stratum
        return out

    @classmethod
    def from_dict(cls, name: str, data: Mapping) -> "MeasurementSpec":
        try:
            return cls(
                name=name,
                lb=float(data["lb"]),
                ub=float(data["ub"]),
                thresholds={str(k): float(v) for k, v in data["thresholds"].items()},
                direction=Direction.parse(data.get("direction", "higher_is_worse")),
                discrete=bool(data.get("discrete", False)),
                unit=str(data.get("unit", "")),
                default_stratum=data.get("default_stratum"),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ParseError(f"measurement spec {name!r} is malformed: {exc}") from None


def load_specs(path: str | Path) -> dict[str, MeasurementSpec]:
    """Read a JSON object keyed by measurement name."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object keyed by measurement name")
    return {name: MeasurementSpec.from_dict(name, body) for name, body in data.items()}


def dump_specs(specs: Mapping[str, MeasurementSpec], path: str | Path) -> None:
    payload = {name: spec.to_dict() for name, spec in specs.items()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    group_label: str
    measurements: Mapping[str, float] = field(default_factory=dict)
    stratum_label: str | None = None
    allocation_score: float | None = None
    age: float | None = None
    mm_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "measurements", dict(self.measurements))
        if self.allocation_score is not None and not 0.0 <= self.allocation_score <= 1.0:
            raise ValidationError(
                f"record {self.patient_id}: allocation_score {self.allocation_score} outside [0, 1]"
            )
        if self.age is not None and not self.age > 0:
            raise ValidationError(f"record {self.patient_id}: age must be positive, got {self.age}")
        if self.mm_count is not None and self.mm_count < 0:
            raise ValidationError(f"record {self.patient_id}: mm_count must be non-negative")


@dataclass(frozen=True)
class Cohort:
    """Immutable collection of records with their measurement specs.

    ``groups`` is the declared label set.  A declared label may have zero
    records, which lets callers distinguish "empty group" from "unknown
    group".
    """

    records: tuple[PatientRecord, ...]
    specs: Mapping[str, MeasurementSpec]
    groups: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "specs", dict(self.specs))
        observed = {r.group_label for r in self.records}
        if not self.groups:
            object.__setattr__(self, "groups", frozenset(observed))
        else:
            object.__setattr__(self, "groups", frozenset(self.groups))
            unknown = observed - self.groups
            if unknown:
                raise ValidationError(f"unknown group label(s): {sorted(unknown)}")
        for rec in self.records:
            for name, value in rec.measurements.items():
                spec = self.specs.get(name)
                if spec is None:
                    raise ValidationError(f"record {rec.patient_id}: no spec for measurement {name!r}")
                if not spec.contains(value):
                    raise ValidationError(
                        f"record {rec.patient_id}: {name}={value} outside [{spec.lb}, {spec.ub}]"
                    )

    def __len__(self):
        return len(self.records)

    def with_records(self, records: Iterable[PatientRecord]) -> "Cohort":
        return Cohort(tuple(records), self.specs, self.groups)

    def stratum_records(self, spec: MeasurementSpec, stratum: str | None) -> list[PatientRecord]:
        """Records whose effective stratum for ``spec`` is ``stratum``.

        ``None`` selects every record.
        """
        if stratum is None:
            return list(self.records)
        target = spec.resolve_stratum(stratum)
        return [r for r in self.records if spec.resolve_stratum(r.stratum_label) == target]

    def values(self, name: str, stratum: str | None = None) -> np.ndarray:
        """Present values of measurement ``name``; absent values are skipped."""
        spec = self.specs[name]
        recs = self.stratum_records(spec, stratum)
        return np.array([r.measurements[name] for r in recs if name in r.measurements], dtype=float)

    def n_missing(self, name: str, stratum: str | None = None) -> int:
        spec = self.specs[name]
        return sum(1 for r in self.stratum_records(spec, stratum) if name not in r.measurements)

    def strata(self, spec: MeasurementSpec) -> list[str]:
        return sorted({spec.resolve_stratum(r.stratum_label) for r in self.records})


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", row) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", row)
    return value


def load_cohort(
    path: str | Path,
    specs: Sequence[MeasurementSpec] | Mapping[str, MeasurementSpec],
    groups: Iterable[str] | None = None,
) -> Cohort:
    """Load and validate a cohort CSV.

    Parameters
    ----------
    path : path to a UTF-8 CSV with a header row.  ``id`` and ``group`` are
        required; ``stratum``, ``allocation_score``, ``age`` and ``mm_count``
        are optional; every other column whose name has a spec is read as a
        measurement.  Empty cells are missing values.
    specs : measurement specs, as a list or a name-keyed mapping.
    groups : declared group labels.  Rows with any other label are rejected.
        When omitted, the observed labels are the declared set.

    Raises
    ------
    ParseError
        Malformed rows, carrying the 1-based data row number.
    ValidationError
        Bound violations and unknown group labels.
    """
    if not isinstance(specs, Mapping):
        specs = {s.name: s for s in specs}
    declared = frozenset(groups) if groups else frozenset()
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for required in ("id", "group"):
            if required not in header:
                raise ParseError(f"{path}: missing required column {required!r}")
        measurement_cols = [h for h in header if h not in RESERVED_COLUMNS and h in specs]
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", row_no)
            cells = dict(zip(header, (c.strip() for c in row)))
            if not cells["id"]:
                raise ParseError("empty id", row_no)
            group = cells["group"]
            if declared and group not in declared:
                raise ValidationError(f"row {row_no}: unknown group label {group!r}")
            measurements = {}
            for name in measurement_cols:
                if cells[name] == "":
                    continue
                value = _parse_float(cells[name], name, row_no)
                spec = specs[name]
                if not spec.contains(value):
                    raise ValidationError(
                        f"record {cells['id']}: {name}={value} outside [{spec.lb}, {spec.ub}]"
                    )
                measurements[name] = value
            score = cells.get("allocation_score", "")
            age = cells.get("age", "")
            mm = cells.get("mm_count", "")
            mm_value = None
            if mm != "":
                mm_float = _parse_float(mm, "mm_count", row_no)
                if mm_float != int(mm_float):
                    raise ParseError(f"mm_count must be an integer, got {mm!r}", row_no)
                mm_value = int(mm_float)
            try:
                records.append(
                    PatientRecord(
                        patient_id=cells["id"],
                        group_label=group,
                        measurements=measurements,
                        stratum_label=cells.get("stratum") or None,
                        allocation_score=_parse_float(score, "allocation_score", row_no) if score else None,
                        age=_parse_float(age, "age", row_no) if age else None,
                        mm_count=mm_value,
                    )
                )
            except ValidationError as exc:
                raise ValidationError(f"row {row_no}: {exc}") from None
    return Cohort(tuple(records), specs, declared)


def write_cohort(cohort: Cohort, path: str | Path) -> None:
    """Write ``cohort`` as CSV; floats use ``repr`` so reloading is bit-exact."""
    names = sorted({n for r in cohort.records for n in r.measurements} | set(cohort.specs))

    def fmt(value):
        return "" if value is None else repr(value) if isinstance(value, float) else str(value)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(RESERVED_COLUMNS) + names)
        for r in cohort.records:
            writer.writerow(
                [r.patient_id, r.group_label, fmt(r.stratum_label), fmt(r.allocation_score), fmt(r.age),
                 fmt(r.mm_count)]
                + [fmt(r.measurements.get(n)) for n in names]
            )


def split_by_group(cohort: Cohort, group_a: str, group_b: str) -> tuple[Cohort, Cohort]:
    """Partition into the records labelled ``group_a`` and ``group_b``.

    Labels must be declared on the cohort; a declared label with no records
    yields an empty cohort, which downstream estimators reject.
    """
    for label in (group_a, group_b):
        if label not in cohort.groups:
            raise ValidationError(f"group label {label!r} not present in cohort (have {sorted(cohort.groups)})")
    a = [r for r in cohort.records if r.group_label == group_a]
    b = [r for r in cohort.records if r.group_label == group_b]
    return cohort.with_records(a), cohort.with_records(b)


def derive_normalised_mm(record: PatientRecord) -> float:
    """Age-normalised multimorbidity count, ``mm_count * 65 / age``."""
    if record.mm_count is None or record.age is None:
        raise ValidationError(f"record {record.patient_id}: normalised MM needs both mm_count and age")
    if record.age <= 0:
        raise ValidationError(f"record {record.patient_id}: age must be positive")
    return record.mm_count * MM_REFERENCE_AGE / record.age


def add_normalised_mm(cohort: Cohort, spec: MeasurementSpec | None = None) -> tuple[Cohort, int]:
    """Append ``normalised_mm`` to every record that has mm_count and age.

    Returns the new cohort and the number of records skipped.  Values outside
    the spec's bounds are clamped, since the derived marker has no natural
    upper limit.
    """
    if spec is None:
        spec = cohort.specs.get(NORMALISED_MM)
    if spec is None:
        spec = MeasurementSpec(NORMALISED_MM, 0.0, 100.0, {"all": 3.0}, discrete=False, unit="count")
    skipped = 0
    out = []
    for rec in cohort.records:
        try:
            value = derive_normalised_mm(rec)
        except ValidationError:
            skipped += 1
            out.append(rec)
            continue
        value = min(max(value, spec.lb), spec.ub)
        out.append(replace(rec, measurements={**rec.measurements, NORMALISED_MM: value}))
    if skipped:
        warnings.warn(f"normalised MM skipped for {skipped} record(s) lacking age or mm_count", stacklevel=2)
    specs = {**cohort.specs, NORMALISED_MM: spec}
    return Cohort(tuple(out), specs, cohort.groups), skipped
