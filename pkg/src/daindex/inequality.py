"""Inequality between two patient groups as a ratio minus one.

Dataset-embedded inequality compares deterioration indices directly;
model-induced inequality compares areas under the groups' allocation-
deterioration curves within the decision region ``[tau, 1]``.  Positive
values mean the first group is more deteriorated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .cohort import Cohort, MeasurementSpec
from .curve import ADCurve, CurveParams, auc, build_curve
from .deterioration import DeteriorationConfig, DeteriorationValue, group_index
from .errors import DegeneracyError, InsufficientDataError, ValidationError

DEGENERACY_FLOOR = 1e-6
DEFAULT_TAU = 0.5


class Kind(enum.Enum):
    DATASET_EMBEDDED = "dataset_embedded"
    MODEL_INDUCED = "model_induced"


@dataclass(frozen=True)
class InequalityReport:
    kind: Kind
    group_a: str
    group_b: str
    measurement: str
    value: float
    components: tuple[float, float]
    n_a: int
    n_b: int
    tau: float | None = None
    whole_area_value: float | None = None
    whole_area_components: tuple[float, float] | None = None
    details: dict = field(default_factory=dict)

    @property
    def percent(self) -> str:
        return f"{self.value * 100:.2f}%"

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "group_a": self.group_a,
            "group_b": self.group_b,
            "measurement": self.measurement,
            "value": self.value,
            "percent": self.percent,
            "components": {"a": self.components[0], "b": self.components[1]},
            "n_a": self.n_a,
            "n_b": self.n_b,
        }
        if self.kind is Kind.MODEL_INDUCED:
            out["tau"] = self.tau
            out["whole_area_value"] = self.whole_area_value
            out["whole_area_percent"] = f"{self.whole_area_value * 100:.2f}%"
            out["whole_area_components"] = {"a": self.whole_area_components[0], "b": self.whole_area_components[1]}
        if self.details:
            out["details"] = self.details
        return out


def ratio_minus_one(a: float, b: float, what: str = "deterioration index") -> float:
    if b < DEGENERACY_FLOOR:
        raise DegeneracyError(
            f"{what} of the reference group is {b:.3g} (< {DEGENERACY_FLOOR}); "
            "try a different measurement or threshold"
        )
    return a / b - 1.0


def _require_nonempty(group: Cohort, label: str) -> None:
    if len(group) == 0:
        raise ValidationError(f"group {label!r} has no records")


def dataset_inequality(p1: Cohort, p2: Cohort, spec: MeasurementSpec, stratum: str | None,
                       det_config: DeteriorationConfig, labels: tuple[str, str] = ("a", "b")
                       ) -> InequalityReport:
    """``d(P1) / d(P2) - 1``; negative when ``p1`` is healthier."""
    _require_nonempty(p1, labels[0])
    _require_nonempty(p2, labels[1])
    da = group_index(p1, spec, stratum, det_config)
    db = group_index(p2, spec, stratum, det_config)
    return report_from_indices(da, db, spec.name, labels)


def report_from_indices(da: DeteriorationValue, db: DeteriorationValue, measurement: str,
                        labels: tuple[str, str] = ("a", "b")) -> InequalityReport:
    value = ratio_minus_one(da.value, db.value)
    return InequalityReport(
        kind=Kind.DATASET_EMBEDDED,
        group_a=labels[0],
        group_b=labels[1],
        measurement=measurement,
        value=value,
        components=(da.value, db.value),
        n_a=da.n_used,
        n_b=db.n_used,
        details={"a": da.to_dict(), "b": db.to_dict()},
    )


def inequality_from_curves(curve_a: ADCurve, curve_b: ADCurve, tau: float = DEFAULT_TAU,
                           measurement: str = "") -> InequalityReport:
    """Area ratio minus one over ``[tau, 1]`` and over the whole curve."""
    if not 0.0 <= tau < 1.0:
        raise ValidationError(f"tau must be in [0, 1), got {tau}")
    region_a, region_b = auc(curve_a, tau, 1.0), auc(curve_b, tau, 1.0)
    whole_a, whole_b = auc(curve_a, 0.0, 1.0), auc(curve_b, 0.0, 1.0)
    what = f"area under the curve of group {curve_b.group_label!r}"
    return InequalityReport(
        kind=Kind.MODEL_INDUCED,
        group_a=curve_a.group_label,
        group_b=curve_b.group_label,
        measurement=measurement,
        value=ratio_minus_one(region_a.area, region_b.area, what),
        components=(region_a.area, region_b.area),
        n_a=curve_a.n_records,
        n_b=curve_b.n_records,
        tau=tau,
        whole_area_value=ratio_minus_one(whole_a.area, whole_b.area, what),
        whole_area_components=(whole_a.area, whole_b.area),
        details={
            "region": [region_a.region_lo, region_a.region_hi],
            "points_missing": {"a": region_a.points_missing, "b": region_b.points_missing},
            "segments_used": {"a": region_a.segments_used, "b": region_b.segments_used},
        },
    )


def model_inequality(p1: Cohort, p2: Cohort, spec: MeasurementSpec, stratum: str | None,
                     det_config: DeteriorationConfig, curve_params: CurveParams = CurveParams(),
                     tau: float = DEFAULT_TAU, labels: tuple[str, str] = ("a", "b")) -> InequalityReport:
    _require_nonempty(p1, labels[0])
    _require_nonempty(p2, labels[1])
    curves = []
    for group, label in ((p1, labels[0]), (p2, labels[1])):
        try:
            curves.append(build_curve(group, spec, stratum, det_config, curve_params, label))
        except InsufficientDataError as exc:
            raise InsufficientDataError(f"curve for group {label!r} failed: {exc}", n=exc.n) from None
    return inequality_from_curves(curves[0], curves[1], tau, spec.name)
