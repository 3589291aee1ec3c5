import numpy as np
import pytest

from daindex.cohort import Cohort, MeasurementSpec, PatientRecord

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def creat_spec():
    return MeasurementSpec("creatinine_max", 0.0, 10.0, {"all": 1.35}, unit="mg/dL")


def make_cohort(groups, spec, scores=None):
    """Build a cohort from ``{label: values}``; ``scores`` mirrors the layout."""
    records = []
    for label, values in groups.items():
        for i, v in enumerate(values):
            score = None if scores is None else float(scores[label][i])
            records.append(PatientRecord(f"{label}-{i}", label, {spec.name: float(v)}, allocation_score=score))
    return Cohort(tuple(records), {spec.name: spec}, frozenset(groups))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
