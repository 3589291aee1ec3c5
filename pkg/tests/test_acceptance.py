"""End-to-end acceptance checks; each test also logs a one-line verdict."""

import json
import time

import numpy as np
import pytest

import conftest
from conftest import make_cohort
from daindex.cli import main
from daindex.cohort import Direction, MeasurementSpec
from daindex.curve import ADCurve, CurveParams, CurvePoint, auc, build_curve
from daindex.density import fit_density, tail_probability
from daindex.deterioration import DeteriorationConfig, empirical_index, index_from_values
from daindex.inequality import dataset_inequality, inequality_from_curves
from daindex.stats import spearman, student_t_two_sided_p
from daindex.synthetic import (ImprovementSpec, SynthSpec, generate_base_cohort, run_improvement_sweep,
                               run_null_experiment)


def verdict(number, title, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def base():
    return generate_base_cohort(60_000, seed=0)


def test_1_null_inequality(base):
    start = time.perf_counter()
    cfg = DeteriorationConfig.k_step(20)
    results = [run_null_experiment(base, SynthSpec(seed=11), cfg, base.specs[name], n_runs=10)
               for name in ("creatinine_max", "creatinine_min", "alt_min")]
    elapsed = time.perf_counter() - start
    sizes = {len(r.reports) for r in results}
    n_records = results[0].reports[0].n_a + results[0].reports[0].n_b
    ok = (all(r.summary.p_value > 0.05 and abs(r.summary.mean) <= 0.15 for r in results)
          and sizes == {10} and elapsed <= 120)
    detail = ", ".join(f"{r.measurement} mean={r.summary.mean:+.4f} p={r.summary.p_value:.3f}" for r in results)
    verdict(1, "null inequality", ok, f"{detail}; {n_records} records/run; {elapsed:.1f}s")


def test_2_monotone_sensitivity(base):
    start = time.perf_counter()
    cfg = DeteriorationConfig.k_step(20)
    sweeps = [run_improvement_sweep(base, SynthSpec(seed=11), ImprovementSpec(), cfg, base.specs[name], n_runs=10)
              for name in ("creatinine_max", "multimorbidity")]
    elapsed = time.perf_counter() - start
    ok = all(len(s.rows) == 10 and s.rho <= -0.95 for s in sweeps) and elapsed <= 300
    detail = ", ".join(f"{s.measurement} rho={s.rho:.3f}" for s in sweeps)
    verdict(2, "monotone sensitivity", ok, f"{detail}; {elapsed:.1f}s")


def test_3_boundary_adjustment():
    rng = np.random.default_rng(0)
    h = 0.2
    values = np.concatenate([rng.uniform(0.0, h, 400), rng.uniform(1.0, 5.0, 1600)])
    near = float((values <= h).mean())
    model = fit_density(values, h, 0.0, 10.0)
    adjusted = tail_probability(model, 0.0).value
    raw = float(model.sf(0.0))

    counts = rng.poisson(3.0, 5000).astype(float)
    pulse = fit_density(counts, 0.05, 0.0, 30.0, discrete=True)
    p = tail_probability(pulse, 3.0).value
    frac = float((counts >= 3).mean())

    ok = abs(adjusted - 1.0) <= 1e-3 and raw <= 0.95 and abs(p - frac) <= 0.02 and near == pytest.approx(0.2)
    verdict(3, "boundary adjustment", ok,
            f"mass within h={near:.2f}, tail(0)={adjusted:.6f}, unadjusted={raw:.4f}; "
            f"pulse {p:.4f} vs empirical {frac:.4f}")


def test_4_worked_example():
    spec = MeasurementSpec("creatinine", 0.0, 10.0, {"all": 1.35})
    one = DeteriorationConfig.one_cutoff()
    two = DeteriorationConfig.k_step(2, (0.3, 0.7))
    g1, g2 = [0.8, 0.78, 10.0], [0.8, 0.78, 1.36]
    o1, o2 = empirical_index(g1, spec, one).value, empirical_index(g2, spec, one).value
    k1, k2 = empirical_index(g1, spec, two).value, empirical_index(g2, spec, two).value
    kde1, kde2 = index_from_values(g1, spec, 1.35, two).value, index_from_values(g2, spec, 1.35, two).value
    ok = (o1 == pytest.approx(1 / 3, abs=1e-12) and o2 == pytest.approx(1 / 3, abs=1e-12)
          and k1 == pytest.approx(0.7 / 3, abs=1e-12) and k2 == pytest.approx(0.1, abs=1e-12)
          and k1 > k2 and kde1 > kde2)
    verdict(4, "worked example", ok,
            f"one-cutoff {o1:.4f}/{o2:.4f}, k=2 {k1:.4f}/{k2:.4f}, KDE k=2 {kde1:.4f}/{kde2:.4f}")


def _curve(xs, ds, n):
    idx = np.rint(np.asarray(xs) * (n - 1)).astype(int)
    return ADCurve(tuple(CurvePoint(float(x), float(d), 20, int(i)) for x, d, i in zip(xs, ds, idx)),
                   CurveParams(n=n))


def test_5_simpson():
    xs = np.linspace(0, 1, 1001)
    dense = auc(_curve(xs, xs ** 3, 1001)).area
    coarse_x = np.linspace(0, 1, 21)
    coarse = _curve(coarse_x, coarse_x ** 3, 21)
    split = auc(coarse, 0, 0.5).area + auc(coarse, 0.5, 1).area
    whole = auc(coarse).area
    gx = np.linspace(0, 1, 51)
    keep = (np.arange(51) <= 20) | (np.arange(51) >= 30)
    gapped = auc(_curve(gx[keep], gx[keep] ** 3, 51)).area
    hand = 0.4 ** 4 / 4 + (1 - 0.6 ** 4) / 4
    ok = abs(dense - 0.25) <= 1e-12 and abs(split - whole) <= 1e-9 and abs(gapped - hand) <= 1e-12
    verdict(5, "Simpson integration", ok,
            f"x^3 area err={abs(dense - 0.25):.1e}, additivity err={abs(split - whole):.1e}, "
            f"gap err={abs(gapped - hand):.1e}")


def test_6_kde_vs_oracle():
    rng = np.random.default_rng(0)
    cases = [
        (MeasurementSpec("hi", 0.0, 10.0, {"all": 1.35}), rng.lognormal(0.0, 0.5, 5000).clip(0, 10)),
        (MeasurementSpec("lo", 0.0, 100.0, {"all": 40.0}, Direction.LOWER_IS_WORSE),
         rng.normal(50.0, 10.0, 5000).clip(0, 100)),
        (MeasurementSpec("mid", 0.0, 100.0, {"all": 60.0}), rng.normal(50.0, 10.0, 5000).clip(0, 100)),
    ]
    worst = 0.0
    parts = []
    for spec, values in cases:
        for k in (1, 2, 20):
            cfg = DeteriorationConfig.one_cutoff() if k == 1 else DeteriorationConfig.k_step(k)
            gap = abs(index_from_values(values, spec, spec.threshold(), cfg).value
                      - empirical_index(values, spec, cfg).value)
            worst = max(worst, gap)
            parts.append(f"{spec.name}/k={k}:{gap:.4f}")
    verdict(6, "KDE vs empirical oracle", worst <= 0.05, f"max gap {worst:.4f} ({', '.join(parts)})")


def test_7_statistical_kernels():
    p = student_t_two_sided_p(2.262, 9)
    rho = spearman([1, 2, 3, 4], [2, 1, 4, 3])
    verdict(7, "statistical kernels", abs(p - 0.05) <= 0.001 and rho == 0.6, f"p={p:.5f}, rho={rho!r}")


def test_8_identity_and_invariance():
    rng = np.random.default_rng(0)
    spec = MeasurementSpec("creatinine", 0.0, 10.0, {"all": 1.35})
    cfg = DeteriorationConfig.one_cutoff(bandwidth_override=0.2)
    p = make_cohort({"p": rng.lognormal(0.3, 0.5, 1000).clip(0, 10)}, spec)
    same = dataset_inequality(p, p, spec, None, DeteriorationConfig.k_step(20)).value

    def group(label, rate):
        s = rng.uniform(0, 1, 3000)
        v = np.where(rng.uniform(0, 1, 3000) < rate(s), rng.uniform(2, 6, 3000), rng.uniform(0.3, 1.0, 3000))
        return make_cohort({label: v}, spec, scores={label: s})

    ca = build_curve(group("a", lambda s: 0.2 + 0.6 * s), spec, None, cfg, CurveParams(), "a")
    cb = build_curve(group("b", lambda s: 0.15 + 0.5 * s), spec, None, cfg, CurveParams(), "b")
    plain = inequality_from_curves(ca, cb, 0.5).value
    scaled = [inequality_from_curves(ca.scaled(c), cb.scaled(c), 0.5).value for c in (0.1, 0.5, 0.9)]
    zero = inequality_from_curves(ca, cb, 0.0)
    drift = max(abs(s - plain) for s in scaled)
    ok = same == 0.0 and drift <= 1e-12 and zero.value == zero.whole_area_value
    verdict(8, "identity and invariance", ok,
            f"I(P,P)={same!r}, scaling drift={drift:.1e}, tau=0 {zero.value!r} vs whole {zero.whole_area_value!r}")


def test_9_cli_determinism(tmp_path):
    def outputs(argv, name):
        out = tmp_path / name
        code = main([*argv, "--out", str(out)])
        assert code == 0, (argv, code)
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    gen = ["generate", "--size", "3000", "--seed", "7"]
    data = ["--cohort", str(tmp_path / "generate-1" / "cohort.csv"), "--specs", str(tmp_path / "generate-1" / "specs.json")]
    commands = {
        "generate": gen,
        "db-inequality": ["db-inequality", *data, "--groups", "female,male", "--measurement", "creatinine_max",
                          "--strata-mode", "pooled"],
        "model-inequality": ["model-inequality", *data, "--groups", "female,male", "--measurement",
                             "creatinine_max", "--strata-mode", "pooled", "--svg"],
        "pdf-dump": ["pdf-dump", *data, "--measurement", "alt_min"],
        "eval-synthetic": ["eval-synthetic", "--base-size", "6000", "--runs", "3", "--strengths", "3",
                           "--null-measurements", "creatinine_max", "--sweep-measurements", "multimorbidity"],
    }
    same = {}
    for name, argv in commands.items():
        first, second = outputs(argv, f"{name}-1"), outputs(argv, f"{name}-2")
        same[name] = bool(first) and first == second
    report = json.loads((tmp_path / "db-inequality-1" / "report.json").read_text())
    ok = all(same.values()) and report["provenance"]["seed"] == 0
    verdict(9, "CLI determinism", ok, ", ".join(f"{k}={'identical' if v else 'DIFFERS'}" for k, v in same.items()))
