"""Command-line front end.

Exit codes: 0 success, 1 internal error, 2 input validation, 3 numerical
degeneracy.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import Direction, dump_specs, load_cohort, load_specs, split_by_group, write_cohort
from .curve import CurveParams, build_curve, interpolate
from .density import adjust_left_boundary, adjust_right_boundary, fit_density, tail_probability
from .deterioration import DeteriorationConfig, choose_bandwidth, linear_weights, uniform_weights
from .errors import DAIndexError, DegeneracyError, InsufficientDataError, ValidationError
from .inequality import dataset_inequality, inequality_from_curves
from .synthetic import (ImprovementSpec, SynthSpec, generate_base_cohort, run_improvement_sweep,
                        run_null_experiment)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_DEGENERACY = 0, 1, 2, 3

NULL_MEASUREMENTS = ("creatinine_max", "creatinine_min", "alt_min")
SWEEP_MEASUREMENTS = ("creatinine_max", "multimorbidity")


def parse_weights(text: str, k: int) -> tuple[float, ...]:
    if text == "linear":
        return linear_weights(k)
    if text == "uniform":
        return uniform_weights(k)
    if text.startswith("csv:"):
        body = text[4:]
        if Path(body).is_file():
            body = Path(body).read_text(encoding="utf-8").replace("\n", ",")
        try:
            return tuple(float(v) for v in body.split(",") if v.strip())
        except ValueError:
            raise ValidationError(f"cannot parse weights {text!r}") from None
    raise ValidationError(f"--weights must be uniform, linear or csv:..., got {text!r}")


def det_config_from_args(args) -> DeteriorationConfig:
    common = dict(bandwidth_override=args.bandwidth, exact_steps=args.exact_steps, strata_mode=args.strata_mode)
    if args.k == 1:
        return DeteriorationConfig.one_cutoff(**common)
    return DeteriorationConfig.k_step(args.k, parse_weights(args.weights, args.k), **common)


def parse_groups(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise ValidationError(f"--groups expects two labels 'a,b', got {text!r}")
    return parts[0], parts[1]


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _envelope(command: str, config: dict, seed: int, body: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "provenance": {"seed": seed, "config_hash": _config_hash(config), "version": __version__},
        "config": config,
        **body,
    }


def _load(args):
    specs = load_specs(args.specs)
    if args.measurement not in specs:
        raise ValidationError(f"measurement {args.measurement!r} not in specs (have {sorted(specs)})")
    cohort = load_cohort(args.cohort, specs)
    return cohort, specs[args.measurement]


def _split(cohort, groups):
    a, b = split_by_group(cohort, *groups)
    for g, label in ((a, groups[0]), (b, groups[1])):
        if len(g) == 0:
            raise ValidationError(f"group {label!r} has no records")
    return a, b


def _base_config(args) -> dict:
    return {
        "cohort": str(args.cohort),
        "specs": str(args.specs),
        "groups": args.groups,
        "measurement": args.measurement,
        "stratum": args.stratum,
        "det": det_config_from_args(args).to_dict(),
    }


def cmd_db_inequality(args) -> int:
    groups = parse_groups(args.groups)
    cohort, spec = _load(args)
    a, b = _split(cohort, groups)
    report = dataset_inequality(a, b, spec, args.stratum, det_config_from_args(args), groups)
    config = _base_config(args)
    out = Path(args.out)
    _write_json(out / "report.json", _envelope("db-inequality", config, args.seed, {"report": report.to_dict()}))
    summary = (f"dataset-embedded inequality of {groups[0]} vs {groups[1]} on {spec.name}: "
               f"{report.value:.6f} ({report.percent})\n"
               f"  d({groups[0]}) = {report.components[0]:.6g} (n={report.n_a})\n"
               f"  d({groups[1]}) = {report.components[1]:.6g} (n={report.n_b})\n")
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return EXIT_OK


def _svg(curves, tau: float) -> str:
    w, h, pad = 480, 320, 40
    colours = ("#c0392b", "#2471a3")

    def px(x, y):
        return pad + x * (w - 2 * pad), h - pad - y * (h - 2 * pad)

    ymax = max(max(c.d) for c in curves) or 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<rect x="{px(tau, 0)[0]:.1f}" y="{pad}" width="{(1 - tau) * (w - 2 * pad):.1f}" '
             f'height="{h - 2 * pad}" fill="#eeeeee"/>',
             f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>']
    for curve, colour in zip(curves, colours):
        xs, ys = interpolate(curve)
        pts = " ".join("{:.1f},{:.1f}".format(*px(x, y / ymax)) for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}"/>')
        parts.append(f'<text x="{w - pad}" y="{pad + 14 * colours.index(colour)}" fill="{colour}" '
                     f'text-anchor="end" font-size="12">{curve.group_label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_model_inequality(args) -> int:
    groups = parse_groups(args.groups)
    cohort, spec = _load(args)
    a, b = _split(cohort, groups)
    det = det_config_from_args(args)
    params = CurveParams(args.curve_n, args.curve_l, args.curve_nu)
    curves = []
    for g, label in ((a, groups[0]), (b, groups[1])):
        try:
            curves.append(build_curve(g, spec, args.stratum, det, params, label))
        except InsufficientDataError as exc:
            raise InsufficientDataError(f"curve for group {label!r} failed: {exc}", n=exc.n) from None
    report = inequality_from_curves(curves[0], curves[1], args.tau, spec.name)
    out = Path(args.out)
    for curve in curves:
        (out / f"curve_{curve.group_label}.csv").write_text(curve.to_csv(), encoding="utf-8")
    if args.svg:
        (out / "curves.svg").write_text(_svg(curves, args.tau), encoding="utf-8")
    config = {**_base_config(args), "curve": {"n": params.n, "l": params.l, "nu": params.nu}, "tau": args.tau}
    _write_json(out / "report.json", _envelope("model-inequality", config, args.seed, {"report": report.to_dict()}))
    summary = (f"model-induced inequality of {groups[0]} vs {groups[1]} on {spec.name}\n"
               f"  decision region [{args.tau}, 1]: {report.value:.6f} ({report.percent})\n"
               f"  whole area: {report.whole_area_value:.6f} ({report.whole_area_value * 100:.2f}%)\n")
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return EXIT_OK


def cmd_eval_synthetic(args) -> int:
    if args.runs < 2:
        raise ValidationError(f"--runs must be at least 2 for a t-test, got {args.runs}")
    if args.cohort:
        if not args.specs:
            raise ValidationError("--cohort requires --specs")
        specs = load_specs(args.specs)
        base = load_cohort(args.cohort, specs)
    else:
        base = generate_base_cohort(args.base_size, seed=args.seed)
    det = det_config_from_args(args)
    synth = SynthSpec(seed=args.seed)
    improve = ImprovementSpec(strengths=tuple(np.linspace(0.0, args.max_strength, args.strengths).tolist()))
    null_measurements = args.null_measurements.split(",") if args.null_measurements else NULL_MEASUREMENTS
    sweep_measurements = args.sweep_measurements.split(",") if args.sweep_measurements else SWEEP_MEASUREMENTS
    for name in (*null_measurements, *sweep_measurements):
        if name not in base.specs:
            raise ValidationError(f"measurement {name!r} not in base cohort specs")
    out = Path(args.out)
    lines = []
    null_payload = {}
    for name in null_measurements:
        res = run_null_experiment(base, synth, det, base.specs[name], n_runs=args.runs)
        null_payload[name] = res.summary.to_dict()
        s = res.summary
        lines.append(f"null {name}: mean={s.mean:.4f} [{s.ci95[0]:.4f}, {s.ci95[1]:.4f}] p={s.p_value:.4f}")
    csv_lines = ["measurement,strength,mean,q25,q75"]
    sweep_payload = {}
    for name in sweep_measurements:
        res = run_improvement_sweep(base, synth, improve, det, base.specs[name], n_runs=args.runs)
        csv_lines += res.to_csv().splitlines()[1:]
        sweep_payload[name] = {"rho": res.rho, "rows": [{"strength": r.strength, **r.summary.to_dict()}
                                                       for r in res.rows]}
        lines.append(f"sweep {name}: spearman rho={res.rho:.4f}")
    (out / "sweep.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    config = {
        "seed": args.seed, "runs": args.runs, "base_size": args.base_size, "cohort": args.cohort,
        "det": det.to_dict(), "strengths": list(improve.strengths),
    }
    _write_json(out / "report.json", _envelope("eval-synthetic", config, args.seed,
                                               {"null": null_payload, "sweep": sweep_payload}))
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return EXIT_OK


def cmd_pdf_dump(args) -> int:
    cohort, spec = _load(args)
    det = det_config_from_args(args)
    if args.groups:
        labels = list(parse_groups(args.groups))
    else:
        labels = sorted(cohort.groups)
    rows = ["group,stratum,x,pdf,raw_cutoff,adjusted_cutoff,bound,adjusted_bound,bandwidth"]
    for label in labels:
        if label not in cohort.groups:
            raise ValidationError(f"group label {label!r} not present in cohort")
        group = cohort.with_records(r for r in cohort.records if r.group_label == label)
        strata = [args.stratum] if args.stratum else group.strata(spec)
        for stratum in strata:
            values = group.values(spec.name, stratum)
            if values.size < 2:
                raise InsufficientDataError(f"group {label!r} stratum {stratum!r}: fewer than 2 readings",
                                            n=values.size)
            h = choose_bandwidth(values, det)
            model = fit_density(values, h, spec.lb, spec.ub, spec.discrete)
            t = spec.threshold(stratum)
            tp = tail_probability(model, t, spec.direction)
            if spec.direction is Direction.HIGHER_IS_WORSE:
                bound, adjusted_bound = spec.lb, adjust_left_boundary(model, spec.lb)
            else:
                bound, adjusted_bound = spec.ub, adjust_right_boundary(model, spec.ub)
            xs, ys = model.grid(args.points)
            tail = f"{t!r},{tp.adjusted_cutoff!r},{bound!r},{adjusted_bound!r},{h!r}"
            for x, y in zip(xs, ys):
                rows.append(f"{label},{stratum},{float(x)!r},{float(y)!r},{tail}")
    Path(args.out, "density.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(rows) - 1} density rows to {Path(args.out, 'density.csv')}")
    return EXIT_OK


def cmd_generate(args) -> int:
    base = generate_base_cohort(args.size, seed=args.seed)
    out = Path(args.out)
    write_cohort(base, out / "cohort.csv")
    dump_specs(base.specs, out / "specs.json")
    print(f"wrote {len(base)} records to {out / 'cohort.csv'}")
    return EXIT_OK


def _add_det_args(p):
    p.add_argument("--k", type=int, default=20, help="number of steps; 1 selects the one-cutoff index")
    p.add_argument("--weights", default="linear", help="uniform | linear | csv:w1,w2,... (or csv:path)")
    p.add_argument("--bandwidth", type=float, default=None, help="fixed KDE bandwidth instead of CV selection")
    p.add_argument("--exact-steps", action="store_true", help="use (max - t)/k step width without ceiling")
    p.add_argument("--strata-mode", choices=("separate", "pooled"), default="separate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")


def _add_data_args(p, groups_required=True):
    p.add_argument("--cohort", required=True)
    p.add_argument("--specs", required=True)
    p.add_argument("--groups", required=groups_required, help="two labels, 'a,b'")
    p.add_argument("--measurement", required=True)
    p.add_argument("--stratum", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daindex", description="Deterioration-allocation inequality audits")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("db-inequality", help="inequality embedded in a dataset")
    _add_data_args(p)
    _add_det_args(p)
    p.set_defaults(func=cmd_db_inequality)

    p = sub.add_parser("model-inequality", help="inequality induced by allocation scores")
    _add_data_args(p)
    _add_det_args(p)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--curve-n", type=int, default=50)
    p.add_argument("--curve-l", type=float, default=0.05)
    p.add_argument("--curve-nu", type=int, default=20)
    p.add_argument("--svg", action="store_true", help="also write curves.svg")
    p.set_defaults(func=cmd_model_inequality)

    p = sub.add_parser("eval-synthetic", help="null-inequality and improvement-sweep validation")
    p.add_argument("--cohort", default=None, help="base cohort CSV (default: built-in generator)")
    p.add_argument("--specs", default=None)
    p.add_argument("--base-size", type=int, default=60_000)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--strengths", type=int, default=10)
    p.add_argument("--max-strength", type=float, default=0.5)
    p.add_argument("--null-measurements", default=None)
    p.add_argument("--sweep-measurements", default=None)
    _add_det_args(p)
    p.set_defaults(func=cmd_eval_synthetic)

    p = sub.add_parser("pdf-dump", help="density curves with raw and adjusted cutoffs")
    _add_data_args(p, groups_required=False)
    _add_det_args(p)
    p.add_argument("--points", type=int, default=None, help="grid size (default 20 per unit, at least 200)")
    p.set_defaults(func=cmd_pdf_dump)

    p = sub.add_parser("generate", help="write the built-in synthetic cohort and its specs")
    p.add_argument("--size", type=int, default=60_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out = Path(getattr(args, "out", "."))
        out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DegeneracyError as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except DAIndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
