"""Command line entry point.

    regenstab run --fixture paper --task sweep --range 0.1:2.0:39 --out out/
    regenstab run --config run.json --seed 7
    regenstab validate --config run.json

Exit status: 0 success, 2 invalid configuration, 3 model or assumption
violation, 4 inconclusive verdict under ``--strict``.
"""

import argparse
import logging
import os
import sys

from . import analysis, io
from .analysis import INCONCLUSIVE, analyze, floquet_check
from .config import METHODS, TASKS, build_config, load_document, paper_fixture
from .errors import AssumptionError, ConfigError, ModelViolation
from .process import check_assumptions
from .simulate import MAX_STORED_PATHS, ensemble_mean

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_INCONCLUSIVE = 4


def _common_options():
    p = argparse.ArgumentParser(add_help=False)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="JSON run configuration")
    src.add_argument("--fixture", choices=["paper"], help="built-in example configuration")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--m", type=int, help="moment order / lift degree")
    p.add_argument("--T", type=float, help="maintenance period")
    p.add_argument("--lambda", dest="rate", type=float, help="failure rate")
    p.add_argument("--delta", type=float, help="maintenance jitter fraction")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")
    p.add_argument("--paths", type=int, help="simulated path count")
    p.add_argument("--horizon", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--range", dest="range", metavar="A:B:STEPS")
    p.add_argument("--seed", type=int, metavar="UINT64")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--assert-positive", action="store_true", default=None)
    p.add_argument("--strict", action="store_true", default=None)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="regenstab",
        description="Mean stability of switched linear systems with regenerative switching.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_options()
    sub.add_parser("run", parents=[common], help="execute a task and write outputs")
    sub.add_parser("validate", parents=[common], help="check a configuration without running")
    return parser


def _document(args):
    if args.config:
        doc = load_document(args.config)
    elif args.fixture == "paper":
        doc = paper_fixture()
    else:
        raise ConfigError("", "need --config PATH or --fixture paper")
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    doc = dict(doc)
    model = dict(doc.get("model", {})) if isinstance(doc.get("model"), dict) else doc.get("model")
    for flag, key in (("T", "T"), ("rate", "lambda"), ("delta", "delta")):
        value = getattr(args, flag)
        if value is not None:
            if not isinstance(model, dict):
                raise ConfigError("model", "cannot apply --" + flag + " without a model object")
            model[key] = value
    if model is not None:
        doc["model"] = model
    for key in ("task", "method", "m", "samples", "paths", "horizon", "dt", "range",
                "seed", "workers", "out", "strict", "figures"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if args.assert_positive is not None:
        doc["assert_positive"] = True
    return doc


def _out(cfg, name):
    return os.path.join(cfg.out, name)


def _run_analyze(cfg):
    report, E = analyze(cfg.system, cfg.model, cfg.m, method=cfg.method, samples=cfg.samples,
                        seed=cfg.seed, positivity=cfg.positivity, workers=cfg.workers)
    io.write_matrix_csv(_out(cfg, "expectation.csv"), E.estimate, E.basis)
    if E.stderr is not None:
        io.write_matrix_csv(_out(cfg, "expectation_stderr.csv"), E.stderr, E.basis)
    return report.lines(), report.verdict


def _run_sweep(cfg):
    assumptions = check_assumptions(cfg.system, cfg.model, cfg.m, cfg.positivity)
    if not assumptions["A1"].ok:
        raise AssumptionError(f"A1 not satisfied: {assumptions['A1'].message}")
    lo, hi, steps = cfg.sweep_range
    spec = cfg.model_spec
    family = analysis.maintenance_family(delta=spec.get("delta", 0.1), rate=spec.get("lambda", 1.0))
    if cfg.system.time_kind != "continuous":
        raise ConfigError("system.time_kind", "sweep supports continuous-time maintenance models")
    result = analysis.threshold_sweep(cfg.system, family, cfg.m, lo, hi, steps,
                                      method=cfg.method, samples=cfg.samples, seed=cfg.seed,
                                      workers=cfg.workers)
    io.write_sweep_csv(_out(cfg, "sweep.csv"), result)
    if cfg.figures:
        from .plotting import plot_sweep
        plot_sweep(result, _out(cfg, "sweep.png"), xlabel="T", m=cfg.m)
    lines = [f"m: {cfg.m}", f"method: {cfg.method}", f"range: {lo:.17g}:{hi:.17g}:{steps}",
             f"crossings: {result.crossings}"]
    if result.threshold is None:
        lines.append("T_star: none (rho - 1 does not change sign on the range)")
        verdict = None
    else:
        lines.append(f"T_star: {result.threshold:.17g}")
        lines.append(f"rho_at_T_star: {result.threshold_rho:.17g}")
        verdict = "threshold"
    lines += [f"assumption_{c.name}: {c.status} ({c.message})" for c in assumptions.checks]
    return lines, verdict


def _run_simulate(cfg):
    summary = ensemble_mean(cfg.system, cfg.model, cfg.x0, cfg.horizon, cfg.dt, cfg.m,
                            cfg.paths, cfg.seed, workers=cfg.workers)
    io.write_paths_csv(_out(cfg, "paths.csv"), summary.times, summary.paths[:MAX_STORED_PATHS])
    io.write_ensemble_csv(_out(cfg, "ensemble.csv"), summary)
    if cfg.figures:
        from .plotting import plot_paths
        plot_paths(summary, _out(cfg, "paths.png"), m=cfg.m)
    empirical = "stable" if summary.stable else "unstable"
    lines = [
        f"m: {cfg.m}", f"paths: {summary.n_paths}", f"horizon: {cfg.horizon:.17g}",
        f"dt: {cfg.dt:.17g}", f"seed: {cfg.seed}", f"beta_hat: {summary.beta_hat:.17g}",
        f"diverged_paths: {summary.diverged_paths}", f"empirical_verdict: {empirical}",
    ]
    if summary.all_diverged:
        lines.append("note: all paths diverged (unstable by divergence)")
    return lines, empirical


def _run_floquet(cfg):
    rep = floquet_check(cfg.system, cfg.model.cycle, cfg.m)
    lines = [
        f"m: {cfg.m}",
        f"rho_transition: {rep.rho_transition:.17g}",
        f"rho_lifted: {rep.rho_lifted:.17g}",
        f"relative_error: {rep.relative_error:.17g}",
        f"lift_identity_holds: {str(rep.consistent).lower()}",
        f"classical_verdict: {rep.classical_verdict}",
        f"verdict: {rep.analyzer_verdict}",
        f"verdicts_agree: {str(rep.verdicts_agree).lower()}",
    ]
    return lines, rep.analyzer_verdict


TASK_RUNNERS = {
    "analyze": _run_analyze,
    "sweep": _run_sweep,
    "simulate": _run_simulate,
    "floquet-check": _run_floquet,
}


def cmd_run(args):
    cfg = build_config(_document(args))
    lines, verdict = TASK_RUNNERS[cfg.task](cfg)
    lines = [f"task: {cfg.task}"] + lines
    if cfg.seed is not None and not any(line.startswith("seed:") for line in lines):
        lines.append(f"seed: {cfg.seed}")
    io.write_report(_out(cfg, "report.txt"), lines)
    print("\n".join(lines))
    if cfg.strict and verdict == INCONCLUSIVE:
        print("strict mode: verdict is inconclusive", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_validate(args):
    try:
        cfg = build_config(_document(args))
    except ConfigError as exc:
        print(f"schema: invalid ({exc})")
        return EXIT_CONFIG
    print("schema: ok")
    print(f"task: {cfg.task}")
    print(f"system: n = {cfg.system.n}, modes = {list(cfg.system.labels)}, "
          f"time_kind = {cfg.system.time_kind}")
    print(f"model: {cfg.model!r}")
    report = check_assumptions(cfg.system, cfg.model, cfg.m, cfg.positivity)
    for line in report.lines():
        print(line)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        return cmd_run(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelViolation, AssumptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
