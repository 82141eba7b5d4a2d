"""Command line entry point.

    learnduality run CONFIG.json [--out DIR]
    learnduality suite CONFIG_DIR [--out DIR]
    learnduality verify-appendix [--x 10,20,50]
    learnduality report OUT_DIR
    learnduality init-configs DIR [--seed N]

Exit codes: 0 success, 1 a check or suite row failed, 2 configuration
error, 3 divergence or numeric failure, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .compositions import CATALOGUE
from .errors import ConfigError, DivergenceError, DualityError, NumericError, OutOfRegimeError
from .special import appendix_rows

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DIVERGED, EXIT_FIT = 0, 1, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, OutOfRegimeError)):
        return EXIT_CONFIG
    if isinstance(exc, (DivergenceError, NumericError)):
        return EXIT_DIVERGED
    return EXIT_FIT


def _print_report(rep: dict, out=None):
    out = out or sys.stdout
    eq = rep["equilibrium"]
    print(
        f"{rep['composition']}: w={eq['w']:.4g} b={eq['b']:.4g} steps={eq['steps']} "
        f"converged={eq['converged']} accuracy={rep['accuracy']:.4f}",
        file=out,
    )
    for name in ex.CLASS_NAMES:
        c = rep["classes"][name]
        pred = "n/a" if c["k_predicted"] is None else f"{c['k_predicted']:.3f}"
        print(
            f"  {name:5s} k={c['k_fit']:.3f} +- {c['stderr_k']:.3f} (pred {pred}, "
            f"tol {c['k_tolerance']}) window=[{c['window'][0]:.3g}, {c['window'][1]:.3g}] "
            f"{c['window_decades']:.2f} dec  KS={c['ks_distance']:.3f}  "
            f"{'PASS' if c['passed'] else 'FAIL'}",
            file=out,
        )


def _print_summary(summary: dict, out=None):
    out = out or sys.stdout
    for row in summary["experiments"]:
        if row["status"] != "ok":
            print(f"{row['experiment']:16s} FAILED  {row['error']}", file=out)
            continue
        print(
            f"{row['experiment']:16s} k-={row['k_minus']:.3f} k+={row['k_plus']:.3f} "
            f"pred={row['k_minus_predicted']} {'PASS' if row['passed'] else 'FAIL'}",
            file=out,
        )


def cmd_run(args) -> int:
    cfg = ex.ExperimentConfig.load(args.config)
    out = args.out if args.out is not None else cfg.output_dir
    try:
        run = ex.run_experiment(cfg, out)
    except DualityError as exc:
        Path(out).mkdir(parents=True, exist_ok=True)
        ex.dump_json(Path(out) / "error.json", {"status": "failed",
                                                "error": f"{type(exc).__name__}: {exc}"})
        raise
    _print_report(run.report.to_dict())
    return EXIT_OK


def cmd_suite(args) -> int:
    if not Path(args.config_dir).is_dir():
        raise ConfigError(f"{args.config_dir} is not a directory")
    paths = sorted(Path(args.config_dir).glob("*.json"))
    configs = {p.stem: ex.ExperimentConfig.load(p) for p in paths}
    summary = ex.run_suite(configs, args.out)
    _print_summary(summary)
    ok = all(r["status"] == "ok" for r in summary["experiments"])
    return EXIT_OK if ok else EXIT_FAILED


def cmd_report(args) -> int:
    if not Path(args.out_dir).is_dir():
        raise ConfigError(f"{args.out_dir} is not a directory")
    reports = ex.collect_reports(args.out_dir)
    summary = ex.summarize(reports)
    ex.dump_json(Path(args.out_dir) / "summary.json", summary)
    _print_summary(summary)
    return EXIT_OK


def cmd_verify_appendix(args) -> int:
    try:
        xs = [float(v) for v in args.x.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --x list {args.x!r}") from None
    rows = appendix_rows(xs)
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(f"{'x':>8s} {'exp(x)/x':>14s} {'quadrature':>14s} {'rel_err':>10s} {'e/|x|':>10s}")
        for r in rows:
            print(
                f"{r['x']:8g} {r['approx']:14.6e} {r['quadrature']:14.6e} "
                f"{r['rel_err']:10.4e} {r['bound']:10.4e} {'ok' if r['ok'] else 'FAIL'}"
            )
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_FAILED


def cmd_init_configs(args) -> int:
    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    for comp_id in sorted(CATALOGUE):
        data = {"composition": comp_id, "seed": args.seed, "output_dir": f"out/{comp_id}"}
        data.update(ex.REGISTRY.get(comp_id, {}))
        ex.dump_json(out / f"{comp_id}.json", data)
        print(out / f"{comp_id}.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="learnduality",
        description="Toy-model experiments on fluctuation statistics of SGD jumps.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run every *.json config in a directory")
    s.add_argument("config_dir")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_suite)

    a = sub.add_parser("verify-appendix", help="check exp(x)/x against quadrature")
    a.add_argument(
        "--x", default="10,20,50",
        help="comma-separated x values; write --x=-10,-20 for negative ones",
    )
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_verify_appendix)

    rep = sub.add_parser("report", help="rebuild summary.json from an output directory")
    rep.add_argument("out_dir")
    rep.set_defaults(func=cmd_report)

    i = sub.add_parser("init-configs", help="write default configs for the catalogue")
    i.add_argument("dir")
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_init_configs)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DualityError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
