"""Command-line front end: ``klab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import RunConfig, load_config
from .diagnostics import GRADCHECK_TOL, gradcheck, jensen_audit
from .errors import CalibrationError, KlabError
from .synthdata import write_csv
from .teacher import Strategy, TemperatureConfig, calibrate_teacher_temperature
from .trainer import compare_strategies, prepare_data, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="klab", description="Regularized K-L self-distillation lab.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=int)
        p.add_argument("--strategy", choices=[s.value for s in Strategy])

    common(sub.add_parser("run", help="train one configuration"), config_required=True)
    common(sub.add_parser("compare", help="inverse-prior vs centering from one seed"), config_required=True)
    common(sub.add_parser("gen-data", help="export the synthetic dataset as CSV"))

    cal = sub.add_parser("calibrate-temp", help="teacher temperature per cluster count")
    cal.add_argument("--k", type=int, action="append", required=True)
    cal.add_argument("--cos-threshold", type=float, default=0.4)
    cal.add_argument("--boundary-prob", type=float, default=0.5)
    cal.add_argument("--out", type=Path)

    gc = sub.add_parser("gradcheck", help="backprop vs central finite differences")
    gc.add_argument("--seed", type=int, default=0)

    ja = sub.add_parser("jensen-audit", help="fuzz the two Jensen inequalities")
    ja.add_argument("--seed", type=int, default=0)
    ja.add_argument("--instances", type=int, default=100_000)
    ja.add_argument("--out", type=Path)
    return parser


def _config(args) -> RunConfig:
    if args.config is None:
        cfg = RunConfig()
    else:
        if not args.config.exists():
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.strategy is not None:
        cfg = cfg.replace(strategy=Strategy(args.strategy))
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    report = run(cfg)
    report.write(args.out)
    last = report.metrics[-1] if report.metrics else None
    print(f"strategy={cfg.strategy.value} seed={cfg.seed} epochs={len(report.metrics)}")
    if last is not None:
        print(f"final effective_clusters={last.effective_clusters:.6f} prior_entropy={last.prior_entropy:.6f} nmi={last.nmi:.6f}")
    print(f"collapse={report.collapse}")
    if report.failed:
        print(f"FAILED: {report.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    cmp = compare_strategies(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    cmp.write_csv(args.out / "compare.csv")
    for name, value in cmp.final_nmi.items():
        print(f"final nmi {name}={value:.6f}")
    if cmp.rows:
        print(f"final agreement inverse_prior_run={cmp.rows[-1][1]:.6f} centering_run={cmp.rows[-1][2]:.6f}")
    if any(r.failed for r in cmp.reports.values()):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        cfg = TemperatureConfig(cos_threshold=args.cos_threshold, boundary_prob=args.boundary_prob)
    except KlabError as exc:
        raise UsageError(str(exc)) from exc
    lines = ["k,tau_teacher"]
    status = EXIT_OK
    for k in args.k:
        try:
            lines.append(f"{k},{calibrate_teacher_temperature(cfg, k):.5f}")
        except CalibrationError as exc:
            print(f"k={k}: {exc}", file=sys.stderr)
            status = EXIT_NUMERIC
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "calibrate.csv").write_text(text)
    return status


def cmd_gradcheck(args) -> int:
    err = gradcheck(seed=args.seed)
    ok = err < GRADCHECK_TOL
    print(f"max rel err = {err:.3e}")
    print(f"max rel err < {GRADCHECK_TOL:g}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_jensen(args) -> int:
    audit = jensen_audit(args.instances, args.seed)
    for key, value in asdict(audit).items():
        print(f"{key}={value}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "jensen_audit.json").write_text(json.dumps(asdict(audit), indent=2) + "\n")
    return EXIT_OK if audit.weight_violations == 0 and audit.sample_violations == 0 else EXIT_NUMERIC


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    data, _ = prepare_data(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(data, args.out / "data.csv")
    print(f"wrote {len(data)} samples of dim {data.samples.shape[1]} to {args.out / 'data.csv'}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "calibrate-temp": cmd_calibrate,
    "gradcheck": cmd_gradcheck,
    "jensen-audit": cmd_jensen,
    "gen-data": cmd_gen_data,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        threads = int(os.environ.get("KLAB_THREADS", "1"))
        with threadpool_limits(limits=max(1, threads)):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print("usage: klab {run,compare,calibrate-temp,gradcheck,jensen-audit,gen-data} [options]", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
