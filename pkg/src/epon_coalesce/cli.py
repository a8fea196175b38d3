"""Command line entry point: ``epon-coalesce run | validate | plotdata``."""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional

from .config import ConfigError, parse_config
from .sweep import PlotDataError, ValidationFailed, emit_plotdata, run_experiment
from .trace import TraceFormatError
from .validate import validate_file

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _join(values: Optional[List[str]]) -> Optional[str]:
    # "--load 0.1 0.2" and "--load 0.1,0.2" mean the same thing
    if values is None:
        return None
    return ",".join(v.strip(",") for v in values)


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(item, "expected --set key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    flags = {
        "traffic.load": _join(args.load),
        "onu.q_w": _join(args.qw),
        "sim.seeds": args.seeds,
        "sim.duration_s": args.duration_s,
    }
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _cmd_run(args: argparse.Namespace) -> int:
    plan = parse_config(args.config, _overrides(args))
    n = len(plan.triples())

    def progress(done, total, rec):
        if not args.quiet:
            s = rec.summary
            print(f"[{done}/{total}] load={s.load:g} q_w={s.q_w} seed={s.seed} "
                  f"power={s.power_pct:.2f}% delay={s.mean_delay * 1e3:.3f} ms", file=sys.stderr)

    if not args.quiet:
        print(f"{n} run(s) of {plan.duration / 1e9:g} s", file=sys.stderr)
    try:
        result = run_experiment(plan, out=args.out, trace_dir=args.trace_dir, check=args.validate,
                                jobs=args.jobs, progress=progress)
    except ValidationFailed as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.out is None:
        sys.stdout.write(result.csv_text)
    if args.plotdata:
        if args.out is None:
            raise ConfigError("--plotdata", "needs --out so the CSV can be read back")
        for path in emit_plotdata(args.out, args.plotdata, plan.base.power).values():
            if not args.quiet:
                print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for path in args.traces:
        try:
            violations = validate_file(path)
        except (OSError, TraceFormatError) as exc:
            print(f"{path}: unreadable trace: {exc}")
            status = EXIT_FAIL
            continue
        if violations:
            status = EXIT_FAIL
            print(f"{path}: {len(violations)} violation(s)")
            for v in violations:
                print(f"  {v}")
        else:
            print(f"{path}: ok")
    return status


def _cmd_plotdata(args: argparse.Namespace) -> int:
    try:
        paths = emit_plotdata(args.csv, args.out_dir)
    except (OSError, PlotDataError) as exc:
        print(f"plotdata: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for path in paths.values():
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epon-coalesce",
                                description="EPON upstream sleep-mode simulator with packet coalescing.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a (load x q_w x seed) sweep and write CSV results")
    r.add_argument("--config", help="flat key = value file")
    r.add_argument("--load", nargs="+", metavar="RHO", help="offered load(s), e.g. 0.1,0.5 or 0.1 0.5")
    r.add_argument("--qw", nargs="+", metavar="N", help="wake threshold(s) in frames")
    r.add_argument("--seeds", metavar="N", help="number of seeds per point")
    r.add_argument("--duration-s", metavar="T", help="simulated seconds per run")
    r.add_argument("--out", help="results CSV (stdout if omitted)")
    r.add_argument("--trace-dir", help="dump one trace file per run here")
    r.add_argument("--validate", action="store_true", help="check every trace; abort on the first violation")
    r.add_argument("--plotdata", metavar="DIR", help="also write plot data files to DIR")
    r.add_argument("--jobs", type=int, default=1, help="worker processes (output is identical)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check trace files")
    v.add_argument("traces", nargs="+")
    v.set_defaults(func=_cmd_validate)

    d = sub.add_parser("plotdata", help="turn a results CSV into plot data files")
    d.add_argument("csv")
    d.add_argument("out_dir")
    d.set_defaults(func=_cmd_plotdata)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
