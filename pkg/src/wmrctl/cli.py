"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 numeric failure mid-run.
"""

from __future__ import annotations

import argparse
import csv
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from wmrctl.config import SWEEPABLE, ConfigError, dump_config, load_config, with_nn_enabled, with_override
from wmrctl.errors import NumericError, ParameterError
from wmrctl.nn_feedforward import save_weights
from wmrctl.sim_engine import (
    LOG_FIELDS,
    METRIC_FIELDS,
    LogRecord,
    SimConfig,
    SimulationAborted,
    compare_runs,
    compute_metrics,
    run_simulation,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

LOG_SCHEMA_VERSION = 1
LOG_UNITS = {
    "t": "s",
    "x_ref": "m", "y_ref": "m", "theta_ref": "rad",
    "x": "m", "y": "m", "theta": "rad",
    "v_ref": "mps", "omega_ref": "radps",
    "v_meas": "mps", "omega_meas": "radps",
    "v": "mps", "omega": "radps",
    "u_fb_l": "V", "u_fb_r": "V",
    "u_ff_l": "V", "u_ff_r": "V",
    "u_l": "V", "u_r": "V",
    "e_x": "m", "e_y": "m", "e_theta": "rad",
    "nn_loss": "V2",
}  # fmt: skip
LOG_HEADER = tuple(f"{name}_{LOG_UNITS[name]}" for name in LOG_FIELDS)


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def write_log(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# wmrctl-log v{LOG_SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for rec in records:
            w.writerow([repr(getattr(rec, name)) for name in LOG_FIELDS])


def read_log(path) -> list[LogRecord]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# wmrctl-log v{LOG_SCHEMA_VERSION}":
            raise ParameterError(f"{path}: unsupported log header {first!r}")
        rows = csv.reader(fh)
        if tuple(next(rows)) != LOG_HEADER:
            raise ParameterError(f"{path}: column header does not match the log schema")
        return [LogRecord(*(float(v) for v in row)) for row in rows]


def format_metrics(m) -> str:
    width = max(len(n) for n in METRIC_FIELDS)
    return "\n".join(f"{name:<{width}}  {getattr(m, name):.6g}" for name in METRIC_FIELDS)


def format_comparison(rows, label_a="pid", label_b="pid_nn") -> str:
    width = max(len(r.name) for r in rows)
    out = [f"{'metric':<{width}}  {label_a:>12}  {label_b:>12}  {'ratio':>8}  winner"]
    for r in rows:
        winner = {"a": label_a, "b": label_b}.get(r.winner, "tie")
        out.append(f"{r.name:<{width}}  {r.a:>12.6g}  {r.b:>12.6g}  {r.ratio:>8.4g}  {winner}")
    return "\n".join(out)


def write_comparison_csv(rows, path, label_a="pid", label_b="pid_nn") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", label_a, label_b, "ratio", "winner"])
        for r in rows:
            w.writerow([r.name, repr(r.a), repr(r.b), repr(r.ratio), {"a": label_a, "b": label_b}.get(r.winner, "tie")])


def _ensure_writable_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryFile(dir=p):
            pass
    except OSError as exc:
        raise CliError(f"output directory {p} is not writable: {exc.strerror or exc}") from exc
    return p


def _load(args) -> SimConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed, nn=replace(cfg.nn, seed=args.seed))
    return cfg


def _simulate(cfg: SimConfig, partial_path=None):
    try:
        return run_simulation(cfg)
    except SimulationAborted as exc:
        if partial_path is not None:
            write_log(exc.records, partial_path)
        raise CliError(f"numeric failure at {exc}", EXIT_NUMERIC) from exc
    except NumericError as exc:
        raise CliError(f"numeric failure: {exc}", EXIT_NUMERIC) from exc


def _compare(cfg: SimConfig, out_dir: Path):
    """PID-only and PID+NN runs of the same scenario, written to ``out_dir``."""
    res_pid = _simulate(with_nn_enabled(cfg, False), out_dir / "pid.csv")
    res_nn = _simulate(with_nn_enabled(cfg, True), out_dir / "pid_nn.csv")
    write_log(res_pid.records, out_dir / "pid.csv")
    write_log(res_nn.records, out_dir / "pid_nn.csv")
    rows = compare_runs(res_pid.records, res_nn.records)
    write_comparison_csv(rows, out_dir / "comparison.csv")
    text = format_comparison(rows)
    (out_dir / "comparison.txt").write_text(text + "\n")
    return rows, text


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.output)
    result = _simulate(cfg, out)
    write_log(result.records, out)
    if args.save_weights and result.net_final is not None:
        save_weights(result.net_final, args.save_weights)
    if not args.quiet:
        if result.records:
            print(format_metrics(compute_metrics(result.records)))
        else:
            print("empty run (duration 0): no metrics")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    out_dir = _ensure_writable_dir(args.output)
    if cfg.n_ticks == 0:
        raise CliError("compare needs a non-empty run (sim.duration > 0)")
    _, text = _compare(cfg, out_dir)
    if not args.quiet:
        print(text)
    return EXIT_OK


def _sweep_point(job):
    cfg, out_dir = job
    try:
        rows, _ = _compare(cfg, Path(out_dir))
    except CliError as exc:
        return None, str(exc), exc.code
    return rows, None, EXIT_OK


def cmd_sweep(args) -> int:
    if args.parameter not in SWEEPABLE:
        raise CliError(f"parameter {args.parameter!r} is not sweepable; choose one of: {', '.join(SWEEPABLE)}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"--values must be comma-separated numbers: {exc}") from exc
    if not values:
        raise CliError("--values is empty")
    cfg = _load(args)
    if cfg.n_ticks == 0:
        raise CliError("sweep needs a non-empty run (sim.duration > 0)")
    out_dir = _ensure_writable_dir(args.output)
    jobs = []
    for i, value in enumerate(values):
        point_cfg = with_override(cfg, args.parameter, value)
        jobs.append((point_cfg, str(_ensure_writable_dir(out_dir / f"{i:03d}_{args.parameter}={value!r}"))))
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    for value, (_, err, code) in zip(values, results):
        if err is not None:
            raise CliError(f"{args.parameter}={value!r}: {err}", code)

    header = [args.parameter]
    for name in METRIC_FIELDS:
        header += [f"{name}_pid", f"{name}_pid_nn", f"{name}_ratio"]
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for value, (rows, _, _) in zip(values, results):
            line = [repr(value)]
            for r in rows:
                line += [repr(r.a), repr(r.b), repr(r.ratio)]
            w.writerow(line)
    if not args.quiet:
        key = "vel_rms_v_final"
        for value, (rows, _, _) in zip(values, results):
            r = next(r for r in rows if r.name == key)
            print(f"{args.parameter}={value:g}: {key} pid={r.a:.4g} pid_nn={r.b:.4g} ratio={r.ratio:.4g}")
    return EXIT_OK


def cmd_echo_config(args) -> int:
    text = dump_config(_load(args))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wmrctl", description="Mobile robot PID / PID+NN tracking simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, output_help, output_required=True):
        p.add_argument("config", help="experiment file")
        p.add_argument("--output", "-o", required=output_required, help=output_help)
        p.add_argument("--seed", type=int, help="override sim.seed and nn.seed")
        p.add_argument("--quiet", "-q", action="store_true")

    p = sub.add_parser("run", help="run one simulation and write its CSV log")
    common(p, "CSV log path")
    p.add_argument("--save-weights", help="write the final network weights here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="PID-only vs PID+NN on the same scenario")
    common(p, "output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="compare across values of one config field")
    common(p, "output directory")
    p.add_argument("--parameter", required=True, help="section.key, e.g. uncertainty.mass_factor")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("echo-config", help="print the fully resolved experiment file")
    common(p, "write here instead of stdout", output_required=False)
    p.set_defaults(func=cmd_echo_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"wmrctl: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        where = f" (line {exc.lineno})" if exc.lineno else ""
        print(f"wmrctl: config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"wmrctl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"wmrctl: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
