"""Command line entry point.

Subcommands: simulate, analyze, tags, predict, validate, report.  The
default configuration reproduces the experiment-scale scenario, so
`kerrscan simulate` with no arguments runs the whole chain.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .gate import gate_profile
from .matrixio import load_scan_result, save_matrix
from .timetags import correlation_histogram, count_coincidences, estimate_accidentals, load_timetags


def _add_common(parser: argparse.ArgumentParser, scale_sweep: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="override the RNG seed")
    parser.add_argument("--out", type=Path, help=f"output directory (default ${pl.OUTPUT_DIR_ENV} or ./kerrscan-out)")
    parser.add_argument("--threads", type=int, help="worker threads (performance only; results are identical)")
    if scale_sweep:
        parser.add_argument(
            "--scale-sweep", metavar="LO:HI:STEPS",
            help="background-scale sweep for the systematic estimate, e.g. 0.9:1.1:5",
        )


def _load_config(args) -> pl.ExperimentConfig:
    config = pl.load_config(args.config) if args.config else pl.default_config()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed, scan=replace(config.scan, seed=args.seed))
    if getattr(args, "threads", None) is not None:
        config = replace(config, threads=args.threads)
    sweep = getattr(args, "scale_sweep", None)
    if sweep:
        try:
            lo, hi, steps = sweep.split(":")
            options = replace(
                config.analysis, scale_lo=float(lo), scale_hi=float(hi), scale_steps=int(steps)
            )
        except (ValueError, pl.ConfigError) as exc:
            raise pl.ConfigError(f"--scale-sweep expects LO:HI:STEPS: {exc}") from None
        config = replace(config, analysis=options)
    return config


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    bundle = pl.run_pipeline(config, args.out)
    print(f"wrote {bundle.out_dir}")
    print((bundle.out_dir / "report.txt").read_text(), end="")
    return 0


def _cmd_analyze(args) -> int:
    config = _load_config(args)
    result = load_scan_result(args.scan)
    fit_time, fit_freq, sens, wit, sub = pl.analyze_scan(config, result)
    out = pl.resolve_out_dir(args.out, config)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(out / "scan_subtracted.mat", sub, {"axis_unit": "fs"})
    g_s = __import__("kerrscan.gate", fromlist=["gate_profile"]).gate_profile(config.gate_signal)
    g_i = __import__("kerrscan.gate", fromlist=["gate_profile"]).gate_profile(config.gate_idler)
    truth_delta_t = pl._rotated_diff_std(result.expected_truth, result.delays_s, result.delays_i)
    entries = pl._witness_report_entries(config, wit, fit_time, sens, truth_delta_t, g_s, g_i, result)
    pl.emit_report_kv(entries, out / "report.kv")
    (out / "report.txt").write_text(pl._report_text(entries))
    print((out / "report.txt").read_text(), end="")
    return 0


def _cmd_tags(args) -> int:
    a = load_timetags(args.stream_a)
    b = load_timetags(args.stream_b)
    if args.tags_command == "count":
        n = count_coincidences(a, b, args.window, args.offset, args.mode)
        print(f"coincidences {n}")
    elif args.tags_command == "accidentals":
        n = estimate_accidentals(a, b, args.window, args.rep_period, args.mode)
        print(f"accidentals {n}")
    else:
        centers, counts = correlation_histogram(a, b, args.range, args.bin)
        print("# delay_ps count")
        for c, n in zip(centers, counts):
            print(f"{c} {n}")
    return 0


def _cmd_predict(args) -> int:
    config = _load_config(args)
    print(pl.predict_report(config), end="")
    return 0


def _cmd_validate(args) -> int:
    if not args.config:
        print("validate requires --config PATH", file=sys.stderr)
        return 2
    pl.load_config(args.config)
    print(f"{args.config}: OK")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.bundle) / "report.kv"
    entries = pl.parse_report_kv(path)
    for key, (value, unit) in entries.items():
        suffix = f" {unit}" if unit != "-" else ""
        print(f"{key} = {value:.6g}{suffix}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerrscan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the full simulate/analyze/report chain")
    _add_common(p, scale_sweep=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="analyze a previously saved scan bundle")
    p.add_argument("--scan", type=Path, required=True, help="scan bundle directory")
    _add_common(p, scale_sweep=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("tags", help="coincidence tools for binary tag files")
    tsub = p.add_subparsers(dest="tags_command", required=True)
    for name in ("count", "accidentals", "histogram"):
        tp = tsub.add_parser(name)
        tp.add_argument("stream_a", type=Path)
        tp.add_argument("stream_b", type=Path)
        tp.add_argument("--mode", choices=("gated", "paired"), default="gated")
        if name == "count":
            tp.add_argument("--window", type=int, default=3000, help="full window, ps")
            tp.add_argument("--offset", type=int, default=0)
        elif name == "accidentals":
            tp.add_argument("--window", type=int, default=3000)
            tp.add_argument("--rep-period", type=int, default=12500, dest="rep_period")
        else:
            tp.add_argument("--range", type=int, default=50000)
            tp.add_argument("--bin", type=int, default=500)
    p.set_defaults(func=_cmd_tags)

    p = sub.add_parser("predict", help="quadrature width estimate under both conventions")
    _add_common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("validate", help="check a configuration file")
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("report", help="print the key/value report of a finished run")
    p.add_argument("--bundle", type=Path, required=True, help="output directory of a run")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (pl.ConfigError, pl.PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
