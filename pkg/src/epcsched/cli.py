"""Command-line front end.

    epcsched run    --config experiment.cfg
    epcsched report --dir artifacts --figure 7
    epcsched scale  --in trace.csv --out jobs.csv [scaling flags]

Exit codes: 0 on success, 2 for configuration errors, 3 for I/O problems
such as a missing trace or artifact directory.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

from ._units import parse_size
from .engine import ConfigError
from .experiment import load_config, run_experiment
from .report import FIGURES, figure_dataset
from .trace import (DEFAULT_SGX_MULTIPLIER, DEFAULT_STD_MULTIPLIER,
                    ScalingConfig, TraceParseError, materialize, parse_trace,
                    slice_and_sample, write_jobs_csv)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out_root = run_experiment(cfg)
    print(f"experiment finished; artifacts under {out_root}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    path = figure_dataset(args.dir, args.figure, args.out)
    print(f"wrote {path}")
    return 0


def _cmd_scale(args: argparse.Namespace) -> int:
    scaling = ScalingConfig(
        slice_start_s=args.slice_start,
        slice_end_s=args.slice_end,
        sampling_stride=args.stride,
        sgx_fraction=args.sgx_fraction,
        std_multiplier=parse_size(args.std_multiplier),
        sgx_multiplier=parse_size(args.sgx_multiplier),
        rng_seed=args.seed,
    )
    records = slice_and_sample(parse_trace(args.trace_in, args.format), scaling)
    jobs = materialize(records, scaling)
    write_jobs_csv(jobs, args.jobs_out)
    print(f"wrote {len(jobs)} jobs to {args.jobs_out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epcsched",
        description="Replay job traces against a cluster model with "
                    "protected-memory accounting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("--config", required=True, help="JSON or key=value config file")
    p_run.set_defaults(func=_cmd_run)

    p_report = sub.add_parser("report", help="emit a plot-ready dataset from run artifacts")
    p_report.add_argument("--dir", required=True, help="experiment artifact directory")
    p_report.add_argument("--figure", required=True, type=int, choices=FIGURES,
                          help="which dataset to emit")
    p_report.add_argument("--out", default=None, help="output path (default: <dir>/fig<N>.dat)")
    p_report.set_defaults(func=_cmd_report)

    p_scale = sub.add_parser("scale", help="slice and scale a raw trace into a jobs CSV")
    p_scale.add_argument("--in", dest="trace_in", required=True, help="input trace")
    p_scale.add_argument("--out", dest="jobs_out", required=True, help="output jobs CSV")
    p_scale.add_argument("--format", choices=("canonical_csv", "borg_tables"),
                         default="canonical_csv")
    p_scale.add_argument("--slice-start", type=float, default=0.0,
                         help="slice window start, seconds")
    p_scale.add_argument("--slice-end", type=float, default=math.inf,
                         help="slice window end, seconds (exclusive)")
    p_scale.add_argument("--stride", type=int, default=1,
                         help="keep every stride-th record of the slice")
    p_scale.add_argument("--sgx-fraction", type=float, default=0.0,
                         help="share of jobs tagged as enclave-backed")
    p_scale.add_argument("--std-multiplier", default=str(DEFAULT_STD_MULTIPLIER),
                         help="standard-node capacity behind the fractions (e.g. 32GiB)")
    p_scale.add_argument("--sgx-multiplier", default=str(DEFAULT_SGX_MULTIPLIER),
                         help="protected-memory capacity behind the fractions (e.g. 93.5MiB)")
    p_scale.add_argument("--seed", type=int, default=0, help="tagging seed")
    p_scale.set_defaults(func=_cmd_scale)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TraceParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
