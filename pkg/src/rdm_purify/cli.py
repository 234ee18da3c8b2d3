"""``rdm-purify`` command line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (
    EXPERIMENTS, ConfigError, load_config, resolve_threads, run_experiment, write_purified_rdm,
)
from .sdp import SDPStructureError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdm-purify",
                     description="Correlated purification experiments on noisy 2-RDMs.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (default: config 'out' or cwd)")
    parser.add_argument("--seeds", type=int, help="override the number of noise seeds")
    parser.add_argument("--threads", type=int,
                        help="worker threads over seeds (fallback: RDM_PURIFY_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(
                f"experiment: config is for {cfg.experiment!r}, command asked for {args.experiment!r}"
            )
        if args.seeds is not None:
            if args.seeds < 1:
                raise ConfigError("--seeds must be >= 1")
            cfg.seeds = args.seeds
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        threads = resolve_threads(args.threads, cfg.threads)
        if args.out is not None:
            out_dir = Path(args.out)
        elif cfg.out is not None:
            out_dir = Path(args.config).parent / cfg.out
        else:
            out_dir = Path.cwd()
        output = run_experiment(cfg, threads)
    except ConfigError as exc:
        print(f"rdm-purify: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SDPStructureError) as exc:
        print(f"rdm-purify: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    csv_path, json_path = output.write(out_dir)
    write_purified_rdm(output, out_dir)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
