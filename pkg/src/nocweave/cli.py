"""Command-line front end: one subcommand per pipeline stage, plus ``all``.

Exit status: 0 on success, 2 when no routing exists under the requested
constraints, 1 on any other error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, InfeasibleError, NocweaveError, StageError
from .pipeline import FILES, STAGES, PipelineConfig, run_pipeline, run_stage

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file (defaults to <out>/config.json if present)")
    p.add_argument("--out", type=Path, required=True, help="artifact directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--phi", type=int)
    p.add_argument("--objective", choices=("mincost", "mincong"))
    p.add_argument("--hop-limit", dest="hop_limit", type=int)
    p.add_argument("--L", dest="L", type=int)
    p.add_argument("--alpha", help="bits per slot, a rational or 'inf'")
    p.add_argument("--topology", help="e.g. mesh:4x4, clos3:2,4,4, benes:16, kary:2,4, random:16")
    p.add_argument("--traffic", choices=("random", "tcg"))
    p.add_argument("--tcg", help="task graph JSON file")
    p.add_argument("--horizon", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nocweave", description="TDM network-on-chip design toolchain")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        _add_common(sub.add_parser(name, help="run every stage" if name == "all" else f"run the {name} stage"))
    return parser


def _config(args) -> PipelineConfig:
    path = args.config
    if path is None and (args.out / FILES["config"]).is_file():
        path = args.out / FILES["config"]
    overrides = {k: getattr(args, k) for k in
                 ("seed", "phi", "objective", "hop_limit", "L", "alpha", "topology", "traffic", "tcg", "horizon")}
    return PipelineConfig.load(path, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "all":
            run_pipeline(cfg, args.out)
        else:
            args.out.mkdir(parents=True, exist_ok=True)
            if args.command == "gen" or not (args.out / FILES["config"]).is_file():
                (args.out / FILES["config"]).write_text(cfg.dumps() + "\n")
            run_stage(args.command, cfg, args.out)
    except StageError as exc:
        print(f"nocweave: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if isinstance(exc.cause, InfeasibleError) else EXIT_ERROR
    except ConfigError as exc:
        print(f"nocweave: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except InfeasibleError as exc:
        print(f"nocweave: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NocweaveError as exc:
        print(f"nocweave: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
