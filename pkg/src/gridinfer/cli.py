"""Command-line entry point: ``gridinfer <command> [--config FILE] [--seed N] [--out DIR] [--workers K]``.

Exit status is 0 on success, 2 for invalid configuration or input data,
and 3 for numerical failures (singular fits, non-convergent power flows).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, GridError, NumericalError
from .harness import COMMANDS, ExperimentConfig, desk_config, load_config, run_synthesize

log = logging.getLogger("gridinfer")

HELP = {
    "synthesize": "write a synthetic observation dataset",
    "fit": "hide the top-m buses, fit the ridge model, report train/test NRMSE",
    "sweep-m": "test NRMSE as a function of the number of hidden buses",
    "sweep-train-size": "test NRMSE as a function of the training-set fraction",
    "flows": "reconstruct line flows from inferred loads via AC power flow",
    "gens": "infer generator outputs from loads and remaining generators",
    "analyze-weights": "fit Gaussian and Lorentzian peaks to the weight histogram",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (default: synthetic desk-scale data)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--workers", type=int, help="threads for sweep cells")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gridinfer", description="Infer hidden bus injections and line flows.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in HELP.items():
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "synthesize":
            sp.add_argument("--binary", action="store_true", help="write the binary cache instead of CSV")
        if name in ("fit", "flows", "gens", "analyze-weights"):
            sp.add_argument("--m-top", type=int, help="number of hidden buses")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out_dir": args.out, "workers": args.workers}
    if args.config:
        config = load_config(args.config, **overrides)
    else:
        config = desk_config(**{k: v for k, v in overrides.items() if v is not None})
    m_top = getattr(args, "m_top", None)
    if m_top is not None:
        try:
            config = replace(config, leave_out=replace(config.leave_out, m_top=m_top))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return config


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        if args.command == "synthesize":
            result = run_synthesize(config, binary=args.binary)
        else:
            result = COMMANDS[args.command](config)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"gridinfer: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, GridError, ValueError, OSError) as exc:
        print(f"gridinfer: error: {exc}", file=sys.stderr)
        return 2
    manifest = json.loads(result.manifest.read_text(encoding="utf-8"))
    for entry in manifest["outputs"]:
        print(result.out_dir / entry["path"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
