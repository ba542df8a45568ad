"""Command-line interface: bbpl {train,eval,gen,sweep}."""

import argparse
import copy
import logging
import sys
from typing import Any, Dict, List, Optional

from src import __version__
from src.core.errors import BBPLError, DivergenceError, ValidationError
from src.harness.experiment import DOMAINS, ExperimentSpec, cmd_eval, cmd_gen, cmd_sweep, cmd_train
from src.utils.helpers import load_config, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit status 1)."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def parse_int_list(raw: str) -> List[int]:
    """'1,2,5' -> [1, 2, 5]."""
    try:
        values = [int(p) for p in raw.split(",") if p.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Invalid step list {raw!r}") from e
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"Step list must hold integers >= 0, got {raw!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default="configs/config.yaml",
                        help="Path to configuration file")
    common.add_argument("--domain", choices=DOMAINS, help="Override experiment.domain")
    common.add_argument("--seed", type=int, help="Master seed (unsigned 64-bit)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--workers", type=int, help="Parallel workers; results do not depend on it")
    common.add_argument("--log-level", help="Logging level (overrides logging.level)")

    parser = _Parser(prog="bbpl", description="Black-box policy search experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", parents=[common], help="Learn prior hyperparameters")
    train.add_argument("--steps", type=int, help="Override train.steps")
    train.add_argument("--samples", type=int, help="Override train.samples_per_step")
    train.add_argument("--progress", action="store_true", help="Show a progress bar")

    evaluate = commands.add_parser("eval", parents=[common], help="Evaluate a trained store")
    evaluate.add_argument("--store", help="Hyperstore file (<out>/hyperstore.txt by default)")
    evaluate.add_argument("--episodes", type=int, help="Override experiment.episodes")

    commands.add_parser("gen", parents=[common], help="Generate a CTP instance or RockSample field")

    sweep = commands.add_parser("sweep", parents=[common], help="Convergence sweep over steps")
    sweep.add_argument("--steps", type=parse_int_list, help="Comma-separated step counts")
    sweep.add_argument("--restarts", type=int, help="Independent restarts per step count")
    sweep.add_argument("--samples", type=int, help="Override train.samples_per_step")
    return parser


def apply_overrides(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    out = copy.deepcopy(config)
    train = dict(out.get("train") or {})
    if args.command == "train" and args.steps is not None:
        train["steps"] = args.steps
    if getattr(args, "samples", None) is not None:
        train["samples_per_step"] = args.samples
    out["train"] = train
    if getattr(args, "episodes", None) is not None:
        experiment = dict(out.get("experiment") or {})
        experiment["episodes"] = args.episodes
        out["experiment"] = experiment
    return out


def run(args: argparse.Namespace) -> None:
    config = load_config(args.config)
    log_config = config.get("logging") or {}
    setup_logging(log_config.get("log_file"), args.log_level or log_config.get("level", "INFO"))

    spec = ExperimentSpec.from_config(
        apply_overrides(config, args),
        domain=args.domain,
        seed=args.seed,
        out=args.out,
        workers=args.workers,
    )
    if args.command == "train":
        paths = cmd_train(spec, progress=args.progress)
    elif args.command == "eval":
        paths = cmd_eval(spec, args.store)
    elif args.command == "gen":
        paths = {"instance": cmd_gen(spec)}
    else:
        paths = cmd_sweep(spec, args.steps, args.restarts)
    for path in paths.values():
        logger.info(f"Wrote {path}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point.

    Returns:
        0 on success, 1 on invalid input or any other failure, 2 on
        numerical divergence
    """
    setup_logging(level=logging.INFO)
    try:
        args = build_parser().parse_args(argv)
        run(args)
    except DivergenceError as e:
        logger.error(f"Diverged: {e}")
        return EXIT_DIVERGED
    except BBPLError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
