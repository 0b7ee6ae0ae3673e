import argparse
import logging
import sys

from price_sim.app.core.links import DomainError
from price_sim.app.core.pricing import ConfigError, exploratory_round_bound
from price_sim.app.tasks.adversary import run_adversary_demo
from price_sim.app.tasks.load_config import load_config
from price_sim.app.tasks.run_experiment import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    run_experiment,
)
from price_sim.app_config.settings import config

logger = logging.getLogger(__name__)


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=(level or config.PRICE_SIM_LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="price-sim",
        description="Contextual posted-price mechanism with reserve prices: simulations and bounds",
    )
    parser.add_argument("--log-level", default=None, help="overrides PRICE_SIM_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment file")
    run.add_argument("--config", required=True, help="path to the experiment file")
    run.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    run.add_argument("--trace", action="store_true", help="also write per-round traces")

    bound = commands.add_parser("bound", help="print the exploratory-round bound")
    bound.add_argument("--n", type=int, required=True)
    bound.add_argument("--R", type=float, required=True)
    bound.add_argument("--S", type=float, required=True)
    bound.add_argument("--eps", type=float, required=True)

    adversary = commands.add_parser("adversary", help="run the adversarial reserve stream")
    adversary.add_argument("--n", type=int, required=True)
    adversary.add_argument("--T", type=int, required=True)
    adversary.add_argument("--seed", type=int, default=0)
    adversary.add_argument("--allow-conservative-cuts", action="store_true")
    return parser


def _run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    return run_experiment(cfg, out_dir=args.out, trace=True if args.trace else None)


def _bound(args: argparse.Namespace) -> int:
    print(f"{exploratory_round_bound(args.n, args.R, args.S, args.eps):.9g}")
    return EXIT_OK


def _adversary(args: argparse.Namespace) -> int:
    result = run_adversary_demo(args.n, args.T, args.allow_conservative_cuts, seed=args.seed)
    print(f"T/2={args.T // 2} cum_regret={result.half_regret:.9g}")
    print(f"T={args.T} cum_regret={result.full_regret:.9g}")
    print(f"growth={result.growth:.9g}")
    return EXIT_OK


COMMANDS = {"run": _run, "bound": _bound, "adversary": _adversary}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
