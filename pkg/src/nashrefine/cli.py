"""``nashrefine`` command line.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
failures while an experiment is running.
"""

from __future__ import annotations

import argparse
import logging
import sys

from nashrefine.errors import ConfigError, DimensionError, GameTooLargeError
from nashrefine.experiments import build_spec, load_spec, run
from nashrefine.games import load_game
from nashrefine.nfg import NormalFormGame

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SUBCOMMANDS = {
    "solve": "exact iterative refinement on a matrix game or a converted extensive game",
    "train": "sampled NashPG training with policy checkpoints",
    "anneal": "fixed uniform magnet with linearly annealed alpha",
    "sweep": "NashPG over several alphas and games; writes a summary table",
    "tournament": "Swiss Elo tournament between saved checkpoints",
    "evaluate": "exact exploitability of saved checkpoints",
}

_FLAG_KEYS = ("game", "alpha", "eta", "inner", "outer", "batch", "seeds", "out", "alphas",
              "alpha_final", "eta_final", "rounds", "games_per_match", "workers", "inner_tol")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--game", help="kuhn, leduc, matching_pennies, rps or matrix:<path>")
    p.add_argument("--alpha", help="regularization strength (default 0.2)")
    p.add_argument("--eta", help="step size (default depends on the experiment)")
    p.add_argument("--inner", help="inner iterations K (default 1000)")
    p.add_argument("--outer", help="outer iterations T (default 50)")
    p.add_argument("--inner-tol", dest="inner_tol", help="inner stopping tolerance for exact solves")
    p.add_argument("--batch", help="trajectories per update (default 512)")
    p.add_argument("--seeds", help="comma-separated seeds (default 0,1,2,3)")
    p.add_argument("--alphas", help="comma-separated alphas for sweep")
    p.add_argument("--alpha-final", dest="alpha_final", help="final alpha of the anneal schedule")
    p.add_argument("--eta-final", dest="eta_final", help="final eta of the anneal schedule")
    p.add_argument("--rounds", help="tournament rounds")
    p.add_argument("--games-per-match", dest="games_per_match", help="games per tournament match")
    p.add_argument("--workers", help="processes used to run seeds in parallel")
    p.add_argument("--checkpoints", nargs="+", help="checkpoint files, directories or globs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None,
                   help="write CSV files only")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashrefine", description="Regularized equilibrium refinement experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        _add_common(sub.add_parser(name, help=help_text, description=help_text))
    return parser


def _kind(command: str, game_name: str) -> str:
    if command == "solve":
        return "solve_nfg" if isinstance(load_game(game_name), NormalFormGame) else "solve_efg_exact"
    return {"train": "nashpg", "anneal": "anneal", "sweep": "alpha_sweep"}.get(command, command)


def _overrides(args: argparse.Namespace) -> dict:
    values: dict = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    for key in _FLAG_KEYS:
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    if args.checkpoints:
        values["checkpoints"] = ",".join(args.checkpoints)
    if args.plots is not None:
        values["plots"] = args.plots
    return values


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = _overrides(args)
        base = load_spec(args.config, overrides)
        spec = build_spec(overrides={**base.to_dict(), "kind": _kind(args.command, base.game.split(",")[0])})
    except (ValueError, OSError) as exc:  # config, parse and size errors all derive from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run(spec)
    except (ConfigError, DimensionError, GameTooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as runtime failure
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _print_summary(spec, summary)
    return EXIT_OK


def _print_summary(spec, summary: dict) -> None:
    if spec.kind == "alpha_sweep":
        games = spec.games
        print("alpha," + ",".join(games))
        for row in summary["table"]:
            print(f"{row['alpha']}," + ",".join(row[g] for g in games))
    elif spec.kind == "tournament":
        for r in summary["standings"]:
            print(f"{r['id']},{r['mean_rating']:.1f},{r['sd_rating']:.1f}")
    elif spec.kind == "evaluate":
        for r in summary["evaluation"]:
            print(f"{r['id']},{r['exploitability']:.6g}")
    else:
        for seed, info in summary.items():
            print(f"seed {seed}: final exploitability {info['final_exploitability']:.6g}")
    print(f"outputs in {spec.out}")


if __name__ == "__main__":
    sys.exit(main())
