"""``msoc <experiment> --config <file> [--out <dir>] [--seed <int>] [--eps <list>]``.

``--config`` accepts an INI file with a section per experiment or a
``manifest.json`` from an earlier run, which reruns that exact config.
MSOC_THREADS caps the number of worker threads.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments

log = logging.getLogger("msoc")


def _eps_list(text):
    try:
        vals = tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty epsilon list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msoc", description="Run a multiscale optimal control experiment.")
    p.add_argument("experiment", choices=experiments.EXPERIMENTS)
    p.add_argument("--config", help="INI config or manifest.json; built-in defaults if omitted")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--eps", type=_eps_list, help="comma-separated epsilon list (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = experiments.load_config(args.config, args.experiment)
        else:
            cfg = experiments.default_config(args.experiment)
        changes = {}
        if args.out is not None:
            changes["out_dir"] = args.out
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.eps is not None:
            changes["epsilon_list"] = args.eps
        cfg = cfg.replace(**changes) if changes else cfg
        threads = experiments.threads_from_env()
    except (experiments.ConfigError, OSError, ValueError) as exc:
        print(f"msoc {args.experiment}: config error: {exc}", file=sys.stderr)
        return 2
    log.info("running %s into %s with %d thread(s)", cfg.experiment, cfg.out_dir, threads)
    try:
        result = experiments.run(cfg, threads)
    except Exception as exc:
        print(f"msoc {args.experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for name in result.files:
        print(f"{cfg.out_dir}/{name}")
    if result.errors:
        for err in result.errors:
            print(f"msoc {args.experiment}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
