"""Command line entry point: ``firescan <stage> --config cfg.yaml``.

Exit codes: 0 success, 1 input error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .stages import STAGES, StageError, ValidationError

log = logging.getLogger("firescan")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="firescan", description="Panoramic semantic labelling of "
                                 "point clouds and firefighting-asset inventories.")
    ap.add_argument("stage", choices=list(STAGES))
    ap.add_argument("--config", required=True, help="pipeline YAML config")
    ap.add_argument("--workers", type=int, help="parallel frames (overrides config)")
    ap.add_argument("--seed", type=int, help="sampling seed (overrides config)")
    ap.add_argument("--radius", type=float, help="projection radius in metres (overrides config)")
    ap.add_argument("--max-dist", type=float, help="evaluation match distance in metres "
                    "(overrides config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {"workers": args.workers, "seed": args.seed,
                     "radius": args.radius, "max_dist": args.max_dist}
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.__post_init__()
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    try:
        STAGES[args.stage](cfg)
    except ValidationError as exc:
        log.error("%s", exc)
        for problem in exc.problems:
            log.error("  %s", problem)
        return exc.exit_code
    except StageError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
