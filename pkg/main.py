"""
Chronosurf - command line entry point
=====================================

Usage:
    python main.py render --scene S --manifest M --out DIR
    python main.py fit --manifest M --init S --out S2
    python main.py prune --grids G --S 10 --out channels.json
    python main.py schedule --frames 64 --chunks 4 --levels 3 --tokens-per-frame 1296
    python main.py metrics --pred DIR --target DIR
    python main.py bench --scene S --manifest M
"""
import logging
import sys

from cli import cli

logger = logging.getLogger(__name__)


def main() -> None:
    cli(prog_name="chronosurf")


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(1)
