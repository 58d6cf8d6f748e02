"""Mean EE of EEM, FPA and EPA as the number of GUs grows.

Extra arguments go to ``satuav ee-vs-gus``.
"""
import sys
from pathlib import Path

from _sweep import run

if __name__ == "__main__":
    sys.exit(run("ee-vs-gus", "K", Path("results/fig3"), sys.argv[1:]))
