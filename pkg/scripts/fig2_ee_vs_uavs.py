"""Mean EE of EEM, FPA and EPA as the number of UAVs grows.

Extra arguments go to ``satuav ee-vs-uavs`` (e.g. ``--sweep 4,8 --seeds 5``).
"""
import sys
from pathlib import Path

from _sweep import run

if __name__ == "__main__":
    sys.exit(run("ee-vs-uavs", "L", Path("results/fig2"), sys.argv[1:]))
