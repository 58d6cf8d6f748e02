"""Per-GU SE distribution for each network mode and satellite power.

Extra arguments go to ``satuav cdf`` (e.g. ``--preset paper --seeds 3``).
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from satuav import cli

OUT = Path("results/fig1")


def main(argv):
    status = cli.main(["cdf", "--out", str(OUT)] + argv)
    groups = defaultdict(list)
    with open(OUT / "cdf.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            groups[(float(r["P_sn"]), r["mode"])].append(float(r["se"]))
    print(f"{'P_sn':>6} {'mode':<9} {'p10':>7} {'p50':>7} {'p90':>7}")
    for (psn, mode), se in sorted(groups.items()):
        q = np.percentile(se, [10, 50, 90])
        print(f"{psn:>6g} {mode:<9} {q[0]:7.3f} {q[1]:7.3f} {q[2]:7.3f}")
    return status


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
