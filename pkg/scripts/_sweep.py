import csv
from pathlib import Path

from satuav import cli


def run(command, key, out: Path, argv):
    status = cli.main([command, "--out", str(out)] + argv)
    stem = command.replace("-", "_")
    with open(out / f"{stem}.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    strategies = list(dict.fromkeys(r["strategy"] for r in rows))
    print(f"{'P_sn':>6} {key:>3} " + " ".join(f"{s:>10}" for s in strategies))
    cells = {}
    for r in rows:
        cells.setdefault((float(r["P_sn"]), int(r[key])), {})[r["strategy"]] = float(r["mean_ee"])
    for (psn, v), ee in sorted(cells.items()):
        print(f"{psn:>6g} {v:>3} " + " ".join(f"{ee[s]:10.4g}" for s in strategies))
    return status
