"""Closed-form moments and SE against Monte Carlo, entry by entry.

Exits nonzero when any family has more >3 SE entries than chance allows.
Try ``--moment-mode paper`` to see the per-antenna fourth moment get flagged.
"""
import sys

from satuav import cli

if __name__ == "__main__":
    sys.exit(cli.main(["validate", "--out", "results/validate"] + sys.argv[1:]))
