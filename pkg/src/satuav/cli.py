"""Batch experiments: SE CDFs, EE sweeps over UAV and GU counts, MC validation.

Every command writes a CSV table plus a ``.meta.json`` sidecar into ``--out``.
Rows are assembled in seed order and floats are written with ``repr`` so the
same configuration and seed list always reproduce the same bytes, whatever
the worker count (set through ``SATUAV_WORKERS``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np
import yaml
from scipy import stats as sstats

from . import montecarlo
from .allocation import (InfeasibleScenario, epa_allocation, fpa_allocation, random_search_init,
                         satellite_epa)
from .channel import NetworkStatistics, network_statistics
from .moments import PrecodingMoments, assemble_moments
from .parallel import ordered_map
from .performance import PowerAllocation, energy_efficiency
from .sca import sca_solve
from .scenario import PRESETS, Mode, ScenarioConfig, build_geometry, preset, scenario_streams

log = logging.getLogger(__name__)

FPA_EXPONENTS = (-1.0, -0.5, 0.0, 0.5)
DEFAULT_SEEDS = {"desk": 20, "paper": 3}
DEFAULT_L = (4, 8, 12, 16)
DEFAULT_K = (2, 4, 6, 8)
DEFAULT_PSN_CDF = (10.0, 50.0, 100.0)
MOMENT_MODES = {"exact": "exact_gaussian", "paper": "paper_elementwise"}
P_3SIGMA = 2 * sstats.norm.sf(3.0)
VALIDATE_SLACK = 3.0


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # pragma: no cover
        return "unknown"


# --- one scenario drop -------------------------------------------------------

@dataclass(frozen=True)
class Drop:
    config: ScenarioConfig
    seed: int
    stats: NetworkStatistics
    moments: PrecodingMoments


def make_drop(config: ScenarioConfig, seed: int) -> Drop:
    streams = scenario_streams(seed)
    geometry = build_geometry(config, streams["geometry"])
    stats = network_statistics(geometry, config, streams["shadowing"])
    return Drop(config, seed, stats, assemble_moments(stats, config.moment_mode))


def eem_allocation(drop: Drop, config: ScenarioConfig):
    """EE-maximising allocation; returns (allocation, status)."""
    m = drop.moments
    if config.mode == Mode.NTN_ONLY:
        return PowerAllocation(np.zeros((m.L, m.K)), satellite_epa(config, m)), "ok"
    try:
        init = random_search_init(config, m, scenario_streams(drop.seed)["init"])
    except InfeasibleScenario:
        return epa_allocation(config, m), "infeasible"
    res = sca_solve(config, m, init)
    return res.allocation, "ok" if res.converged else res.reason


def strategy_ee(drop: Drop, config: ScenarioConfig) -> dict[str, float]:
    m = drop.moments
    alloc, _ = eem_allocation(drop, config)
    out = {"EEM": energy_efficiency(alloc, m, config).ee}
    for nu in FPA_EXPONENTS:
        out[f"FPA({nu:g})"] = energy_efficiency(fpa_allocation(config, m, nu), m, config).ee
    out["EPA"] = energy_efficiency(epa_allocation(config, m), m, config).ee
    return out


# --- commands ----------------------------------------------------------------

def _cdf_seed(config, modes, psn_list, mc_trials, seed):
    drop = make_drop(config, seed)
    rows = []
    for mode in modes:
        for psn in psn_list:
            cfg = config.replace(mode=mode, P_sn_dl=psn)
            alloc, status = eem_allocation(drop, cfg)
            se = energy_efficiency(alloc, drop.moments, cfg).se
            mc = None
            if mc_trials:
                mc_seed = int(scenario_streams(seed)["montecarlo"].integers(2**63))
                mc = montecarlo.estimate_se(cfg, drop.stats, alloc, mc_trials, mc_seed, workers=1)
            for k in range(config.K):
                rows.append(dict(config_hash=cfg.digest(), seed=seed, mode=mode.value, P_sn=psn, gu=k,
                                 se=se[k], se_mc="" if mc is None else mc.se[k],
                                 se_mc_stderr="" if mc is None else mc.stderr[k], status=status))
    return rows


def run_cdf(config: ScenarioConfig, seeds, modes=None, psn_list=DEFAULT_PSN_CDF, mc_trials: int = 0):
    modes = list(Mode) if modes is None else list(modes)
    parts = ordered_map(partial(_cdf_seed, config, modes, list(psn_list), mc_trials), sorted(seeds))
    return [row for part in parts for row in part]


def _sweep_seed(config, seed):
    return seed, config.digest(), strategy_ee(make_drop(config, seed), config)


def _seed_label(seeds) -> str:
    seeds = sorted(seeds)
    if seeds == list(range(seeds[0], seeds[-1] + 1)):
        return f"{seeds[0]}-{seeds[-1]}"
    return ";".join(map(str, seeds))


def _run_sweep(config: ScenarioConfig, key: str, values, seeds, psn_list):
    jobs = [config.replace(**{key: v}, P_sn_dl=psn) for psn in psn_list for v in values]
    tasks = [(cfg, s) for cfg in jobs for s in sorted(seeds)]
    results = ordered_map(_sweep_task, tasks)
    runs, summary = [], []
    for cfg in jobs:
        mine = [(s, h, ee) for (c, _), (s, h, ee) in zip(tasks, results) if c is cfg]
        for s, h, ee in mine:
            for strat, v in ee.items():
                runs.append(dict(config_hash=h, seed=s, **{key: getattr(cfg, key)}, P_sn=cfg.P_sn_dl,
                                 strategy=strat, ee=v))
        for strat in mine[0][2]:
            vals = np.array([ee[strat] for _, _, ee in mine])
            summary.append(dict(config_hash=cfg.digest(), seed=_seed_label(seeds),
                                **{key: getattr(cfg, key)}, P_sn=cfg.P_sn_dl, strategy=strat,
                                mean_ee=float(vals.mean()),
                                std_ee=float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                                n=int(vals.size)))
    return summary, runs


def _sweep_task(task):
    cfg, seed = task
    return _sweep_seed(cfg, seed)


def run_ee_vs_uavs(config: ScenarioConfig, L_list, seeds, psn_list=None):
    return _run_sweep(config, "L", L_list, seeds, psn_list or [config.P_sn_dl])


def run_ee_vs_gus(config: ScenarioConfig, K_list, seeds, psn_list=None):
    if isinstance(config.se_min, tuple):
        raise ValueError("a per-GU se_min cannot be swept over K")
    return _run_sweep(config, "K", K_list, seeds, psn_list or [config.P_sn_dl])


def validate_statistics(config: ScenarioConfig, stats: NetworkStatistics, moments: PrecodingMoments,
                        alloc: PowerAllocation, trials: int, seed: int, workers: int | None = None):
    """Rows comparing closed-form values with sampling estimates, entry by entry."""
    alloc = alloc.for_mode(config.mode)
    rows = []

    def add(family, index, cf, mc, se):
        diff = abs(cf - mc)
        if se > 0:
            z = diff / se
        else:
            z = 0.0 if diff <= 1e-9 * (1 + abs(cf)) else math.inf
        rows.append(dict(family=family, index=index, closed_form=float(cf), monte_carlo=float(mc),
                         stderr=float(se), z=float(z)))

    cf_se = energy_efficiency(alloc, moments, config).se
    mc = montecarlo.estimate_se(config, stats, alloc, trials, seed, workers=workers)
    for k in range(moments.K):
        add("se", f"{k}", cf_se[k], mc.se[k], mc.stderr[k])

    est = montecarlo.estimate_moments(stats, trials, seed + 1, eta_sn=alloc.eta_sn, workers=workers)
    e, sd = est.moments, est.stderr
    K, L = moments.K, moments.L
    for k in range(K):
        for i in range(K):
            for l in range(L):
                add("b", f"{k}.{i}.{l}.re", moments.b[k, i, l].real, e.b[k, i, l].real, sd["b_re"][k, i, l])
                add("b", f"{k}.{i}.{l}.im", moments.b[k, i, l].imag, e.b[k, i, l].imag, sd["b_im"][k, i, l])
            fam = "Csq_var" if i == k else "Csq_cross"
            for l in range(L):
                for j in range(L):
                    add(fam, f"{k}.{i}.{l}.{j}.re", moments.Csq[k, i, l, j].real,
                        e.Csq[k, i, l, j].real, sd["Csq_re"][k, i, l, j])
                    add(fam, f"{k}.{i}.{l}.{j}.im", moments.Csq[k, i, l, j].imag,
                        e.Csq[k, i, l, j].imag, sd["Csq_im"][k, i, l, j])
            add("sat_cross", f"{k}.{i}", moments.sat_cross[k, i], e.sat_cross[k, i], sd["sat_cross"][k, i])
        add("sat_signal", f"{k}", moments.sat_signal[k], e.sat_signal[k], sd["sat_signal"][k])
        add("B", f"{k}", moments.B(alloc.eta_sn)[k], est.B[k], sd["B"][k])
    return rows


def exceedance_limit(n: int) -> int:
    """Largest tolerated count of >3 SE entries among ``n`` (with slack)."""
    return int(sstats.binom.ppf(0.999, n, min(1.0, VALIDATE_SLACK * P_3SIGMA)))


def summarize_validation(rows):
    fams = sorted({r["family"] for r in rows})
    out = []
    for fam in fams:
        z = np.array([r["z"] for r in rows if r["family"] == fam])
        n_exc = int(np.sum(z > 3))
        limit = exceedance_limit(z.size)
        out.append(dict(family=fam, entries=int(z.size), above_3se=n_exc, limit=limit,
                        max_z=float(z.max()), passed=n_exc <= limit))
    return out


def _validate_seed(config, trials, seed):
    drop = make_drop(config, seed)
    alloc = epa_allocation(config, drop.moments)
    mc_seed = int(scenario_streams(seed)["montecarlo"].integers(2**62))
    rows = validate_statistics(config, drop.stats, drop.moments, alloc, trials, mc_seed, workers=1)
    return [dict(config_hash=config.digest(), seed=seed, **r) for r in rows]


def run_validate(config: ScenarioConfig, seeds, trials: int | None = None, psn_list=None):
    trials = trials or config.mc_trials
    rows = []
    for psn in psn_list or [config.P_sn_dl]:
        cfg = config.replace(P_sn_dl=psn)
        for part in ordered_map(partial(_validate_seed, cfg, trials), sorted(seeds)):
            rows.extend({"config_hash": r["config_hash"], "seed": r["seed"], "P_sn": psn, **r} for r in part)
    return rows, summarize_validation(rows)


# --- output ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_meta(path: Path, command: str, config: ScenarioConfig, seeds, extra: dict) -> None:
    meta = dict(command=command, tool="satuav", version=_version(), config_hash=config.digest(),
                config=config.to_dict(), seeds=sorted(seeds), **extra)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- argument handling -------------------------------------------------------

def load_config(path: str | None, preset_name: str | None) -> ScenarioConfig:
    base = preset(preset_name or "desk")
    if path is None:
        return base
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a flat key-value mapping")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ValueError(f"{path}: nested value for {key!r}; the config is flat")
    return ScenarioConfig.from_mapping(data, base)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satuav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (("cdf", "per-GU SE samples per mode and satellite power"),
                      ("ee-vs-uavs", "EE of EEM/FPA/EPA against the number of UAVs"),
                      ("ee-vs-gus", "EE of EEM/FPA/EPA against the number of GUs"),
                      ("validate", "closed-form vs Monte Carlo comparison")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", help="flat YAML file with ScenarioConfig fields")
        s.add_argument("--preset", choices=sorted(PRESETS), default="desk")
        s.add_argument("--seeds", type=int, help="number of scenario seeds (from rng_seed)")
        s.add_argument("--mode", choices=[m.value for m in Mode])
        s.add_argument("--psn", type=_floats, help="satellite powers in W, comma separated")
        s.add_argument("--out", default="results")
        s.add_argument("--mc-trials", type=int, default=None)
        s.add_argument("--moment-mode", choices=sorted(MOMENT_MODES))
        if name in ("ee-vs-uavs", "ee-vs-gus"):
            s.add_argument("--sweep", type=_ints, help="comma separated L (or K) values")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = load_config(args.config, args.preset)
    if args.moment_mode:
        config = config.replace(moment_mode=MOMENT_MODES[args.moment_mode])
    if args.mode and args.command != "cdf":
        config = config.replace(mode=Mode(args.mode))
    n_seeds = args.seeds if args.seeds is not None else DEFAULT_SEEDS.get(args.preset, 20)
    seeds = [config.rng_seed + i for i in range(n_seeds)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    extra = dict(psn=args.psn, mc_trials=args.mc_trials)
    status = 0

    if args.command == "cdf":
        modes = [Mode(args.mode)] if args.mode else list(Mode)
        rows = run_cdf(config, seeds, modes, args.psn or DEFAULT_PSN_CDF, args.mc_trials or 0)
        write_csv(out / "cdf.csv", rows)
        write_meta(out / "cdf.meta.json", "cdf", config, seeds, extra)
    elif args.command in ("ee-vs-uavs", "ee-vs-gus"):
        key, default, fn = (("L", DEFAULT_L, run_ee_vs_uavs) if args.command == "ee-vs-uavs"
                            else ("K", DEFAULT_K, run_ee_vs_gus))
        values = args.sweep or list(default)
        summary, runs = fn(config, values, seeds, args.psn)
        stem = args.command.replace("-", "_")
        write_csv(out / f"{stem}.csv", summary)
        write_csv(out / f"{stem}_runs.csv", runs)
        write_meta(out / f"{stem}.meta.json", args.command, config, seeds, dict(extra, sweep=values))
    else:
        rows, summary = run_validate(config, seeds, args.mc_trials, args.psn)
        write_csv(out / "validate.csv", rows)
        write_csv(out / "validate_summary.csv",
                  [dict(config_hash=config.digest(), seed=_seed_label(seeds), **s) for s in summary])
        write_meta(out / "validate.meta.json", "validate", config, seeds, extra)
        for s in summary:
            print(f"{s['family']:<11} entries={s['entries']:<6} above_3se={s['above_3se']:<4} "
                  f"limit={s['limit']:<4} max_z={s['max_z']:.2f} {'ok' if s['passed'] else 'FAIL'}")
        status = 0 if all(s["passed"] for s in summary) else 1
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
