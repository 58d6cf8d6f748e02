"""Scenario configuration and network geometry.

UAVs hover on a regular grid over a square area, ground users (GUs) are dropped
uniformly at random, and the satellite sits above the area centre.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np


class Mode(str, Enum):
    NTN_TN = "NTN_TN"
    TN_ONLY = "TN_ONLY"
    NTN_ONLY = "NTN_ONLY"


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of one scenario. Powers in W, lengths in m, angles in rad."""

    area_side: float = 4000.0
    L: int = 60
    K: int = 40
    M: int = 4
    N: int = 100
    uav_altitude: float = 50.0
    sat_altitude: float = 550e3
    P_ap_dl: float = 1.0
    P_sn_dl: float = 10.0
    P_dsp: float = 0.1
    P_hov: float = 50.0
    amp_efficiency: float = 0.8
    f_c: float = 6.0  # GHz
    bandwidth: float = 20e6
    noise_figure_gu: float = 1.2
    asd: float = math.radians(10.0)
    asd_sat: float = math.radians(2.0)
    shadow_std_uav: float = 6.0
    shadow_std_sat: float = 4.0
    gain_uav_dbi: float = 10.0
    gain_gu_dbi: float = 10.0
    gain_sat_dbi: float = 30.0
    los_a: float = 5.0
    los_b: float = 0.05
    se_min: float | tuple[float, ...] = 0.2
    fpa_exponent: float = -1.0
    sca_epsilon: float = 1e-3
    sca_max_iters: int = 100
    rs_grid: int = 100
    rs_max_attempts: int = 10_000
    mc_trials: int = 20_000
    rng_seed: int = 0
    mode: Mode = Mode.NTN_TN
    moment_mode: str = "exact_gaussian"

    def __post_init__(self) -> None:
        if isinstance(self.mode, str) and not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))
        if isinstance(self.se_min, list):
            object.__setattr__(self, "se_min", tuple(self.se_min))
        for name in ("L", "K", "M", "N"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("P_ap_dl", "P_sn_dl", "P_dsp", "P_hov"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.amp_efficiency <= 1:
            raise ValueError("amp_efficiency must lie in (0, 1]")
        if self.sca_epsilon <= 0:
            raise ValueError("sca_epsilon must be positive")
        if self.rs_grid < 2:
            raise ValueError("rs_grid must be >= 2")
        if self.area_side <= 0 or self.uav_altitude <= 0 or self.sat_altitude <= 0:
            raise ValueError("area and altitudes must be positive")
        se = self.se_min_vector()
        if se.shape != (self.K,) or np.any(se < 0):
            raise ValueError("se_min must be nonnegative, scalar or one value per GU")
        if self.moment_mode not in ("exact_gaussian", "paper_elementwise"):
            raise ValueError(f"unknown moment_mode {self.moment_mode!r}")

    def se_min_vector(self) -> np.ndarray:
        if isinstance(self.se_min, tuple):
            return np.asarray(self.se_min, dtype=float)
        return np.full(self.K, float(self.se_min))

    @property
    def static_power(self) -> float:
        """Circuit plus hovering power of one UAV."""
        return self.M * self.P_dsp + self.P_hov

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["mode"] = self.mode.value
        if isinstance(self.se_min, tuple):
            out["se_min"] = list(self.se_min)
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        return dataclasses.replace(base or cls(), **dict(data))

    def digest(self) -> str:
        """Short stable hash of the configuration (seed excluded)."""
        d = self.to_dict()
        d.pop("rng_seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


PRESETS: dict[str, ScenarioConfig] = {
    "paper": ScenarioConfig(),
    # same UAV density as the full-size network (60 UAVs on 16 km^2)
    "desk": ScenarioConfig(area_side=1265.0, L=6, K=4, M=2, N=8),
}


def preset(name: str, **changes: Any) -> ScenarioConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**changes) if changes else base


def scenario_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent random streams for the stages of one scenario drop."""
    names = ("geometry", "shadowing", "init", "montecarlo")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, children)}


@dataclass(frozen=True)
class Geometry:
    uav_positions: np.ndarray  # (L, 3)
    gu_positions: np.ndarray  # (K, 3)
    sat_position: np.ndarray  # (3,)
    d_lk: np.ndarray  # (L, K)
    d_k: np.ndarray  # (K,)
    theta_lk: np.ndarray  # (L, K) degrees
    theta_k: np.ndarray  # (K,) degrees
    aoa_lk: np.ndarray = field(repr=False)  # (L, K) rad
    aoa_k: np.ndarray = field(repr=False)  # (K,) rad


def grid_shape(L: int) -> tuple[int, int]:
    """Factor L = rows * cols with rows <= cols and cols - rows minimal."""
    rows = int(math.isqrt(L))
    while L % rows:
        rows -= 1
    return rows, L // rows


def uav_grid(L: int, side: float, altitude: float) -> np.ndarray:
    rows, cols = grid_shape(L)
    xs = (np.arange(cols) + 0.5) * side / cols
    ys = (np.arange(rows) + 0.5) * side / rows
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel(), np.full(L, float(altitude))])


def elevation_angle(p_rx, p_tx) -> float:
    """Elevation (deg) of transmitter ``p_tx`` seen from receiver ``p_rx``."""
    p_rx = np.asarray(p_rx, dtype=float)
    p_tx = np.asarray(p_tx, dtype=float)
    d = float(np.linalg.norm(p_tx - p_rx))
    if d == 0.0:
        raise ValueError("coincident points have no elevation angle")
    dh = p_tx[2] - p_rx[2]
    if dh < 0:
        raise ValueError("transmitter must not be below the receiver")
    return math.degrees(math.asin(min(1.0, dh / d)))


def _link_geometry(tx: np.ndarray, rx: np.ndarray):
    # tx: (..., 3), rx: (..., 3), broadcast
    delta = rx - tx
    d = np.linalg.norm(delta, axis=-1)
    if np.any(d <= 0):
        raise ValueError("zero-length link")
    theta = np.degrees(np.arcsin(np.clip((tx[..., 2] - rx[..., 2]) / d, 0.0, 1.0)))
    # nominal AoA: azimuth of the horizontal displacement
    aoa = np.arctan2(delta[..., 1], delta[..., 0])
    return d, theta, aoa


def build_geometry(config: ScenarioConfig, rng: np.random.Generator) -> Geometry:
    side = config.area_side
    uavs = uav_grid(config.L, side, config.uav_altitude)
    xy = rng.uniform(0.0, side, size=(config.K, 2))
    gus = np.column_stack([xy, np.zeros(config.K)])
    sat = np.array([side / 2, side / 2, config.sat_altitude])

    d_lk, theta_lk, aoa_lk = _link_geometry(uavs[:, None, :], gus[None, :, :])
    d_k, theta_k, aoa_k = _link_geometry(sat[None, :], gus)
    return Geometry(uavs, gus, sat, d_lk, d_k, theta_lk, theta_k, aoa_lk, aoa_k)
