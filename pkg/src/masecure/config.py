"""Scenario configuration: YAML loading, defaults, validation, unit conversion.

A scenario file has two sections, ``system`` and ``geometry``; every key is
optional and falls back to :data:`DEFAULTS`.  A top-level ``base`` key names
another scenario file (relative paths resolve against the including file)
whose values are merged underneath.  Powers are given in dBm and converted to
watts once, here.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .exceptions import ConfigError, DomainError
from .geometry import Geometry, wavelength

DEFAULTS = {
    "system": {
        "P0_dBm": 30.0,
        "P_RIS_dBm": 10.0,
        "mu_t": 0.01,
        "mu_r": 0.01,
        "sigma2_bob_dBm": -60.0,
        "sigma2_eve_dBm": -60.0,
        "sigma2_ris_dBm": -70.0,
        "N_a": 50,
        "d": None,                  # MA minimum spacing; None -> grid spacing
        "eps_bob": 0.01,
        "eps_eve": 0.02,
        "eps_bob_direct": None,     # None -> same as the cascaded bound
        "eps_eve_direct": None,
        "csi_error": "relative",    # relative | absolute
        "tol": 1e-3,
        "max_iter": 50,
        "xi1_max": 1e3,
        "xi2": 1.0,
        "ris_mode": "active",       # none | passive | active
        "placement": "alg3",        # alg2 | alg3 | fpa | all
        "n0": 3,
        "outer_passes": 2,
        "ris_noise_form": "frobenius",   # frobenius | trace
        "alpha_mode": "array",           # array | printed
        "eve_mmse_channels": "true",     # true | estimated
        "cs_reference": "recompute",     # recompute | fixed
        "csi_inflation": "bound",        # bound | printed
        "lambda_reg": 0.0,
        "random_draws": 1000,
    },
    "geometry": {
        "frequency_GHz": 15.0,
        "bs_origin": [0.0, 0.0, 2.0],
        "ris_center": [-1.0, 10.0, 1.0],
        "bob_positions": [[0.0, 5.0, 0.0], [0.0, 15.0, 0.0]],
        "eve_position": [2.0, 30.0, 0.0],
        "grid_dims": [20, 30],
        "grid_spacing": None,           # None -> lambda/2
        "ris_dims": [25, 25],
        "ris_element_spacing": None,    # None -> lambda/2
        "bob_antennas": 4,
        "eve_antennas": 4,
        "min_ris_aperture": 0.23,
    },
}

_CHOICES = {
    "csi_error": ("relative", "absolute"),
    "ris_mode": ("none", "passive", "active"),
    "placement": ("alg2", "alg3", "fpa", "all"),
    "ris_noise_form": ("frobenius", "trace"),
    "alpha_mode": ("array", "printed"),
    "eve_mmse_channels": ("true", "estimated"),
    "cs_reference": ("recompute", "fixed"),
    "csi_inflation": ("bound", "printed"),
}


def dbm_to_watt(dbm):
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


def watt_to_dbm(w):
    return 10.0 * np.log10(w) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters in linear units."""

    P0: float
    P_ris: float
    mu_t: float
    mu_r: float
    sigma2_bob: float
    sigma2_eve: float
    sigma2_ris: float
    K: int
    N_a: int
    N_h: int
    N_v: int
    M: int
    N_k: int
    N_e: int
    d: float
    d_min: float
    eps_bob: float = 0.01
    eps_eve: float = 0.02
    eps_bob_direct: float = 0.01
    eps_eve_direct: float = 0.02
    csi_error: str = "relative"
    tol: float = 1e-3
    max_iter: int = 50
    xi1_max: float = 1e3
    xi2: float = 1.0
    ris_mode: str = "active"
    placement: str = "alg3"
    n0: int = 3
    outer_passes: int = 2
    ris_noise_form: str = "frobenius"
    alpha_mode: str = "array"
    eve_mmse_channels: str = "true"
    cs_reference: str = "recompute"
    csi_inflation: str = "bound"
    lambda_reg: float = 0.0
    random_draws: int = 1000

    def __post_init__(self):
        for name in ("P0", "P_ris", "mu_t", "mu_r", "sigma2_bob", "sigma2_eve", "sigma2_ris",
                     "eps_bob", "eps_eve", "eps_bob_direct", "eps_eve_direct", "lambda_reg"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be >= 0")
        if min(self.sigma2_bob, self.sigma2_eve) <= 0:
            raise ConfigError("sigma2", "receiver noise powers must be > 0")
        if not 0 < self.N_a <= self.N:
            raise ConfigError("N_a", f"must satisfy 0 < N_a <= N={self.N}")
        if self.N_a < self.K + 1:
            raise ConfigError("N_a", f"needs at least K+1={self.K + 1} antennas")
        if self.d < self.d_min * (1 - 1e-9):
            raise ConfigError("d", "MA spacing must be >= grid spacing")
        if self.max_iter < 1 or self.outer_passes < 1:
            raise ConfigError("max_iter", "iteration counts must be >= 1")
        if not self.tol >= 0:
            raise ConfigError("tol", "must be >= 0")
        if not 0 <= self.xi2:
            raise ConfigError("xi2", "must be >= 0")
        if not self.xi1_max > 0:
            raise ConfigError("xi1_max", "must be > 0")
        if not 1 <= self.n0 <= self.N:
            raise ConfigError("n0", "must satisfy 1 <= n0 <= N")
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {allowed}")

    @property
    def N(self):
        return self.N_h * self.N_v

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(where, "unknown field")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(where, "expected a mapping")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _read_tree(path, seen=()):
    path = Path(path)
    if path in seen:
        raise ConfigError("base", f"include cycle at {path}")
    if not path.exists():
        raise ConfigError("<file>", f"{path} does not exist")
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    base = raw.pop("base", None)
    tree = DEFAULTS
    if base is not None:
        tree = _read_tree((path.parent / base).resolve(), seen + (path,))
    return _merge(tree, raw)


def build_config(tree):
    """Turn a merged key tree into ``(SystemConfig, Geometry)``."""
    tree = _merge(DEFAULTS, tree)
    s, g = tree["system"], tree["geometry"]

    def num(section, key, cast=float):
        val = tree[section][key]
        try:
            if isinstance(val, bool):
                raise TypeError
            return cast(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key}", f"expected {cast.__name__}, got {val!r}")

    def vec(key, shape):
        try:
            arr = np.asarray(g[key], float)
        except (TypeError, ValueError):
            raise ConfigError(f"geometry.{key}", "expected numbers")
        if arr.ndim != len(shape) or arr.shape[-1] != shape[-1] or arr.size == 0:
            raise ConfigError(f"geometry.{key}", f"expected shape {shape}")
        return arr

    freq = num("geometry", "frequency_GHz") * 1e9
    if freq <= 0:
        raise ConfigError("geometry.frequency_GHz", "must be > 0")
    lam = wavelength(freq)
    grid_dims = tuple(int(x) for x in g["grid_dims"])
    ris_dims = tuple(int(x) for x in g["ris_dims"])
    if len(grid_dims) != 2 or min(grid_dims) < 1:
        raise ConfigError("geometry.grid_dims", "expected two positive counts")
    if len(ris_dims) != 2 or min(ris_dims) < 1:
        raise ConfigError("geometry.ris_dims", "expected two positive counts")
    d_min = lam / 2 if g["grid_spacing"] is None else num("geometry", "grid_spacing")
    ris_sp = lam / 2 if g["ris_element_spacing"] is None else num("geometry", "ris_element_spacing")
    try:
        geo = Geometry(
            bs_origin=vec("bs_origin", (3,)), ris_center=vec("ris_center", (3,)),
            bob_positions=vec("bob_positions", (None, 3)) if np.ndim(g["bob_positions"]) == 2
            else vec("bob_positions", (3,))[None],
            eve_position=vec("eve_position", (3,)), grid_spacing=d_min, grid_dims=grid_dims,
            ris_dims=ris_dims, ris_element_spacing=ris_sp, frequency=freq,
            bob_antennas=num("geometry", "bob_antennas", int),
            eve_antennas=num("geometry", "eve_antennas", int),
            min_ris_aperture=num("geometry", "min_ris_aperture"))
    except DomainError as exc:
        raise ConfigError("geometry", str(exc))

    eps_bob, eps_eve = num("system", "eps_bob"), num("system", "eps_eve")
    eb_d = eps_bob if s["eps_bob_direct"] is None else num("system", "eps_bob_direct")
    ee_d = eps_eve if s["eps_eve_direct"] is None else num("system", "eps_eve_direct")
    choice = {k: str(s[k]).lower() for k in _CHOICES}   # yaml may hand back bools
    cfg = SystemConfig(
        P0=dbm_to_watt(num("system", "P0_dBm")), P_ris=dbm_to_watt(num("system", "P_RIS_dBm")),
        mu_t=num("system", "mu_t"), mu_r=num("system", "mu_r"),
        sigma2_bob=dbm_to_watt(num("system", "sigma2_bob_dBm")),
        sigma2_eve=dbm_to_watt(num("system", "sigma2_eve_dBm")),
        sigma2_ris=dbm_to_watt(num("system", "sigma2_ris_dBm")),
        K=geo.K, N_a=num("system", "N_a", int), N_h=grid_dims[0], N_v=grid_dims[1], M=geo.M,
        N_k=geo.bob_antennas, N_e=geo.eve_antennas,
        d=d_min if s["d"] is None else num("system", "d"), d_min=d_min,
        eps_bob=eps_bob, eps_eve=eps_eve, eps_bob_direct=eb_d, eps_eve_direct=ee_d,
        tol=float("inf") if str(s["tol"]).lower() in ("inf", ".inf") else num("system", "tol"),
        max_iter=num("system", "max_iter", int), xi1_max=num("system", "xi1_max"),
        xi2=num("system", "xi2"), n0=num("system", "n0", int),
        outer_passes=num("system", "outer_passes", int), lambda_reg=num("system", "lambda_reg"),
        random_draws=num("system", "random_draws", int), **choice)
    return cfg, geo


def load_config(path, overrides=None):
    """Load a scenario file, apply optional ``overrides`` (same tree layout)."""
    tree = _read_tree(path)
    if overrides:
        tree = _merge(tree, overrides)
    return build_config(tree)


def default_config(overrides=None):
    return build_config(_merge(DEFAULTS, overrides or {}))
