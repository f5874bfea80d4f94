"""Shared builders for the test-suite."""
import itertools

import numpy as np

from masecure.config import default_config
from masecure.pipeline import Scenario
from masecure.signal import BeamformerState

SMALL = {"system": {"N_a": 6, "max_iter": 5},
         "geometry": {"grid_dims": [4, 6], "ris_dims": [4, 4], "min_ris_aperture": 0.0}}
DESK = {"system": {"N_a": 16},
        "geometry": {"grid_dims": [10, 12], "ris_dims": [8, 8], "min_ris_aperture": 0.0}}
TOY = {"system": {"N_a": 3, "max_iter": 10},
       "geometry": {"grid_dims": [2, 5], "ris_dims": [8, 8], "min_ris_aperture": 0.0}}


def merge(base, **system):
    out = {"system": dict(base["system"]), "geometry": dict(base["geometry"])}
    out["system"].update(system)
    return out


def scenario(base=SMALL, seed=0, geometry=None, **system):
    tree = merge(base, **system)
    if geometry:
        tree["geometry"].update(geometry)
    cfg, geo = default_config(tree)
    return Scenario.build(cfg, geo, seed)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def unit_rows(X):
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


def random_state(rng, K, N, N_k, N_e, P0, t=None, alpha=None):
    """Random split state with unit-norm v, v_a on the support of ``t``."""
    t = np.ones(N) if t is None else np.asarray(t, float)
    v = unit_rows(crandn(rng, K, N) * t)
    v_a = unit_rows(crandn(rng, K, N) * t)
    alpha = rng.uniform(0.2, 0.9, K) if alpha is None else alpha
    return BeamformerState(v, v_a, alpha, unit_rows(crandn(rng, K, N_k)),
                           unit_rows(crandn(rng, K, N_e)), P0)


def random_hermitian(rng, n, pd=False):
    X = crandn(rng, n, n)
    H = (X + X.conj().T) / 2
    if pd:
        H = X @ X.conj().T + 0.1 * np.eye(n)
    return H


def recoverable(Phi, x):
    """Exact-recovery certificate: minimal-norm dual vector strictly below 1 off-support."""
    S = np.flatnonzero(x)
    off = np.setdiff1d(np.arange(Phi.shape[1]), S)
    nu = np.linalg.pinv(Phi[:, S].T) @ np.sign(x[S])
    return np.allclose(Phi[:, S].T @ nu, np.sign(x[S])) and np.max(np.abs(Phi[:, off].T @ nu)) < 1


def two_sparse_supports(Phi, y):
    out = []
    for S in itertools.combinations(range(Phi.shape[1]), 2):
        z = np.linalg.lstsq(Phi[:, S], y, rcond=None)[0]
        if np.linalg.norm(Phi[:, S] @ z - y) <= 1e-9 * np.linalg.norm(y):
            out.append(set(np.array(S)[np.abs(z) > 1e-9].tolist()))
    return out
