"""CM/AN split of the composite beamformers and MMSE receive vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NumericalError
from .signal import _tvec, aggregated_channels, state_covariance, BeamformerState

ALPHA_MIN = 1e-6
ALPHA_MAX = 1 - 1e-6


@dataclass
class MmseKernels:
    E1: np.ndarray   # (K, N_k, N_k)
    E3: np.ndarray   # (K, N_e, N_e)


def mrt_vector(Q_k, t, u_k):
    """``T Q^H u / ||T Q^H u||``."""
    t = _tvec(t)
    d = t * (np.conj(Q_k).T @ u_k)
    n = np.linalg.norm(d)
    if not n > 0:
        raise DomainError("zero effective channel")
    return d / n


def power_allocation(w_k, Q_k, t, u_k, N_a, K, P0, mode="array", clamp=True):
    """Power split factor alpha.

    ``mode="printed"`` evaluates ``K |u^H Q T w|^2 / (P0 N_a^2 ||T Q^H u||^2)``;
    ``mode="array"`` replaces ``N_a`` by the attained MRT gain ``||T Q^H u||``,
    i.e. ``alpha`` is the fraction of ``w``'s power along the MRT direction.
    """
    t = _tvec(t)
    d = t * (np.conj(Q_k).T @ u_k)
    n2 = float(np.real(np.vdot(d, d)))
    if not n2 > 0:
        raise DomainError("zero effective channel")
    g = abs(np.vdot(d, w_k)) ** 2           # |u^H Q T w|^2
    if mode == "printed":
        alpha = K * g / (P0 * N_a ** 2 * n2)
    elif mode == "array":
        alpha = K * g / (P0 * n2)
    else:
        raise DomainError(f"unknown alpha mode {mode!r}")
    return float(np.clip(alpha, ALPHA_MIN, ALPHA_MAX)) if clamp else float(alpha)


def split_beamformers(w_k, alpha, Q_k, t, u_k, P0, K, zs=1.0):
    """Split ``w_k`` into a CM part along MRT and an AN residual.

    Returns
    -------
    v, v_a : unit-norm (on the support) CM and AN directions
    p_a : AN power that makes the recomposition exact
    an_free : True when alpha sits on a clamp boundary (then v_a = 0)
    """
    t = _tvec(t)
    c = P0 / K
    w_k = np.asarray(w_k, complex)
    if alpha <= ALPHA_MIN or alpha >= ALPHA_MAX:
        p = float(np.real(np.vdot(w_k, t * w_k)))
        return w_k / np.sqrt(p), np.zeros_like(w_k), 0.0, True
    vm = mrt_vector(Q_k, t, u_k)
    v = vm * np.exp(1j * np.angle(np.vdot(vm, w_k)))
    resid = w_k - np.sqrt(alpha * c) * v
    r = np.linalg.norm(resid * t)
    if r <= 1e-12 * np.sqrt(c):
        return v, np.zeros_like(w_k), 0.0, False
    v_a = resid / (r * zs)
    return v, v_a, r ** 2, False


def split_state(state: BeamformerState, channels, theta, t, config):
    """Apply :func:`power_allocation` and :func:`split_beamformers` to every user."""
    t = _tvec(t)
    Q, _ = aggregated_channels(channels, theta)
    w = state.w
    K, P0 = state.K, state.P0
    N_a = int(t.sum())
    v, v_a = np.zeros_like(w), np.zeros_like(w)
    alpha, p_a, free = np.ones(K), np.zeros(K), np.zeros(K, bool)
    for k in range(K):
        al = power_allocation(w[k], Q[k], t, state.u[k], N_a, K, P0, config.alpha_mode)
        v[k], v_a[k], p_a[k], free[k] = split_beamformers(w[k], al, Q[k], t, state.u[k], P0, K,
                                                          state.zs[k])
        alpha[k] = 1.0 if free[k] else al
    return state.copy(v=v, v_a=v_a, alpha=alpha, p_a=p_a, an_free=free)


def mmse_kernels(state, channels, theta, t, config, eve_channels=None):
    """Interference-plus-noise kernels ``E1`` (Bob) and ``E3`` (Eve)."""
    t = _tvec(t)
    eve_channels = channels if eve_channels is None else eve_channels
    Q, _ = aggregated_channels(channels, theta)
    _, Q_e = aggregated_channels(eve_channels, theta)
    c = state.P0 / state.K
    Rt = state_covariance(state)
    mu_r, mu_t = config.mu_r, config.mu_t

    def cov(Qm, extra_scale):
        X = Qm @ (t * state.v).T                               # (n_rx, K)
        Xa = Qm @ (t * state.v_a).T
        S = (X * (state.alpha * c)) @ X.conj().T + (Xa * state.an_power) @ Xa.conj().T
        return extra_scale * S

    K = state.K
    E1 = np.empty((K, channels.N_k, channels.N_k), complex)
    for k in range(K):
        Fk = np.conj(theta)[:, None] * channels.F[k]
        E1[k] = (cov(Q[k], 1 + mu_r)
                 + (1 + mu_r) * mu_t * (Q[k] * (t * Rt)) @ Q[k].conj().T
                 + config.sigma2_ris * Fk.conj().T @ Fk
                 + (1 + mu_r) * config.sigma2_bob * np.eye(channels.N_k))
    Fe = np.conj(theta)[:, None] * eve_channels.F_e
    E3_single = (cov(Q_e, 1.0) + mu_t * (Q_e * (t * Rt)) @ Q_e.conj().T
                 + config.sigma2_ris * Fe.conj().T @ Fe
                 + config.sigma2_eve * np.eye(eve_channels.N_e))
    return MmseKernels(E1, np.broadcast_to(E3_single, (K,) + E3_single.shape).copy())


def _solve_pd(E, b, what):
    E = (E + E.conj().T) / 2
    try:
        L = np.linalg.cholesky(E)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} kernel is not positive definite")
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.conj().T, y)


def mmse_bob(state, channels, theta, t, config, normalize=True):
    """``u_k = sqrt(alpha P0/K) E1^{-1} Q_k T v_k`` (normalized unless asked)."""
    t = _tvec(t)
    Q, _ = aggregated_channels(channels, theta)
    ker = mmse_kernels(state, channels, theta, t, config)
    c = state.P0 / state.K
    U = np.empty_like(state.u)
    for k in range(state.K):
        U[k] = np.sqrt(state.alpha[k] * c) * _solve_pd(ker.E1[k], Q[k] @ (t * state.v[k]), "E1")
    return _normalize(U) if normalize else U


def mmse_eve(state, channels, theta, t, config, normalize=True):
    """Eve's MMSE combiner per stream, built from ``E3`` and ``Q_e``."""
    t = _tvec(t)
    _, Q_e = aggregated_channels(channels, theta)
    ker = mmse_kernels(state, channels, theta, t, config)
    c = state.P0 / state.K
    U = np.empty_like(state.u_e)
    for k in range(state.K):
        U[k] = np.sqrt(state.alpha[k] * c) * _solve_pd(ker.E3[k], Q_e @ (t * state.v[k]), "E3")
    return _normalize(U) if normalize else U


def _normalize(U):
    n = np.linalg.norm(U, axis=1, keepdims=True)
    if np.any(n == 0):
        raise NumericalError("MMSE receive vector vanished")
    return U / n


def mse_bob(u, state, channels, theta, t, config, k):
    """``E_k(u) = u^H E1 u - 2 Re(sqrt(alpha P0/K) u^H Q T v_k) + 1``."""
    t = _tvec(t)
    Q, _ = aggregated_channels(channels, theta)
    E1 = mmse_kernels(state, channels, theta, t, config).E1[k]
    c = state.P0 / state.K
    lin = np.sqrt(state.alpha[k] * c) * np.vdot(u, Q[k] @ (t * state.v[k]))
    return float(np.real(np.vdot(u, E1 @ u)) - 2 * np.real(lin) + 1)
