"""Transmit/receive signal model with hardware impairments and rate terms.

Conventions
-----------
* ``t`` is the 0/1 selection vector of length N (``T = diag(t)``).
* ``theta`` is the length-M RIS coefficient vector.
* Per-user quantities are stacked along axis 0: ``v``, ``v_a``, ``w`` are
  (K, N); ``u`` is (K, N_k); ``u_e`` is (K, N_e).
* The effective row of Bob k is ``q_k = u_k^H Q_k``; of Eve for stream k,
  ``q_{e,k} = u_{e,k}^H Q_e``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DomainError
from .geometry import grid_coordinates

PHASE_MODES = ("none", "passive", "active")


def _tvec(t):
    """Selection vector from a PositionSelection, 0/1 vector or diagonal matrix."""
    if isinstance(t, PositionSelection):
        return t.t.astype(float)
    t = np.asarray(t)
    if t.ndim == 2:
        t = np.diag(t)
    return t.astype(float)


@dataclass
class PositionSelection:
    """Binary candidate selection on an ``N_h x N_v`` grid."""

    t: np.ndarray
    grid_dims: tuple
    spacing: float

    def __post_init__(self):
        t = np.asarray(self.t)
        if t.ndim != 1 or t.size != self.grid_dims[0] * self.grid_dims[1]:
            raise DomainError("selection length does not match the grid")
        if not np.all((t == 0) | (t == 1)):
            raise DomainError("selection vector must be binary")
        self.t = t.astype(np.int8)
        self.grid_dims = tuple(int(x) for x in self.grid_dims)

    @classmethod
    def from_indices(cls, idx, grid_dims, spacing):
        t = np.zeros(grid_dims[0] * grid_dims[1], np.int8)
        t[np.asarray(idx, int)] = 1
        return cls(t, grid_dims, spacing)

    @property
    def T(self):
        return selection_matrix(self.t)

    @property
    def indices(self):
        return np.flatnonzero(self.t)

    @property
    def count(self):
        return int(self.t.sum())

    def min_pair_distance(self):
        xy = grid_coordinates(self.grid_dims, self.spacing)[self.indices]
        if len(xy) < 2:
            return np.inf
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        return float(dist[np.triu_indices(len(xy), 1)].min())


@dataclass
class PhaseShift:
    theta: np.ndarray
    mode: str = "passive"

    def __post_init__(self):
        if self.mode not in PHASE_MODES:
            raise DomainError(f"unknown RIS mode {self.mode!r}")
        self.theta = np.asarray(self.theta, complex).reshape(-1)
        if self.mode == "none" and np.any(self.theta):
            raise DomainError("mode 'none' requires theta = 0")
        if self.mode == "passive" and not np.allclose(np.abs(self.theta), 1.0, atol=1e-9):
            raise DomainError("passive RIS coefficients must be unit-modulus")

    @property
    def hat(self):
        return np.append(self.theta, 1.0)

    @property
    def amplitudes(self):
        return np.abs(self.theta)


@dataclass
class BeamformerState:
    """Split beamformers and receive vectors.

    ``w`` is derived: ``sqrt(alpha P0/K) v + sqrt(p_a) v_a zs`` where the AN
    power ``p_a`` defaults to ``(1-alpha) P0/K``.  A split that cannot honour
    both unit-norm ``v_a`` and that default records its effective ``p_a``.
    """

    v: np.ndarray
    v_a: np.ndarray
    alpha: np.ndarray
    u: np.ndarray
    u_e: np.ndarray
    P0: float
    zs: np.ndarray = None
    an_free: np.ndarray = None
    p_a: np.ndarray = None

    def __post_init__(self):
        self.v = np.atleast_2d(np.asarray(self.v, complex))
        K = self.v.shape[0]
        self.v_a = np.atleast_2d(np.asarray(self.v_a, complex))
        self.alpha = np.broadcast_to(np.asarray(self.alpha, float), (K,)).copy()
        self.u = np.atleast_2d(np.asarray(self.u, complex))
        self.u_e = np.atleast_2d(np.asarray(self.u_e, complex))
        self.zs = np.ones(K, complex) if self.zs is None else \
            np.broadcast_to(np.asarray(self.zs, complex), (K,)).copy()
        self.an_free = np.zeros(K, bool) if self.an_free is None else np.asarray(self.an_free, bool)
        if self.p_a is not None:
            self.p_a = np.broadcast_to(np.asarray(self.p_a, float), (K,)).copy()
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise DomainError("alpha must lie in [0, 1]")
        if self.v_a.shape != self.v.shape or len(self.u) != K or len(self.u_e) != K:
            raise DomainError("per-user arrays disagree in K")

    @property
    def K(self):
        return self.v.shape[0]

    @property
    def an_power(self):
        if self.p_a is not None:
            return self.p_a
        return (1 - self.alpha) * self.P0 / self.K

    @property
    def w(self):
        c = self.P0 / self.K
        return (np.sqrt(self.alpha * c)[:, None] * self.v
                + (np.sqrt(self.an_power) * self.zs)[:, None] * self.v_a)

    @classmethod
    def from_composite(cls, w, u, u_e, P0):
        """State before the CM/AN split: alpha = 1, v = w sqrt(K/P0), v_a = 0."""
        w = np.atleast_2d(np.asarray(w, complex))
        K = w.shape[0]
        return cls(w * np.sqrt(K / P0), np.zeros_like(w), np.ones(K), u, u_e, P0)

    def copy(self, **kw):
        base = replace(self, v=self.v.copy(), v_a=self.v_a.copy(), alpha=self.alpha.copy(),
                       u=self.u.copy(), u_e=self.u_e.copy(), zs=self.zs.copy(),
                       an_free=self.an_free.copy(),
                       p_a=None if self.p_a is None else self.p_a.copy())
        return replace(base, **kw) if kw else base


@dataclass
class RateReport:
    a: np.ndarray           # (K, 4) Bob: rx-HWI, MUI, noise, tx-HWI
    t: np.ndarray           # (K,)  Bob useful power
    b: np.ndarray           # (K, 3) Eve: MUI, noise, tx-HWI
    t_e: np.ndarray         # (K,)  Eve useful power
    R_U: float
    R_E: float
    R_s: float
    R_E_bound: float = np.nan
    alpha: np.ndarray = field(default=None)

    CSV_FIELDS = ("R_U", "R_E", "R_s", "alpha")

    def as_row(self):
        alpha = np.nan if self.alpha is None else float(np.mean(self.alpha))
        return {"R_U": self.R_U, "R_E": self.R_E, "R_s": self.R_s, "alpha": alpha}


def selection_matrix(t):
    t = np.asarray(t)
    if t.ndim != 1 or not np.all((t == 0) | (t == 1)):
        raise DomainError("selection vector must be a binary 1-D array")
    return np.diag(t.astype(float))


def aggregated_channels(channels, theta):
    """``Q_k = H_k^H + F_k^H diag(theta) G`` (K, N_k, N) and ``Q_e`` (N_e, N)."""
    theta = np.asarray(theta, complex).reshape(-1)
    if theta.size != channels.M:
        raise DomainError("theta length does not match the RIS size")
    TG = theta[:, None] * channels.G
    Q = np.conj(np.transpose(channels.H, (0, 2, 1))) + \
        np.conj(np.transpose(channels.F, (0, 2, 1))) @ TG
    Q_e = channels.H_e.conj().T + channels.F_e.conj().T @ TG
    return Q, Q_e


def bob_rows(Q, u):
    """(K, N) rows ``u_k^H Q_k``."""
    return np.einsum("ki,kin->kn", np.conj(u), Q)


def eve_rows(Q_e, u_e):
    """(K, N) rows ``u_{e,k}^H Q_e``."""
    return np.conj(u_e) @ Q_e


def distortion_covariance(v, v_a, alpha, P0, K, p_a=None):
    """Diagonal of ``R_t`` as a length-N vector.

    ``p_a`` overrides the per-user AN power ``(1-alpha) P0/K``.
    """
    alpha = np.broadcast_to(np.asarray(alpha, float), (np.atleast_2d(v).shape[0],))
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise DomainError("alpha must lie in [0, 1]")
    c = P0 / K
    p_a = (1 - alpha) * c if p_a is None else np.broadcast_to(p_a, alpha.shape)
    v, v_a = np.atleast_2d(v), np.atleast_2d(v_a)
    return (alpha[:, None] * c * np.abs(v) ** 2 + p_a[:, None] * np.abs(v_a) ** 2).sum(0)


def state_covariance(state):
    return distortion_covariance(state.v, state.v_a, state.alpha, state.P0, state.K, state.an_power)


def ris_noise_gain(F, u, theta, form="frobenius"):
    """``||Theta^H F U F^H Theta||_F`` (or its trace) with ``U = u u^H``."""
    x = np.conj(theta) * (F @ u)
    if form == "trace":
        return float(np.real(np.vdot(x, x)))
    return float(np.linalg.norm(np.outer(x, np.conj(x))))


def bob_rate_terms(state: BeamformerState, channels, theta, t, config):
    """Bob-side powers.

    Returns
    -------
    a : (K, 4) receive-HWI, MUI, noise (+AN, RIS noise), transmit-HWI
    tk : (K,) useful power
    """
    t = _tvec(t)
    K = state.K
    c = state.P0 / K
    Q, _ = aggregated_channels(channels, theta)
    q = bob_rows(Q, state.u)
    g = np.abs(q @ (t * state.v).T) ** 2        # g[k, i] = |q_k T v_i|^2
    ga = np.abs(q @ (t * state.v_a).T) ** 2
    Rt = state_covariance(state)
    al = state.alpha
    mu_r, mu_t = config.mu_r, config.mu_t
    tk = al * c * np.diag(g)
    a = np.zeros((K, 4))
    for k in range(K):
        others = np.arange(K) != k
        a[k, 0] = mu_r * tk[k]
        a[k, 1] = (1 + mu_r) * np.sum(al[others] * c * g[k, others])
        a[k, 2] = ((1 + mu_r) * np.sum(state.an_power * ga[k])
                   + config.sigma2_ris * ris_noise_gain(channels.F[k], state.u[k], theta,
                                                         config.ris_noise_form)
                   + (1 + mu_r) * config.sigma2_bob * np.vdot(state.u[k], state.u[k]).real)
        a[k, 3] = (1 + mu_r) * mu_t * np.sum(np.abs(q[k]) ** 2 * t * Rt)
    return a, tk


def eve_rate_terms(state: BeamformerState, channels, theta, t, config):
    """Eve-side powers for each stream k.

    Returns
    -------
    b : (K, 3) MUI, noise (+RIS noise), transmit-HWI
    te : (K,) useful power of the composite ``w_k``
    """
    t = _tvec(t)
    K = state.K
    _, Q_e = aggregated_channels(channels, theta)
    qe = eve_rows(Q_e, state.u_e)
    ge = np.abs(qe @ (t * state.w).T) ** 2      # ge[k, i] = |q_{e,k} T w_i|^2
    Rt = state_covariance(state)
    b = np.zeros((K, 3))
    te = np.diag(ge).copy()
    for k in range(K):
        b[k, 0] = ge[k].sum() - ge[k, k]
        b[k, 1] = (config.sigma2_ris * ris_noise_gain(channels.F_e, state.u_e[k], theta,
                                                      config.ris_noise_form)
                   + config.sigma2_eve * np.vdot(state.u_e[k], state.u_e[k]).real)
        b[k, 2] = config.mu_t * np.sum(np.abs(qe[k]) ** 2 * t * Rt)
    return b, te


def secrecy_sum_rate(a, tk, b, te):
    """(R_U, R_E, R_s) in bits/s/Hz."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    tk, te = np.asarray(tk, float), np.asarray(te, float)
    lo = min(a.min(), b.min(), tk.min(), te.min())
    if lo < -1e-12 * max(1.0, a.max(), b.max(), tk.max(), te.max()):
        raise DomainError("rate terms must be nonnegative")
    da, db = a.sum(1), b.sum(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sa = np.where(tk > 0, tk / da, 0.0)
        se = np.where(te > 0, te / db, 0.0)
    R_U = float(np.sum(np.log2(1 + np.maximum(sa, 0))))
    R_E = float(np.sum(np.log2(1 + np.maximum(se, 0))))
    return R_U, R_E, max(R_U - R_E, 0.0)


def eve_rate_upper_bound(b, eps_eve_direct, P0, K, theta):
    """Diagnostic bound ``sum_k log2(1 + eps_hat_e P0 ||theta_hat|| / (K b_k2))``."""
    th = np.linalg.norm(np.append(theta, 1.0))
    b = np.atleast_2d(b)
    return float(np.sum(np.log2(1 + eps_eve_direct * P0 * th / (K * b[:, 1]))))


def rate_report(state, channels, theta, t, config):
    a, tk = bob_rate_terms(state, channels, theta, t, config)
    b, te = eve_rate_terms(state, channels, theta, t, config)
    R_U, R_E, R_s = secrecy_sum_rate(a, tk, b, te)
    bound = eve_rate_upper_bound(b, channels.eps_eve_direct, state.P0, state.K, theta)
    return RateReport(a, tk, b, te, R_U, R_E, R_s, bound, state.alpha.copy())


def secrecy_rate(state, channels, theta, t, config):
    return rate_report(state, channels, theta, t, config).R_s


def ris_reflect_power(theta, t, w, G, sigma2_ris):
    """Active-RIS output power ``sum_k ||Theta G T w_k||^2 + sigma_r^2 ||theta||^2``."""
    t = _tvec(t)
    theta = np.asarray(theta, complex).reshape(-1)
    Gw = G @ (t * np.atleast_2d(w)).T              # (M, K)
    amp = np.abs(theta) ** 2
    return float(np.sum(amp[:, None] * np.abs(Gw) ** 2) + sigma2_ris * amp.sum())


def ris_power_bound(theta, t, G, P0, sigma2_ris):
    """w-independent upper bound ``sum_m |theta_m|^2 (P0 ||g_m T||^2 + sigma_r^2)``."""
    t = _tvec(t)
    rows = np.sum(np.abs(G) ** 2 * t, axis=1)
    return float(np.sum(np.abs(theta) ** 2 * (P0 * rows + sigma2_ris)))
