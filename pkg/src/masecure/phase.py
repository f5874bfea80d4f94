"""RIS coefficient increment as a second-order cone program.

Real variables are ``x = [Re theta_d, Im theta_d, xi1]``.  A complex row
``r`` acting on ``theta_d`` embeds as the two real rows ``[Re r, -Im r]`` and
``[Im r, Re r]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConeBlock, ConicProblem, solve_conic
from .exceptions import DomainError
from .signal import _tvec, ris_power_bound, ris_reflect_power


@dataclass
class PhaseStepProblem:
    theta: np.ndarray       # previous iterate theta^{j-1}, (M,)
    h: np.ndarray           # (K, M) Bob alignment rows  H_k^c T w_k
    a_bar: np.ndarray       # (K, M) Eve rows             H_{e,k}^c T w_k
    m: np.ndarray           # (K, M) MUI rows             sum_{i!=k} H_k^c T w_i
    c_hwi: np.ndarray       # (K, M) HWI rows             H_k^c sum_i |T w_k|
    D: np.ndarray           # (M,) RIS output-power weights
    P_ris: float
    xi2: float = 1.0
    xi1_max: float = 1e3
    lambda_reg: float = 0.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, complex).reshape(-1)
        M = self.theta.size
        for name in ("h", "a_bar", "m", "c_hwi"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), complex))
            if arr.shape[1] != M:
                raise DomainError(f"{name} rows must have length M")
            setattr(self, name, arr)
        self.D = np.asarray(self.D, float).reshape(-1)
        if self.D.size != M or np.any(self.D < 0):
            raise DomainError("D must be a nonnegative length-M vector")
        if not 0 <= self.xi2:
            raise DomainError("xi2 must be >= 0")

    @property
    def M(self):
        return self.theta.size

    @property
    def K(self):
        return self.h.shape[0]

    def mui_refs(self):
        return np.abs(self.m @ self.theta)

    def hwi_refs(self):
        return np.abs(self.c_hwi @ self.theta)


@dataclass
class ConicSolution:
    theta_d: np.ndarray
    xi1: float
    status: str
    violation: float
    iterations: int = 0


def init_phase(mode, M):
    if mode == "none":
        return np.zeros(M, complex)
    if mode in ("passive", "active"):
        return np.ones(M, complex)
    raise DomainError(f"unknown RIS mode {mode!r}")


def enforce_ris_budget(theta, t, G, P0, sigma2_ris, P_ris):
    """Scale ``theta`` so the beamformer-independent power bound meets ``P_ris``."""
    b = ris_power_bound(theta, t, G, P0, sigma2_ris)
    if b <= P_ris:
        return np.asarray(theta, complex)
    return np.asarray(theta, complex) * np.sqrt(P_ris / b)


def _cascade_weights(F, u):
    """``conj(F u)``: the diagonal of ``diag(u^H F^H)``."""
    return np.conj(F @ u)


def eve_effective_rows(channels, t, w, u_e):
    """Rows ``a_k = H_{e,k}^c T w_k`` (K, M) so that ``theta a_k`` is Eve's cascaded term."""
    t = _tvec(t)
    w = np.atleast_2d(w)
    Gw = channels.G @ (t * w).T                        # (M, K)
    return np.stack([_cascade_weights(channels.F_e, u_e[k]) * Gw[:, k] for k in range(len(w))])


def build_phase_step(state, channels, theta, t, config, w=None):
    """Assemble the phase-increment data for the current beamformers."""
    t = _tvec(t)
    w = state.w if w is None else np.atleast_2d(w)
    K = w.shape[0]
    Gw = channels.G @ (t * w).T                        # (M, K)
    Gabs = channels.G @ (t * np.abs(w)).T
    h, m, c = (np.empty((K, channels.M), complex) for _ in range(3))
    for k in range(K):
        cw = _cascade_weights(channels.F[k], state.u[k])
        h[k] = cw * Gw[:, k]
        m[k] = cw * (Gw.sum(1) - Gw[:, k])
        c[k] = cw * K * Gabs[:, k]
    a_bar = eve_effective_rows(channels, t, w, state.u_e)
    D = np.sqrt(np.sum(np.abs(Gw) ** 2, axis=1) + config.sigma2_ris)
    return PhaseStepProblem(theta, h, a_bar, m, c, D, config.P_ris, config.xi2,
                            config.xi1_max, config.lambda_reg)


def _embed(rows):
    """Complex rows acting on theta_d -> real rows on [Re, Im]."""
    rows = np.atleast_2d(rows)
    return np.vstack([np.hstack([rows.real, -rows.imag]), np.hstack([rows.imag, rows.real])])


def _cplx(z):
    z = np.atleast_1d(z)
    return np.concatenate([z.real, z.imag])


def to_conic(prob: PhaseStepProblem):
    """Real-embedded conic program (variables ``[Re theta_d, Im theta_d, xi1]``).

    With ``lambda_reg > 0`` an epigraph variable ``s >= ||theta + theta_d||``
    is appended and ``lambda_reg * s`` enters the objective.
    """
    M, K = prob.M, prob.K
    reg = prob.lambda_reg > 0
    n = 2 * M + 1 + (1 if reg else 0)
    th = prob.theta

    def pad(rows):
        return np.hstack([rows, np.zeros((rows.shape[0], n - rows.shape[1]))])

    eq_rows, eq_rhs = [], []
    for k in range(K):
        # C14: theta_d h_k - xi1 (theta h_k) = 0
        R = _embed(prob.h[k])
        R = np.hstack([R, -_cplx(th @ prob.h[k])[:, None]])
        eq_rows.append(pad(R)), eq_rhs.append(np.zeros(2))
    for k in range(K):
        # C15: theta_d a_k = 0
        eq_rows.append(pad(_embed(prob.a_bar[k]))), eq_rhs.append(np.zeros(2))
    cones = []
    zero_c = np.zeros(n)
    for k in range(K):
        # C16: |(theta + theta_d) m_k| <= sqrt(xi2) |theta m_k|
        cones.append(ConeBlock(pad(_embed(prob.m[k])), _cplx(th @ prob.m[k]), zero_c,
                               np.sqrt(prob.xi2) * abs(th @ prob.m[k])))
    for k in range(K):
        # C17: |(theta + theta_d) c_k| <= |theta c_k|
        cones.append(ConeBlock(pad(_embed(prob.c_hwi[k])), _cplx(th @ prob.c_hwi[k]), zero_c,
                               abs(th @ prob.c_hwi[k])))
    # C8: ||D (theta + theta_d)|| <= sqrt(P_RIS)
    Dm = np.diag(prob.D)
    A8 = pad(np.block([[Dm, np.zeros((M, M))], [np.zeros((M, M)), Dm]]))
    cones.append(ConeBlock(A8, np.concatenate([prob.D * th.real, prob.D * th.imag]), zero_c,
                           np.sqrt(prob.P_ris)))
    cost = np.zeros(n)
    cost[2 * M] = -1.0
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[2 * M], upper[2 * M] = 0.0, prob.xi1_max
    if reg:
        cost[-1] = prob.lambda_reg
        e = np.zeros(n)
        e[-1] = 1.0
        cones.append(ConeBlock(pad(np.eye(2 * M)), _cplx(th), e, 0.0))
    return ConicProblem(cost, np.vstack(eq_rows), np.concatenate(eq_rhs), cones, lower, upper)


def zero_step(prob: PhaseStepProblem):
    """The zero increment in the variables of :func:`to_conic`."""
    x = np.zeros(2 * prob.M + 1 + (1 if prob.lambda_reg > 0 else 0))
    if prob.lambda_reg > 0:
        x[-1] = np.linalg.norm(prob.theta)
    return x


def solve_phase_step(prob: PhaseStepProblem):
    """Solve the phase increment; infeasibility falls back to ``theta_d = 0``."""
    cp = to_conic(prob)
    x0 = zero_step(prob)
    rep = solve_conic(cp, warm_start=x0 if cp.is_feasible(x0) else None)
    M = prob.M
    if rep.status not in ("optimal", "max_iter") or not np.all(np.isfinite(rep.x)):
        return ConicSolution(np.zeros(M, complex), 0.0, rep.status, np.inf, rep.iterations)
    x = rep.x
    viol = max(rep.primal_residual, rep.cone_residual)
    return ConicSolution(x[:M] + 1j * x[M:2 * M], float(max(x[2 * M], 0.0)), rep.status, viol,
                         rep.iterations)


def update_theta(theta, theta_d):
    theta, theta_d = np.asarray(theta, complex), np.asarray(theta_d, complex)
    if theta.shape != theta_d.shape:
        raise DomainError("theta and theta_d shapes differ")
    return theta + theta_d


def reflect_power(theta, t, w, channels, config):
    return ris_reflect_power(theta, t, w, channels.G, config.sigma2_ris)
