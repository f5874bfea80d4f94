"""SLNR beamforming as a generalized Rayleigh quotient with Eve nulling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NumericalError
from .signal import (_tvec, aggregated_channels, bob_rows, eve_rows, ris_noise_gain,
                     BeamformerState, secrecy_rate)

EIG_FLOOR = 1e-12
PROJ_SINGULAR = 1e-15


@dataclass
class LeakageMatrices:
    L1: np.ndarray   # (K, N, N)
    L2: np.ndarray
    L3: np.ndarray
    L4: np.ndarray
    L5: np.ndarray

    def denominator(self, k):
        return self.L4[k] + self.L5[k]

    def restrict(self, idx):
        ix = np.ix_(np.arange(self.L1.shape[0]), idx, idx)
        return LeakageMatrices(*(getattr(self, n)[ix] for n in ("L1", "L2", "L3", "L4", "L5")))


def nullspace_projector(A_hat_e, theta_hat, t):
    """``I - T a^H (a T a^H)^{-1} a T`` with Eve row ``a = theta_hat A_hat_e``."""
    a = np.asarray(theta_hat) @ np.asarray(A_hat_e)
    return projector_from_row(a, t)


def projector_from_row(a, t):
    t = _tvec(t)
    a = np.asarray(a, complex).reshape(-1)
    at = a * t
    s = float(np.real(np.vdot(at, at)))
    N = a.size
    if s == 0.0:
        return np.eye(N, dtype=complex)
    if s < PROJ_SINGULAR:
        s = s + EIG_FLOOR * t.sum()
    return np.eye(N) - np.outer(np.conj(at), at) / s


def leakage_matrices(channels, theta, t, state: BeamformerState, config, rows=None):
    """SLNR kernels ``L1..L5`` for every user (full N x N).

    ``rows`` may pass precomputed ``q_k = u_k^H Q_k`` (K, N).
    """
    t = _tvec(t)
    K, P0 = state.K, state.P0
    if rows is None:
        Q, _ = aggregated_channels(channels, theta)
        rows = bob_rows(Q, state.u)
    N = rows.shape[1]
    I = np.eye(N)
    outer = np.einsum("kn,km->knm", np.conj(rows), rows)     # q^H q
    total = outer.sum(0)
    th = np.linalg.norm(np.append(theta, 1.0))
    printed = getattr(config, "csi_inflation", "bound") == "printed"
    hwi_diag = np.diag((np.abs(rows) ** 2 * t).sum(0))          # sum over all Bobs
    L1, L2, L3, L4, L5 = (np.empty((K, N, N), complex) for _ in range(5))
    for k in range(K):
        L1[k] = outer[k]
        L2[k] = total - outer[k]
        noise = config.sigma2_bob + config.sigma2_ris * ris_noise_gain(
            channels.F[k], state.u[k], theta, config.ris_noise_form)
        L3[k] = noise * I
        if printed:
            infl = (channels.eps_eve_direct * P0 / K
                    + channels.eps_bob_direct[k] * (1 - state.alpha[k]) * P0) * th
        else:
            # worst-case error leakage per unit transmit power:
            # |dq w|^2 <= (eps_c ||theta|| + eps_d)^2 ||w||^2 <= eps~^2 ||theta_hat||^2 ||w||^2
            infl = (channels.eps_eve_combined ** 2
                    + K * (1 - state.alpha[k]) * channels.eps_bob_combined[k] ** 2) * th ** 2
        L4[k] = L2[k] + (K / P0) * L3[k] + infl * I
        L5[k] = ((1 + config.mu_r) * config.mu_t * hwi_diag
                 + config.mu_r * (L1[k] + L2[k] + (K * config.sigma2_bob / P0) * I))
    return LeakageMatrices(L1, L2, L3, L4, L5)


def _herm(X):
    X = np.asarray(X)
    if not np.all(np.isfinite(X)):
        raise NumericalError("non-finite matrix entries")
    return (X + X.conj().T) / 2


def inv_sqrt_psd(B):
    lam, V = np.linalg.eigh(_herm(B))
    if lam[-1] <= 0:
        raise NumericalError("denominator matrix is not positive definite")
    lam = np.maximum(lam, EIG_FLOOR * lam[-1])
    return (V / np.sqrt(lam)) @ V.conj().T


def solve_grq(A, B):
    """Maximize ``x^H A x / x^H B x``; returns the unit maximizer and value."""
    A = _herm(A)
    Bm = inv_sqrt_psd(B)
    X = _herm(Bm @ A @ Bm)
    _, V = np.linalg.eigh(X)
    rho = Bm @ V[:, -1]
    nrm = np.linalg.norm(rho)
    if not nrm > 0:
        raise NumericalError("degenerate GRQ maximizer")
    rho = rho / nrm
    # fix the global phase so the largest entry is real positive (determinism)
    j = np.argmax(np.abs(rho))
    rho = rho * np.exp(-1j * np.angle(rho[j]))
    value = float(np.real(np.vdot(rho, A @ rho)) / np.real(np.vdot(rho, _herm(B) @ rho)))
    return rho, value


def update_w(rho, Gamma, t, P0, K):
    """Project and rescale to ``w^H T w = P0/K``."""
    t = _tvec(t)
    w = Gamma @ rho
    p = float(np.real(np.vdot(w, t * w)))
    if not p > 1e-300:
        raise NumericalError("projected direction vanishes on the selected positions")
    return w * np.sqrt(P0 / K / p)


def _range_basis(Gamma, idx):
    """Orthonormal basis of the range of the restricted projector."""
    P = _herm(Gamma[np.ix_(idx, idx)])
    lam, V = np.linalg.eigh(P)
    return V[:, lam > 0.5]


def slnr(w, L, k, t):
    t = _tvec(t)
    x = t * w
    return float(np.real(np.vdot(x, L.L1[k] @ x)) / np.real(np.vdot(x, L.denominator(k) @ x)))


def design_beamformers(channels, theta, t, state, config, L=None):
    """One GRQ step (all users) on the support of ``t``.

    Returns the (K, N) composite beamformers supported on ``t``; each lies
    in the null space of its Eve row and satisfies C12 exactly.
    """
    t = _tvec(t)
    idx = np.flatnonzero(t)
    K, P0 = state.K, state.P0
    if idx.size < K + 1:
        raise DomainError(f"need at least K+1={K + 1} selected positions")
    Q, Q_e = aggregated_channels(channels, theta)
    if L is None:
        L = leakage_matrices(channels, theta, t, state, config, rows=bob_rows(Q, state.u))
    erow = eve_rows(Q_e, state.u_e)
    W = np.zeros((K, t.size), complex)
    for k in range(K):
        Gamma = projector_from_row(erow[k], t)
        Z = _range_basis(Gamma, idx)
        A = Z.conj().T @ L.L1[k][np.ix_(idx, idx)] @ Z
        B = Z.conj().T @ L.denominator(k)[np.ix_(idx, idx)] @ Z
        y, _ = solve_grq(A, B)
        rho = np.zeros(t.size, complex)
        rho[idx] = Z @ y
        W[k] = update_w(rho, Gamma, t, P0, K) * t
    return W


def grouped_grq(t_group, channels, theta, state, config, L=None):
    """Evaluate one candidate group: GRQ design restricted to the group and its SSR.

    Returns
    -------
    w : (K, N) beamformers supported on the group
    R_s : float
    """
    t_group = _tvec(t_group)
    if t_group.sum() < state.K + 1:
        raise DomainError(f"group smaller than K+1={state.K + 1}")
    W = design_beamformers(channels, theta, t_group, state, config, L=L)
    st = BeamformerState.from_composite(W, state.u, state.u_e, state.P0)
    return W, secrecy_rate(st, channels, theta, t_group, config)
