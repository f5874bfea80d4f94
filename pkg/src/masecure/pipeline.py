"""Alternating optimization and the end-to-end design pipeline."""
from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, StageError
from .geometry import build_channels, sample_channel_errors
from .grq import design_beamformers
from .phase import (build_phase_step, enforce_ris_budget, init_phase, solve_phase_step,
                    update_theta)
from .placement import (GroupPlan, algorithm2, algorithm3, fpa_selection, min_distance_ok,
                        uniform_groups)
from .receivers import mmse_bob, mmse_eve, split_state
from .signal import (_tvec, aggregated_channels, eve_rows, rate_report, ris_reflect_power,
                     secrecy_rate, BeamformerState, PositionSelection)

RESIDUAL_TOL = 1e-6
C8_SLACK = 1e-9
METHODS = ("alg2", "alg3", "fpa", "all")


def rng_stream(seed, label):
    """Independent generator for a named component of a seeded run.

    ``seed`` is an int or a tuple of ints (e.g. ``(master, run_seed)``).
    """
    entropy = [int(s) for s in np.atleast_1d(seed)] + [zlib.crc32(label.encode())]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass
class IterationTrace:
    R_s: list = field(default_factory=list)
    xi1: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    phase_status: list = field(default_factory=list)

    def __len__(self):
        return len(self.R_s)

    @property
    def iterations(self):
        return len(self.R_s)

    def max_residual(self):
        return max((max(r.values()) for r in self.residuals), default=0.0)


def convergence_check(trace, eps):
    """``|R^j - R^{j-1}| <= eps`` on the last two entries."""
    r = list(trace)
    return len(r) >= 2 and abs(r[-1] - r[-2]) <= eps


def constraint_residuals(state, channels, theta, t, config, selection=None):
    """Scaled residuals of C3, C7, C8, C9 and C12 for a design state."""
    t = _tvec(t)
    w = state.w
    c = state.P0 / state.K
    out = {}
    un = np.concatenate([np.linalg.norm(state.u, axis=1), np.linalg.norm(state.u_e, axis=1)])
    out["C3"] = float(np.max(np.abs(un - 1)))
    if selection is not None:
        ok = min_distance_ok(selection.t, config.d, selection.grid_dims, selection.spacing)
        out["C7"] = 0.0 if ok else max(0.0, (config.d - selection.min_pair_distance()) / config.d)
    if config.ris_mode == "active":
        p = ris_reflect_power(theta, t, w, channels.G, config.sigma2_ris)
        out["C8"] = max(0.0, p - config.P_ris) / config.P_ris
    else:
        out["C8"] = 0.0
    _, Q_e = aggregated_channels(channels, theta)
    qe = eve_rows(Q_e, state.u_e)
    c9 = 0.0
    for k in range(state.K):
        den = np.linalg.norm(qe[k] * t) * np.linalg.norm(t * w[k])
        if den > 0:
            c9 = max(c9, abs(qe[k] @ (t * w[k])) / den)
    out["C9"] = float(c9)
    pw = np.real(np.einsum("kn,kn->k", np.conj(w), t * w))
    out["C12"] = float(np.max(np.abs(pw - c) / c))
    return out


def initial_state(K, N, N_k, N_e, P0):
    """Equal-power reception: normalized all-ones receive vectors, no beamformers yet."""
    u = np.ones((K, N_k), complex) / np.sqrt(N_k)
    u_e = np.ones((K, N_e), complex) / np.sqrt(N_e)
    z = np.zeros((K, N), complex)
    return BeamformerState(z, z.copy(), np.ones(K), u, u_e, P0)


def initial_theta(config, channels, t):
    theta = init_phase(config.ris_mode, channels.M)
    if config.ris_mode == "active":
        theta = enforce_ris_budget(theta, t, channels.G, config.P0, config.sigma2_ris,
                                   config.P_ris)
    return theta


def _c8_ok(theta, t, W, channels, config):
    if config.ris_mode != "active":
        return True
    p = ris_reflect_power(theta, t, W, channels.G, config.sigma2_ris)
    return p <= config.P_ris * (1 + C8_SLACK)


def _beamformer_block(channels, theta, t, lk_state, config):
    """GRQ design; in active mode shrink ``theta`` until the RIS budget holds."""
    W = design_beamformers(channels, theta, t, lk_state, config)
    for _ in range(4):
        if _c8_ok(theta, t, W, channels, config):
            return W, theta
        p = ris_reflect_power(theta, t, W, channels.G, config.sigma2_ris)
        theta = theta * np.sqrt(config.P_ris / p) * (1 - 1e-6)
        W = design_beamformers(channels, theta, t, lk_state, config)
    if not _c8_ok(theta, t, W, channels, config):
        theta = enforce_ris_budget(theta, t, channels.G, config.P0, config.sigma2_ris,
                                   config.P_ris)
        W = design_beamformers(channels, theta, t, lk_state, config)
    return W, theta


def algorithm1(config, channels, t, theta0, state0, max_iter=None, tol=None, selection=None):
    """Alternate GRQ beamforming and RIS increments.

    ``state0`` supplies the receive vectors and the power split used in the
    leakage kernels.  The GRQ step is accepted if it does not lower R_s; the
    RIS step if it raises R_s (with one half-step retry), otherwise the RIS
    block stops for the rest of the run.  R_s is evaluated on the composite
    (unsplit) beamformers.

    Returns
    -------
    W : (K, N) composite beamformers
    theta : (M,) RIS coefficients
    trace : IterationTrace
    """
    t = _tvec(t)
    J = config.max_iter if max_iter is None else max_iter
    eps = config.tol if tol is None else tol
    theta = np.asarray(theta0, complex).copy()
    K, N, P0 = state0.K, t.size, state0.P0
    W = np.zeros((K, N), complex)
    R_cur = -np.inf
    phase_on = config.ris_mode == "active"
    trace = IterationTrace()

    def view(Wm):
        return BeamformerState.from_composite(Wm, state0.u, state0.u_e, P0)

    for _ in range(J):
        t0 = time.perf_counter()
        W_new, th_new = _beamformer_block(channels, theta, t, state0, config)
        R_new = secrecy_rate(view(W_new), channels, th_new, t, config)
        if R_new >= R_cur:
            W, theta, R_cur = W_new, th_new, R_new
        xi1, status = 0.0, "skipped"
        if phase_on:
            sol = solve_phase_step(build_phase_step(view(W), channels, theta, t, config))
            status = sol.status
            improved = False
            if np.any(sol.theta_d):
                for step in (1.0, 0.5):
                    th = update_theta(theta, step * sol.theta_d)
                    if not _c8_ok(th, t, W, channels, config):
                        continue
                    R_try = secrecy_rate(view(W), channels, th, t, config)
                    if R_try > R_cur:
                        theta, R_cur, xi1, improved = th, R_try, step * sol.xi1, True
                        break
            if not improved:
                phase_on = False
                status = status + ":rejected"
        trace.R_s.append(R_cur)
        trace.xi1.append(xi1)
        trace.phase_status.append(status)
        trace.residuals.append(constraint_residuals(view(W), channels, theta, t, config,
                                                    selection))
        trace.wall.append(time.perf_counter() - t0)
        if convergence_check([0.0] + trace.R_s, eps):
            break
    return W, theta, trace


@dataclass
class Scenario:
    """Design-side (estimated) channels plus one sampled true realization."""

    config: object
    geo: object
    channels: object
    true_channels: object
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, config, geo, seed=0):
        ch = build_channels(geo, config.eps_bob, config.eps_eve, config.eps_bob_direct,
                            config.eps_eve_direct, relative=config.csi_error == "relative")
        true = sample_channel_errors(ch, rng_stream(seed, "channel-error"))
        return cls(config, geo, ch, true, seed)

    def with_config(self, config):
        """Same channels, different solver/system parameters (no cache sharing)."""
        return Scenario(config, self.geo, self.channels, self.true_channels, self.seed)

    @property
    def eve_channels(self):
        return self.true_channels if self.config.eve_mmse_channels == "true" else self.channels


@dataclass
class SelectionResult:
    selection: PositionSelection
    state: BeamformerState
    theta: np.ndarray
    report: object                # RateReport on the true channels
    design_R_s: float             # R_s on the estimated channels
    traces: list
    residuals: dict

    @property
    def iterations(self):
        return sum(len(tr) for tr in self.traces)


def evaluate_selection(scn: Scenario, selection, max_iter=None):
    """Design beamformers, RIS and receivers for a fixed selection (cached)."""
    cfg, ch = scn.config, scn.channels
    if not isinstance(selection, PositionSelection):
        selection = PositionSelection(np.asarray(selection), scn.geo.grid_dims,
                                      scn.geo.grid_spacing)
    key = (selection.t.tobytes(), max_iter)
    if key in scn._cache:
        return scn._cache[key]
    t = selection.t.astype(float)
    if t.sum() < cfg.K + 1:
        raise DomainError(f"selection needs at least K+1={cfg.K + 1} positions")
    lk = initial_state(cfg.K, cfg.N, ch.N_k, ch.N_e, cfg.P0)
    theta = initial_theta(cfg, ch, t)
    best, traces = None, []
    for p in range(cfg.outer_passes):
        if best is not None:
            prev = best[0]
            u = mmse_bob(prev, ch, best[1], t, cfg)
            u_e = mmse_eve(prev, scn.eve_channels, best[1], t, cfg)
            lk = prev.copy(u=u, u_e=u_e)
            theta = best[1]
        W, th, trace = algorithm1(cfg, ch, t, theta, lk, max_iter=max_iter, selection=selection)
        traces.append(trace)
        st = split_state(BeamformerState.from_composite(W, lk.u, lk.u_e, cfg.P0), ch, th, t, cfg)
        R = secrecy_rate(st, ch, th, t, cfg)
        if best is None or R >= best[2]:
            best = (st, th, R)
    st, th, R = best
    res = constraint_residuals(st, ch, th, t, cfg, selection)
    out = SelectionResult(selection, st, th, rate_report(st, scn.true_channels, th, t, cfg), R,
                          traces, res)
    scn._cache[key] = out
    return out


@dataclass
class PipelineResult:
    selection: PositionSelection
    state: BeamformerState
    theta: np.ndarray
    report: object
    traces: list
    plan: GroupPlan = None
    residuals: dict = None
    design_R_s: float = np.nan

    @property
    def iterations(self):
        return sum(len(tr) for tr in self.traces)


def place(scn: Scenario, method, max_iter=None):
    """Run the placement stage; returns (selection, plan, placement traces)."""
    cfg, geo, ch = scn.config, scn.geo, scn.channels
    N = geo.N
    if method == "fpa":
        return fpa_selection(cfg.N_a, geo.grid_dims, geo.grid_spacing), None, []
    if method == "all":
        return PositionSelection(np.ones(N, np.int8), geo.grid_dims, geo.grid_spacing), None, []
    lk = initial_state(cfg.K, N, ch.N_k, ch.N_e, cfg.P0)
    if method == "alg2":
        g0 = uniform_groups(N, cfg.n0, geo.grid_dims, geo.grid_spacing, cfg.d)[0]
        t0 = np.zeros(N)
        t0[g0] = 1
        if t0.sum() < cfg.K + 1:
            raise DomainError(f"uniform groups need n0 >= K+1={cfg.K + 1}")
        _, th, trace = algorithm1(cfg, ch, t0, initial_theta(cfg, ch, t0), lk, max_iter=max_iter)
        plan = algorithm2(ch, th, lk, cfg, geo)
        return plan.selection, plan, [trace]
    if method == "alg3":
        t0 = np.ones(N)
        W, th, trace = algorithm1(cfg, ch, t0, initial_theta(cfg, ch, t0), lk, max_iter=max_iter)
        plan = algorithm3(ch, th, lk, cfg, geo, W)
        return plan.selection, plan, [trace]
    raise DomainError(f"unknown placement method {method!r}")


def full_pipeline(scn: Scenario, method=None, max_iter=None):
    """Placement, alternating optimization, split and receivers, final report.

    Failures are wrapped in :class:`StageError` naming the stage.
    """
    method = scn.config.placement if method is None else method
    try:
        sel, plan, ptr = place(scn, method, max_iter)
    except Exception as exc:
        raise StageError("placement", exc) from exc
    try:
        res = evaluate_selection(scn, sel, max_iter)
    except Exception as exc:
        raise StageError("design", exc) from exc
    return PipelineResult(sel, res.state, res.theta, res.report, ptr + res.traces, plan,
                          res.residuals, res.design_R_s)
