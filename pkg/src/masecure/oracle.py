"""Brute-force and Monte-Carlo verifiers."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .exceptions import DomainError, InfeasibleError
from .geometry import grid_coordinates
from .pipeline import Scenario, evaluate_selection, full_pipeline, rng_stream
from .signal import (_tvec, aggregated_channels, bob_rate_terms, bob_rows, eve_rate_terms,
                     eve_rows, state_covariance, PositionSelection)

ORACLE_ITERS = 10
MAX_COMBINATIONS = 100_000
FLOAT_FLOOR = 1e-9          # relative floor for deterministic (zero-variance) components


@dataclass
class OracleReport:
    quantity: str
    analytic: float
    oracle: float
    tolerance: float
    passed: bool
    samples: int = 0

    FIELDS = ("quantity", "analytic", "oracle", "tolerance", "passed", "samples")

    def as_row(self):
        return {f: getattr(self, f) for f in self.FIELDS}


def write_reports(reports, path):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, OracleReport.FIELDS)
        wr.writeheader()
        for r in reports:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v)
                         for k, v in r.as_row().items()})


# --------------------------------------------------------------------- placement

def feasible_selections(N, N_a, d, grid_dims, spacing):
    """All ``N_a``-subsets of ``range(N)`` whose pairwise distances are ``>= d``."""
    xy = grid_coordinates(grid_dims, spacing)
    diff = xy[:, None, :] - xy[None, :, :]
    ok = np.sqrt((diff ** 2).sum(-1)) >= d * (1 - 1e-9)
    for combo in itertools.combinations(range(N), N_a):
        if all(ok[i, j] for i, j in itertools.combinations(combo, 2)):
            yield combo


@dataclass
class ExhaustiveResult:
    best: PositionSelection
    worst: PositionSelection
    best_R_s: float
    worst_R_s: float
    table: list                   # (indices, R_s)

    @property
    def evaluations(self):
        return len(self.table)


def exhaustive_placement(scn: Scenario, max_iter=ORACLE_ITERS, budget=MAX_COMBINATIONS):
    """Evaluate every spacing-feasible selection through the design pipeline."""
    cfg, geo = scn.config, scn.geo
    if comb(geo.N, cfg.N_a) > budget:
        raise DomainError(f"C({geo.N},{cfg.N_a}) exceeds the budget {budget}")
    table = []
    for combo in feasible_selections(geo.N, cfg.N_a, cfg.d, geo.grid_dims, geo.grid_spacing):
        sel = PositionSelection.from_indices(combo, geo.grid_dims, geo.grid_spacing)
        table.append((combo, evaluate_selection(scn, sel, max_iter).report.R_s))
    if not table:
        raise InfeasibleError("no spacing-feasible selection exists")
    vals = np.array([r for _, r in table])
    ib, iw = int(np.argmax(vals)), int(np.argmin(vals))
    mk = lambda i: PositionSelection.from_indices(table[i][0], geo.grid_dims, geo.grid_spacing)
    return ExhaustiveResult(mk(ib), mk(iw), float(vals[ib]), float(vals[iw]), table)


@dataclass
class RandomBaseline:
    best: float
    worst: float
    values: np.ndarray
    quantiles: dict
    selections: list


def random_selection(rng, N, N_a, d, grid_dims, spacing, max_attempts=10_000):
    """Uniform spacing-feasible draw by rejection sampling."""
    xy = grid_coordinates(grid_dims, spacing)
    for _ in range(max_attempts):
        idx = np.sort(rng.choice(N, N_a, replace=False))
        p = xy[idx]
        dd = np.sqrt(((p[:, None] - p[None]) ** 2).sum(-1))
        if N_a < 2 or dd[np.triu_indices(N_a, 1)].min() >= d * (1 - 1e-9):
            return idx
    raise InfeasibleError(f"no spacing-feasible draw after {max_attempts} attempts")


def random_placement_baseline(scn: Scenario, R, rng=None, max_iter=ORACLE_ITERS):
    """``R`` random feasible placements, each evaluated through the pipeline."""
    if R < 1:
        raise DomainError("need at least one draw")
    cfg, geo = scn.config, scn.geo
    rng = rng_stream(scn.seed, "random-placement") if rng is None else rng
    vals, sels = np.empty(R), []
    for r in range(R):
        idx = random_selection(rng, geo.N, cfg.N_a, cfg.d, geo.grid_dims, geo.grid_spacing)
        sel = PositionSelection.from_indices(idx, geo.grid_dims, geo.grid_spacing)
        vals[r] = evaluate_selection(scn, sel, max_iter).report.R_s
        sels.append(idx)
    q = {p: float(np.quantile(vals, p)) for p in (0.0, 0.25, 0.5, 0.75, 1.0)}
    return RandomBaseline(float(vals.max()), float(vals.min()), vals, q, sels)


# --------------------------------------------------------------------- Monte Carlo

@dataclass
class MonteCarloEstimate:
    a: np.ndarray
    a_se: np.ndarray
    t: np.ndarray
    t_se: np.ndarray
    b: np.ndarray
    b_se: np.ndarray
    t_e: np.ndarray
    t_e_se: np.ndarray
    z_r: np.ndarray               # sampled receive-HWI power per Bob
    z_r_expected: np.ndarray      # mu_r E|y~|^2 (analytic)
    samples: int


def _unit(rng, shape):
    return np.exp(2j * np.pi * rng.random(shape))


def _cn(rng, shape, var=1.0):
    return np.sqrt(np.asarray(var) / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _power(x):
    p = np.abs(x) ** 2
    return p.mean(0), p.std(0, ddof=1) / np.sqrt(p.shape[0])


def monte_carlo_rates(state, channels, theta, t, config, n_samples, rng=None):
    """Sample every signal component and estimate its power.

    Bob sees independent unit-modulus data ``s_i`` and AN symbols ``z_i``;
    Eve sees the AN phase-locked to the data (``z_i = zs_i s_i``), so the
    composite ``w_i`` reaches her coherently.  The receive distortion
    ``z_r ~ CN(0, mu_r E|y~|^2)`` uses the analytic undistorted power.
    """
    if n_samples < 1000:
        raise DomainError("use at least 10^3 samples")
    rng = rng_stream(0, "monte-carlo") if rng is None else rng
    t = _tvec(t)
    n, K, N = int(n_samples), state.K, t.size
    c = state.P0 / K
    theta = np.asarray(theta, complex)
    Q, Q_e = aggregated_channels(channels, theta)
    qb, qe = bob_rows(Q, state.u), eve_rows(Q_e, state.u_e)
    Rt = state_covariance(state)
    mu_r, mu_t = config.mu_r, config.mu_t
    gv = qb @ (t * state.v).T * np.sqrt(state.alpha * c)[None, :]        # (K, K)
    ga = qb @ (t * state.v_a).T * np.sqrt(state.an_power)[None, :]
    gw = qe @ (t * state.w).T                                             # (K, K)

    a, a_se = np.zeros((K, 4)), np.zeros((K, 4))
    tk, tk_se = np.zeros(K), np.zeros(K)
    zr, zr_exp = np.zeros(K), np.zeros(K)
    for k in range(K):
        s, z = _unit(rng, (n, K)), _unit(rng, (n, K))
        zt = _cn(rng, (n, N), mu_t * t * Rt)
        nk = _cn(rng, (n, channels.N_k), config.sigma2_bob)
        nr = _cn(rng, (n, channels.M), config.sigma2_ris)
        r = np.conj(theta) * (channels.F[k] @ state.u[k])
        useful = gv[k, k] * s[:, k]
        others = np.arange(K) != k
        mui = s[:, others] @ gv[k, others]
        an = z @ ga[k]
        tx = zt @ qb[k]
        th = nk @ np.conj(state.u[k])
        ris = nr @ np.conj(r)
        (pu, su), (pm, sm), (pa, sa) = _power(useful), _power(mui), _power(an)
        (pt, st), (pn, sn), (pr, sr) = _power(tx), _power(th), _power(ris)
        ey = (abs(gv[k, k]) ** 2 + np.sum(np.abs(gv[k, others]) ** 2) + np.sum(np.abs(ga[k]) ** 2)
              + mu_t * np.sum(np.abs(qb[k]) ** 2 * t * Rt) + config.sigma2_bob)
        zr_exp[k] = mu_r * ey
        zr[k] = _power(_cn(rng, n, mu_r * ey))[0]
        tk[k], tk_se[k] = pu, su
        a[k] = [mu_r * pu, (1 + mu_r) * pm, (1 + mu_r) * (pa + pn) + pr, (1 + mu_r) * pt]
        a_se[k] = [mu_r * su, (1 + mu_r) * sm, np.hypot((1 + mu_r) * np.hypot(sa, sn), sr),
                   (1 + mu_r) * st]

    b, b_se = np.zeros((K, 3)), np.zeros((K, 3))
    te, te_se = np.zeros(K), np.zeros(K)
    for k in range(K):
        s = _unit(rng, (n, K))
        zt = _cn(rng, (n, N), mu_t * t * Rt)
        ne = _cn(rng, (n, channels.N_e), config.sigma2_eve)
        nr = _cn(rng, (n, channels.M), config.sigma2_ris)
        r = np.conj(theta) * (channels.F_e @ state.u_e[k])
        others = np.arange(K) != k
        (pu, su) = _power(gw[k, k] * s[:, k])
        (pm, sm) = _power(s[:, others] @ gw[k, others])
        (pn, sn) = _power(ne @ np.conj(state.u_e[k]) + nr @ np.conj(r))
        (pt, st) = _power(zt @ qe[k])
        te[k], te_se[k] = pu, su
        b[k], b_se[k] = [pm, pn, pt], [sm, sn, st]
    return MonteCarloEstimate(a, a_se, tk, tk_se, b, b_se, te, te_se, zr, zr_exp, n)


def compare_monte_carlo(state, channels, theta, t, config, est: MonteCarloEstimate, n_se=3.0):
    """One :class:`OracleReport` per a/b/t term."""
    a, tk = bob_rate_terms(state, channels, theta, t, config)
    b, te = eve_rate_terms(state, channels, theta, t, config)
    out = []

    def add(name, ana, mc, se):
        tol = n_se * se + FLOAT_FLOOR * abs(ana) + 1e-300
        out.append(OracleReport(name, float(ana), float(mc), float(tol),
                                bool(abs(ana - mc) <= tol), est.samples))

    for k in range(state.K):
        for i in range(4):
            add(f"a[{k},{i + 1}]", a[k, i], est.a[k, i], est.a_se[k, i])
        add(f"t[{k}]", tk[k], est.t[k], est.t_se[k])
        for i in range(3):
            add(f"b[{k},{i + 1}]", b[k, i], est.b[k, i], est.b_se[k, i])
        add(f"t_e[{k}]", te[k], est.t_e[k], est.t_e_se[k])
    return out


# --------------------------------------------------------------------- suite

def run_oracle_suite(scn: Scenario, n_samples=100_000, methods=("alg2", "alg3"),
                     max_iter=ORACLE_ITERS):
    """Monte-Carlo checks on the FPA design; placement brackets when enumerable."""
    cfg, geo = scn.config, scn.geo
    fpa = full_pipeline(scn, "fpa", max_iter)
    reports = compare_monte_carlo(fpa.state, scn.true_channels, fpa.theta, fpa.selection, cfg,
                                  monte_carlo_rates(fpa.state, scn.true_channels, fpa.theta,
                                                    fpa.selection, cfg, n_samples,
                                                    rng_stream(scn.seed, "monte-carlo")))
    if comb(geo.N, cfg.N_a) <= MAX_COMBINATIONS:
        ex = exhaustive_placement(scn, max_iter)
        for m in methods:
            r = full_pipeline(scn, m, max_iter).report.R_s
            mid = 0.5 * (ex.best_R_s + ex.worst_R_s)
            half = 0.5 * (ex.best_R_s - ex.worst_R_s)
            out = OracleReport(f"bracket[{m}]", r, mid, half, ex.worst_R_s <= r <= ex.best_R_s,
                               ex.evaluations)
            reports.append(out)
    return reports
