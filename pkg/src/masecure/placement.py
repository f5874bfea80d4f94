"""Discrete MA position selection: uniform grouping and CS-based grouping."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .conic import solve_group_l1
from .exceptions import DomainError, InfeasibleError
from .geometry import grid_coordinates
from .grq import design_beamformers, grouped_grq, leakage_matrices
from .signal import (_tvec, aggregated_channels, bob_rows, eve_rows, PositionSelection)

SUPPORT_TOL = 1e-6
DIST_RTOL = 1e-9


@dataclass
class GroupPlan:
    groups: list                      # index arrays
    ssr: np.ndarray                   # SSR per group (NaN if not evaluated)
    method: str                       # uniform | cs
    selection: PositionSelection = None
    weights: np.ndarray = None        # per-candidate weights used for truncation
    evaluations: int = 0
    order: np.ndarray = field(default=None)

    def selection_matrices(self, N):
        out = []
        for g in self.groups:
            t = np.zeros(N)
            t[g] = 1
            out.append(np.diag(t))
        return out

    def group_of(self, N):
        gid = np.full(N, -1)
        for j, g in enumerate(self.groups):
            gid[g] = j
        return gid

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["group_id", "members", "ssr"])
            for j, g in enumerate(self.groups):
                wr.writerow([j, " ".join(str(int(i)) for i in g), repr(float(self.ssr[j]))])


def _coords(grid_dims, spacing):
    return grid_coordinates(grid_dims, spacing)


def min_distance_ok(t, d, grid_dims, spacing):
    """True iff every pair of selected positions is at least ``d`` apart."""
    idx = np.flatnonzero(_tvec(t))
    if idx.size < 2:
        return True
    xy = _coords(grid_dims, spacing)[idx]
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    return bool(dist[np.triu_indices(idx.size, 1)].min() >= d * (1 - DIST_RTOL))


def _conflicts(cand, chosen, xy, d):
    """Whether candidate index ``cand`` is closer than ``d`` to any of ``chosen``."""
    if not len(chosen):
        return False
    dd = np.sqrt(((xy[chosen] - xy[cand]) ** 2).sum(-1))
    return bool(np.any(dd < d * (1 - DIST_RTOL)))


def uniform_groups(N, n0, grid_dims, spacing, d):
    """``floor(N/n0)`` strided groups ``{l, l+s, ..., l+(n0-1)s}`` with ``s = floor(N/n0)``."""
    if not 1 <= n0 <= N:
        raise DomainError("group size must satisfy 1 <= n0 <= N")
    s = N // n0
    groups = [l + s * np.arange(n0) for l in range(s)]
    for g in groups:
        t = np.zeros(N)
        t[g] = 1
        if not min_distance_ok(t, d, grid_dims, spacing):
            raise DomainError(f"n0={n0} cannot tile the grid with spacing {d}")
    return groups


def rank_groups(ssr):
    """Group indices by descending SSR; ties keep the lowest index first."""
    ssr = np.asarray(ssr, float)
    return np.argsort(-ssr, kind="stable")


def select_groups(groups, ssr, N_a, d, grid_dims, spacing, weights=None):
    """Greedy fill of ``N_a`` positions from the ranked groups.

    A group is skipped when any of its members is closer than ``d`` to an
    already selected position.  Within a group members are taken in order of
    decreasing weight (ties: lowest index), which also truncates the last
    group; members conflicting with earlier members of the same group are
    dropped.
    """
    N = grid_dims[0] * grid_dims[1]
    xy = _coords(grid_dims, spacing)
    w = np.zeros(N) if weights is None else np.asarray(weights, float)
    chosen = []
    for g in rank_groups(ssr):
        members = np.asarray(groups[g], int)
        if any(_conflicts(m, chosen, xy, d) for m in members):
            continue
        taken = []
        for m in sorted(members, key=lambda i: (-w[i], i)):
            if len(chosen) + len(taken) == N_a:
                break
            if not _conflicts(m, taken, xy, d):
                taken.append(int(m))
        chosen.extend(taken)
        if len(chosen) == N_a:
            return PositionSelection.from_indices(sorted(chosen), grid_dims, spacing)
    raise InfeasibleError(f"only {len(chosen)} of N_a={N_a} spacing-feasible positions found")


def select_uniform(groups, ssr, N_a, d, grid_dims, spacing, weights=None):
    return select_groups(groups, ssr, N_a, d, grid_dims, spacing, weights)


def _group_weights(W):
    return np.sum(np.abs(np.atleast_2d(W)) ** 2, axis=0)


def _evaluate_groups(groups, channels, theta, state, config, N):
    L = leakage_matrices(channels, theta, np.ones(N), state, config)
    ssr = np.empty(len(groups))
    for j, g in enumerate(groups):
        t = np.zeros(N)
        t[g] = 1
        ssr[j] = grouped_grq(t, channels, theta, state, config, L=L)[1]
    return ssr


def algorithm2(channels, theta, state, config, geo):
    """Uniform grouping, SSR ranking and spacing-aware greedy selection.

    ``theta`` and ``state`` (receive vectors, alpha) come from a preceding
    alternating-optimization run.
    """
    N, K = geo.N, state.K
    if config.n0 < K + 1:
        raise DomainError(f"uniform groups need n0 >= K+1={K + 1}")
    groups = uniform_groups(N, config.n0, geo.grid_dims, geo.grid_spacing, config.d)
    ssr = _evaluate_groups(groups, channels, theta, state, config, N)
    W_full = design_beamformers(channels, theta, np.ones(N), state, config)
    weights = _group_weights(W_full)
    sel = select_groups(groups, ssr, config.N_a, config.d, geo.grid_dims, geo.grid_spacing,
                        weights)
    return GroupPlan(groups, ssr, "uniform", sel, weights, len(groups), rank_groups(ssr))


def cs_group_step(q_bob, targets, q_eve, active):
    """One sparse extraction: ``min sum_n ||W[n,:]||`` s.t. pattern and Eve-null equalities.

    Parameters
    ----------
    q_bob : (K, N) Bob effective rows
    targets : (K, K) pattern ``targets[k, i] = q_k w_i`` to preserve
    q_eve : (K, N) Eve effective row for each stream
    active : (N,) bool mask of candidates still available

    Returns
    -------
    (N,) per-candidate weights ``||W[n,:]||`` (zero outside ``active``).
    """
    q_bob, q_eve = np.atleast_2d(q_bob), np.atleast_2d(q_eve)
    K, N = q_bob.shape
    idx = np.flatnonzero(active)
    n = idx.size
    if n == 0:
        raise DomainError("no active candidates")
    rows, rhs = [], []
    for k in range(K):
        for i in range(K):
            r = np.zeros((n, K), complex)
            r[:, i] = q_bob[k, idx]
            rows.append(r.reshape(-1)), rhs.append(targets[k, i])
    for k in range(K):
        r = np.zeros((n, K), complex)
        r[:, k] = q_eve[k, idx]
        rows.append(r.reshape(-1)), rhs.append(0.0)
    Phi, y = np.array(rows), np.array(rhs, complex)
    scale = np.linalg.norm(Phi, axis=1)
    keep = scale > 0
    Phi, y = Phi[keep] / scale[keep, None], y[keep] / scale[keep]
    x = solve_group_l1(Phi, y, K).reshape(n, K)
    w = np.zeros(N)
    w[idx] = np.linalg.norm(x, axis=1)
    return w


def support(w, tol=SUPPORT_TOL):
    w = np.abs(np.asarray(w))
    m = w.max(initial=0.0)
    return np.flatnonzero(w > tol * m) if m > 0 else np.zeros(0, int)


def cs_groups(channels, theta, state, config, W_ref, N):
    """Extract disjoint CS groups until every candidate is grouped.

    Returns the groups (after merging those smaller than ``K+1``) and the
    per-candidate weights of the extraction that grouped them.
    """
    K = state.K
    Q, Q_e = aggregated_channels(channels, theta)
    qb, qe = bob_rows(Q, state.u), eve_rows(Q_e, state.u_e)
    active = np.ones(N, bool)
    weights = np.zeros(N)
    raw = []
    fixed_targets = qb @ W_ref.T
    L = leakage_matrices(channels, theta, np.ones(N), state, config)
    while active.any():
        idx = np.flatnonzero(active)
        if idx.size <= K:
            raw.append(idx)
            break
        if config.cs_reference == "recompute":
            W = design_beamformers(channels, theta, active.astype(float), state, config, L=L)
            targets = qb @ W.T
        else:
            targets = fixed_targets
        try:
            w = cs_group_step(qb, targets, qe, active)
        except InfeasibleError:
            raw.append(idx)
            break
        sup = support(w)
        if sup.size == 0 or sup.size == idx.size:
            weights[idx] = w[idx]
            raw.append(idx)
            break
        weights[sup] = w[sup]
        raw.append(sup)
        active[sup] = False
    groups = merge_small_groups(raw, K + 1)
    return groups, weights


def merge_small_groups(groups, min_size):
    """Merge each group smaller than ``min_size`` into the following one."""
    out, carry = [], np.zeros(0, int)
    for g in groups:
        g = np.concatenate([carry, np.asarray(g, int)])
        if g.size < min_size:
            carry = g
            continue
        out.append(np.sort(g))
        carry = np.zeros(0, int)
    if carry.size:
        if out:
            out[-1] = np.sort(np.concatenate([out[-1], carry]))
        else:
            out.append(np.sort(carry))
    return out


def algorithm3(channels, theta, state, config, geo, W_ref):
    """CS-based non-uniform grouping.

    ``W_ref`` are the full-grid beamformers from the preceding
    alternating-optimization run at ``T = I_N``; ``theta``/``state`` its
    RIS coefficients and receive vectors.
    """
    N = geo.N
    if config.N_a == N:
        sel = PositionSelection(np.ones(N, np.int8), geo.grid_dims, geo.grid_spacing)
        return GroupPlan([np.arange(N)], np.array([np.nan]), "cs", sel, _group_weights(W_ref), 0,
                         np.zeros(1, int))
    groups, weights = cs_groups(channels, theta, state, config, W_ref, N)
    ssr = _evaluate_groups(groups, channels, theta, state, config, N)
    sel = select_groups(groups, ssr, config.N_a, config.d, geo.grid_dims, geo.grid_spacing,
                        weights)
    return GroupPlan(groups, ssr, "cs", sel, weights, len(groups), rank_groups(ssr))


def nonuniform_placement(channels, theta, state, config, geo, W_ref):
    return algorithm3(channels, theta, state, config, geo, W_ref)


def fpa_selection(N_a, grid_dims, spacing):
    """Fixed-position baseline: the first ``N_a`` candidates in index order."""
    return PositionSelection.from_indices(np.arange(N_a), grid_dims, spacing)
