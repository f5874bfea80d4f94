"""Linear-objective problems with linear equalities and second-order cones.

A :class:`ConicProblem` reads

    minimize    c^T x
    subject to  A_eq x = b_eq
                ||A_i x + b_i|| <= c_i^T x + d_i     (one per cone block)
                lower <= x <= upper

The problem is reduced (equality elimination through a null-space basis,
removal of directions the inequalities never see, block equilibration) and
handed to ``cvxopt.solvers.conelp``, a primal-dual interior-point method
with Nesterov-Todd scaling.  Results are mapped back to original units.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers

from .exceptions import DomainError, InfeasibleError

MAX_ITERS = 200
FEAS_TOL = 1e-9
GAP_TOL = 1e-9
OPTIMAL_RESIDUAL = 1e-7      # scaled residual bound attached to status "optimal"
RANK_TOL = 1e-10


@dataclass
class ConeBlock:
    """``||A x + b|| <= c^T x + d``.  An empty ``A`` encodes ``c^T x + d >= 0``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, float).reshape(-1)
        self.A = np.asarray(self.A, float).reshape(-1, self.c.size)
        self.b = np.asarray(self.b, float).reshape(-1)
        self.d = float(self.d)
        if self.b.size != self.A.shape[0]:
            raise DomainError("cone offset length does not match its matrix")

    def slack(self, x):
        return self.c @ x + self.d - np.linalg.norm(self.A @ x + self.b)

    def scaled_violation(self, x):
        ax = self.A @ x
        scale = np.linalg.norm(ax) + np.linalg.norm(self.b) + abs(self.c @ x) + abs(self.d)
        return max(0.0, -self.slack(x)) / max(scale, 1e-300)


@dataclass
class ConicProblem:
    c: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    cones: list = field(default_factory=list)
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, float).reshape(-1)
        n = self.c.size
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.A_eq = np.asarray(self.A_eq, float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, float).reshape(-1)
        if self.b_eq.size != self.A_eq.shape[0]:
            raise DomainError("equality rhs length mismatch")
        for blk in self.cones:
            if blk.c.size != n:
                raise DomainError("cone block width does not match variable count")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise DomainError("bounds must have one entry per variable")

    @property
    def n(self):
        return self.c.size

    def objective(self, x):
        return float(self.c @ x)

    def residuals(self, x):
        """(equality, cone, bound) residuals in scaled units."""
        x = np.asarray(x, float)
        eq = 0.0
        if self.A_eq.shape[0]:
            r = np.abs(self.A_eq @ x - self.b_eq)
            scale = np.linalg.norm(self.A_eq, axis=1) * np.linalg.norm(x) + np.abs(self.b_eq)
            eq = float(np.max(r / np.maximum(scale, 1e-300)))
        cone = max([blk.scaled_violation(x) for blk in self.cones], default=0.0)
        bnd = np.maximum(self.lower - x, x - self.upper)
        bnd = float(max(0.0, np.max(bnd / (1.0 + np.abs(x))))) if x.size else 0.0
        return eq, cone, bnd

    def is_feasible(self, x, tol=OPTIMAL_RESIDUAL):
        return max(self.residuals(x)) <= tol


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    status: str                 # optimal | max_iter | infeasible | unbounded
    primal_residual: float
    cone_residual: float
    iterations: int
    duals: list = None          # one multiplier vector per cone block, [t; z] layout


def _inequality_system(prob):
    """Stack everything into ``G x + s = h`` with blocks (kind, rows)."""
    G_rows, h_rows, dims, owners = [], [], [], []
    n = prob.n
    for i in range(n):
        if np.isfinite(prob.lower[i]):
            row = np.zeros(n)
            row[i] = -1.0
            G_rows.append(row[None]), h_rows.append([-prob.lower[i]])
            dims.append(("l", 1)), owners.append(None)
        if np.isfinite(prob.upper[i]):
            row = np.zeros(n)
            row[i] = 1.0
            G_rows.append(row[None]), h_rows.append([prob.upper[i]])
            dims.append(("l", 1)), owners.append(None)
    for j, blk in enumerate(prob.cones):
        G = -np.vstack([blk.c[None], blk.A])
        h = np.concatenate([[blk.d], blk.b])
        G_rows.append(G), h_rows.append(h)
        dims.append(("l", 1) if blk.A.shape[0] == 0 else ("q", G.shape[0]))
        owners.append(j)
    return G_rows, h_rows, dims, owners


def _block_ok(h, kind):
    if kind == "l":
        return h[0] >= -1e-12 * max(1.0, abs(h[0]))
    return h[0] >= np.linalg.norm(h[1:]) - 1e-12 * max(1.0, abs(h[0]))


def _report(prob, x, status, iters, duals=None):
    eq, cone, bnd = prob.residuals(x)
    return SolveReport(x, prob.objective(x), status, eq, max(cone, bnd), iters, duals)


def solve_conic(prob: ConicProblem, warm_start=None, max_iters=MAX_ITERS):
    """Solve a :class:`ConicProblem`; deterministic for fixed inputs."""
    n = prob.n
    # equality elimination: x = x0 + Z y
    A, b = prob.A_eq, prob.b_eq
    if A.shape[0]:
        rn = np.linalg.norm(A, axis=1)
        keep = rn > 0
        if np.any(~keep & (np.abs(b) > 0)):
            return SolveReport(np.zeros(n), np.nan, "infeasible", np.inf, np.inf, 0)
        A, b = A[keep] / rn[keep, None], b[keep] / rn[keep]
    if A.shape[0]:
        U, S, Vt = np.linalg.svd(A)
        r = int(np.sum(S > RANK_TOL * S[0]))
        x0 = Vt[:r].T @ ((U[:, :r].T @ b) / S[:r])
        if np.linalg.norm(A @ x0 - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
            return SolveReport(x0, np.nan, "infeasible", np.inf, np.inf, 0)
        Z = Vt[r:].T
    else:
        x0, Z = np.zeros(n), np.eye(n)

    G_rows, h_rows, dims, owners = _inequality_system(prob)
    Gs = [g @ Z for g in G_rows]
    hs = [h - g @ x0 for g, h in zip(G_rows, h_rows)]
    cz = Z.T @ prob.c

    # directions invisible to every inequality
    if Z.shape[1]:
        Gall = np.vstack(Gs) if Gs else np.zeros((0, Z.shape[1]))
        if Gall.shape[0]:
            _, S, Vt = np.linalg.svd(Gall)
            r = int(np.sum(S > RANK_TOL * max(S[0], 1e-300))) if S.size and S[0] > 0 else 0
        else:
            r, Vt = 0, np.eye(Z.shape[1])
        V1, V0 = Vt[:r].T, Vt[r:].T
        if V0.shape[1] and np.linalg.norm(V0.T @ cz) > 1e-9 * max(np.linalg.norm(cz), 1e-300):
            return SolveReport(x0, -np.inf, "unbounded", np.inf, np.inf, 0)
        Gs = [g @ V1 for g in Gs]
        cz = V1.T @ cz
        basis = Z @ V1
    else:
        basis = Z
    m = basis.shape[1]

    def duals_from(zblocks):
        out = [None] * len(prob.cones)
        for zb, own in zip(zblocks, owners):
            if own is not None:
                out[own] = zb
        return out

    if m == 0:
        ok = all(_block_ok(h, kind) for h, (kind, _) in zip(hs, dims))
        return _report(prob, x0, "optimal" if ok else "infeasible", 0)

    # block equilibration; constant blocks are checked and dropped
    lin_G, lin_h, lin_s, lin_idx = [], [], [], []
    soc_G, soc_h, soc_s, soc_idx = [], [], [], []
    for i, (g, h, (kind, _)) in enumerate(zip(Gs, hs, dims)):
        scale = np.max(np.linalg.norm(g, axis=1))
        if scale <= 1e-14 * max(1.0, np.max(np.abs(h))):
            if not _block_ok(h, kind):
                return _report(prob, x0, "infeasible", 0)
            continue
        s = 1.0 / scale
        if kind == "l":
            lin_G.append(g * s), lin_h.append(h * s), lin_s.append(s), lin_idx.append(i)
        else:
            soc_G.append(g * s), soc_h.append(h * s), soc_s.append(s), soc_idx.append(i)
    cscale = np.linalg.norm(cz)
    cn = cz / cscale if cscale > 0 else cz
    Gm = np.vstack(lin_G + soc_G)
    hm = np.concatenate(lin_h + soc_h)
    cone_dims = {"l": len(lin_G), "q": [g.shape[0] for g in soc_G], "s": []}
    opts = {"show_progress": False, "maxiters": int(max_iters), "abstol": GAP_TOL,
            "reltol": GAP_TOL, "feastol": FEAS_TOL, "refinement": 2}
    try:
        sol = solvers.conelp(matrix(cn), matrix(Gm), matrix(hm), cone_dims, options=opts)
    except (ArithmeticError, ValueError) as exc:
        sol = {"status": "unknown", "x": None, "iterations": max_iters, "error": str(exc)}
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(sol["status"], "max_iter")
    iters = int(sol.get("iterations", 0))

    if status in ("infeasible", "unbounded") or sol.get("x") is None:
        if warm_start is not None and prob.is_feasible(warm_start):
            return _report(prob, np.asarray(warm_start, float), "max_iter", iters)
        return SolveReport(x0, np.nan if status != "unbounded" else -np.inf,
                           status if status != "optimal" else "max_iter", np.inf, np.inf, iters)

    y = np.array(sol["z"]).reshape(-1) if sol.get("z") is not None else None
    x = x0 + basis @ np.array(sol["x"]).reshape(-1)
    zblocks = [None] * len(dims)
    if y is not None:
        pos = 0
        for s, i in zip(lin_s, lin_idx):
            zblocks[i] = y[pos:pos + 1] * s * cscale
            pos += 1
        for g, s, i in zip(soc_G, soc_s, soc_idx):
            zblocks[i] = y[pos:pos + g.shape[0]] * s * cscale
            pos += g.shape[0]
        for i, (kind, size) in enumerate(dims):
            if zblocks[i] is None:
                zblocks[i] = np.zeros(size)
    rep = _report(prob, x, status, iters, duals_from(zblocks))
    if rep.status == "optimal" and max(rep.primal_residual, rep.cone_residual) > OPTIMAL_RESIDUAL:
        rep.status = "max_iter"
    if warm_start is not None and prob.is_feasible(warm_start):
        ws = np.asarray(warm_start, float)
        obj_scale = max(1.0, abs(prob.objective(ws)))
        if rep.status != "optimal" or rep.objective > prob.objective(ws) + 1e-6 * obj_scale:
            return _report(prob, ws, rep.status, iters)
    return rep


def solve_l1_equality(Phi, y, nonneg=False):
    """Basis pursuit: ``min ||x||_1`` s.t. ``Phi x = y`` (real data).

    Raises
    ------
    InfeasibleError
        If ``y`` is not in the range of ``Phi``.
    """
    Phi = np.atleast_2d(np.asarray(Phi, float))
    y = np.asarray(y, float).reshape(-1)
    p, n = Phi.shape
    if y.size != p:
        raise DomainError("Phi and y disagree in length")
    if nonneg:
        prob = ConicProblem(np.ones(n), Phi, y, lower=np.zeros(n))
        rep = solve_conic(prob)
        x = rep.x if rep.status in ("optimal", "max_iter") else None
    else:
        # variables [x, s]; |x_i| <= s_i as two linear rows
        c = np.concatenate([np.zeros(n), np.ones(n)])
        A = np.hstack([Phi, np.zeros((p, n))])
        cones = []
        for i in range(n):
            e = np.zeros(2 * n)
            e[n + i], e[i] = 1.0, -1.0
            cones.append(ConeBlock(np.zeros((0, 2 * n)), [], e.copy(), 0.0))
            e[i] = 1.0
            cones.append(ConeBlock(np.zeros((0, 2 * n)), [], e, 0.0))
        rep = solve_conic(ConicProblem(c, A, y, cones))
        x = rep.x[:n] if rep.status in ("optimal", "max_iter") else None
    if x is None:
        raise InfeasibleError(f"basis pursuit {rep.status}")
    return _polish(Phi, y, x)


def _polish(Phi, y, x):
    res = y - Phi @ x
    if np.linalg.norm(res) > 1e-9 * max(np.linalg.norm(y), 1e-300):
        x = x + np.linalg.lstsq(Phi, res, rcond=None)[0]
    if np.linalg.norm(Phi @ x - y) > 1e-6 * max(np.linalg.norm(y), 1e-300) + 1e-300:
        raise InfeasibleError("equality system could not be satisfied")
    return x


def solve_group_l1(Phi, y, group_size):
    """``min sum_n ||x_n||_2`` s.t. ``Phi x = y`` for complex data.

    ``x`` is split into consecutive groups of ``group_size`` complex entries.
    The dual (one real variable per real equation, one cone per group) is
    solved and the primal groups are read off the cone multipliers.

    Returns
    -------
    x : complex ndarray
    """
    Phi = np.atleast_2d(np.asarray(Phi, complex))
    y = np.asarray(y, complex).reshape(-1)
    p, n = Phi.shape
    if n % group_size:
        raise DomainError("column count is not a multiple of the group size")
    if not np.any(y):
        return np.zeros(n, complex)
    # real embedding of Phi acting on [Re x; Im x] interleaved per group
    Pr = np.block([[Phi.real, -Phi.imag], [Phi.imag, Phi.real]])
    yr = np.concatenate([y.real, y.imag])
    ng = n // group_size
    cones = []
    cols = []
    for g in range(ng):
        idx = np.arange(g * group_size, (g + 1) * group_size)
        cg = np.concatenate([idx, idx + n])
        cols.append(cg)
        cones.append(ConeBlock(Pr[:, cg].T, np.zeros(cg.size), np.zeros(2 * p), 1.0))
    rep = solve_conic(ConicProblem(-yr, cones=cones))
    if rep.status == "unbounded":
        raise InfeasibleError("group basis pursuit infeasible")
    if rep.status not in ("optimal", "max_iter") or rep.duals is None:
        raise InfeasibleError(f"group basis pursuit {rep.status}")
    xr = np.zeros(2 * n)
    for cg, z in zip(cols, rep.duals):
        xr[cg] = -z[1:]
    x = xr[:n] + 1j * xr[n:]
    return _polish(Phi, y, x)


def dump_problem(prob: ConicProblem, path):
    """Write a problem to a self-describing text file (see README)."""
    with open(path, "w") as fh:
        fh.write(f"conic-problem v1 n={prob.n} eq={prob.A_eq.shape[0]} cones={len(prob.cones)}\n")
        fmt = lambda v: " ".join(repr(float(t)) for t in np.ravel(v))
        fh.write(f"c {fmt(prob.c)}\n")
        fh.write(f"lower {fmt(prob.lower)}\n")
        fh.write(f"upper {fmt(prob.upper)}\n")
        for row, rhs in zip(prob.A_eq, prob.b_eq):
            fh.write(f"eq {fmt(row)} | {float(rhs)!r}\n")
        for j, blk in enumerate(prob.cones):
            fh.write(f"cone {j} rows={blk.A.shape[0]} d={blk.d!r}\n")
            fh.write(f"  c {fmt(blk.c)}\n")
            for row, off in zip(blk.A, blk.b):
                fh.write(f"  A {fmt(row)} | {float(off)!r}\n")


def load_problem(path):
    """Inverse of :func:`dump_problem`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    vec = lambda s: np.array([float(t) for t in s.split()]) if s.strip() else np.zeros(0)
    c = vec(lines[1][2:])
    lower, upper = vec(lines[2][6:]), vec(lines[3][6:])
    A_eq, b_eq, cones = [], [], []
    i = 4
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("eq "):
            lhs, rhs = ln[3:].split("|")
            A_eq.append(vec(lhs)), b_eq.append(float(rhs))
            i += 1
        elif ln.startswith("cone "):
            head = dict(kv.split("=") for kv in ln.split()[2:])
            rows, d = int(head["rows"]), float(head["d"])
            cc = vec(lines[i + 1].strip()[2:])
            A, b = [], []
            for ln2 in lines[i + 2:i + 2 + rows]:
                lhs, rhs = ln2.strip()[2:].split("|")
                A.append(vec(lhs)), b.append(float(rhs))
            cones.append(ConeBlock(np.array(A).reshape(rows, c.size), b, cc, d))
            i += 2 + rows
        else:
            i += 1
    A_eq = np.array(A_eq).reshape(-1, c.size)
    return ConicProblem(c, A_eq, np.array(b_eq), cones, lower, upper)
