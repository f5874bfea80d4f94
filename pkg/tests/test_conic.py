import itertools

import numpy as np
import pytest
import scipy.optimize

from masecure.conic import (ConeBlock, ConicProblem, dump_problem, load_problem,
                            solve_conic, solve_group_l1, solve_l1_equality)
from masecure.exceptions import DomainError, InfeasibleError

from helpers import crandn, recoverable, two_sparse_supports


def ball(n, center=None, radius=1.0, extra=0):
    """``||x[:n] - center|| <= radius`` on an ``n + extra`` vector."""
    center = np.zeros(n) if center is None else center
    A = np.hstack([np.eye(n), np.zeros((n, extra))])
    return ConeBlock(A, -center, np.zeros(n + extra), radius)


def test_min_minus_x_on_unit_interval():
    rep = solve_conic(ConicProblem([-1.0], cones=[ball(1)]))
    assert rep.status == "optimal"
    assert abs(rep.x[0] - 1) <= 1e-6


@pytest.mark.parametrize("p", [[0.3, -0.2, 0.1], [2.0, -1.0, 0.5], [0.0, 0.0, 3.0]])
def test_ball_projection(p):
    p = np.array(p)
    # variables [x, s]: min s  s.t. ||x - p|| <= s, ||x|| <= 1
    e = np.zeros(4)
    e[3] = 1.0
    cones = [ConeBlock(np.hstack([np.eye(3), np.zeros((3, 1))]), -p, e, 0.0), ball(3, extra=1)]
    rep = solve_conic(ConicProblem(e, cones=cones))
    assert rep.status == "optimal"
    np.testing.assert_allclose(rep.x[:3], p / max(1.0, np.linalg.norm(p)), atol=1e-6)


def _random_socp(rng):
    n = 6
    x0 = rng.uniform(-0.3, 0.3, n)
    A = rng.standard_normal((3, n))
    cones = [ball(n, x0, 1.0),
             ConeBlock(A, -A @ x0, rng.uniform(-0.2, 0.2, n), 2.0 - rng.uniform(-0.2, 0.2, n) @ x0)]
    return ConicProblem(rng.standard_normal(n), cones=cones, lower=np.full(n, -1.0),
                        upper=np.full(n, 1.0))


def _grid_polish_oracle(prob):
    n = prob.n
    g = np.linspace(-1, 1, 7)
    pts = np.array(list(itertools.product(g, repeat=n)))
    ok = np.ones(len(pts), bool)
    for blk in prob.cones:
        ok &= np.linalg.norm(pts @ blk.A.T + blk.b, axis=1) <= pts @ blk.c + blk.d
    start = pts[ok][np.argmin(pts[ok] @ prob.c)]
    cons = [{"type": "ineq", "fun": (lambda x, b=b: b.slack(x))} for b in prob.cones]
    res = scipy.optimize.minimize(lambda x: prob.c @ x, start, jac=lambda x: prob.c,
                                  method="SLSQP", constraints=cons,
                                  bounds=list(zip(prob.lower, prob.upper)),
                                  options={"ftol": 1e-14, "maxiter": 1000})
    return res.fun


def test_random_socp_matches_grid_oracle(rng):
    for _ in range(3):
        prob = _random_socp(rng)
        rep = solve_conic(prob)
        assert rep.status == "optimal"
        assert prob.is_feasible(rep.x)
        assert abs(rep.objective - _grid_polish_oracle(prob)) <= 1e-6 * max(1, abs(rep.objective))


def test_never_worse_than_warm_start(rng):
    prob = _random_socp(rng)
    x0 = np.zeros(prob.n)
    if prob.is_feasible(x0):
        rep = solve_conic(prob, warm_start=x0)
        assert rep.objective <= prob.objective(x0) + 1e-6


def test_determinism_and_scaling_invariance(rng):
    prob = _random_socp(rng)
    r1, r2 = solve_conic(prob), solve_conic(prob)
    np.testing.assert_array_equal(r1.x, r2.x)
    scaled = ConicProblem(7.0 * prob.c, cones=prob.cones, lower=prob.lower, upper=prob.upper)
    np.testing.assert_allclose(solve_conic(scaled).x, r1.x, atol=1e-8)


def test_inconsistent_equalities_are_infeasible():
    prob = ConicProblem([1.0, 1.0], A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[1.0, 2.0],
                        cones=[ball(2, radius=5.0)])
    assert solve_conic(prob).status == "infeasible"


def test_residual_contract(rng):
    prob = _random_socp(rng)
    rep = solve_conic(prob)
    assert max(rep.primal_residual, rep.cone_residual) <= 1e-7


def test_bad_dimensions():
    with pytest.raises(DomainError):
        ConicProblem([1.0, 2.0], A_eq=[[1.0, 0.0]], b_eq=[1.0, 2.0])


def test_l1_examples():
    np.testing.assert_array_equal(solve_l1_equality(np.ones((2, 4)), np.zeros(2)), np.zeros(4))
    x = solve_l1_equality(np.array([[1.0, 1.0]]), np.array([1.0]))
    assert abs(np.abs(x).sum() - 1) <= 1e-6
    assert abs(x.sum() - 1) <= 1e-6
    with pytest.raises(InfeasibleError):
        solve_l1_equality(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))


def test_l1_recovery_small(rng):
    done = 0
    while done < 20:
        Phi = rng.standard_normal((3, 8))
        x = np.zeros(8)
        x[rng.choice(8, 2, replace=False)] = rng.uniform(0.5, 2, 2) * rng.choice([-1, 1], 2)
        if not recoverable(Phi, x):
            continue
        done += 1
        y = Phi @ x
        xh = solve_l1_equality(Phi, y)
        assert np.linalg.norm(Phi @ xh - y) <= 1e-6 * np.linalg.norm(y)
        sup = set(np.flatnonzero(np.abs(xh) > 1e-6 * np.abs(xh).max()).tolist())
        assert sup in two_sparse_supports(Phi, y)
        assert sup == set(np.flatnonzero(x).tolist())


def test_group_l1_recovers_block_sparse(rng):
    Phi = crandn(rng, 6, 16)
    x = np.zeros(16, complex)
    x[4:6] = crandn(rng, 2)
    y = Phi @ x
    xh = solve_group_l1(Phi, y, 2)
    assert np.linalg.norm(Phi @ xh - y) <= 1e-6 * np.linalg.norm(y)
    norms = np.linalg.norm(xh.reshape(8, 2), axis=1)
    assert np.flatnonzero(norms > 1e-6 * norms.max()).tolist() == [2]
    assert not np.any(solve_group_l1(Phi, np.zeros(6), 2))
    with pytest.raises(DomainError):
        solve_group_l1(Phi, y, 3)


def test_dump_load_round_trip(tmp_path, rng):
    prob = _random_socp(rng)
    prob.A_eq, prob.b_eq = rng.standard_normal((1, prob.n)), np.array([0.1])
    path = tmp_path / "p.txt"
    dump_problem(prob, path)
    assert path.read_text().startswith(f"conic-problem v1 n={prob.n} eq=1 cones=2\n")
    back = load_problem(path)
    np.testing.assert_array_equal(back.c, prob.c)
    np.testing.assert_array_equal(back.A_eq, prob.A_eq)
    np.testing.assert_array_equal(back.lower, prob.lower)
    for a, b in zip(back.cones, prob.cones):
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.b, b.b)
        assert a.d == b.d
