import numpy as np
import pytest

from masecure.exceptions import DomainError
from masecure.grq import design_beamformers
from masecure.phase import (PhaseStepProblem, build_phase_step, enforce_ris_budget,
                            eve_effective_rows, init_phase, solve_phase_step, to_conic,
                            update_theta, zero_step)
from masecure.signal import (BeamformerState, aggregated_channels, eve_rows, ris_power_bound,
                             ris_reflect_power)

from helpers import crandn, random_state


def test_init_phase_modes(small_scn):
    ch, cfg = small_scn.channels, small_scn.config
    assert not np.any(init_phase("none", 5))
    np.testing.assert_array_equal(init_phase("passive", 5), np.ones(5))
    np.testing.assert_array_equal(init_phase("active", 5), np.ones(5))
    assert np.isfinite(ris_power_bound(init_phase("passive", ch.M), np.ones(ch.N), ch.G,
                                       cfg.P0, cfg.sigma2_ris))
    with pytest.raises(DomainError):
        init_phase("bogus", 5)


def test_enforce_budget(small_scn):
    ch, cfg = small_scn.channels, small_scn.config
    t = np.ones(ch.N)
    th = enforce_ris_budget(np.ones(ch.M), t, ch.G, cfg.P0, cfg.sigma2_ris, cfg.P_ris)
    assert ris_power_bound(th, t, ch.G, cfg.P0, cfg.sigma2_ris) <= cfg.P_ris * (1 + 1e-12)


def _designed(rng, scn, t=None):
    cfg, ch = scn.config, scn.channels
    t = np.ones(ch.N) if t is None else t
    st = random_state(rng, cfg.K, ch.N, ch.N_k, ch.N_e, cfg.P0)
    theta = enforce_ris_budget(np.exp(1j * rng.uniform(0, 2 * np.pi, ch.M)), t, ch.G, cfg.P0,
                               cfg.sigma2_ris, cfg.P_ris)
    W = design_beamformers(ch, theta, t, st, cfg)
    return cfg, ch, BeamformerState.from_composite(W, st.u, st.u_e, cfg.P0), theta, t


def test_eve_rows_consistency_and_linearity(rng, small_scn):
    cfg, ch, st, theta, t = _designed(rng, small_scn)
    a = eve_effective_rows(ch, t, st.w, st.u_e)
    direct = np.einsum("kn,kn->k", np.conj(st.u_e) @ ch.H_e.conj().T, t * st.w)
    scale = np.sqrt(cfg.P0 / cfg.K) * np.linalg.norm(ch.H_e)
    assert np.max(np.abs(a @ theta + direct)) <= 1e-8 * scale
    w1, w2 = crandn(rng, cfg.K, ch.N), crandn(rng, cfg.K, ch.N)
    np.testing.assert_allclose(eve_effective_rows(ch, t, w1 + 2j * w2, st.u_e),
                               eve_effective_rows(ch, t, w1, st.u_e)
                               + 2j * eve_effective_rows(ch, t, w2, st.u_e), atol=1e-15)


def test_eve_rows_brute_force(rng):
    from masecure.geometry import ChannelSet
    M, N, Ne = 2, 3, 2
    ch = ChannelSet(crandn(rng, M, N), crandn(rng, 1, M, 2), crandn(rng, 1, N, 2),
                    crandn(rng, M, Ne), crandn(rng, N, Ne), 0.0, 0.0, 0.0, 0.0)
    w, u_e = crandn(rng, 1, N), crandn(rng, 1, Ne)
    a = eve_effective_rows(ch, np.ones(N), w, u_e)
    for m in range(M):
        ref = sum(np.conj(u_e[0, i]) * np.conj(ch.F_e[m, i]) for i in range(Ne)) * \
            sum(ch.G[m, n] * w[0, n] for n in range(N))
        assert a[0, m] == pytest.approx(ref, abs=1e-14)


def test_phase_step_structure(rng, small_scn):
    cfg, ch, st, theta, t = _designed(rng, small_scn)
    prob = build_phase_step(st, ch, theta, t, cfg)
    cp = to_conic(prob)
    K = cfg.K
    assert cp.A_eq.shape[0] == 2 * K + 2 * K
    assert len(cp.cones) == K + K + 1
    x0 = zero_step(prob)
    assert cp.is_feasible(x0)
    # the C8 cone at the zero step is the reflected power of the current iterate
    c8 = cp.cones[-1]
    assert np.linalg.norm(c8.A @ x0 + c8.b) ** 2 == pytest.approx(
        ris_reflect_power(theta, t, st.w, ch.G, cfg.sigma2_ris), rel=1e-12)


def test_phase_step_solution_properties(rng, small_scn):
    for _ in range(3):
        cfg, ch, st, theta, t = _designed(rng, small_scn)
        prob = build_phase_step(st, ch, theta, t, cfg)
        sol = solve_phase_step(prob)
        assert sol.xi1 >= 0
        if sol.status != "optimal":
            continue
        assert sol.violation <= 1e-7
        th = update_theta(theta, sol.theta_d)
        for k in range(cfg.K):
            before, after = abs(theta @ prob.h[k]), abs(th @ prob.h[k])
            assert after == pytest.approx((1 + sol.xi1) * before, rel=1e-6, abs=1e-12)
            assert abs(th @ prob.m[k]) <= np.sqrt(prob.xi2) * abs(theta @ prob.m[k]) * (1 + 1e-6) + 1e-15
            assert abs(th @ prob.c_hwi[k]) <= abs(theta @ prob.c_hwi[k]) * (1 + 1e-6) + 1e-15
        a = prob.a_bar
        scale = np.linalg.norm(a, axis=1) * np.linalg.norm(th)
        assert np.max(np.abs(sol.theta_d @ a.T) / scale) <= 1e-6
        _, Q_e = aggregated_channels(ch, th)
        qe = eve_rows(Q_e, st.u_e)
        for k in range(cfg.K):
            rel = abs(qe[k] @ (t * st.w[k])) / (np.linalg.norm(qe[k]) * np.linalg.norm(st.w[k]))
            assert rel <= 1e-6
        assert ris_reflect_power(th, t, st.w, ch.G, cfg.sigma2_ris) <= cfg.P_ris * (1 + 1e-6)


def _single_unit(theta=0.5 + 0.2j, D=2.0, P_ris=4.0, h=1 - 1j, a=0.0, c=0.0, xi1_max=1e3):
    z = lambda v: np.array([[v]], complex)
    return PhaseStepProblem(np.array([theta]), z(h), z(a), z(0.0), z(c), np.array([D]), P_ris,
                            1.0, xi1_max)


def test_single_unit_analytic_step():
    prob = _single_unit()
    sol = solve_phase_step(prob)
    # theta_d = xi1 theta and D |theta| (1 + xi1) = sqrt(P_RIS)
    expected = np.sqrt(prob.P_ris) / (prob.D[0] * abs(prob.theta[0])) - 1
    assert sol.status == "optimal"
    assert sol.xi1 == pytest.approx(expected, abs=1e-6)
    assert sol.theta_d[0] == pytest.approx(expected * prob.theta[0], abs=1e-6)


def test_no_alignment_saturates_bound():
    sol = solve_phase_step(_single_unit(h=0.0, xi1_max=50.0))
    assert np.isfinite(sol.xi1) and sol.xi1 == pytest.approx(50.0, abs=1e-6)


def test_infeasible_step_falls_back_to_zero():
    sol = solve_phase_step(_single_unit(P_ris=0.1))
    assert not np.any(sol.theta_d) and sol.xi1 == 0.0
    assert sol.status != "optimal" and sol.violation == np.inf


def test_update_theta():
    th = np.array([1 + 1j, 2.0])
    np.testing.assert_array_equal(update_theta(th, np.zeros(2)), th)
    with pytest.raises(DomainError):
        update_theta(th, np.zeros(3))


def test_regularized_step_is_feasible(rng, small_scn):
    cfg, ch, st, theta, t = _designed(rng, small_scn)
    prob = build_phase_step(st, ch, theta, t, cfg.replace(lambda_reg=1e-3))
    cp = to_conic(prob)
    assert cp.n == 2 * ch.M + 2 and cp.is_feasible(zero_step(prob))
    assert solve_phase_step(prob).xi1 >= 0


def test_rank_one_los_aligns_hwi_and_signal_rows(rng, small_scn):
    # with a rank-one BS-RIS channel the HWI row is a scalar multiple of the alignment row,
    # so the HWI cone caps the alignment gain at zero
    cfg, ch, st, theta, t = _designed(rng, small_scn)
    prob = build_phase_step(st, ch, theta, t, cfg)
    for k in range(cfg.K):
        h, c = prob.h[k], prob.c_hwi[k]
        assert abs(abs(np.vdot(h, c)) - np.linalg.norm(h) * np.linalg.norm(c)) <= \
            1e-9 * np.linalg.norm(h) * np.linalg.norm(c)
    assert solve_phase_step(prob).xi1 == pytest.approx(0.0, abs=1e-6)
