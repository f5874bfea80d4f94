import itertools
import math

import numpy as np
import pytest

from masecure.exceptions import DomainError
from masecure.geometry import grid_coordinates
from masecure.oracle import (MAX_COMBINATIONS, compare_monte_carlo, exhaustive_placement,
                             feasible_selections, monte_carlo_rates, random_placement_baseline,
                             run_oracle_suite, write_reports)
from masecure.pipeline import full_pipeline, rng_stream

from helpers import DESK, SMALL, TOY, crandn, random_state, scenario

D = 0.01


def test_feasible_selections_counts():
    assert len(list(feasible_selections(6, 2, D, (2, 3), D))) == 15
    # spacing 1.5 D excludes the 7 adjacent and 4 diagonal pairs of a 2x3 grid
    assert len(list(feasible_selections(6, 2, 1.5 * D, (2, 3), D))) == 4
    xy = grid_coordinates((2, 5), D)
    d = 1.5 * D
    brute = sum(all(np.linalg.norm(xy[i] - xy[j]) >= d for i, j in itertools.combinations(c, 2))
                for c in itertools.combinations(range(10), 3))
    assert len(list(feasible_selections(10, 3, d, (2, 5), D))) == brute


def test_exhaustive_small_grid():
    scn = scenario(SMALL, N_a=3, geometry={"grid_dims": [2, 3]})
    ex = exhaustive_placement(scn, max_iter=3)
    assert ex.evaluations == math.comb(6, 3)
    assert ex.worst_R_s <= ex.best_R_s
    assert ex.best.count == 3
    assert max(r for _, r in ex.table) == ex.best_R_s


def test_exhaustive_budget():
    with pytest.raises(DomainError):
        exhaustive_placement(scenario(SMALL), budget=10)
    assert MAX_COMBINATIONS == 100_000


def test_random_baseline_single_draw_and_growth():
    scn = scenario(SMALL)
    one = random_placement_baseline(scn, 1, rng_stream(1, "random-placement"), max_iter=3)
    assert one.best == one.worst == one.values[0]
    few = random_placement_baseline(scn, 3, rng_stream(1, "random-placement"), max_iter=3)
    more = random_placement_baseline(scn, 8, rng_stream(1, "random-placement"), max_iter=3)
    np.testing.assert_array_equal(few.values, more.values[:3])
    assert one.best <= few.best <= more.best
    assert more.quantiles[0.0] == more.worst and more.quantiles[1.0] == more.best
    with pytest.raises(DomainError):
        random_placement_baseline(scn, 0)


def _mc_state(rng, scn, P0=None):
    cfg, ch = scn.config, scn.channels
    P0 = cfg.P0 if P0 is None else P0
    st = random_state(rng, cfg.K, ch.N, ch.N_k, ch.N_e, P0)
    return st, 0.3 * crandn(rng, ch.M), np.ones(ch.N)


def test_monte_carlo_zero_power(rng, small_scn):
    st, theta, t = _mc_state(rng, small_scn, P0=0.0)
    est = monte_carlo_rates(st, small_scn.channels, theta, t, small_scn.config, 1000)
    assert np.all(est.t == 0) and np.all(est.t_e == 0)
    assert np.all(est.a[:, 2] > 0)          # noise survives


def test_monte_carlo_power_linearity(rng, small_scn):
    cfg = small_scn.config.replace(mu_t=0.0, mu_r=0.0)
    st, theta, t = _mc_state(rng, small_scn)
    st2 = st.copy(P0=2 * st.P0)
    e1 = monte_carlo_rates(st, small_scn.channels, theta, t, cfg, 1000, rng_stream(0, "mc"))
    e2 = monte_carlo_rates(st2, small_scn.channels, theta, t, cfg, 1000, rng_stream(0, "mc"))
    np.testing.assert_allclose(e2.t, 2 * e1.t, rtol=1e-12)
    np.testing.assert_allclose(e2.a[:, 1], 2 * e1.a[:, 1], rtol=1e-12)


def test_monte_carlo_matches_analytic(rng, small_scn):
    st, theta, t = _mc_state(rng, small_scn)
    cfg, ch = small_scn.config, small_scn.channels
    coarse = monte_carlo_rates(st, ch, theta, t, cfg, 1000, rng_stream(0, "mc"))
    fine = monte_carlo_rates(st, ch, theta, t, cfg, 100_000, rng_stream(1, "mc"))
    reps = compare_monte_carlo(st, ch, theta, t, cfg, fine)
    assert all(r.passed for r in reps), [r for r in reps if not r.passed]
    # standard errors shrink like 1/sqrt(n)
    ratio = coarse.t_se / fine.t_se
    assert np.all((ratio > 5) & (ratio < 20))
    np.testing.assert_allclose(fine.z_r, fine.z_r_expected, rtol=0.05)
    with pytest.raises(DomainError):
        monte_carlo_rates(st, ch, theta, t, cfg, 10)


def test_oracle_suite_on_toy(tmp_path):
    scn = scenario(TOY, N_a=3, max_iter=3, geometry={"grid_dims": [2, 3]})
    reps = run_oracle_suite(scn, n_samples=20_000, max_iter=3)
    assert {r.quantity for r in reps} >= {"t[0]", "t_e[1]", "bracket[alg2]", "bracket[alg3]"}
    assert all(r.passed for r in reps)
    p = tmp_path / "oracle.csv"
    write_reports(reps, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "quantity,analytic,oracle,tolerance,passed,samples"
    assert len(lines) == len(reps) + 1


def test_regression_desk_fpa_seed0():
    r = full_pipeline(scenario(DESK, seed=0), "fpa").report
    assert r.R_U == pytest.approx(5.541017172916128, rel=1e-6)
    assert r.R_E == pytest.approx(0.23643930323968315, rel=1e-6)
    assert r.R_s == pytest.approx(5.304577869676445, rel=1e-6)


def test_regression_small_alg3_seed0():
    res = full_pipeline(scenario(SMALL, seed=0), "alg3")
    assert res.selection.indices.tolist() == [0, 3, 6, 17, 20, 23]
    assert res.report.R_s == pytest.approx(9.724814627273993, rel=1e-6)
