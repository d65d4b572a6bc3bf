import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from minkbvp import build_step_weight, custom, make_builtin, mean_value
from minkbvp.certificates import (ConstantsFailure, DegenerateBoundaryError, TheoremConstants,
                                  _all_hold, brouwer_degree_f_sharp, compute_constants, f_sharp,
                                  probe_H1, probe_H2, probe_H3, wedge_certificate)
from minkbvp.figures import cauchy_symmetric, fig1_problem, fig3_problem
from minkbvp.shooting import Problem, solve_neumann
from minkbvp.weight import neg_sup_norm, sign_partition

from oracles import degree_sign_table


def _holds(w, n, c, rho):
    R_hat = n.R_hat if n.R_hat is not None else 0.0
    return _all_hold(n, rho, c.gamma, c.delta, c.beta, c.eps, neg_sup_norm(w), R_hat)


def test_constants_power_exp_45(fig2_weight):
    c = compute_constants(fig2_weight, make_builtin("power_exp", 2, 45.0))
    assert isinstance(c, TheoremConstants)
    assert c.K == 40.0 and c.A == pytest.approx((0.25,), abs=1e-12)
    assert c.delta == (0.234375,) and c.gamma == pytest.approx((0.234375,), abs=1e-12)
    assert c.eps == pytest.approx(1 / 17, rel=1e-12)
    assert c.beta == pytest.approx((0.015625,), abs=1e-12)
    assert c.R_star == 1.0
    assert c.R == pytest.approx(3.46875, abs=1e-12)
    assert c.liminf_estimate == pytest.approx(45.0, abs=0.01)
    # alpha0 far above a double's range is still reported in the log domain
    assert math.isfinite(c.log_alpha0) and c.log_alpha0 > 100


def test_constants_fail_below_threshold(fig2_weight):
    bad = compute_constants(fig2_weight, make_builtin("power_exp", 2, 30.0))
    assert isinstance(bad, ConstantsFailure)
    assert bad.condition == "g_SE" and bad.K == 40.0
    assert bad.estimate == pytest.approx(30.0, abs=0.01)
    assert dict(bad.items())["failed_condition"] == "g_SE"


def test_constants_exp_power_reverified(fig2_weight, exp2):
    c = compute_constants(fig2_weight, exp2)
    assert c.R_star == pytest.approx(7.21927, abs=1e-4)
    assert c.delta == (0.125,) and c.eps == pytest.approx(1 / 3)
    assert c.R == pytest.approx(c.R_star + 2 * 0.125 + 2.0, abs=1e-12)
    assert all(_holds(fig2_weight, exp2, c, float(rho))
               for rho in np.linspace(c.R_star, c.R_star + 10, 100))
    assert not _holds(fig2_weight, exp2, c, c.R_star - 1e-3)


def test_items_are_flat(fig2_weight):
    c = compute_constants(fig2_weight, make_builtin("power_exp", 2, 45.0))
    keys = [k for k, _ in c.items()]
    assert keys[:5] == ["K", "A_1", "delta_1", "gamma_1", "beta_1"]
    assert "log_alpha0" in keys and len(keys) == len(set(keys))


@settings(max_examples=12, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.5, 5.0), st.floats(-20.0, -0.5), st.floats(0.5, 3.0))
def test_constants_invariants(L, a_pos, a_neg, neg_len):
    # the liminf estimate for e^{u^2} at u_max = 1000 is about 200, keep K clear of it
    assume(4 * abs(a_neg) / (a_pos * L) < 150)
    w = build_step_weight([L], [a_pos, a_neg], L + neg_len)
    c = compute_constants(w, make_builtin("exp_power", 2))
    assert isinstance(c, TheoremConstants)
    d, = c.delta
    assert 0 < d < L / 4
    assert 0 < c.eps < (L - 4 * d) / (L - 2 * d)
    assert c.beta[0] > 0
    assert c.K == pytest.approx(abs(a_neg) / c.A[0], rel=1e-12)
    assert c.R >= c.R_star + 2 * d + w.period_T - 1e-12
    assert c.gamma[0] <= c.A[0] + 1e-12


@pytest.mark.parametrize("a_neg", [-1.0, -5.0, -10.0])
def test_R_star_grows_with_negative_part(a_neg, exp2):
    one = compute_constants(build_step_weight([1.0], [1.0, a_neg], 2.0), exp2)
    two = compute_constants(build_step_weight([1.0], [1.0, 2 * a_neg], 2.0), exp2)
    assert two.R_star >= one.R_star


def test_two_positivity_intervals(exp2):
    w = build_step_weight([1, 2, 3], [2.0, -3.0, 0.5, -6.0], 4.0)
    c = compute_constants(w, exp2)
    assert len(c.delta) == len(c.A) == len(c.beta) == 2
    assert c.K == pytest.approx(6.0 / 0.125)


# -- degree ----------------------------------------------------------------------

def _random_step(rng, sign):
    n = int(rng.integers(2, 6))
    vals = rng.uniform(-5, 5, n)
    vals[0] = abs(vals[0]) + 0.1
    m = vals.sum()
    if sign * m <= 0:
        # unit-length pieces: shifting the tail moves the integral by (n - 1) times the shift
        vals[1:] += sign * (abs(m) + 1.0) / (n - 1)
    return build_step_weight(list(range(1, n)), vals.tolist(), float(n))


@pytest.mark.parametrize("seed", range(20))
def test_degree_matches_sign_table(seed, exp2):
    rng = np.random.default_rng(seed)
    w = _random_step(rng, -1)
    assert mean_value(w) < 0
    r = float(rng.uniform(1e-3, 1.0))
    deg = brouwer_degree_f_sharp(w, exp2, r)
    assert abs(deg) == 1
    assert deg == degree_sign_table(lambda s: -f_sharp(w, exp2, s), r)


@pytest.mark.parametrize("seed", range(5))
def test_degree_zero_for_positive_mean(seed, exp2):
    w = _random_step(np.random.default_rng(100 + seed), 1)
    assert mean_value(w) > 0
    assert brouwer_degree_f_sharp(w, exp2, 0.5) == 0
    assert degree_sign_table(lambda s: -f_sharp(w, exp2, s), 0.5) == 0


def test_degree_degenerate(exp2):
    w = build_step_weight([1.0], [1.0, -1.0], 2.0)
    with pytest.raises(DegenerateBoundaryError):
        brouwer_degree_f_sharp(w, exp2, 0.1)
    with pytest.raises(ValueError):
        brouwer_degree_f_sharp(w, exp2, 0.0)


# -- probes ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def fig1_literal():
    prob = fig1_problem(-10.0, 1.0)
    return prob, solve_neumann(prob, (1e-3, 3, 300))[0]


def test_probe_H1_small_r(fig1_literal):
    prob, _ = fig1_literal
    rep = probe_H1(prob, 1e-3, [0.25, 0.5, 1.0], resolution=200)
    assert rep.passed and rep.failures == 0
    assert rep.summary == "no counterexample found at resolution 200"


def test_probe_H1_planted(fig1_literal):
    prob, sol = fig1_literal
    rep = probe_H1(prob, sol.sup_norm, [1.0], resolution=200)
    assert not rep.passed
    (th, u0, sup), = rep.hits
    assert th == 1.0 and u0 == pytest.approx(sol.u0, abs=1e-9)
    assert "1 solution(s)" in rep.summary


def test_probe_H1_zero_nonlinearity():
    # every constant solves the unforced problem, so the band around r is populated
    prob = Problem(build_step_weight([1.0], [1.0, -2.0], 2.0), custom(lambda u: 0.0))
    rep = probe_H1(prob, 1e-3, [1.0], resolution=50)
    assert rep.hits
    assert all(0.9e-3 <= h[2] <= 1.1e-3 and h[1] == h[2] for h in rep.hits)


def test_probe_H2_planted(fig1_literal):
    prob, sol = fig1_literal
    assert not probe_H2(prob, sol.sup_norm, [0.0], resolution=200).passed
    assert probe_H2(prob, 3 * sol.sup_norm, [0.0], resolution=200).passed


def test_probe_H3_large_forcing(fig1_literal):
    prob, _ = fig1_literal
    rep = probe_H3(prob, 3.0, 1e3, resolution=200)
    assert rep.passed and rep.band == (0.0, 3.0)


# -- wedge -----------------------------------------------------------------------

@pytest.mark.parametrize("a_neg", [-10.0, -4.0])
@pytest.mark.parametrize("u0", [2.0, 2.2, 2.49])
def test_wedge_large_solutions(a_neg, u0):
    prob = fig3_problem(a_neg)
    rep = wedge_certificate(cauchy_symmetric(prob, u0), sign_partition(prob.weight), 0.1)
    assert rep.passed and not rep.inconclusive
    assert rep.delta == 0.25 and rep.t_hat == pytest.approx(2.0)
    assert rep.fall_max_slope <= -0.99 and rep.rise_min_slope >= 0.99


def test_wedge_fails_for_small_member():
    prob = fig3_problem(-4.0)
    rep = wedge_certificate(cauchy_symmetric(prob, 0.693648), sign_partition(prob.weight), 0.1)
    assert not rep.passed
    assert abs(rep.fall_max_slope) < 1e-5 and abs(rep.rise_min_slope) < 1e-5


def test_wedge_constant_state():
    prob = Problem(build_step_weight([1.0], [1.0, -2.0], 2.0), custom(lambda u: 0.0))
    traj = prob.shoot((0.5, 0.0))
    rep = wedge_certificate(traj, sign_partition(prob.weight), 0.1)
    assert not rep.passed
    assert rep.fall_max_slope == 0.0


def test_wedge_validation():
    prob = fig3_problem(-4.0)
    traj = cauchy_symmetric(prob, 2.2)
    for eps in (0.0, 1.0):
        with pytest.raises(ValueError):
            wedge_certificate(traj, None, eps, delta=0.1)
    with pytest.raises(ValueError):
        wedge_certificate(traj, None, 0.1)
    short = wedge_certificate(traj, None, 0.1, delta=3.0)
    assert short.inconclusive and not short.passed
