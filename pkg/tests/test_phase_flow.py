import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minkbvp import build_step_weight, custom, make_builtin
from minkbvp.figures import cauchy_symmetric, fig3_problem, write_csv
from minkbvp.phase_flow import (BlowUpError, HomotopyParams, PhaseState, StiffnessError,
                                energy, integrate, phi, phi_inv)

from oracles import reference_flow

FIG1_ROOT = 0.99166876  # lam = 1 Neumann value for the literal Fig. 1 weight


def test_phi_examples():
    assert phi(0.0) == 0.0
    assert phi(0.6) == pytest.approx(0.75, rel=1e-15)
    assert phi(-0.8) == pytest.approx(-4 / 3, rel=1e-15)
    for s in (1.0, -1.0, 1.5):
        with pytest.raises(ValueError):
            phi(s)


def test_phi_inv_examples():
    assert phi_inv(0.75) == pytest.approx(0.6, rel=1e-15)
    assert phi_inv(0.0) == 0.0
    # 1 - 1e-9**2/2 is not a double; the closest value strictly below 1 is returned
    assert phi_inv(1e9) == math.nextafter(1.0, 0.0)
    assert phi_inv(-1e300) == -math.nextafter(1.0, 0.0)
    assert 1 - 1e-15 < phi_inv(1e9) < 1


@given(st.floats(-0.999999, 0.999999))
def test_phi_round_trip_and_odd(s):
    assert phi_inv(phi(s)) == pytest.approx(s, abs=1e-14)
    assert phi(-s) == -phi(s)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_phi_monotone(a, b):
    if a < b:
        assert phi_inv(a) <= phi_inv(b)


def test_homotopy_params_validation():
    HomotopyParams(0.0, 0.0, 1e-9)
    for bad in ((1.5, 0, 1), (-0.1, 0, 1), (1, -1, 1), (1, 0, 0)):
        with pytest.raises(ValueError):
            HomotopyParams(*bad)


def test_energy_examples():
    sq = make_builtin("power", 2)
    assert energy(PhaseState(0.0, 0.0), sq, 5.0) == 1.0
    assert energy(PhaseState(1.0, 0.0), sq, 1.0, 1.0) == pytest.approx(1 + 1 / 3, rel=1e-15)


def test_free_motion():
    w = build_step_weight([], [0.0], 1.0)
    tr = integrate(w, make_builtin("exp_power", 2), s0=(1.0, 0.5), t_span=(0.0, 1.0))
    us, vs = tr.sample(np.linspace(0, 1, 11))
    assert np.allclose(vs, 0.5, atol=1e-15)
    assert np.allclose(us, 1.0 + phi_inv(0.5) * np.linspace(0, 1, 11), atol=1e-13)


def test_zero_nonlinearity_is_affine(fig2_weight):
    tr = integrate(fig2_weight, custom(lambda u: 0.0), s0=(2.0, -0.3))
    assert all(v == -0.3 for v in tr.v)
    assert tr.end.u == pytest.approx(2.0 + 2 * phi_inv(-0.3), abs=1e-13)


def test_red_member_endpoint():
    # the plotted red curve is a Neumann solution of the a = -4 weight
    traj = cauchy_symmetric(fig3_problem(-4.0), 0.693648)
    assert traj(4.0).u == pytest.approx(0.267815, abs=5e-6)
    assert abs(traj(4.0).v) < 1e-5
    assert traj(0.0).u == pytest.approx(traj(4.0).u, abs=1e-9)


def test_breakpoints_are_nodes():
    w = build_step_weight([0.3, 1.1, 1.7], [1.0, -2.0, 3.0, -5.0], 2.0)
    tr = integrate(w, make_builtin("power", 2), s0=(0.5, 0.0))
    for b in (0.0, 0.3, 1.1, 1.7, 2.0):
        assert b in tr.t
    assert all(b > a for a, b in zip(tr.t, tr.t[1:]))
    back = integrate(w, make_builtin("power", 2), s0=tr.end, t_span=(2.0, 0.0))
    for b in (0.0, 0.3, 1.1, 1.7, 2.0):
        assert b in back.t


def test_dense_output_matches_nodes(fig2_weight, exp2):
    tr = integrate(fig2_weight, exp2, s0=(FIG1_ROOT, 0.0))
    for t, u, v in zip(tr.t, tr.u, tr.v):
        s = tr(t)
        assert abs(s.u - u) <= 1e-13 and abs(s.v - v) <= 1e-13 * max(1, abs(v))
    us, vs = tr.sample(tr.t)
    assert np.allclose(us, tr.u, atol=1e-13, rtol=0)
    with pytest.raises(ValueError):
        tr(2.5)


@pytest.mark.parametrize("u0", [0.3, FIG1_ROOT, 1.8])
def test_energy_conserved_per_piece(fig2_weight, exp2, u0):
    tr = integrate(fig2_weight, exp2, s0=(u0, 0.0))
    for lo, hi, a in ((0.0, 1.0, 1.0), (1.0, 2.0, -10.0)):
        E = [energy(PhaseState(u, v), exp2, a) for t, u, v in zip(tr.t, tr.u, tr.v)
             if lo <= t <= hi and u >= 0]
        drift = max(E) - min(E)
        assert drift < 1e-9
        assert drift <= 100 * 1e-10 * (hi - lo) * max(1.0, max(map(abs, E)))


def test_energy_conserved_power_exp():
    w = build_step_weight([1.0], [1.0, -10.0], 2.0)
    n = make_builtin("power_exp", 2, 1.0)
    tr = integrate(w, n, s0=(2.412493115, 0.0))
    for lo, hi, a in ((0.0, 1.0, 1.0), (1.0, 2.0, -10.0)):
        E = [energy(PhaseState(u, v), n, a) for t, u, v in zip(tr.t, tr.u, tr.v)
             if lo <= t <= hi]
        assert max(E) - min(E) <= 100 * 1e-10 * max(map(abs, E))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-2.0, 2.0))
def test_time_reversal(u0, v0):
    w = build_step_weight([1.0], [1.0, -10.0], 2.0)
    n = make_builtin("exp_power", 2)
    fwd = integrate(w, n, s0=(u0, v0))
    back = integrate(w, n, s0=fwd.end, t_span=(2.0, 0.0))
    scale = 1 + max(map(abs, fwd.v))
    assert abs(back.end.u - u0) < 1e-8
    assert abs(back.end.v - v0) < 1e-8 * scale


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(-50.0, 50.0))
def test_slope_bound_on_dense_samples(u0, v0):
    w = build_step_weight([1.0], [1.0, -10.0], 2.0)
    tr = integrate(w, make_builtin("exp_power", 2), s0=(u0, v0))
    _, vs = tr.sample(np.linspace(0, 2, 401))
    slopes = vs / np.hypot(1.0, vs)
    assert np.all(np.abs(slopes) < 1)


@pytest.mark.parametrize("u0, v0", [(0.5, 0.0), (FIG1_ROOT, 0.0), (1.4, -0.7), (-0.2, 0.4)])
def test_matches_scipy_reference(fig2_weight, exp2, u0, v0):
    tr = integrate(fig2_weight, exp2, s0=(u0, v0))
    g = lambda u: math.expm1(u * u)  # noqa: E731
    u_ref, v_ref = reference_flow([1.0, -10.0], [1.0], 2.0, g, (u0, v0), (0.0, 2.0))
    assert tr.end.u == pytest.approx(u_ref, abs=1e-8)
    assert tr.end.v == pytest.approx(v_ref, abs=1e-8 * (1 + abs(v_ref)))


def test_convergence_order(fig2_weight, exp2):
    ref = integrate(fig2_weight, exp2, s0=(FIG1_ROOT, 0.0), tol=(1e-13, 1e-15))
    hs, errs = [], []
    for rtol in (1e-5, 3e-6, 1e-6, 3e-7, 1e-7, 3e-8):
        tr = integrate(fig2_weight, exp2, s0=(FIG1_ROOT, 0.0), tol=(rtol, rtol * 1e-2),
                       max_step=10.0)
        hs.append(2.0 / tr.stats["steps"])
        errs.append(math.hypot(tr.end.u - ref.end.u, tr.end.v - ref.end.v))
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 4
    assert errs[-1] < errs[0]


def test_join_matches_direct_run():
    prob = fig3_problem(-4.0)
    joined = cauchy_symmetric(prob, 1.2)
    direct = prob.shoot(joined.start, (0.0, 4.0))
    ts = np.linspace(0, 4, 97)
    ju, jv = joined.sample(ts)
    du, dv = direct.sample(ts)
    assert np.max(np.abs(ju - du)) < 1e-8
    assert np.max(np.abs(jv - dv)) < 1e-8
    # symmetric weight and even initial data give an even solution
    assert np.max(np.abs(ju - ju[::-1])) < 1e-9


def test_extensions_differ_only_below_zero(fig2_weight, exp2):
    a = integrate(fig2_weight, exp2, s0=(0.5, 0.0), extension="negative_part")
    b = integrate(fig2_weight, exp2, s0=(0.5, 0.0), extension="zero")
    assert a.end == b.end  # stays positive, identical field
    c = integrate(fig2_weight, exp2, s0=(0.0, -2.0), extension="negative_part")
    d = integrate(fig2_weight, exp2, s0=(0.0, -2.0), extension="zero")
    assert c.end.v != d.end.v
    with pytest.raises(ValueError):
        integrate(fig2_weight, exp2, extension="other")


def test_forcing_on_positivity_set(fig2_weight):
    # with g = 0 and u > 0 only the forcing acts: v drops by alpha on [0, 1], then stays put
    tr = integrate(fig2_weight, custom(lambda u: 0.0), HomotopyParams(alpha=3.0), s0=(5.0, 0.2))
    assert tr(0.5).v == pytest.approx(0.2 - 1.5, abs=1e-13)
    assert tr.end.v == pytest.approx(0.2 - 3.0, abs=1e-13)
    half = integrate(fig2_weight, custom(lambda u: 0.0), HomotopyParams(theta=0.5, alpha=3.0),
                     s0=(5.0, 0.2))
    assert half.end.v == pytest.approx(0.2 - 1.5, abs=1e-13)
    custom_w = integrate(fig2_weight, custom(lambda u: 0.0), HomotopyParams(alpha=1.0),
                         forcing_w=lambda t: 2.0, s0=(5.0, 0.0))
    assert custom_w.end.v == pytest.approx(-4.0, abs=1e-13)


def test_blow_up_reports_time(fig2_weight, exp2):
    with pytest.raises(BlowUpError) as exc:
        integrate(fig2_weight, exp2, s0=(30.0, 0.0))
    assert exc.value.t_last == 0.0


def test_step_underflow():
    w = build_step_weight([], [1.0], 1.0)
    n = custom(lambda u: u if u < 0.5 else 1e12 * u)
    with pytest.raises(StiffnessError):
        integrate(w, n, s0=(0.4, 0.5))


def test_trajectory_csv(tmp_path, fig2_weight, exp2):
    tr = integrate(fig2_weight, exp2, s0=(FIG1_ROOT, 0.0))
    rows = tr.to_csv_rows(21)
    assert len(rows) == 21 and all(len(r) == 4 for r in rows)
    assert rows[0][0] == 0.0 and rows[-1][0] == 2.0
    for t, u, up, v in rows:
        assert up == pytest.approx(phi_inv(v))
    path = write_csv(tmp_path / "traj.csv", ["t", "u", "uprime", "v"], rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,u,uprime,v"
    assert {len(line.split(",")) for line in lines} == {4}


def test_shifted_and_max_point(fig2_weight, exp2):
    tr = integrate(fig2_weight, exp2, s0=(FIG1_ROOT, 0.0))
    t_max, u_max = tr.max_point()
    assert t_max == pytest.approx(0.0, abs=1e-12) and u_max == pytest.approx(FIG1_ROOT)
    sh = tr.shifted(1.0)
    assert sh(1.3).u == pytest.approx(tr(1.3).u + 1.0)
