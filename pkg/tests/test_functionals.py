import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksfluid import functionals as fn
from ksfluid.core import GaussianSpec, ModelParams, gaussian_state, make_grid
from ksfluid.poisson import solve_fft

PI = math.pi
EULER_GAMMA = 0.5772156649015329


def gaussian_record(M, sigma=1.0, L=8.0, n=128):
    g = make_grid(L, n)
    d = gaussian_state(g, GaussianSpec(M, sigma))
    return fn.diagnostics(d.state, solve_fft(d.state.rho_field), 0.0, d.params)


def test_gaussian_diagnostics():
    M = 4 * PI
    r = gaussian_record(M)
    assert r.mass == pytest.approx(M, rel=1e-12)
    assert r.second_moment == pytest.approx(8 * PI, rel=1e-2)
    assert r.kinetic == 0.0 and r.cross_moment == 0.0
    assert r.entropy == pytest.approx(M * (math.log(M / (2 * PI)) - 1), rel=1e-2)


@pytest.mark.parametrize("M,C", [(PI, PI), (8 * PI, 8 * PI * (1 - 3 * math.log(2))),
                                 (PI * math.e, 0.0)])
def test_loghls_constant(M, C):
    assert fn.loghls_constant(M) == pytest.approx(C, abs=1e-12)


def test_loghls_constant_rejects_nonpositive():
    with pytest.raises(ValueError):
        fn.loghls_constant(0.0)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_gaussian_loghls_margin(sigma):
    # For a Gaussian, F + C(M) = M (log 2 - gamma) independently of sigma.
    M = 4 * PI
    r = gaussian_record(M, sigma, L=8.0 * sigma, n=128)
    assert r.loghls + fn.loghls_constant(M) == pytest.approx(M * (math.log(2) - EULER_GAMMA), rel=1e-2)
    assert fn.loghls_monitor(r).passed


def test_loghls_scaling_invariance():
    M = 8 * PI
    a = gaussian_record(M, 1.2, L=10.0, n=160)
    b = gaussian_record(M, 0.8, L=10.0, n=160)
    assert a.loghls == pytest.approx(b.loghls, rel=1e-2)


@pytest.mark.parametrize("M,expected", [(8 * PI, 0.0), (4 * PI, 8 * PI), (16 * PI, -64 * PI)])
def test_virial_rhs(M, expected):
    assert fn.virial_rhs(M, 0.0) == pytest.approx(expected, abs=1e-12)


def test_regime_of():
    assert fn.regime_of(4 * PI) == "subcritical"
    assert fn.regime_of(8 * PI) == "critical"
    assert fn.regime_of(8 * PI * (1 + 1e-6)) == "supercritical"


def test_lemma_monitors_at_t0_rest_gaussian():
    r = gaussian_record(4 * PI)
    moment, entropy = fn.lemma_monitors(r, r, 0.125, 0.01)
    assert moment.slack == pytest.approx(0.5 * r.second_moment)
    assert entropy.passed


def test_jensen_floor_on_gaussian():
    r = gaussian_record(4 * PI)
    assert fn.jensen_monitor(r, r, 0.125, 0.01).slack > 0


def test_bound_constants_critical_and_subcritical():
    rc = gaussian_record(8 * PI)
    c = fn.bound_constants(rc)
    assert c.C1 == pytest.approx(3 * 8 * PI / (4 * PI) * fn.loghls_constant(8 * PI))
    rs = gaussian_record(4 * PI)
    c = fn.bound_constants(rs)
    for name in ("C2", "C3", "C4", "C5", "C6"):
        assert math.isfinite(getattr(c, name))
    # both sides of each envelope hold at T = 0
    for m in fn.theorem_bound_monitors(rs, rs, "subcritical", 0.125, 0.01, c):
        assert m.slack >= 0, m
    with pytest.raises(ValueError):
        fn.bound_constants(gaussian_record(16 * PI))


def test_bound_constants_need_E0_above_minus_one():
    r = gaussian_record(4 * PI)
    r.energy = -2.0
    with pytest.raises(ValueError, match="E0"):
        fn.bound_constants(r, "subcritical")


def test_theorem_bounds_reject_wrong_regime():
    r = gaussian_record(4 * PI)
    with pytest.raises(ValueError):
        fn.theorem_bound_monitors(r, r, "critical", 0.1, 0.01)


def test_moment_envelope_dominates_second_moment_bound():
    r = gaussian_record(4 * PI)
    c = fn.bound_constants(r)
    for T in (0.0, 1.0, 10.0, 100.0):
        assert fn.moment_envelope(c, T) <= c.C6 * (1 + T + c.E0) + 1e-9


def test_blowup_bound_linear_limit():
    # a wide Gaussian keeps C~1 + E0 > 0 (for sigma = 1 it is negative and T* = 0)
    r = gaussian_record(16 * PI, 2.0, L=16.0)
    M = r.mass
    T_star = fn.latest_blowup_time(r, 0.5, 0.0)
    expected = (fn.blowup_tilde_C1(r) + r.energy) / (4 * M * (M / (8 * PI) - 1))
    assert T_star == pytest.approx(expected, rel=1e-10)
    assert 0 < T_star < math.inf


def test_blowup_time_zero_when_bound_already_violated():
    r = gaussian_record(16 * PI)
    assert fn.blowup_tilde_C1(r) + r.energy < 0
    assert fn.latest_blowup_time(r, 0.5, 0.0) == 0.0
    # with the initial entropy as offset the bound holds at T = 0
    assert fn.blowup_bound(r, 0.0, 0.5, 0.0, entropy_offset=r.entropy) >= 0.5 * r.second_moment


def test_blowup_time_grows_near_critical():
    r = gaussian_record(16 * PI, 2.0, L=16.0)
    Ts = [fn.latest_blowup_time(r, 0.5, 0.0, M=8 * PI * (1 + e)) for e in (1e-1, 1e-3, 1e-5)]
    assert Ts[0] < Ts[1] < Ts[2]


def test_blowup_bound_errors():
    r = gaussian_record(4 * PI)
    with pytest.raises(ValueError):
        fn.blowup_bound(r, 1.0, 0.5, 1.0)
    r = gaussian_record(16 * PI)
    with pytest.raises(ValueError):
        fn.blowup_bound(r, 1.0, 1.0, 1.0)


def test_entropy_fit_synthetic():
    t = np.linspace(0, 100, 400)
    fit = fn.entropy_growth_fit(t, 2.0 + 5 * t ** 0.5)
    assert fit.alpha == pytest.approx(0.5, abs=0.05)
    assert not fit.violates_hypothesis
    lin = fn.entropy_growth_fit(t, t.copy())
    assert lin.alpha == pytest.approx(1.0, abs=0.05)
    assert lin.violates_hypothesis
    const = fn.entropy_growth_fit(t, np.full_like(t, 3.0))
    assert const.alpha == 0.0 and const.C == 0.0


def test_entropy_fit_degenerate_window():
    with pytest.raises(ValueError):
        fn.entropy_growth_fit([0, 1, 2], [0, 1, 2])


def _rec(t, V, K=0.0, D=0.0, M=4 * PI):
    return fn.DiagnosticsRecord(t=t, mass=M, second_moment=V, cross_moment=0.0, kinetic=K,
                                entropy=0.0, interaction=0.0, dissipation=D, loghls=0.0,
                                energy=0.0, rho_max=1.0)


def test_virial_residual_exact_trajectory():
    M = 4 * PI
    recs = [_rec(t, 10 + 8 * PI * t + 0.25 * t * t, K=0.25 * t, D=0.25 * t * t) for t in
            np.linspace(0, 1, 11)]
    vr = fn.virial_residual(recs)
    assert np.max(np.abs(vr.integrated)) < 1e-12
    assert np.max(np.abs(vr.rate[1:-1])) < 1e-10
    assert fn.virial_monitor(recs[-1], recs[0], 0.1, 0.01).passed


def test_csv_round_trip(tmp_path):
    r = gaussian_record(4 * PI)
    r.slacks = {"loghls": 1.5, "virial_identity": -0.25}
    p = tmp_path / "d.csv"
    fn.write_csv(p, [r, r])
    assert p.read_text().splitlines()[0] == f"# ksfluid diagnostics schema={fn.CSV_SCHEMA_VERSION}"
    back = fn.read_csv(p)
    assert len(back) == 2
    assert back[0].second_moment == r.second_moment
    assert back[0].slacks == r.slacks


def test_csv_rejects_missing_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,mass\n0,1\n")
    with pytest.raises(ValueError):
        fn.read_csv(p)


@settings(max_examples=20, deadline=None)
@given(st.floats(1.0, 40.0), st.floats(0.7, 1.6))
def test_loghls_holds_for_gaussians(M, sigma):
    r = gaussian_record(M, sigma, L=9.0, n=64)
    assert fn.loghls_monitor(r).passed


def test_monitor_slack_semantics():
    m = fn.MonitorSlack("x", lhs=1.0, rhs=0.9, tol=0.2)
    assert m.slack == pytest.approx(-0.1) and m.passed
    assert not fn.MonitorSlack("x", 1.0, 0.5, 0.2).passed
