"""Acceptance criteria 1-10, one test each; each records a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the lines appear in the
"acceptance criteria" section of the terminal summary.
"""
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ksfluid import functionals as fn
from ksfluid.core import FluidState, GaussianSpec, ModelParams, ScalarField, gaussian_state, make_grid
from ksfluid.harness import ScenarioConfig, Simulation, load_config, run
from ksfluid.harness.compare import COMPARE_GRID, compare_fluid_particles
from ksfluid.hydro import cfl_dt, kinetic_energy, physical_flux, rusanov_flux, step
from ksfluid.particles import (ParticleEnsemble, accelerations, empirical_moments, ensemble_step,
                               sample_gaussian, virial_rate)
from ksfluid.poisson import solve_direct, solve_fft

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
PI = math.pi


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    out = {}
    for regime in ("subcritical", "critical", "supercritical"):
        cfg = load_config(CONFIGS / f"{regime}.cfg")
        d = tmp_path_factory.mktemp(regime)
        summary = run(cfg, d)
        out[regime] = (summary, fn.read_csv(d / "diagnostics.csv"))
    return out


# 1 -------------------------------------------------------------------------------

def test_criterion_1_poisson_oracle(report):
    grid = make_grid(2.0, 32)
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for _ in range(20):
        rho = ScalarField(grid, rng.random((32, 32)))
        a, b = solve_fft(rho), solve_direct(rho)
        for u, v in ((a.phi.values, b.phi.values), (a.grad_phi.values, b.grad_phi.values)):
            worst = max(worst, float(np.max(np.abs(u - v)) / np.max(np.abs(v))))

    grid = make_grid(8.0, 128)
    M, s = 4 * PI, 1.0
    st = gaussian_state(grid, GaussianSpec(M, s)).state
    g = solve_fft(st.rho_field).grad_phi.values
    X, Y = grid.mesh()
    r = np.hypot(X, Y)
    sel = (r >= 8 * grid.dx) & (r <= grid.L / 2)
    exact = M * (1 - np.exp(-r[sel] ** 2 / (2 * s * s))) / (2 * PI * r[sel])
    radial = -(g[0][sel] * X[sel] + g[1][sel] * Y[sel]) / r[sel]
    far = float(np.max(np.abs(radial - exact) / exact))

    ok = worst <= 1e-8 and far <= 1e-2
    report(1, "Poisson oracle", ok,
           f"fft/direct max rel diff {worst:.2e} (<= 1e-8); far-field rel err {far:.2e} (<= 1e-2)")
    assert ok


# 2 -------------------------------------------------------------------------------

def _virial_residual_at(n, T=1.0):
    sim = Simulation(ScenarioConfig.for_regime("subcritical", L=8.0, n=n, t_end=T))
    sim.sample()
    sim.advance_to(T)
    return sim.sample().virial_residual


def test_criterion_2_virial_identity(report):
    M, T = 4 * PI, 1.0
    drive = 4 * M * (1 - M / (8 * PI)) * T
    r128 = abs(_virial_residual_at(128, T))
    r256 = abs(_virial_residual_at(256, T))
    rel = r128 / drive
    ratio = r128 / r256
    ok = rel <= 0.02 and ratio >= 1.8
    report(2, "virial identity", ok,
           f"|R|/(4M theta T) = {rel:.4f} at n=128 (<= 0.02); refinement ratio {ratio:.2f} (>= 1.8)")
    assert ok


# 3 -------------------------------------------------------------------------------

def test_criterion_3_critical_zero_slope(report):
    sim = Simulation(ScenarioConfig.for_regime("critical", L=8.0, n=256, t_end=0.05))
    r0 = sim.sample()
    assert r0.kinetic == 0.0
    sim.advance_to(0.05)
    r1 = sim.sample()
    slope = (r1.combined_moment - r0.combined_moment) / (r1.t - r0.t)
    limit = 1e-2 * 8 * PI
    ok = abs(slope) <= limit
    report(3, "critical-mass zero slope", ok,
           f"initial slope of X2+Xm {slope:.4f} (|.| <= {limit:.4f}) on n=256")
    assert ok


# 4 -------------------------------------------------------------------------------

def test_criterion_4_loghls(default_runs, report):
    worst = math.inf
    for regime, (_, recs) in default_runs.items():
        for r in recs:
            M = r.mass
            worst = min(worst, r.loghls + fn.loghls_constant(M) + fn.loghls_tolerance(M))
    grid = make_grid(12.0, 128)
    for M in (4 * PI, 8 * PI):
        for sigma in (0.5, 0.75, 1.0, 1.5, 2.0):
            st = gaussian_state(grid, GaussianSpec(M, sigma)).state
            rec = fn.diagnostics(st, solve_fft(st.rho_field), 0.0, ModelParams.for_problem(M, 12.0))
            worst = min(worst, rec.loghls + fn.loghls_constant(M) + fn.loghls_tolerance(M))
    Cerr = abs(fn.loghls_constant(8 * PI) - 8 * PI * (1 - 3 * math.log(2)))
    ok = worst >= 0 and Cerr <= 1e-12
    report(4, "log-HLS", ok,
           f"min of F + C(M) + tau_hls = {worst:.4f} (>= 0); |C(8pi) - closed form| = {Cerr:.1e}")
    assert ok


# 5 -------------------------------------------------------------------------------

def test_criterion_5_lemma_monitors(default_runs, report):
    parts = []
    ok = True
    for regime in ("subcritical", "critical"):
        summary, recs = default_runs[regime]
        assert recs[-1].t == pytest.approx(5.0)
        for name in ("moment_inequality", "entropy_inequality"):
            m = summary.monitors[name]
            ok &= m["status"] == "pass" and m["samples"] == len(recs)
            parts.append(f"{regime}/{name} min slack {m['min_slack']:+.3f}")
    report(5, "second-moment and entropy inequalities", ok, "; ".join(parts))
    assert ok


# 6 -------------------------------------------------------------------------------

def test_criterion_6_subcritical_envelopes(default_runs, report):
    summary, recs = default_runs["subcritical"]
    names = ["kinetic_dissipation_bound", "second_moment_bound", "entropy_upper_bound",
             "entropy_lower_bound"]
    mins = {n: min(r.slacks[n] for r in recs) for n in names}
    ok = all(v >= 0 for v in mins.values()) and recs[-1].t == pytest.approx(5.0)
    report(6, "subcritical envelopes", ok,
           ", ".join(f"{n} min slack {v:+.3f}" for n, v in mins.items()) + " over T in [0, 5]")
    assert ok


# 7 -------------------------------------------------------------------------------

def test_criterion_7_supercritical_trend(default_runs, report):
    summary, recs = default_runs["supercritical"]
    V = np.array([r.combined_moment for r in recs])
    K2 = np.array([2 * r.kinetic for r in recs])
    idx = np.flatnonzero(K2 < 16 * PI)
    pairs = [(i, i + 1) for i in idx if i + 1 in set(idx)]
    monotone = all(V[j] < V[i] for i, j in pairs)
    fired = summary.termination == "blowup_suspected"
    T_star = summary.T_star
    before = fired and T_star is not None and summary.blowup["t"] < T_star
    ev = summary.blowup or {}
    fit = summary.entropy_fit or {}
    ok = before and monotone
    report(7, "supercritical blow-up trend", ok,
           f"termination={summary.termination}, rho_max ratio {ev.get('rho_max_ratio', float('nan')):.1f}"
           f" (needs > 1e3), last dt {ev.get('dt', float('nan')):.2e} (needs < 1e-9), "
           f"entropy fit alpha={fit.get('alpha', float('nan')):.3f}, T*={T_star}; "
           f"X2+Xm decreasing over {len(pairs)} sample pairs with 2K < 16pi: {monotone}")
    assert ok


# 8 -------------------------------------------------------------------------------

def test_criterion_8_hydro_sanity(report):
    grid = make_grid(4.0, 32)
    params = ModelParams()
    rho = np.full((32, 32), 2.0)
    m = np.zeros((2, 32, 32))
    m[0], m[1] = 0.5, -0.3
    st = FluidState(grid, rho, m)
    K0 = kinetic_energy(st, params)
    dt = 0.01
    for _ in range(100):
        st, _ = step(st, params, None, dt)
    fric = abs(kinetic_energy(st, params) / K0 - math.exp(-2.0))

    grid = make_grid(8.0, 64)
    M = 4 * PI
    init = gaussian_state(grid, GaussianSpec(M, 1.0))
    st, p = init.state, init.params
    defect = 0.0
    for _ in range(20):
        st, rep = step(st, p, solve_fft, cfl_dt(st, p))
        defect = max(defect, abs(rep.mass_defect) / M)

    rng = np.random.default_rng(5)
    U = np.stack([rng.random(100) + 1e-3, rng.normal(size=100), rng.normal(size=100)])
    cons = max(float(np.max(np.abs(rusanov_flux(U, U, d) - physical_flux(U, d)))) for d in (0, 1))
    ok = fric <= 1e-8 and defect <= 1e-12 and cons == 0.0
    report(8, "hydro sanity", ok,
           f"friction decay err {fric:.1e} (<= 1e-8); per-step mass defect {defect:.1e} "
           f"(<= 1e-12 M); Rusanov F(U,U)-F(U) = {cons:.1e}")
    assert ok


# 9 -------------------------------------------------------------------------------

def test_criterion_9_particles(report):
    ens = sample_gaussian(500, 1.0, 1.0, seed=11, tau=0.7)
    P0 = ens.V.sum(axis=0)
    steps = 100
    for _ in range(steps):
        ens = ensemble_step(ens, 0.007, forces=False)
    mom = float(np.max(np.abs(ens.V.sum(axis=0) - P0 * math.exp(-steps * 0.007 / 0.7)))
                / np.max(np.abs(P0)))

    two = ParticleEnsemble(np.array([[-0.5, 0.0], [0.5, 0.0]]), np.zeros((2, 2)), 1.0, 1e-9)
    a = accelerations(two)
    acc = float(np.max(np.abs(np.hypot(a[:, 0], a[:, 1]) - 1 / (4 * PI))))

    ens = sample_gaussian(4000, 4 * PI, 1.0, seed=0)
    ts, V, R = [0.0], [empirical_moments(ens).combined_moment], [virial_rate(ens)]
    while ens.t < ens.tau - 1e-12:
        ens = ensemble_step(ens, 0.01)
        ts.append(ens.t)
        V.append(empirical_moments(ens).combined_moment)
        R.append(virial_rate(ens))
    dV = V[-1] - V[0]
    vir = abs(dV - trapezoid(R, ts)) / abs(dV)
    ok = mom <= 1e-10 and acc <= 1e-6 and vir <= 1e-2
    report(9, "particle suite", ok,
           f"momentum decay err {mom:.1e} (<= 1e-10); two-body |a| - 1/(4pi) = {acc:.1e} "
           f"(<= 1e-6); N-body virial residual {vir:.2e} (<= 1e-2) at N=4000")
    assert ok


# 10 ------------------------------------------------------------------------------

def test_criterion_10_fluid_particles(report):
    cfg = ScenarioConfig.for_regime("subcritical", **COMPARE_GRID)
    rep = compare_fluid_particles(cfg)
    gaps = rep.trend()
    ok = rep.decreasing() and [g.N for g in rep.gaps] == [1000, 4000, 16000]
    report(10, "fluid-particle agreement", ok,
           "rms X2 gap " + ", ".join(f"N={g.N}: {g.rms_gap_second_moment:.4f}" for g in rep.gaps)
           + f" (strictly decreasing); closure drift {rep.closure_drift:+.4f}")
    assert ok
