"""Oracle and property checks runnable from the command line (``ksfluid check``).

Each check compares a solver output against an independent reference:
a quadrature, a closed form or a second algorithm.
"""
from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _self_cell():
    from scipy.integrate import dblquad
    from ..poisson import self_cell_log_average
    h = 0.37
    val, _ = dblquad(lambda y, x: 0.5 * math.log(x * x + y * y), 0, h / 2, 0, h / 2,
                     epsabs=1e-13, epsrel=1e-13)
    ref = val / (h / 2) ** 2
    err = abs(self_cell_log_average(h) - ref)
    return err < 1e-10, f"|error| = {err:.2e}"


def _fft_direct():
    from ..core import ScalarField, make_grid
    from ..poisson import solve_direct, solve_fft
    grid = make_grid(3.0, 32)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        rho = ScalarField(grid, rng.random((32, 32)))
        a, b = solve_fft(rho), solve_direct(rho)
        for u, v in ((a.phi.values, b.phi.values), (a.grad_phi.values, b.grad_phi.values)):
            worst = max(worst, float(np.max(np.abs(u - v)) / np.max(np.abs(v))))
    return worst < 1e-8, f"max relative difference {worst:.2e}"


def _far_field():
    from ..core import GaussianSpec, gaussian_state, make_grid
    from ..poisson import solve_fft
    grid = make_grid(8.0, 128)
    M, s = 4 * math.pi, 1.0
    st = gaussian_state(grid, GaussianSpec(M, s)).state
    g = solve_fft(st.rho_field).grad_phi.values
    X, Y = grid.mesh()
    r = np.hypot(X, Y)
    sel = (r > 1.0) & (r < 4.0)
    exact = M * (1 - np.exp(-r[sel] ** 2 / (2 * s * s))) / (2 * math.pi * r[sel])
    radial = -(g[0][sel] * X[sel] + g[1][sel] * Y[sel]) / r[sel]
    err = float(np.max(np.abs(radial - exact) / exact))
    return err < 1e-2, f"max relative error {err:.2e} for 1 < r < 4"


def _loghls_constant():
    from ..functionals import loghls_constant
    M = 8 * math.pi
    err = abs(loghls_constant(M) - M * (1 - 3 * math.log(2)))
    return err < 1e-12, f"|C(8pi) - 8pi(1 - 3 log 2)| = {err:.1e}"


def _friction():
    from ..core import FluidState, ModelParams, make_grid
    from ..hydro import kinetic_energy, step
    grid = make_grid(4.0, 32)
    rho = np.ones((32, 32))
    m = np.zeros((2, 32, 32))
    m[0] = 0.3
    m[1] = -0.2
    params = ModelParams()
    st = FluidState(grid, rho, m)
    K0 = kinetic_energy(st, params)
    dt, steps = 0.01, 100
    for _ in range(steps):
        st, _ = step(st, params, None, dt)
    err = abs(kinetic_energy(st, params) / K0 - math.exp(-2 * dt * steps))
    return err < 1e-8, f"|K(1)/K(0) - e^-2| = {err:.1e}"


def _rusanov():
    from ..hydro import physical_flux, rusanov_flux
    rng = np.random.default_rng(3)
    U = np.stack([rng.random(50) + 0.1, rng.normal(size=50), rng.normal(size=50)])
    err = max(float(np.max(np.abs(rusanov_flux(U, U, d) - physical_flux(U, d)))) for d in (0, 1))
    return err == 0.0, f"max |F(U,U) - F(U)| = {err:.1e}"


def _two_particles():
    from ..particles import ParticleEnsemble, accelerations
    ens = ParticleEnsemble(np.array([[-0.5, 0.0], [0.5, 0.0]]), np.zeros((2, 2)), 1.0, 1e-8)
    a = accelerations(ens)
    err = float(np.max(np.abs(np.abs(a[:, 0]) - 1 / (4 * math.pi))))
    return err < 1e-6, f"|a| - 1/(4pi) = {err:.1e}"


def _particle_friction():
    from ..particles import ensemble_step, sample_gaussian
    ens = sample_gaussian(200, 1.0, 1.0, seed=1)
    P0 = ens.V.sum(axis=0)
    for _ in range(100):
        ens = ensemble_step(ens, 0.01, forces=False)
    err = float(np.max(np.abs(ens.V.sum(axis=0) - P0 * math.exp(-1.0))) / np.max(np.abs(P0)))
    return err < 1e-10, f"relative momentum error {err:.1e}"


def _snapshot():
    from ..core import make_grid, read_field, write_field
    grid = make_grid(2.5, 16)
    v = np.random.default_rng(0).normal(size=(2, 16, 16))
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "f.ksf"
        write_field(p, grid, v, 1.25)
        g2, v2, t = read_field(p)
    ok = g2 == grid and t == 1.25 and np.array_equal(v, v2)
    return ok, "bit-exact round trip" if ok else "mismatch"


def _virial_convergence():
    from .config import ScenarioConfig
    from .runner import Simulation
    res = []
    for n in (64, 128):
        sim = Simulation(ScenarioConfig.for_regime("subcritical", L=8.0, n=n, t_end=0.5))
        sim.sample()
        sim.advance_to(0.5)
        res.append(abs(sim.sample().virial_residual))
    ratio = res[0] / res[1]
    return ratio >= 1.8, f"residual {res[0]:.3e} -> {res[1]:.3e} (ratio {ratio:.2f})"


CHECKS = [
    ("self-cell log average vs quadrature", _self_cell, True),
    ("FFT vs direct Poisson", _fft_direct, True),
    ("Gaussian far-field gradient", _far_field, True),
    ("log-HLS constant at 8pi", _loghls_constant, True),
    ("exact friction decay", _friction, True),
    ("Rusanov consistency", _rusanov, True),
    ("two-particle acceleration", _two_particles, True),
    ("particle momentum decay", _particle_friction, True),
    ("snapshot round trip", _snapshot, True),
    ("virial residual refinement", _virial_convergence, False),
]


def run_checks(quick: bool = False) -> list[CheckResult]:
    out = []
    for name, fn_, is_quick in CHECKS:
        if quick and not is_quick:
            continue
        try:
            ok, detail = fn_()
        except Exception as exc:  # noqa: BLE001 - a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
