import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksfluid.core import (FluidState, GaussianSpec, GridError, ModelParams, ScalarField,
                          VectorField, gaussian_state, make_grid, read_field, velocity,
                          write_field, xlogx)
from ksfluid.functionals import diagnostics
from ksfluid.poisson import solve_fft


def test_grid_arithmetic():
    g = make_grid(1.0, 8)
    assert g.dx == 0.25
    X, Y = g.mesh()
    assert (X[0, 0], Y[0, 0]) == (-0.875, -0.875)
    assert make_grid(10.0, 256).dx == 0.078125


@pytest.mark.parametrize("L,n", [(1.0, 7), (1.0, 6), (0.0, 8), (-1.0, 8)])
def test_grid_rejects_bad_input(L, n):
    with pytest.raises(GridError):
        make_grid(L, n)


@given(st.floats(0.1, 100.0), st.integers(4, 200).map(lambda k: 2 * k))
def test_grid_symmetric_and_area(L, n):
    g = make_grid(L, n)
    c = g.centers_1d
    assert np.array_equal(c, -c[::-1])
    assert n * n * g.cell_area == pytest.approx((2 * L) ** 2, rel=1e-13)


def test_fields_validate():
    g = make_grid(1.0, 8)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((8, 9)))
    with pytest.raises(ValueError):
        VectorField(g, np.zeros((8, 8)))
    bad = np.zeros((8, 8))
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, bad)


def test_gaussian_mass_and_second_moment():
    M = 4 * math.pi
    g = make_grid(10.0, 256)
    d = gaussian_state(g, GaussianSpec(M, 1.0))
    assert d.state.mass() == pytest.approx(M, rel=1e-12)
    X, Y = g.mesh()
    X2 = float(np.sum((X * X + Y * Y) * d.state.rho) * g.cell_area)
    assert X2 == pytest.approx(2 * M, rel=1e-2)
    assert np.all(d.state.rho >= d.params.rho_floor)


def test_gaussian_entropy_closed_form():
    M, s = 8 * math.pi, 1.0
    g = make_grid(8.0, 128)
    d = gaussian_state(g, GaussianSpec(M, s))
    S = float(np.sum(xlogx(d.state.rho, d.params.rho_floor)) * g.cell_area)
    assert S == pytest.approx(M * (math.log(M / (2 * math.pi * s * s)) - 1), rel=1e-2)


def test_uniform_velocity_kinetic_energy():
    g = make_grid(8.0, 64)
    d = gaussian_state(g, GaussianSpec(1.0, 1.0, velocity=(1.0, 0.0)))
    rec = diagnostics(d.state, solve_fft(d.state.rho_field), 0.0, d.params)
    assert rec.kinetic == pytest.approx(1.0, rel=1e-10)


def test_gaussian_resolution_checks():
    with pytest.raises(GridError, match="sigma/dx"):
        gaussian_state(make_grid(8.0, 16), GaussianSpec(1.0, 0.5))
    with pytest.raises(GridError, match="L/sigma"):
        gaussian_state(make_grid(4.0, 128), GaussianSpec(1.0, 1.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 200.0), st.floats(0.6, 1.5), st.floats(-1.0, 1.0))
def test_gaussian_mass_exact_property(M, sigma, cx):
    g = make_grid(8.0, 64)
    d = gaussian_state(g, GaussianSpec(M, sigma, center=(cx, 0.0)))
    assert d.state.mass() == pytest.approx(M, rel=1e-12)


def test_model_params_scale_with_problem():
    p = ModelParams.for_problem(4 * math.pi, 8.0)
    assert p.rho_floor == pytest.approx(1e-12 * 4 * math.pi / 64)
    assert p.eps_u == p.rho_floor
    with pytest.raises(ValueError):
        ModelParams(rho_floor=0.0)


def test_velocity_examples():
    u = velocity(1.0, np.array([2.0, 0.0]), 1e-10)
    assert u[0] == pytest.approx(2.0, rel=1e-15) and u[1] == 0.0
    assert np.all(velocity(1e-12, np.array([0.0, 0.0]), 1e-12) == 0.0)
    eps = 1e-6
    assert velocity(eps, np.array([eps, 0.0]), eps)[0] == pytest.approx(0.5, rel=1e-14)


def test_reflection_symmetry_of_initial_data():
    g = make_grid(6.0, 64)
    rho = gaussian_state(g, GaussianSpec(3.0, 1.0)).state.rho
    assert np.array_equal(rho, rho[::-1, :])
    assert np.array_equal(rho, rho[:, ::-1])


def test_snapshot_round_trip_and_header(tmp_path):
    g = make_grid(2.5, 16)
    v = np.random.default_rng(1).normal(size=(2, 16, 16))
    p = tmp_path / "m.ksf"
    write_field(p, g, v, 0.75)
    raw = p.read_bytes()
    assert len(raw) == 32 + v.size * 8
    magic, n, ncomp, _, L, t = struct.unpack("<4sIIIdd", raw[:32])
    assert (magic, n, ncomp, L, t) == (b"KSF1", 16, 2, 2.5, 0.75)
    g2, v2, t2 = read_field(p)
    assert g2 == g and t2 == 0.75 and np.array_equal(v2, v)


def test_snapshot_rejects_corruption(tmp_path):
    g = make_grid(1.0, 8)
    p = tmp_path / "r.ksf"
    write_field(p, g, np.ones((8, 8)))
    raw = bytearray(p.read_bytes())
    (tmp_path / "bad_magic.ksf").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.ksf").write_bytes(raw[:-8])
    for name in ("bad_magic.ksf", "short.ksf"):
        with pytest.raises(ValueError):
            read_field(tmp_path / name)


def test_fluid_state_shape_check():
    g = make_grid(1.0, 8)
    with pytest.raises(ValueError):
        FluidState(g, np.ones((8, 8)), np.zeros((2, 8, 7)))
