"""Finite-volume solver for isothermal Euler with self-gravity and friction.

Conserved variables ``U = (rho, m1, m2)`` are stored as one ``(3, n, n)``
array. The hyperbolic part uses minmod-limited linear reconstruction and the
Rusanov flux; gravity ``rho grad(phi)`` is a cell-centred source; friction
``-m`` is integrated exactly through an integrating factor inside a Heun
(SSP-RK2) step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import FluidState, ModelParams, ScalarField, VectorField, velocity, xlogx
from .poisson import PoissonSolution, interaction_energy, solve_fft


class HydroError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class BlowupSuspected(RuntimeError):
    """Time step collapsed below ``dt_min``: wave speeds are diverging."""

    def __init__(self, dt, dt_min, max_speed):
        super().__init__(f"dt={dt:.3e} below dt_min={dt_min:.1e} (max wave speed {max_speed:.3e})")
        self.dt = dt
        self.dt_min = dt_min
        self.max_speed = max_speed


@dataclass
class StepReport:
    dt: float
    max_wave_speed: float
    clamp_count: int = 0
    clamp_mass: float = 0.0
    boundary_outflow: float = 0.0
    mass_before: float = 0.0
    mass_after: float = 0.0
    entropy_change: float = 0.0

    @property
    def mass_defect(self) -> float:
        """Mass change not explained by boundary outflow and clamps."""
        return self.mass_after - self.mass_before + self.boundary_outflow - self.clamp_mass


@dataclass(frozen=True, eq=False)
class EntropyPair:
    eta: ScalarField
    q: VectorField


# -- fluxes ------------------------------------------------------------------

def physical_flux(U, direction: int, params: ModelParams = ModelParams()) -> np.ndarray:
    """Flux of ``(rho, m1, m2)`` along axis ``direction`` (0 = x, 1 = y)."""
    U = np.asarray(U, dtype=float)
    rho, m = U[0], U[1:]
    u = velocity(rho, m, params.eps_u)
    mn = m[direction]
    F = np.empty_like(U)
    F[0] = mn
    F[1] = mn * u[0]
    F[2] = mn * u[1]
    F[1 + direction] += params.sound_speed**2 * rho
    return F


def rusanov_flux(UL, UR, direction: int, params: ModelParams = ModelParams()) -> np.ndarray:
    UL = np.asarray(UL, dtype=float)
    UR = np.asarray(UR, dtype=float)
    FL = physical_flux(UL, direction, params)
    FR = physical_flux(UR, direction, params)
    s = _wave_speed(UL, UR, direction, params)
    return 0.5 * (FL + FR) - 0.5 * s * (UR - UL)


def _wave_speed(UL, UR, direction, params):
    uL = np.abs(velocity(UL[0], UL[1 + direction], params.eps_u))
    uR = np.abs(velocity(UR[0], UR[1 + direction], params.eps_u))
    return np.maximum(uL, uR) + params.sound_speed


def max_wave_speed(state: FluidState, params: ModelParams) -> float:
    u = velocity(state.rho, state.m, params.eps_u)
    s = np.max(np.abs(u), axis=(1, 2)) + params.sound_speed
    return float(np.max(s))


def cfl_dt(state: FluidState, params: ModelParams, cfl: float = 0.4,
           dt_min: float = 1e-10) -> float:
    """``cfl * dx / max(|u1| + c, |u2| + c)``."""
    if not 0 < cfl <= 0.9:
        raise ValueError(f"cfl must lie in (0, 0.9], got {cfl}")
    if not state.is_finite():
        raise HydroError("state contains NaN or Inf")
    s = max_wave_speed(state, params)
    if not s > 0:
        raise HydroError("zero wave speed; cannot choose a time step")
    dt = cfl * state.grid.dx / s
    if dt < dt_min:
        raise BlowupSuspected(dt, dt_min, s)
    return dt


# -- spatial operator ----------------------------------------------------------

def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _face_states(Up, axis, limited):
    """Left/right states at the n+1 faces along ``axis`` of a 2-ghost padded array."""
    def cut(a, start, stop):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(start, stop)
        return a[tuple(idx)]

    n4 = Up.shape[axis]
    left, right = cut(Up, 1, n4 - 2), cut(Up, 2, n4 - 1)  # cells 1..n+1 and 2..n+2
    if not limited:
        return left, right
    fwd = cut(Up, 1, None) - cut(Up, 0, -1)
    dU = _minmod(cut(fwd, 1, None), cut(fwd, 0, -1))  # slopes of cells 1..n+2
    return left + 0.5 * cut(dU, 0, -1), right - 0.5 * cut(dU, 1, None)


def spatial_rhs(U, grid, params: ModelParams, grad_phi=None, limited: bool = True):
    """Return ``(dU/dt, boundary mass outflow rate)`` excluding friction."""
    dx = grid.dx
    Up = np.pad(U, ((0, 0), (2, 2), (2, 2)), mode="edge")
    rhs = np.zeros_like(U)
    outflow = 0.0
    for direction in (0, 1):
        axis = 1 + direction
        # restrict the transverse axis to interior cells
        if direction == 0:
            strip = Up[:, :, 2:-2]
        else:
            strip = Up[:, 2:-2, :]
        UL, UR = _face_states(strip, axis, limited)
        F = rusanov_flux(UL, UR, direction, params)
        if direction == 0:
            rhs -= (F[:, 1:, :] - F[:, :-1, :]) / dx
            outflow += float(np.sum(F[0, -1, :]) - np.sum(F[0, 0, :])) * dx
        else:
            rhs -= (F[:, :, 1:] - F[:, :, :-1]) / dx
            outflow += float(np.sum(F[0, :, -1]) - np.sum(F[0, :, 0])) * dx
    if grad_phi is not None:
        rhs[1:] += U[0] * grad_phi
    return rhs, outflow


def _clamp(U, floor, area):
    low = U[0] < floor
    count = int(np.count_nonzero(low))
    mass = 0.0
    if count:
        mass = float(np.sum(floor - U[0][low]) * area)
        U[0][low] = floor
    return count, mass


PoissonSolver = Callable[[ScalarField], PoissonSolution]


def step(state: FluidState, params: ModelParams, poisson_solver: Optional[PoissonSolver],
         dt: float, solution: Optional[PoissonSolution] = None,
         limited: bool = True) -> tuple[FluidState, StepReport]:
    """Advance one Heun step with exact friction.

    With ``E = exp(-friction * dt)`` and ``L`` the transport plus gravity
    operator::

        U1     = U0 + dt L(U0),            m1 <- E m1
        U(t+dt) = (U0' + U1 + dt L(U1)) / 2,  where U0' = (rho0, E m0)

    Pure friction is reproduced exactly. ``poisson_solver=None`` switches
    gravity off. ``solution`` may carry the potential of ``state`` to avoid
    a second solve.
    """
    grid = state.grid
    area = grid.cell_area
    decay = math.exp(-params.friction * dt)
    U0 = np.concatenate([state.rho[None], state.m])
    mass0 = float(np.sum(U0[0]) * area)
    report = StepReport(dt=dt, max_wave_speed=max_wave_speed(state, params), mass_before=mass0)

    def grad(U):
        if poisson_solver is None:
            return None
        return poisson_solver(ScalarField(grid, U[0])).grad_phi.values

    g0 = solution.grad_phi.values if (solution is not None and poisson_solver is not None) else grad(U0)
    R0, out0 = spatial_rhs(U0, grid, params, g0, limited)
    U1 = U0 + dt * R0
    U1[1:] *= decay
    c1, cm1 = _clamp(U1, params.rho_floor, area)
    if not np.all(np.isfinite(U1)):
        raise HydroError("NaN in first stage", report)

    R1, out1 = spatial_rhs(U1, grid, params, grad(U1), limited)
    U = U1 + dt * R1
    U[0] += U0[0]
    U[1:] += decay * U0[1:]
    U *= 0.5
    c2, cm2 = _clamp(U, params.rho_floor, area)
    if not np.all(np.isfinite(U)):
        raise HydroError("NaN after step", report)

    report.clamp_count = c1 + c2
    report.clamp_mass = 0.5 * cm1 + cm2
    report.boundary_outflow = 0.5 * dt * (out0 + out1)
    report.mass_after = float(np.sum(U[0]) * area)
    new = FluidState(grid, U[0], U[1:], state.t + dt)
    report.entropy_change = total_entropy(new, params) - total_entropy(state, params)
    return new, report


# -- entropy -------------------------------------------------------------------

def entropy_pair(state: FluidState, params: ModelParams = ModelParams()) -> EntropyPair:
    """``eta = |m|^2/rho + 2 rho log rho``, ``q = |m|^2 m/rho^2 + 2 m log rho + 2 m``."""
    rho, m = state.rho, state.m
    u = velocity(rho, m, params.eps_u)
    u2 = np.sum(u * u, axis=0)
    logr = np.log(np.maximum(rho, params.rho_floor))
    eta = np.sum(m * u, axis=0) + 2 * xlogx(rho, params.rho_floor)
    q = u2 * m + 2 * m * logr + 2 * m
    return EntropyPair(ScalarField(state.grid, eta), VectorField(state.grid, q))


def total_entropy(state: FluidState, params: ModelParams = ModelParams()) -> float:
    rho, m = state.rho, state.m
    u = velocity(rho, m, params.eps_u)
    eta = np.sum(m * u, axis=0) + 2 * xlogx(rho, params.rho_floor)
    return float(np.sum(eta) * state.grid.cell_area)


def kinetic_energy(state: FluidState, params: ModelParams = ModelParams()) -> float:
    """``integral |m|^2 / rho``."""
    u = velocity(state.rho, state.m, params.eps_u)
    return float(np.sum(state.m * u) * state.grid.cell_area)


def entropy_inequality_residual(before: FluidState, after: FluidState, dt: float,
                                params: ModelParams = ModelParams(),
                                energies: Optional[tuple[float, float]] = None,
                                poisson_solver: Optional[PoissonSolver] = solve_fft) -> float:
    """Discrete form of ``d/dt int eta - d/dt W + int 2|m|^2/rho <= 0``.

    ``energies`` is ``(W_before, W_after)``; computed with ``poisson_solver``
    when omitted. ``poisson_solver=None`` treats the potential as absent.
    """
    if energies is None:
        if poisson_solver is None:
            energies = (0.0, 0.0)
        else:
            energies = tuple(
                interaction_energy(s.rho_field, poisson_solver(s.rho_field)) for s in (before, after)
            )
    w0, w1 = energies
    h0 = total_entropy(before, params)
    h1 = total_entropy(after, params)
    return (h1 - h0) / dt - (w1 - w0) / dt + 2 * kinetic_energy(before, params)
