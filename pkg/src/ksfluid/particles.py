"""Mean-field particle system with Coulomb attraction and friction.

Each of the ``N`` particles carries mass ``M/N`` and feels

    dV_i/dt = (M/N) sum_{j != i} F(X_i - X_j) - V_i / tau,
    F(x)    = -x / (2 pi (|x|^2 + eps^2)).

With ``M = 1`` this is the probability-normalised system; general ``M``
matches a fluid of total mass ``M``. Forces are summed directly in O(N^2).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import numba
from numba import njit, prange

# TBB in this image is too old for numba; skip it quietly.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .core import GridSpec, ScalarField

TWO_PI = 2.0 * math.pi


class ParticleError(RuntimeError):
    pass


def default_eps(N: int, scale: float) -> float:
    return 0.01 * scale / math.sqrt(N)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    X: np.ndarray
    V: np.ndarray
    mass: float
    eps: float
    tau: float = 1.0
    t: float = 0.0
    acc: Optional[np.ndarray] = None  # cached accelerations at X

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != 2 or self.X.shape != self.V.shape:
            raise ValueError("positions and velocities must both have shape (N, 2)")
        if self.X.shape[0] < 2:
            raise ValueError("need at least two particles")
        if not (self.eps > 0 and self.tau > 0 and self.mass > 0):
            raise ValueError("eps, tau and mass must be positive")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.V))):
            raise ParticleError("non-finite particle coordinates")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def weight(self) -> float:
        return self.mass / self.N


def sample_gaussian(N: int, mass: float, sigma: float, seed: int, temperature: float = 1.0,
                    tau: float = 1.0, eps: Optional[float] = None,
                    scale: Optional[float] = None) -> ParticleEnsemble:
    """Positions from an isotropic Gaussian, velocities Maxwellian at ``temperature``.

    ``temperature = 1`` reproduces the unit pressure of the fluid model.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, sigma, size=(N, 2))
    V = rng.normal(0.0, math.sqrt(temperature), size=(N, 2)) if temperature > 0 else np.zeros((N, 2))
    if eps is None:
        eps = default_eps(N, scale if scale is not None else 5 * sigma)
    return ParticleEnsemble(X, V, float(mass), float(eps), tau)


def pair_force(x, eps: float):
    """``-x / (2 pi (|x|^2 + eps^2))`` along the last axis."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return -x / (TWO_PI * (r2 + eps * eps))


@njit(parallel=True, cache=True)
def _pair_sums(X, eps2):
    # Each i sums its row sequentially, so results do not depend on threading.
    N = X.shape[0]
    f = np.zeros((N, 2))
    vir = np.zeros(N)
    for i in prange(N):
        xi = X[i, 0]
        yi = X[i, 1]
        fx = 0.0
        fy = 0.0
        v = 0.0
        for j in range(N):
            if j == i:
                continue
            dx = xi - X[j, 0]
            dy = yi - X[j, 1]
            r2 = dx * dx + dy * dy
            inv = 1.0 / (r2 + eps2)
            fx -= dx * inv
            fy -= dy * inv
            v += r2 * inv
        f[i, 0] = fx
        f[i, 1] = fy
        vir[i] = v
    return f, vir


def accelerations(ens: ParticleEnsemble) -> np.ndarray:
    f, _ = _pair_sums(np.ascontiguousarray(ens.X), ens.eps * ens.eps)
    return f * (ens.weight / TWO_PI)


def interaction_virial(ens: ParticleEnsemble) -> float:
    """``2 (M/N) sum_i X_i . a_i = -(M/N)^2 / (2pi) sum_{i != j} r^2 / (r^2 + eps^2)``."""
    _, vir = _pair_sums(np.ascontiguousarray(ens.X), ens.eps * ens.eps)
    return -ens.weight**2 / TWO_PI * float(np.sum(vir))


def ensemble_step(ens: ParticleEnsemble, dt: float, forces: bool = True) -> ParticleEnsemble:
    """Kick-drift-kick with the friction factor applied exactly in each half kick.

    Half kick: ``V <- f V + tau (1 - f) a`` with ``f = exp(-dt / (2 tau))``,
    exact for a frozen force. Positions advance with the half-step velocity.
    """
    if not 0 < dt <= 0.1 * ens.tau:
        raise ValueError(f"need 0 < dt <= 0.1 tau, got dt={dt}")
    f = math.exp(-0.5 * dt / ens.tau)
    g = ens.tau * (1.0 - f)
    if forces:
        a0 = ens.acc if ens.acc is not None else accelerations(ens)
        Vh = f * ens.V + g * a0
        X = ens.X + dt * Vh
        a1 = accelerations(replace(ens, X=X, acc=None))
        V = f * Vh + g * a1
    else:
        Vh = f * ens.V
        X = ens.X + dt * Vh
        V = f * Vh
        a1 = None
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
        raise ParticleError(f"non-finite state at t={ens.t + dt}")
    return replace(ens, X=X, V=V, t=ens.t + dt, acc=a1)


@dataclass(frozen=True)
class ParticleMoments:
    t: float
    mass: float
    second_moment: float
    cross_moment: float
    kinetic: float

    @property
    def combined_moment(self) -> float:
        return self.second_moment + self.cross_moment


def empirical_moments(ens: ParticleEnsemble) -> ParticleMoments:
    w = ens.weight
    X, V = ens.X, ens.V
    return ParticleMoments(
        t=ens.t,
        mass=w * ens.N,
        second_moment=w * float(np.sum(X * X)),
        cross_moment=w * float(np.sum(2 * X * V)),
        kinetic=w * float(np.sum(V * V)),
    )


def virial_rate(ens: ParticleEnsemble) -> float:
    """Exact ``d/dt (X2 + Xm)`` of the particle system.

    ``X2' = Xm`` and ``Xm' = 2K - Xm/tau + 2 (M/N) sum X_i . a_i``.
    """
    mom = empirical_moments(ens)
    return 2 * mom.kinetic + (1 - 1 / ens.tau) * mom.cross_moment + interaction_virial(ens)


@dataclass(frozen=True)
class DepositInfo:
    outside_mass: float
    warning: Optional[str] = None


def deposit_density(ens: ParticleEnsemble, grid: GridSpec) -> tuple[ScalarField, DepositInfo]:
    """Cloud-in-cell deposition onto cell centres.

    Weight that would land outside the box is dropped and reported.
    """
    n, dx = grid.n, grid.dx
    # fractional index relative to the first cell centre
    s = (ens.X + grid.L) / dx - 0.5
    i0 = np.floor(s).astype(np.int64)
    fr = s - i0
    w = ens.weight
    grid_mass = np.zeros((n, n))
    for di in (0, 1):
        wx = fr[:, 0] if di else 1.0 - fr[:, 0]
        ix = i0[:, 0] + di
        for dj in (0, 1):
            wy = fr[:, 1] if dj else 1.0 - fr[:, 1]
            iy = i0[:, 1] + dj
            ok = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
            np.add.at(grid_mass, (ix[ok], iy[ok]), w * wx[ok] * wy[ok])
    outside = ens.mass - float(np.sum(grid_mass))
    msg = None
    if outside > 0.01 * ens.mass:
        msg = f"{outside / ens.mass:.2%} of the mass lies outside the grid"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return ScalarField(grid, grid_mass / grid.cell_area), DepositInfo(max(outside, 0.0), msg)


# -- snapshots ---------------------------------------------------------------------

def write_ensemble_csv(path, ens: ParticleEnsemble) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "vx", "vy"])
        for k in range(ens.N):
            w.writerow([k, repr(float(ens.X[k, 0])), repr(float(ens.X[k, 1])),
                        repr(float(ens.V[k, 0])), repr(float(ens.V[k, 1]))])


def read_ensemble_csv(path, mass: float, eps: float, tau: float = 1.0,
                      t: float = 0.0) -> ParticleEnsemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    return ParticleEnsemble(data[:, 1:3].copy(), data[:, 3:5].copy(), mass, eps, tau, t)
