"""Grids, fields, fluid state and initial data.

Arrays are indexed ``[i, j]`` with ``i`` along x and ``j`` along y
(``numpy.meshgrid(..., indexing="ij")``). Vector fields carry the component
axis first: shape ``(2, n, n)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridError(ValueError):
    """Invalid grid or under-resolved initial data."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid on the square ``[-L, L]^2``."""

    L: float
    n: int

    def __post_init__(self):
        if not self.L > 0:
            raise GridError(f"half width must be positive, got L={self.L}")
        if self.n < 8 or self.n % 2:
            raise GridError(f"cells per axis must be even and >= 8, got n={self.n}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @property
    def centers_1d(self) -> np.ndarray:
        # (i + 1/2) dx - L, written as a symmetric expression so that
        # centers[k] == -centers[n-1-k] bit for bit.
        k = np.arange(self.n) - (self.n - 1) / 2.0
        return k * self.dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.centers_1d
        return np.meshgrid(c, c, indexing="ij")


def make_grid(L: float, n: int) -> GridSpec:
    return GridSpec(float(L), int(n))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"scalar field shape {v.shape} does not match n={self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field contains NaN or Inf")
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (2, self.grid.n, self.grid.n):
            raise ValueError(f"vector field shape {v.shape} does not match (2, n, n)")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector field contains NaN or Inf")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the momentum equation and vacuum regularisation.

    ``friction = 1`` and ``sound_speed = 1`` give the model exactly. Setting
    ``sound_speed = 0`` removes the pressure term (test hook only).
    """

    rho_floor: float = 1e-12
    eps_u: float = 1e-12
    friction: float = 1.0
    sound_speed: float = 1.0

    def __post_init__(self):
        if not (self.rho_floor > 0 and self.eps_u > 0):
            raise ValueError("rho_floor and eps_u must be positive")
        if self.friction < 0 or self.sound_speed < 0:
            raise ValueError("friction and sound_speed must be non-negative")

    @classmethod
    def for_problem(cls, mass: float, L: float, **kw) -> "ModelParams":
        floor = 1e-12 * mass / (L * L)
        kw.setdefault("eps_u", floor)
        return cls(rho_floor=floor, **kw)


@dataclass(frozen=True, eq=False)
class FluidState:
    """Cell averages of density and momentum at time ``t``."""

    grid: GridSpec
    rho: np.ndarray
    m: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.grid.n
        if self.rho.shape != (n, n) or self.m.shape != (2, n, n):
            raise ValueError("state arrays do not match the grid")

    @property
    def rho_field(self) -> ScalarField:
        return ScalarField(self.grid, self.rho)

    @property
    def m_field(self) -> VectorField:
        return VectorField(self.grid, self.m)

    def mass(self) -> float:
        return float(np.sum(self.rho) * self.grid.cell_area)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.m)))


@dataclass(frozen=True)
class GaussianSpec:
    mass: float
    sigma: float
    center: tuple[float, float] = (0.0, 0.0)
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.mass > 0 and self.sigma > 0):
            raise ValueError("Gaussian mass and width must be positive")


@dataclass(frozen=True, eq=False)
class InitialData:
    state: FluidState
    params: ModelParams
    clamp_mass: float = 0.0
    info: dict = field(default_factory=dict)


def gaussian_state(grid: GridSpec, spec: GaussianSpec,
                   params: ModelParams | None = None) -> InitialData:
    """Sample a Gaussian blob at cell centres, normalised to the exact mass.

    Cells below the vacuum floor are raised to it; the remaining cells are
    rescaled so that the discrete mass still equals ``spec.mass``. The mass
    added by the floor is returned as ``clamp_mass``.
    """
    if spec.sigma < 2 * grid.dx:
        raise GridError(f"sigma/dx = {spec.sigma / grid.dx:.3g} < 2: width not resolved")
    if grid.L < 5 * spec.sigma:
        raise GridError(f"L/sigma = {grid.L / spec.sigma:.3g} < 5: box too small")
    if params is None:
        params = ModelParams.for_problem(spec.mass, grid.L)

    X, Y = grid.mesh()
    r2 = (X - spec.center[0]) ** 2 + (Y - spec.center[1]) ** 2
    rho = spec.mass / (2 * np.pi * spec.sigma**2) * np.exp(-r2 / (2 * spec.sigma**2))

    area = grid.cell_area
    floor = params.rho_floor
    low = rho < floor
    clamp_mass = float(np.sum(floor - rho[low]) * area)
    rho[low] = floor
    bulk = np.sum(rho[~low]) * area
    rho[~low] *= (spec.mass - np.count_nonzero(low) * floor * area) / bulk

    m = np.stack([rho * spec.velocity[0], rho * spec.velocity[1]])
    state = FluidState(grid, rho, m, 0.0)
    return InitialData(state, params, clamp_mass,
                       {"floored_cells": int(np.count_nonzero(low))})


def velocity(rho, m, eps_u: float):
    """Desingularised velocity ``m rho / (rho^2 + eps_u^2)``.

    Works on scalars or arrays; ``m`` may carry a leading component axis.
    """
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    return m * (rho / (rho * rho + eps_u * eps_u))


def xlogx(rho, floor: float):
    """``rho * log(max(rho, floor))``."""
    return rho * np.log(np.maximum(rho, floor))


# -- binary field snapshots -------------------------------------------------
#
# Little-endian, 32-byte header followed by row-major float64 values:
#   0  4s  magic b"KSF1"
#   4  u32 n (cells per axis)
#   8  u32 number of components (1 scalar, 2 vector)
#  12  u32 reserved (0)
#  16  f64 L (half width)
#  24  f64 time
#  32  ...  ncomp * n * n float64, component-major then [i, j] row-major

MAGIC = b"KSF1"
_HEADER = struct.Struct("<4sIIIdd")


def write_field(path, grid: GridSpec, values: np.ndarray, t: float = 0.0) -> None:
    values = np.asarray(values, dtype="<f8")
    ncomp = 1 if values.ndim == 2 else values.shape[0]
    if values.shape[-2:] != (grid.n, grid.n):
        raise ValueError("field does not match grid")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.n, ncomp, 0, grid.L, float(t)))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_field(path) -> tuple[GridSpec, np.ndarray, float]:
    raw = Path(path).read_bytes()
    magic, n, ncomp, _, L, t = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != ncomp * n * n:
        raise ValueError(f"{path}: expected {ncomp * n * n} values, found {data.size}")
    shape = (n, n) if ncomp == 1 else (ncomp, n, n)
    return GridSpec(L, n), data.reshape(shape).astype(float), t
