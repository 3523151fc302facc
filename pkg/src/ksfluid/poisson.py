"""Free-space potential of the density.

The attractive potential is the convolution of the density with the
logarithmic Green's function of ``-Laplace`` in the plane,

    phi(x) = -(1/2pi) * integral log|x - y| rho(y) dy,

and its gradient uses the kernel ``-(x - y) / (2pi |x - y|^2)``. Both solvers
use the same kernel samples: point values between distinct cells, the exact
cell average of ``log|x|`` over the source cell for the self term, and a zero
self term for the gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import GridSpec, ScalarField, VectorField

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class PoissonSolution:
    phi: ScalarField
    grad_phi: VectorField
    method: str


def self_cell_log_average(h: float) -> float:
    """Mean of ``log|x|`` over a square cell of side ``h`` centred at 0.

    From the antiderivative of ``log(x^2 + y^2)`` over ``[0, b]^2``:
    ``b^2 (log(2 b^2) - 3 + pi/2)`` with ``b = h/2``.
    """
    return 0.5 * (math.log(h * h / 2.0) - 3.0 + math.pi / 2.0)


def _check(rho: ScalarField) -> np.ndarray:
    v = rho.values
    if not np.all(np.isfinite(v)):
        raise ValueError("density contains NaN or Inf")
    return v


@lru_cache(maxsize=8)
def _padded_kernels(grid: GridSpec):
    """Spectra of the potential and gradient kernels on the (2n)^2 torus."""
    n, dx = grid.n, grid.dx
    d = np.fft.fftfreq(2 * n, 1.0 / (2 * n))  # 0..n-1, -n..-1
    DI, DJ = np.meshgrid(d, d, indexing="ij")
    r2 = DI * DI + DJ * DJ
    with np.errstate(divide="ignore", invalid="ignore"):
        g = -np.log(dx * np.sqrt(r2)) / TWO_PI
        kx = -DI / (TWO_PI * r2)
        ky = -DJ / (TWO_PI * r2)
    g[0, 0] = -self_cell_log_average(dx) / TWO_PI
    kx[0, 0] = ky[0, 0] = 0.0
    # offset -n would alias +n; no pair of cells is that far apart
    for k in (g, kx, ky):
        k[n, :] = 0.0
        k[:, n] = 0.0
    area = dx * dx
    g_hat = np.fft.rfft2(g * area)
    # dx cancels in the gradient kernel except through the cell area
    kx_hat = np.fft.rfft2(kx * area / dx)
    ky_hat = np.fft.rfft2(ky * area / dx)
    return g_hat, kx_hat, ky_hat


def solve_fft(rho: ScalarField, want_phi: bool = True) -> PoissonSolution:
    """Hockney zero-padded convolution, O(n^2 log n)."""
    grid = rho.grid
    v = _check(rho)
    n = grid.n
    g_hat, kx_hat, ky_hat = _padded_kernels(grid)
    pad = np.zeros((2 * n, 2 * n))
    pad[:n, :n] = v
    r_hat = np.fft.rfft2(pad)
    shape = pad.shape
    gx = np.fft.irfft2(r_hat * kx_hat, s=shape)[:n, :n]
    gy = np.fft.irfft2(r_hat * ky_hat, s=shape)[:n, :n]
    if want_phi:
        phi = np.fft.irfft2(r_hat * g_hat, s=shape)[:n, :n]
    else:
        phi = np.zeros((n, n))
    return PoissonSolution(ScalarField(grid, phi), VectorField(grid, np.stack([gx, gy])), "fft")


def solve_direct(rho: ScalarField, chunk: int = 256) -> PoissonSolution:
    """Direct O(n^4) summation; the oracle for :func:`solve_fft`."""
    grid = rho.grid
    v = _check(rho).ravel()
    X, Y = grid.mesh()
    xs, ys = X.ravel(), Y.ravel()
    area = grid.cell_area
    w = v * area
    self_phi = -self_cell_log_average(grid.dx) / TWO_PI * area

    N = xs.size
    phi = np.empty(N)
    gx = np.empty(N)
    gy = np.empty(N)
    for s in range(0, N, chunk):
        e = min(s + chunk, N)
        ddx = xs[s:e, None] - xs[None, :]
        ddy = ys[s:e, None] - ys[None, :]
        r2 = ddx * ddx + ddy * ddy
        rows = np.arange(e - s)
        r2[rows, rows + s] = 1.0  # placeholder for the self pair
        logr = 0.5 * np.log(r2)
        logr[rows, rows + s] = 0.0
        inv = 1.0 / r2
        inv[rows, rows + s] = 0.0
        phi[s:e] = -(logr @ w) / TWO_PI + self_phi * v[s:e]
        gx[s:e] = -((ddx * inv) @ w) / TWO_PI
        gy[s:e] = -((ddy * inv) @ w) / TWO_PI
    n = grid.n
    return PoissonSolution(
        ScalarField(grid, phi.reshape(n, n)),
        VectorField(grid, np.stack([gx.reshape(n, n), gy.reshape(n, n)])),
        "direct",
    )


def get_solver(method: str):
    try:
        return {"fft": solve_fft, "direct": solve_direct}[method]
    except KeyError:
        raise ValueError(f"unknown Poisson method {method!r}") from None


def interaction_energy(rho: ScalarField, solution: PoissonSolution) -> float:
    """``W = integral rho * phi``, i.e. ``-(1/2pi) double-integral rho rho log|x-y|``."""
    return float(np.sum(rho.values * solution.phi.values) * rho.grid.cell_area)


def laplacian_residual(solution: PoissonSolution, rho: ScalarField, ring: int = 2) -> float:
    """Max of ``|Lap_h phi + rho|`` over cells at least ``ring`` cells from the edge."""
    p = solution.phi.values
    dx = rho.grid.dx
    lap = (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * p[1:-1, 1:-1]) / dx**2
    res = lap + rho.values[1:-1, 1:-1]
    k = ring - 1
    if k > 0:
        res = res[k:-k, k:-k]
    return float(np.max(np.abs(res)))
