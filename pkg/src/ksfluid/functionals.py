"""Moments, energies and the inequality monitors evaluated along a run.

Integrals use the midpoint rule on cell averages with exact cell-centre
weights ``|x|^2`` and ``x``. The interaction energy
``W = -(1/2pi) double-integral rho(x) rho(y) log|x - y|`` stands in for
``integral |grad phi|^2`` everywhere (the latter diverges in the plane).

Notation used by the bound helpers::

    theta = 1 - M / (8 pi)
    H(T)  = K + 2 S - W                 entropy-energy
    V(T)  = X2 + Xm                     combined second moment
    E0    = 3 H(0) + V(0)               initial total energy

See ``docs/bounds.md`` for the recombination behind each constant.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import FluidState, ModelParams, xlogx
from .hydro import kinetic_energy
from .poisson import PoissonSolution, interaction_energy

CRITICAL_MASS = 8.0 * math.pi
CSV_SCHEMA_VERSION = 1

# Monitor tolerance: (a dx + b dt) * max(|lhs|, |rhs|, M).
TOL_DX = 0.1
TOL_DT = 1.0
# Fit accuracy of the entropy growth exponent.
ALPHA_TOL = 0.05
# Allowed positive residual of the discrete entropy inequality, per unit mass.
ENTROPY_TOL = 1e-2


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    second_moment: float
    cross_moment: float
    kinetic: float
    entropy: float
    interaction: float
    dissipation: float
    loghls: float
    energy: float
    rho_max: float
    dt: float = float("nan")
    virial_residual: float = float("nan")
    clamp_mass: float = 0.0
    boundary_outflow: float = 0.0
    entropy_residual: float = float("nan")  # max over the steps since the last sample
    slacks: dict = field(default_factory=dict)

    @property
    def combined_moment(self) -> float:
        return self.second_moment + self.cross_moment

    @property
    def entropy_energy(self) -> float:
        return self.kinetic + 2 * self.entropy - self.interaction


@dataclass
class MonitorSlack:
    name: str
    lhs: float
    rhs: float
    tol: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.slack >= -self.tol

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "tol": self.tol,
                "slack": self.slack, "passed": self.passed}


def monitor_tolerance(dx: float, dt: float, *scales: float) -> float:
    return (TOL_DX * dx + TOL_DT * dt) * max(abs(s) for s in scales)


# -- single-state functionals -----------------------------------------------------

def diagnostics(state: FluidState, solution: PoissonSolution, accumulated_D: float,
                params: ModelParams = ModelParams(), dt: float = float("nan")) -> DiagnosticsRecord:
    grid = state.grid
    A = grid.cell_area
    X, Y = grid.mesh()
    rho, m = state.rho, state.m
    M = float(np.sum(rho) * A)
    X2 = float(np.sum((X * X + Y * Y) * rho) * A)
    Xm = float(np.sum(2 * (X * m[0] + Y * m[1])) * A)
    K = kinetic_energy(state, params)
    S = float(np.sum(xlogx(rho, params.rho_floor)) * A)
    W = interaction_energy(state.rho_field, solution)
    return DiagnosticsRecord(
        t=state.t, mass=M, second_moment=X2, cross_moment=Xm, kinetic=K, entropy=S,
        interaction=W, dissipation=accumulated_D, loghls=loghls_functional(S, W, M),
        energy=3 * (K + 2 * S - W) + X2 + Xm, rho_max=float(np.max(rho)), dt=dt,
    )


def loghls_constant(M: float) -> float:
    """``M (1 + log pi - log M)``."""
    if not M > 0:
        raise ValueError("mass must be positive")
    return M * (1.0 + math.log(math.pi) - math.log(M))


def loghls_functional(S: float, W: float, M: float) -> float:
    """``S + (2/M) double-integral rho rho log|x-y|`` written as ``S - (4 pi / M) W``."""
    return S - 4.0 * math.pi / M * W


def loghls_tolerance(M: float) -> float:
    return 1e-2 * abs(loghls_constant(M)) + 1e-2


def virial_rhs(M: float, K: float) -> float:
    """``4 M (1 - M / 8pi) + 2 K``; vanishes at the critical mass with ``K = 0``."""
    return 4.0 * M * (1.0 - M / CRITICAL_MASS) + 2.0 * K


# -- trajectory functionals ---------------------------------------------------------

@dataclass
class VirialResidual:
    t: np.ndarray
    rate: np.ndarray        # d/dt V - virial_rhs at interior samples
    integrated: np.ndarray  # V(T) - V(0) - 4 M theta T - D(T)


def virial_residual(records: Sequence[DiagnosticsRecord]) -> VirialResidual:
    if len(records) < 2:
        raise ValueError("need at least two records")
    t = np.array([r.t for r in records])
    V = np.array([r.combined_moment for r in records])
    K = np.array([r.kinetic for r in records])
    D = np.array([r.dissipation for r in records])
    M = records[0].mass
    rate = np.gradient(V, t) - (4 * M * (1 - M / CRITICAL_MASS) + 2 * K)
    integrated = V - V[0] - 4 * M * (1 - M / CRITICAL_MASS) * (t - t[0]) - (D - D[0])
    return VirialResidual(t, rate, integrated)


def lemma_monitors(rec: DiagnosticsRecord, rec0: DiagnosticsRecord, dx: float,
                   dt: float) -> list[MonitorSlack]:
    """The second-moment and entropy-energy inequalities at time ``rec.t``.

    ``moment``:  X2/2 <= 4 M theta T + 2 K + D + V(0)
    ``entropy``: K + D + 2 theta S <= (M / 4pi) C(M) + H(0)
    """
    M = rec0.mass
    T = rec.t - rec0.t
    theta = 1 - M / CRITICAL_MASS
    lhs1 = 0.5 * rec.second_moment
    rhs1 = 4 * M * theta * T + 2 * rec.kinetic + rec.dissipation + rec0.combined_moment
    lhs2 = rec.kinetic + rec.dissipation + 2 * theta * rec.entropy
    rhs2 = M / (4 * math.pi) * loghls_constant(M) + rec0.entropy_energy
    return [
        MonitorSlack("moment_inequality", lhs1, rhs1, monitor_tolerance(dx, dt, lhs1, rhs1, M)),
        MonitorSlack("entropy_inequality", lhs2, rhs2, monitor_tolerance(dx, dt, lhs2, rhs2, M)),
    ]


def loghls_monitor(rec: DiagnosticsRecord) -> MonitorSlack:
    M = rec.mass
    return MonitorSlack("loghls", -rec.loghls, loghls_constant(M), loghls_tolerance(M))


def jensen_monitor(rec: DiagnosticsRecord, rec0: DiagnosticsRecord, dx: float,
                   dt: float) -> MonitorSlack:
    """``S(T) >= M log M - M log(pi (10+T)) - X2(T) / (10+T)``."""
    M = rec.mass
    s = 10.0 + rec.t - rec0.t
    floor = M * math.log(M) - M * math.log(math.pi * s) - rec.second_moment / s
    return MonitorSlack("jensen_floor", floor, rec.entropy,
                        monitor_tolerance(dx, dt, floor, rec.entropy, M))


def virial_monitor(rec: DiagnosticsRecord, rec0: DiagnosticsRecord, dx: float,
                   dt: float) -> MonitorSlack:
    """``|V(T) - V(0) - 4 M theta T - D(T)| <= tol`` (integrated identity).

    The drive ``4 M theta T`` is the difference of the pressure term ``4 M T``
    and the interaction term ``M^2 T / 2pi``; discretisation errors are
    relative to those separate terms, which do not vanish at the critical
    mass, so they set the tolerance scale.
    """
    M = rec0.mass
    T = rec.t - rec0.t
    drive = 4 * M * (1 - M / CRITICAL_MASS) * T
    dV = rec.combined_moment - rec0.combined_moment
    dD = rec.dissipation - rec0.dissipation
    res = abs(dV - drive - dD)
    tol = monitor_tolerance(dx, dt, dV, dD, 4 * M * T, M * M * T / (2 * math.pi), M)
    return MonitorSlack("virial_identity", res, 0.0, tol)


def entropy_production_monitor(residual: float, M: float) -> MonitorSlack:
    """Per-step entropy inequality residual must not exceed ``1e-2 M``."""
    return MonitorSlack("entropy_production", residual, 0.0, ENTROPY_TOL * M)


def regime_of(M: float, rtol: float = 1e-9) -> str:
    if abs(M - CRITICAL_MASS) <= rtol * CRITICAL_MASS:
        return "critical"
    return "subcritical" if M < CRITICAL_MASS else "supercritical"


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the a priori envelopes for one run.

    Only ``C1`` depends on the mass alone; the others are built from the mass
    and the measured initial quantities ``H(0)``, ``V(0)`` and ``E0``.
    """

    M: float
    E0: float
    C1: float = float("nan")
    C2: float = float("nan")
    C3: float = float("nan")
    C4: float = float("nan")
    C5: float = float("nan")
    C6: float = float("nan")
    # inputs of moment_envelope
    A: float = float("nan")
    V0: float = float("nan")


def bound_constants(rec0: DiagnosticsRecord, regime: Optional[str] = None) -> BoundConstants:
    M = rec0.mass
    regime = regime or regime_of(M)
    C = loghls_constant(M)
    E0 = rec0.energy
    if regime == "critical":
        return BoundConstants(M=M, E0=E0, C1=3 * M / (4 * math.pi) * C, V0=rec0.combined_moment)
    if regime != "subcritical":
        raise ValueError(f"no a priori envelopes for regime {regime!r}")
    theta = 1 - M / CRITICAL_MASS
    H0, V0 = rec0.entropy_energy, rec0.combined_moment
    A = M / (4 * math.pi) * C + H0 - 2 * theta * M * math.log(M / math.pi)
    beta0 = 0.5 - 0.4 * theta
    a = max(2 * A + V0, 0.0)
    if 1 + E0 <= 0:
        raise ValueError(f"envelopes of the form C(1 + g(T) + E0) need E0 > -1, got {E0}")
    # K + D <= a2 + b2 log(10+T)
    a2 = A + 2 * theta / beta0 * (4 * M * theta + a / 10)
    b2 = 2 * theta * M + 2 * theta / beta0 * 0.4 * theta * M
    C2 = max(a2 / (1 + E0), b2, 0.0)
    # X2 <= a6 + b6 T,  log(10+T) <= log 10 + T/10
    a6 = (a + 4 * theta * M * math.log(10.0)) / beta0
    b6 = (4 * M * theta + 0.4 * theta * M) / beta0
    C6 = max(a6 / (1 + E0), b6, 0.0)
    C4 = M * (1 + 0.4 * theta / beta0)
    C3 = M * math.log(M / math.pi) - (4 * M * theta + a / 10) / beta0 + E0
    C5 = (M / (4 * math.pi) * C + H0) / (2 * theta)
    return BoundConstants(M=M, E0=E0, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, A=A, V0=V0)


def moment_envelope(consts: BoundConstants, T: float) -> float:
    """Sharpest second-moment bound from the recombination (subcritical)."""
    M = consts.M
    theta = 1 - M / CRITICAL_MASS
    beta = 0.5 - 4 * theta / (10 + T)
    return (4 * M * theta * T + 2 * consts.A + 4 * theta * M * math.log(10 + T) + consts.V0) / beta


def theorem_bound_monitors(rec: DiagnosticsRecord, rec0: DiagnosticsRecord, regime: str,
                           dx: float, dt: float,
                           consts: Optional[BoundConstants] = None) -> list[MonitorSlack]:
    M = rec0.mass
    if regime_of(M) != regime:
        raise ValueError(f"regime {regime!r} does not match mass M={M:.6g}")
    consts = consts or bound_constants(rec0, regime)
    T = rec.t - rec0.t
    E0 = consts.E0

    def mon(name, lhs, rhs):
        return MonitorSlack(name, lhs, rhs, monitor_tolerance(dx, dt, lhs, rhs, M))

    if regime == "critical":
        lhs = 0.5 * rec.second_moment + rec.kinetic + rec.dissipation
        return [mon("critical_bound", lhs, consts.C1 + E0)]
    L = math.log(10 + T)
    return [
        mon("kinetic_dissipation_bound", rec.kinetic + rec.dissipation, consts.C2 * (1 + L + E0)),
        mon("entropy_upper_bound", rec.entropy, consts.C5),
        mon("entropy_lower_bound", consts.C3 - E0 - consts.C4 * L, rec.entropy),
        mon("second_moment_bound", rec.second_moment, consts.C6 * (1 + T + E0)),
    ]


# -- supercritical mass ---------------------------------------------------------------

def blowup_tilde_C1(rec0: DiagnosticsRecord) -> float:
    """``(M / 2pi) C(M) - H(0)``, so that the bound reads ``... + C~1 + E0``."""
    M = rec0.mass
    return M / (2 * math.pi) * loghls_constant(M) - rec0.entropy_energy


def blowup_bound(rec0: DiagnosticsRecord, T: float, alpha: float, C_alpha: float,
                 M: Optional[float] = None, entropy_offset: float = 0.0) -> float:
    """Upper bound on ``X2(T) / 2`` for supercritical mass.

    Assumes ``S(t) <= entropy_offset + C_alpha t^alpha``::

        4 M theta T + 4 (M/8pi - 1)(entropy_offset + C_alpha T^alpha) + C~1 + E0
    """
    M = rec0.mass if M is None else M
    if not M > CRITICAL_MASS:
        raise ValueError(f"blow-up bound needs supercritical mass, got M={M:.6g}")
    if not (0 < alpha < 1) or C_alpha < 0:
        raise ValueError("need 0 < alpha < 1 and C_alpha >= 0")
    excess = M / CRITICAL_MASS - 1
    return (-4 * M * excess * T + 4 * excess * (entropy_offset + C_alpha * T**alpha)
            + blowup_tilde_C1(rec0) + rec0.energy)


def latest_blowup_time(rec0: DiagnosticsRecord, alpha: float, C_alpha: float,
                       M: Optional[float] = None, entropy_offset: float = 0.0) -> float:
    """First ``T >= 0`` where :func:`blowup_bound` reaches zero."""
    from scipy.optimize import brentq

    def f(T):
        return blowup_bound(rec0, T, alpha, C_alpha, M, entropy_offset)

    if f(0.0) <= 0:
        return 0.0
    hi = 1.0
    while f(hi) > 0:
        hi *= 2
        if hi > 1e12:
            return math.inf
    return brentq(f, 0.0, hi, xtol=1e-12, rtol=1e-12)


@dataclass
class EntropyFit:
    alpha: float
    C: float
    residual: float
    stderr: float
    samples: int

    @property
    def violates_hypothesis(self) -> bool:
        # bounded or slowly growing entropy is compatible; only near-linear
        # or faster growth contradicts the sublinear assumption
        return self.alpha >= 1 - ALPHA_TOL


def entropy_growth_fit(t, S) -> EntropyFit:
    """Fit ``S(t) - S(t0) ~ C (t - t0)^alpha`` by least squares in log-log.

    ``t[0]`` is the reference time; only later samples with ``S > S(t0)``
    enter. Entropy that never rises above its initial value is bounded,
    reported as ``alpha = 0, C = 0``.
    """
    t = np.asarray(t, dtype=float)
    S = np.asarray(S, dtype=float)
    t0, S0 = t[0], S[0]
    later = t > t0
    if not np.any(S[later] > S0):
        return EntropyFit(0.0, 0.0, 0.0, 0.0, int(np.count_nonzero(later)))
    mask = later & (S > S0)
    tt = t[mask] - t0
    if tt.size < 10 or np.ptp(np.log(tt)) == 0:
        raise ValueError("degenerate window: need >= 10 samples at distinct times with S > S(0)")
    x = np.log(tt)
    y = np.log(S[mask] - S0)
    coef = np.polyfit(x, y, 1)
    alpha, logC = coef
    r = y - np.polyval(coef, x)
    dof = max(tt.size - 2, 1)
    stderr = math.sqrt(float(np.sum(r * r)) / dof / float(np.sum((x - x.mean()) ** 2)))
    return EntropyFit(float(alpha), float(math.exp(logC)), float(np.sqrt(np.mean(r * r))),
                      stderr, int(tt.size))


# -- CSV ----------------------------------------------------------------------------------

SCALAR_COLUMNS = [f.name for f in fields(DiagnosticsRecord) if f.name != "slacks"]
MONITOR_NAMES = [
    "loghls", "jensen_floor", "moment_inequality", "entropy_inequality",
    "critical_bound", "kinetic_dissipation_bound", "entropy_upper_bound",
    "entropy_lower_bound", "second_moment_bound", "virial_identity", "entropy_production",
]
CSV_COLUMNS = SCALAR_COLUMNS + [f"slack_{n}" for n in MONITOR_NAMES]


def write_csv(path, records: Iterable[DiagnosticsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# ksfluid diagnostics schema={CSV_SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            d = asdict(r)
            row = [repr(float(d[c])) for c in SCALAR_COLUMNS]
            row += ["" if n not in r.slacks else repr(float(r.slacks[n])) for n in MONITOR_NAMES]
            w.writerow(row)


def read_csv(path) -> list[DiagnosticsRecord]:
    out = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# ksfluid diagnostics schema="):
            raise ValueError(f"{path}: missing schema header")
        version = int(first.strip().split("=")[1])
        if version != CSV_SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema {version}")
        for row in csv.DictReader(fh):
            kw = {c: float(row[c]) for c in SCALAR_COLUMNS}
            slacks = {n: float(row[f"slack_{n}"]) for n in MONITOR_NAMES if row[f"slack_{n}"]}
            out.append(DiagnosticsRecord(**kw, slacks=slacks))
    return out
