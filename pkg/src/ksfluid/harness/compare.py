"""Fluid versus mean-field particles from matched initial data.

The fluid starts as a Gaussian at rest with unit pressure; each particle
ensemble samples the same Gaussian in space with Maxwellian velocities of
unit temperature, so density, momentum and pressure agree at ``t = 0``.

The particle system has no mechanism that keeps the temperature at one
(friction cools it), while the fluid is isothermal by construction. Their
second moments therefore separate by a model-closure drift that grows like
``t^3`` and does not shrink with ``N``. The comparison horizon must be short
enough for this drift to stay below the sampling error of the largest
ensemble; ``closure_drift`` in the report estimates it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..particles import empirical_moments, ensemble_step, sample_gaussian
from .config import ConfigError, ScenarioConfig
from .runner import TIME_EPS, Simulation

# The fluid reference must be converged well below the 1/sqrt(N) sampling
# error: on this grid the X2 discretisation error at t = 0.2 is ~5e-4.
COMPARE_GRID = dict(L=8.0, n=256)
COMPARE_T_END = 0.2


@dataclass
class NGap:
    N: int
    replicas: int
    rms_gap_second_moment: float
    rms_gap_cross_moment: float
    rms_gap_kinetic: float
    mean_final_gap_second_moment: float  # signed, averaged over replicas


@dataclass
class CompareReport:
    mass: float
    t: list
    fluid_second_moment: list
    fluid_cross_moment: list
    fluid_kinetic: list
    gaps: list = field(default_factory=list)
    # sign of V(T) - V(0), V = X2 + Xm: fluid, then {N: mean over replicas}
    fluid_combined_change: float = math.nan
    particle_combined_change: dict = field(default_factory=dict)
    # raw per-replica series: {N: [[X2(t) ...] per replica]}
    particle_second_moment: dict = field(default_factory=dict)

    def trend(self, attr: str = "rms_gap_second_moment") -> list[float]:
        return [getattr(g, attr) for g in self.gaps]

    def decreasing(self, attr: str = "rms_gap_second_moment") -> bool:
        v = self.trend(attr)
        return all(b < a for a, b in zip(v, v[1:]))

    def combined_sign_agrees(self) -> bool:
        s = np.sign(self.fluid_combined_change)
        return all(np.sign(v) == s for v in self.particle_combined_change.values())

    @property
    def closure_drift(self) -> float:
        """Signed mean final-time X2 gap of the largest ensemble."""
        return self.gaps[-1].mean_final_gap_second_moment if self.gaps else math.nan


def _check_masses(config: ScenarioConfig) -> float:
    if config.particle_mass is not None and not math.isclose(
            config.particle_mass, config.mass, rel_tol=1e-12):
        raise ConfigError(f"particle mass {config.particle_mass} does not match "
                          f"fluid mass {config.mass}")
    if any(config.center) or any(config.velocity):
        raise ConfigError("the matched comparison needs a centred Gaussian at rest")
    return config.mass


def _particle_series(config, N, replica, times):
    ss = np.random.SeedSequence([config.seed, N, replica])
    ens = sample_gaussian(N, config.mass, config.sigma, ss)
    out = []
    for t in times:
        while t - ens.t > TIME_EPS * max(1.0, t):
            ens = ensemble_step(ens, min(config.particle_dt, t - ens.t))
        mom = empirical_moments(ens)
        out.append((mom.second_moment, mom.cross_moment, mom.kinetic))
    return np.array(out)


def compare_fluid_particles(config: ScenarioConfig, t_end: float = COMPARE_T_END) -> CompareReport:
    """Relative gaps of ``X2``, ``Xm`` and ``K`` between fluid and particles.

    For each ``N`` in ``config.particle_counts`` and each of ``config.replicas``
    independent ensembles, gaps are taken at every sample time after ``t = 0``
    and combined as a root-mean-square. ``X2`` and ``Xm`` gaps are relative to
    the fluid ``X2``; the particle kinetic energy (which includes the thermal
    part) is compared with ``K + 2 M``, the fluid bulk plus thermal energy.
    """
    M = _check_masses(config)
    cfg = config.with_overrides(t_end=t_end, output_dir=None)
    sim = Simulation(cfg)
    times = [0.0]
    k = max(1, int(round(t_end / cfg.sample_interval)))
    times += [t_end * (i + 1) / k for i in range(k)]
    fluid = []
    for t in times:
        sim.advance_to(t)
        rec = sim.sample()
        fluid.append((rec.second_moment, rec.cross_moment, rec.kinetic))
    fluid = np.array(fluid)
    report = CompareReport(M, times, fluid[:, 0].tolist(), fluid[:, 1].tolist(),
                           fluid[:, 2].tolist())
    report.fluid_combined_change = float(fluid[-1, 0] + fluid[-1, 1] - fluid[0, 0] - fluid[0, 1])
    X2f = fluid[1:, 0]
    Kf = fluid[1:, 2] + 2 * M * sim.params.sound_speed**2
    for N in sorted(config.particle_counts):
        g2, gm, gk, fin, raw, dV = [], [], [], [], [], []
        for r in range(config.replicas):
            p = _particle_series(cfg, N, r, times)
            raw.append(p[:, 0].tolist())
            g2.append((p[1:, 0] - X2f) / X2f)
            gm.append((p[1:, 1] - fluid[1:, 1]) / X2f)
            gk.append((p[1:, 2] - Kf) / Kf)
            fin.append(g2[-1][-1])
            dV.append(p[-1, 0] + p[-1, 1] - p[0, 0] - p[0, 1])
        rms = lambda g: float(np.sqrt(np.mean(np.square(g))))
        report.gaps.append(NGap(N, config.replicas, rms(g2), rms(gm), rms(gk), float(np.mean(fin))))
        report.particle_second_moment[N] = raw
        report.particle_combined_change[N] = float(np.mean(dV))
    return report
