"""Run orchestration: time loop, sampling, monitors, blow-up detection and output."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import functionals as fn
from ..core import GaussianSpec, ModelParams, ScalarField, gaussian_state, make_grid, write_field
from ..hydro import BlowupSuspected, HydroError, cfl_dt, kinetic_energy, step, total_entropy
from ..particles import (ParticleEnsemble, empirical_moments, ensemble_step, sample_gaussian,
                         write_ensemble_csv)
from ..poisson import PoissonSolution, get_solver, interaction_energy
from .config import ScenarioConfig, dump_config

SUMMARY_SCHEMA_VERSION = 1
TERMINATIONS = ("t_end", "blowup_suspected", "error")
# samples closer than this to a target time count as landed on it
TIME_EPS = 1e-12


class RunError(RuntimeError):
    """A module error raised mid-run; ``summary`` holds the partial result."""

    def __init__(self, msg, summary=None):
        super().__init__(msg)
        self.summary = summary


# -- blow-up detection ------------------------------------------------------------

@dataclass
class BlowupSignal:
    suspected: bool
    t: Optional[float] = None
    evidence: dict = field(default_factory=dict)

    def __bool__(self):
        return self.suspected


def detect_blowup(tail: Sequence[fn.DiagnosticsRecord], rho_max0: float, dt_min: float,
                  rho_ratio: float = 1e3, dt_factor: float = 10.0) -> BlowupSignal:
    """Concentration proxy for the vanishing second moment.

    Fires only when all three hold on ``tail`` (at least 5 samples):
    ``X2 + Xm`` strictly decreasing across the tail, the last ``rho_max``
    above ``rho_ratio`` times the initial one, and the last time step below
    ``dt_factor * dt_min``. The evidence dict is filled either way.
    """
    if len(tail) < 5:
        raise ValueError("detect_blowup needs at least 5 samples")
    V = np.array([r.combined_moment for r in tail])
    last = tail[-1]
    decreasing = bool(np.all(np.diff(V) < 0))
    ratio = last.rho_max / rho_max0
    concentrated = bool(ratio > rho_ratio)
    collapsed = bool(last.dt < dt_factor * dt_min)
    evidence = {
        "t": last.t,
        "combined_moment_tail": V.tolist(),
        "moment_decreasing": decreasing,
        "rho_max_ratio": ratio,
        "rho_ratio_threshold": rho_ratio,
        "concentrated": concentrated,
        "dt": last.dt,
        "dt_threshold": dt_factor * dt_min,
        "dt_collapsed": collapsed,
    }
    if decreasing and concentrated and collapsed:
        return BlowupSignal(True, last.t, evidence)
    return BlowupSignal(False, None, evidence)


# -- simulation -------------------------------------------------------------------

def applicable_monitors(regime: str) -> list[str]:
    names = ["loghls", "jensen_floor", "moment_inequality", "virial_identity",
             "entropy_production"]
    if regime in ("subcritical", "critical"):
        names.append("entropy_inequality")
    if regime == "critical":
        names.append("critical_bound")
    if regime == "subcritical":
        names += ["kinetic_dissipation_bound", "entropy_upper_bound", "entropy_lower_bound",
                  "second_moment_bound"]
    return names


class Simulation:
    """Fluid state plus the running integrals needed by the diagnostics.

    ``advance_to(t)`` steps with the CFL time step, shortened so that ``t``
    is hit exactly; ``sample()`` evaluates a :class:`DiagnosticsRecord` with
    the monitor slacks of the configured regime.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.grid = make_grid(config.L, config.n)
        self.params = ModelParams.for_problem(config.mass, config.L)
        spec = GaussianSpec(config.mass, config.sigma, tuple(config.center), tuple(config.velocity))
        init = gaussian_state(self.grid, spec, self.params)
        self.state = init.state
        self.solver = get_solver(config.solver)
        self.solution = self.solver(self.state.rho_field)
        self.W = interaction_energy(self.state.rho_field, self.solution)
        self.H = total_entropy(self.state, self.params)
        self.K = kinetic_energy(self.state, self.params)
        self.D = 0.0
        self.steps = 0
        self.clamp_mass = init.clamp_mass
        self.outflow = 0.0
        self.last_dt = cfl_dt(self.state, self.params, config.cfl, config.dt_min)
        self.entropy_residual = -math.inf
        self.max_mass_defect = 0.0
        self.rho_max0 = float(np.max(self.state.rho))
        self.last_monitors: list = []
        self.rec0: Optional[fn.DiagnosticsRecord] = None
        self.consts = None

    @property
    def t(self) -> float:
        return self.state.t

    def advance_to(self, target: float) -> None:
        cfg = self.config
        while target - self.t > TIME_EPS * max(1.0, target):
            dt_cfl = cfl_dt(self.state, self.params, cfg.cfl, cfg.dt_min)
            self.last_dt = dt_cfl
            dt = min(dt_cfl, target - self.t)
            new, rep = step(self.state, self.params, self.solver, dt, solution=self.solution,
                            limited=cfg.limited)
            sol = self.solver(new.rho_field)
            W = interaction_energy(new.rho_field, sol)
            H = total_entropy(new, self.params)
            K = kinetic_energy(new, self.params)
            self.entropy_residual = max(self.entropy_residual,
                                        (H - self.H) / dt - (W - self.W) / dt + 2 * self.K)
            self.D += dt * (self.K + K)
            self.clamp_mass += rep.clamp_mass
            self.outflow += rep.boundary_outflow
            self.max_mass_defect = max(self.max_mass_defect, abs(rep.mass_defect))
            self.state, self.solution, self.W, self.H, self.K = new, sol, W, H, K
            self.steps += 1
        # land exactly on the target despite round-off in the accumulated time
        self.state = type(self.state)(self.grid, self.state.rho, self.state.m, target)

    def sample(self) -> fn.DiagnosticsRecord:
        rec = fn.diagnostics(self.state, self.solution, self.D, self.params, self.last_dt)
        rec.clamp_mass = self.clamp_mass
        rec.boundary_outflow = self.outflow
        rec.entropy_residual = self.entropy_residual if self.steps else float("nan")
        self.entropy_residual = -math.inf
        if self.rec0 is None:
            self.rec0 = rec
            if self.config.regime != "supercritical":
                self.consts = fn.bound_constants(rec, self.config.regime)
        rec.virial_residual = _virial_integrated(rec, self.rec0)
        self.last_monitors = self.monitors(rec)
        for mon in self.last_monitors:
            rec.slacks[mon.name] = mon.slack
        return rec

    def monitors(self, rec: fn.DiagnosticsRecord) -> list[fn.MonitorSlack]:
        dx, dt = self.grid.dx, rec.dt
        rec0 = self.rec0
        regime = self.config.regime
        out = [fn.loghls_monitor(rec), fn.jensen_monitor(rec, rec0, dx, dt)]
        lemma = fn.lemma_monitors(rec, rec0, dx, dt)
        out.append(lemma[0])
        if regime != "supercritical":
            out.append(lemma[1])
            out += fn.theorem_bound_monitors(rec, rec0, regime, dx, dt, self.consts)
        out.append(fn.virial_monitor(rec, rec0, dx, dt))
        if math.isfinite(rec.entropy_residual):
            out.append(fn.entropy_production_monitor(rec.entropy_residual, rec0.mass))
        return out


def _virial_integrated(rec, rec0) -> float:
    M = rec0.mass
    T = rec.t - rec0.t
    return (rec.combined_moment - rec0.combined_moment
            - 4 * M * (1 - M / fn.CRITICAL_MASS) * T - (rec.dissipation - rec0.dissipation))


def sample_times(config: ScenarioConfig) -> list[float]:
    k = int(math.floor(config.t_end / config.sample_interval + 1e-9))
    ts = {round(i * config.sample_interval, 12) for i in range(k + 1)}
    ts.add(config.t_end)
    ts.update(t for t in config.snapshot_times if 0 <= t <= config.t_end)
    return sorted(ts)


# -- summary ------------------------------------------------------------------------

@dataclass
class RunSummary:
    termination: str
    final: Optional[fn.DiagnosticsRecord]
    monitors: dict
    config: dict
    message: str = ""
    steps: int = 0
    samples: int = 0
    blowup: Optional[dict] = None
    T_star: Optional[float] = None
    T_star_note: str = ""
    entropy_fit: Optional[dict] = None
    bound_constants: Optional[dict] = None
    mass_accounting: dict = field(default_factory=dict)
    particles: Optional[dict] = None
    output_dir: Optional[str] = None

    @property
    def all_passed(self) -> bool:
        return all(m["status"] != "fail" for m in self.monitors.values())

    def to_json(self) -> str:
        d = asdict(self)
        d["schema"] = SUMMARY_SCHEMA_VERSION
        if self.final is not None:
            d["final"] = _record_dict(self.final)
        return json.dumps(_jsonable(d), indent=2, sort_keys=True, allow_nan=False)


def _record_dict(rec: fn.DiagnosticsRecord) -> dict:
    d = asdict(rec)
    d["combined_moment"] = rec.combined_moment
    d["entropy_energy"] = rec.entropy_energy
    return d


def _jsonable(x):
    # JSON has no NaN/Inf; encode them as strings so nothing is dropped silently
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def monitor_table(records: Sequence[fn.DiagnosticsRecord], regime: str,
                  details: dict) -> dict:
    """Worst slack per monitor over the run; regime-inapplicable monitors are marked so."""
    table = {}
    active = applicable_monitors(regime)
    for name in fn.MONITOR_NAMES:
        if name not in active:
            table[name] = {"status": "not_applicable", "regime": regime}
            continue
        worst = details.get(name)
        if worst is None:
            table[name] = {"status": "no_samples"}
            continue
        slacks = [r.slacks[name] for r in records if name in r.slacks]
        table[name] = {
            "status": "pass" if details[name + "#all"] else "fail",
            "min_slack": min(slacks),
            "samples": len(slacks),
            "failures": details[name + "#fails"],
            "worst": worst,
        }
    return table


def _track(details: dict, t: float, monitors: list[fn.MonitorSlack]) -> None:
    for mon in monitors:
        key = mon.name
        entry = {"t": t, **mon.as_dict()}
        details.setdefault(key + "#all", True)
        details.setdefault(key + "#fails", 0)
        if not mon.passed:
            details[key + "#all"] = False
            details[key + "#fails"] += 1
        # worst = most negative slack relative to its tolerance
        score = mon.slack / mon.tol if mon.tol > 0 else mon.slack
        if key not in details or score < details[key + "#score"]:
            details[key] = entry
            details[key + "#score"] = score


# -- run ---------------------------------------------------------------------------

def _snapshot(out: Path, sim: Simulation, t: float) -> None:
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    write_field(snap / f"rho_t{t:.6f}.ksf", sim.grid, sim.state.rho, t)
    write_field(snap / f"m_t{t:.6f}.ksf", sim.grid, sim.state.m, t)


def _particle_ensemble(config: ScenarioConfig) -> ParticleEnsemble:
    mass = config.mass if config.particle_mass is None else config.particle_mass
    return sample_gaussian(config.n_particles, mass, config.sigma, config.seed)


def _advance_particles(ens: ParticleEnsemble, target: float, dt_max: float) -> ParticleEnsemble:
    while target - ens.t > TIME_EPS * max(1.0, target):
        ens = ensemble_step(ens, min(dt_max, target - ens.t))
    return ens


def run(config: ScenarioConfig, out_dir=None) -> RunSummary:
    """Evolve one scenario, evaluate every monitor at each sample and write outputs.

    Outputs (when an output directory is given): ``diagnostics.csv``,
    ``summary.json``, ``config.txt`` and ``snapshots/`` with field files at
    the configured times plus the final time. Module errors are re-raised as
    :class:`RunError` after the partial output has been written.
    """
    out_dir = out_dir if out_dir is not None else config.output_dir
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(dump_config(config))

    records: list[fn.DiagnosticsRecord] = []
    details: dict = {}
    termination, message = "t_end", ""
    signal = None
    error = None
    sim = None
    ens = None
    particle_rows = []
    snap_set = {round(t, 12) for t in config.snapshot_times}

    def take_sample():
        rec = sim.sample()
        records.append(rec)
        _track(details, rec.t, sim.last_monitors)
        if out is not None and round(rec.t, 12) in snap_set:
            _snapshot(out, sim, rec.t)
            if ens is not None:
                write_ensemble_csv(out / "snapshots" / f"particles_t{rec.t:.6f}.csv", ens)
        if ens is not None:
            mom = empirical_moments(ens)
            particle_rows.append((mom.t, mom.second_moment, mom.cross_moment, mom.kinetic))
        return rec

    try:
        sim = Simulation(config)
        if config.particles:
            ens = _particle_ensemble(config)
        take_sample()
        for t_next in sample_times(config)[1:]:
            try:
                sim.advance_to(t_next)
            except BlowupSuspected as exc:
                rec = sim.sample()
                records.append(rec)
                _track(details, rec.t, sim.last_monitors)
                signal = _tail_signal(records, sim, config, dt_override=exc.dt)
                if signal:
                    termination = "blowup_suspected"
                else:
                    termination, message = "error", f"time step collapsed without concentration: {exc}"
                break
            if ens is not None:
                ens = _advance_particles(ens, t_next, config.particle_dt)
            take_sample()
            if len(records) >= max(5, config.blowup_tail):
                signal = _tail_signal(records, sim, config)
                if signal:
                    termination = "blowup_suspected"
                    break
    except Exception as exc:  # noqa: BLE001 - re-raised below with context
        termination = "error"
        t_err = sim.t if sim is not None else 0.0
        message = f"{type(exc).__name__} at t={t_err:.6g}: {exc}"
        error = exc

    summary = _summarize(config, sim, records, details, termination, message, signal,
                         particle_rows)
    if out is not None:
        _write_outputs(out, summary, records, sim, particle_rows)
        summary.output_dir = str(out)
    if error is not None:
        raise RunError(f"run failed ({config.regime}, M={config.mass:.6g}): {message}",
                       summary) from error
    return summary


def _tail_signal(records, sim, config, dt_override=None) -> BlowupSignal:
    tail = records[-max(5, config.blowup_tail):]
    if dt_override is not None:
        tail[-1].dt = dt_override
    if len(tail) < 5:
        return BlowupSignal(False, None, {"reason": "fewer than 5 samples"})
    return detect_blowup(tail, sim.rho_max0, config.dt_min, config.blowup_rho_ratio)


def _summarize(config, sim, records, details, termination, message, signal, particle_rows):
    summary = RunSummary(
        termination=termination,
        final=records[-1] if records else None,
        monitors=monitor_table(records, config.regime, details) if records else {},
        config=config.as_dict(),
        message=message,
        steps=sim.steps if sim is not None else 0,
        samples=len(records),
    )
    if signal is not None:
        summary.blowup = {"suspected": signal.suspected, "t": signal.t, **signal.evidence}
    if sim is not None:
        M0 = records[0].mass if records else config.mass
        summary.mass_accounting = {
            "initial_mass": M0,
            "final_mass": records[-1].mass if records else math.nan,
            "boundary_outflow": sim.outflow,
            "boundary_outflow_fraction": sim.outflow / config.mass,
            "clamp_mass": sim.clamp_mass,
            "max_step_mass_defect": sim.max_mass_defect,
        }
        if sim.consts is not None:
            summary.bound_constants = asdict(sim.consts)
    if config.regime == "supercritical" and len(records) > 1:
        _blowup_time(summary, records)
    if particle_rows:
        t, x2, xm, k = particle_rows[-1]
        summary.particles = {"N": config.n_particles, "t": t, "second_moment": x2,
                             "cross_moment": xm, "kinetic": k}
    return summary


def _blowup_time(summary: RunSummary, records) -> None:
    t = [r.t for r in records]
    S = [r.entropy for r in records]
    try:
        fit = fn.entropy_growth_fit(t, S)
    except ValueError as exc:
        summary.T_star_note = f"entropy fit unavailable: {exc}"
        return
    summary.entropy_fit = {"alpha": fit.alpha, "C": fit.C, "residual": fit.residual,
                           "stderr": fit.stderr, "samples": fit.samples,
                           "violates_hypothesis": fit.violates_hypothesis}
    rec0 = records[0]
    if fit.C == 0.0:
        # entropy never exceeded S(0): the envelope holds with C_alpha = 0
        summary.T_star = fn.latest_blowup_time(rec0, 0.5, 0.0, entropy_offset=rec0.entropy)
        summary.T_star_note = "entropy bounded by S(0); T* from C_alpha = 0"
        return
    if not 0 < fit.alpha < 1:
        summary.T_star_note = (f"fitted alpha={fit.alpha:.4g} outside (0, 1): the sublinear "
                               "entropy growth hypothesis fails on this run, no T* computed")
        return
    summary.T_star = fn.latest_blowup_time(rec0, fit.alpha, fit.C, entropy_offset=rec0.entropy)
    summary.T_star_note = "from the fitted envelope S <= S(0) + C t^alpha"


def _write_outputs(out: Path, summary, records, sim, particle_rows) -> None:
    if records:
        fn.write_csv(out / "diagnostics.csv", records)
    if sim is not None and records:
        _snapshot(out, sim, sim.t)
    if particle_rows:
        with open(out / "particle_moments.csv", "w") as fh:
            fh.write("t,second_moment,cross_moment,kinetic\n")
            for row in particle_rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    (out / "summary.json").write_text(summary.to_json() + "\n")
