"""Short runs over a list of masses straddling the critical value."""
from __future__ import annotations

import csv
from pathlib import Path

from ..functionals import CRITICAL_MASS, regime_of
from .config import ScenarioConfig, parse_number
from .runner import RunError, run

SWEEP_COLUMNS = ["mass", "mass_over_8pi", "regime", "termination", "initial_slope",
                 "predicted_slope", "mean_drive", "predicted_drive", "final_second_moment",
                 "rho_max_ratio", "monitors_failed"]


def parse_masses(text: str) -> tuple:
    return tuple(parse_number(p) for p in text.split(",") if p.strip())


def sweep(base: ScenarioConfig, masses, out_dir) -> list[dict]:
    """Run ``base`` at each mass and tabulate the virial drive.

    ``initial_slope`` is the first-interval difference quotient of
    ``X2 + Xm``; ``mean_drive`` is ``(V(T) - V(0) - D(T)) / T``. Both are
    predicted to equal ``4 M (1 - M / 8pi)`` for data at rest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for M in masses:
        cfg = base.with_overrides(mass=float(M), regime=regime_of(M))
        sub = out / f"M_{M:.6f}"
        try:
            summary = run(cfg, sub)
            termination = summary.termination
        except RunError as exc:
            summary, termination = exc.summary, "error"
        recs = _records(sub)
        r0, r1, rT = recs[0], recs[1], recs[-1]
        T = rT.t - r0.t
        rows.append({
            "mass": M,
            "mass_over_8pi": M / CRITICAL_MASS,
            "regime": cfg.regime,
            "termination": termination,
            "initial_slope": (r1.combined_moment - r0.combined_moment) / (r1.t - r0.t),
            "predicted_slope": 4 * M * (1 - M / CRITICAL_MASS) + 2 * r0.kinetic,
            "mean_drive": (rT.combined_moment - r0.combined_moment - rT.dissipation) / T,
            "predicted_drive": 4 * M * (1 - M / CRITICAL_MASS),
            "final_second_moment": rT.second_moment,
            "rho_max_ratio": rT.rho_max / r0.rho_max,
            "monitors_failed": ";".join(k for k, v in summary.monitors.items()
                                        if v.get("status") == "fail"),
        })
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return rows


def _records(path):
    from ..functionals import read_csv
    return read_csv(Path(path) / "diagnostics.csv")
