"""Command line front end: ``ksfluid run | sweep | compare | check``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, load_config
from .runner import RunError, run

EXIT_OK, EXIT_MONITOR_FAIL, EXIT_ERROR = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    p.add_argument("--t-end", type=float, dest="t_end", help="final time")
    p.add_argument("--mass", type=float, help="total mass (sets the regime)")
    p.add_argument("--grid-n", type=int, dest="n", help="cells per side")
    p.add_argument("--grid-L", type=float, dest="L", help="half width of the box")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksfluid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve one scenario and write diagnostics")
    _common(p)
    p.add_argument("--regime", choices=["subcritical", "critical", "supercritical"])

    p = sub.add_parser("sweep", help="short runs over masses across 8pi")
    _common(p)
    p.add_argument("--masses", type=str, help="comma separated, e.g. 4pi,8pi,16pi")

    p = sub.add_parser("compare", help="fluid versus particle ensembles")
    _common(p)

    p = sub.add_parser("check", help="oracle and property checks")
    p.add_argument("--quick", action="store_true", help="skip the slower checks")
    return parser


def resolve_config(args, **defaults) -> ScenarioConfig:
    """Config file (or regime defaults), then ``defaults``, then command line flags."""
    from ..functionals import regime_of
    regime = getattr(args, "regime", None)
    if regime is not None and args.mass is not None and regime_of(args.mass) != regime:
        raise ConfigError(f"--mass {args.mass:g} is {regime_of(args.mass)}, not {regime}")
    if args.config is not None:
        cfg = load_config(args.config)
        if regime is not None and regime != cfg.regime:
            cfg = ScenarioConfig.for_regime(regime, **{k: v for k, v in cfg.as_dict().items()
                                                       if k not in ("regime", "mass")})
    else:
        if regime is None and args.mass is not None:
            regime = regime_of(args.mass)
        cfg = ScenarioConfig.for_regime(regime or "subcritical", **defaults)
    over = {"seed": args.seed, "t_end": args.t_end, "mass": args.mass, "n": args.n, "L": args.L,
            "output_dir": str(args.out) if args.out is not None else None}
    return cfg.with_overrides(**over)


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = cfg.output_dir or f"runs/{cfg.regime}"
    try:
        summary = run(cfg, out)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"partial output in {out}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{cfg.regime} M={cfg.mass:.6g}: {summary.termination} at t={summary.final.t:.6g} "
          f"after {summary.steps} steps")
    for name, m in summary.monitors.items():
        if m["status"] == "not_applicable":
            print(f"  {name:28s} n/a")
        else:
            print(f"  {name:28s} {m['status']:5s} min slack {m['min_slack']:+.4e}")
    if summary.T_star is not None:
        print(f"  predicted latest blow-up time T* = {summary.T_star:.6g}")
    elif summary.T_star_note:
        print(f"  T*: {summary.T_star_note}")
    print(f"outputs in {out}")
    return EXIT_OK if summary.all_passed else EXIT_MONITOR_FAIL


def cmd_sweep(args) -> int:
    from .sweep import parse_masses, sweep
    cfg = resolve_config(args)
    if args.t_end is None:
        cfg = cfg.with_overrides(t_end=1.0)
    masses = parse_masses(args.masses) if args.masses else cfg.sweep_masses
    out = Path(cfg.output_dir or "runs/sweep")
    rows = sweep(cfg, masses, out)
    for r in rows:
        print(f"M={r['mass']:9.4f} {r['regime']:13s} {r['termination']:16s} "
              f"slope {r['initial_slope']:+9.4f} (predicted {r['predicted_slope']:+9.4f})")
    print(f"table in {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .compare import COMPARE_GRID, COMPARE_T_END, compare_fluid_particles
    cfg = resolve_config(args, **COMPARE_GRID)
    t_end = args.t_end if args.t_end is not None else COMPARE_T_END
    rep = compare_fluid_particles(cfg, t_end)
    print(f"fluid vs particles, M={rep.mass:.6g}, horizon t={t_end}")
    for g in rep.gaps:
        print(f"  N={g.N:6d}  X2 gap {g.rms_gap_second_moment:.3e}  Xm gap "
              f"{g.rms_gap_cross_moment:.3e}  K gap {g.rms_gap_kinetic:.3e}")
    print(f"  X2 gap decreasing in N: {rep.decreasing()}; closure drift {rep.closure_drift:+.3e}")
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        from dataclasses import asdict
        (out / "compare.json").write_text(json.dumps(asdict(rep), indent=2, default=str) + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks
    results = run_checks(quick=args.quick)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_MONITOR_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare,
                "check": cmd_check}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
