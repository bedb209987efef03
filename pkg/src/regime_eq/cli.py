"""
Command-line front end.

    regime-eq solve    [--config PATH] [--out DIR]
    regime-eq strategy [--config PATH] [--out DIR] [--g CSV]
    regime-eq figures  [--config PATH] [--out DIR] [--figure K]
    regime-eq verify   [--config PATH] [--out DIR] [--seed N] [--paths N] [--dt X]

Outputs (all CSV with a header row and round-trip float precision):

* ``solve``: ``g.csv`` with columns t, g11, g21, g12, g22, dg11, ..., dg22
  and ``solve_summary.csv`` (key, value).
* ``strategy``: ``strategy.csv`` with columns t, pi_star_regime1,
  pi_star_regime2, merton_alpha1_regime1, merton_alpha1_regime2,
  merton_alpha2_regime1, merton_alpha2_regime2 on ``grid_points`` equally
  spaced times. ``--g`` evaluates a previously written ``g.csv`` instead
  of solving again.
* ``figures``: per figure, one ``figureK_<parameter>_<value>_regime<i>.csv``
  per curve with columns t, pi_star, merton_alpha1, merton_alpha2, and a
  ``figureK_manifest.csv`` listing every curve and its parameters.
  Figure 1 is the time profile, 2 sweeps lambda1, 3 sweeps lambda2, 4 sweeps
  lambda1 = lambda2, 5 sweeps alpha2 and then alpha1.
* ``verify``: ``verify_estimates.csv`` (quantity, regime_i, regime_j,
  estimate, std_error, n_effective, n_paths, dt, seed) and
  ``verify_report.csv`` with one pass/fail row per check.

Exit codes: 0 success, 2 configuration or usage error, 3 solver or
simulation failure, 4 verification failure. ``REGIME_EQ_THREADS`` caps the
number of Monte Carlo worker processes.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, RegimeEqError, SimulationError, SolverError
from .figures import FIGURE_IDS, FIGURE_TITLES, figure_curves, write_figure
from .montecarlo import write_estimates_csv
from .odes import GSolution, solve_g
from .strategy import write_strategy_csv
from .verification import all_passed, verify, write_report

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


def _solve(cfg: RunConfig) -> GSolution:
    return solve_g(cfg.market, cfg.prefs, cfg.chain, cfg.T, cfg.t_start, cfg.tolerance)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def solve_summary(sol: GSolution) -> list[tuple[str, object]]:
    rows = [
        ("t_start", sol.t_start),
        ("T", sol.T),
        ("tolerance", sol.tolerance),
        ("grid_points", int(sol.grid.size)),
        ("accepted_steps", sol.n_accepted),
        ("rejected_steps", sol.n_rejected),
        ("min_g", float(sol.g.min())),
        ("A_min", sol.a_range[0]),
        ("A_max", sol.a_range[1]),
    ]
    if sol.ratio_bounds is None:
        rows.append(("ratio_certificate", "not_applicable"))
    else:
        for b in sol.ratio_bounds:
            rows += [
                (f"ratio_j{b.j}_lower", b.lower),
                (f"ratio_j{b.j}_upper", b.upper),
                (f"ratio_j{b.j}_observed_min", b.observed_min),
                (f"ratio_j{b.j}_observed_max", b.observed_max),
            ]
        rows.append(("ratio_certificate", "holds" if all(b.holds for b in sol.ratio_bounds) else "violated"))
    return rows


def _write_pairs(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("key", "value"))
        for k, v in rows:
            w.writerow((k, repr(v) if isinstance(v, float) else v))


def cmd_solve(cfg: RunConfig) -> int:
    sol = _solve(cfg)
    out = _out_dir(cfg)
    sol.to_csv(out / "g.csv")
    summary = solve_summary(sol)
    _write_pairs(summary, out / "solve_summary.csv")
    for k, v in summary:
        print(f"{k:>24} {v}")
    return EXIT_OK


def cmd_strategy(cfg: RunConfig, g_csv: str | None = None) -> int:
    if g_csv is None:
        sol = _solve(cfg)
    else:
        try:
            sol = GSolution.from_csv(g_csv, cfg.market, cfg.prefs, cfg.chain)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot load g trajectory from {g_csv}: {exc}") from exc
    grid = np.linspace(sol.t_start, sol.T, cfg.grid_points)
    out = _out_dir(cfg)
    table = write_strategy_csv(sol, grid, out / "strategy.csv")
    print(f"wrote {len(table)} rows to {out / 'strategy.csv'}")
    print(f"pi*(t_start) = ({table[0, 1]:.6f}, {table[0, 2]:.6f});  pi*(T) = ({table[-1, 1]:.6f}, {table[-1, 2]:.6f})")
    return EXIT_OK


def cmd_figures(cfg: RunConfig, figure: int | None = None) -> int:
    out = _out_dir(cfg)
    for fig in FIGURE_IDS if figure is None else (figure,):
        curves = figure_curves(fig, cfg.market, cfg.prefs, cfg.chain, cfg.T, cfg.t_start, cfg.tolerance, cfg.grid_points)
        manifest = write_figure(curves, out)
        print(f"figure {fig} ({FIGURE_TITLES[fig]}): {len(curves)} curves, manifest {manifest}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    sol = _solve(cfg)
    out = _out_dir(cfg)
    workers = cfg.workers or None
    rows, estimates = verify(sol, cfg.t0, cfg.x0, cfg.n_paths, cfg.seed, cfg.dt, workers=workers)
    write_estimates_csv(estimates, out / "verify_estimates.csv")
    write_report(rows, out / "verify_report.csv")
    for r in rows:
        tag = r.status.upper() if r.gating else f"info:{r.status}"
        label = r.check + "".join(f" {k}={v}" for k, v in (("i", r.regime_i), ("j", r.regime_j), ("alt", r.alternative), ("h", r.h)) if v != "")
        print(f"{tag:>10}  {label:<48} est={r.estimate:.6g} ref={r.reference:.6g} se={r.std_error:.3g}")
    ok = all_passed(rows)
    print("verification " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regime-eq",
        description="Equilibrium investment in a two-regime market: solve, tabulate, and verify by Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
        return p

    common(sub.add_parser("solve", help="integrate the g-system and write g.csv"))
    p = common(sub.add_parser("strategy", help="tabulate equilibrium and Merton fractions"))
    p.add_argument("--g", metavar="CSV", help="evaluate a g.csv written by 'solve' instead of re-solving")
    p = common(sub.add_parser("figures", help="write the data series of the strategy figures"))
    p.add_argument("--figure", type=int, choices=FIGURE_IDS, metavar="K", help="figure id 1-5 (default: all)")
    p = common(sub.add_parser("verify", help="Monte Carlo verification report"))
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--paths", type=int, metavar="N", help="number of Monte Carlo paths per starting regime")
    p.add_argument("--dt", type=float, metavar="X", help="Euler step")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.updated(
            output_dir=args.out,
            seed=getattr(args, "seed", None),
            n_paths=getattr(args, "paths", None),
            dt=getattr(args, "dt", None),
        )
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "strategy":
            return cmd_strategy(cfg, args.g)
        if args.command == "figures":
            return cmd_figures(cfg, args.figure)
        return cmd_verify(cfg)
    except ConfigError as exc:
        print(f"regime-eq: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SimulationError) as exc:
        where = getattr(exc, "t", None)
        suffix = f" (t={where})" if where is not None else ""
        print(f"regime-eq: numerical failure: {exc}{suffix}", file=sys.stderr)
        return EXIT_SOLVER
    except RegimeEqError as exc:
        print(f"regime-eq: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
