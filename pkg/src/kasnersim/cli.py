"""Command-line entry points.

Subcommands:
  exponents   validate exponents / search for sub-critical vacuum sets
  evolve      run a configured evolution, writing CSV + snapshots + summary
  u1-evolve   same, forcing the polarized U(1) sector
  diagnose    recompute diagnostics from a snapshot file
  plot        emit gnuplot scripts from a run's time-series CSV

Exit codes: 0 success (exponents: constraints valid), 1 solver abort or
invalid/not-found exponents, 2 usage or configuration errors.

SIM_THREADS (env) caps the worker count of the data-parallel kernels; the
numpy build used here runs them on a single thread, so any value behaves
like 1 and is simply recorded for provenance.  --deterministic forces
fixed-order reductions (single worker).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import diagnostics as diag
from .background import (KasnerData, StabilityParams, flrw,
                         search_subcritical_vacuum, subcriticality_margin,
                         validate_constraints)
from .config import (ConfigError, build_setup, initial_state, load_config,
                     serialize_config)
from .evolution import EvolutionAbort, evolve
from .io import (CsvWriter, PlotInputError, fmt, read_snapshot,
                 write_plot_scripts, write_snapshot, write_summary)
from .lapse import LapseConvergenceError, LapsePositivityError


def _worker_count(args) -> int:
    if getattr(args, "deterministic", False):
        return 1
    try:
        return max(1, int(os.environ.get("SIM_THREADS", "1")))
    except ValueError:
        return 1


def cmd_exponents(args) -> int:
    if args.vacuum and args.search:
        if args.q is not None:
            print("error: --q and --search are mutually exclusive",
                  file=sys.stderr)
            return 2
        result = search_subcritical_vacuum(args.dim, tol=args.search_tol,
                                           seed=args.seed,
                                           restarts=args.restarts)
        if not result.found:
            if result.status == "infeasible":
                print(f"not found (impossible for D<=9; requested D={args.dim})")
            else:
                print(f"not found (search budget exhausted at D={args.dim})")
            return 1
        data = result.data
        print("exponents=" + ",".join(fmt(x) for x in data.exponents))
    else:
        if args.q is None:
            print("error: provide --q or --vacuum --search", file=sys.stderr)
            return 2
        try:
            q = np.array([float(x) for x in args.q.split(",")])
        except ValueError:
            print(f"error: malformed exponent list {args.q!r}", file=sys.stderr)
            return 2
        try:
            data = KasnerData(dim=len(q), exponents=q,
                              scalar_coeff=0.0 if args.vacuum else args.B)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    report = validate_constraints(data, tol=args.tolerance)
    margin = subcriticality_margin(data)
    print(f"sum_residual={fmt(report.sum_residual)}")
    print(f"sumsq_residual={fmt(report.sumsq_residual)}")
    print(f"constraints_ok={str(report.ok).lower()}")
    print(f"margin={fmt(margin.margin)}")
    print(f"subcritical={str(margin.subcritical).lower()}")
    print(f"witness={margin.witness[0]},{margin.witness[1]},{margin.witness[2]}")
    return 0 if report.ok else 1


def _run_evolution(args, force_u1: bool) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    if force_u1:
        cfg["run.sector"] = "polarized_u1"
    if args.deterministic:
        cfg["evolve.deterministic"] = "true"
    try:
        setup = build_setup(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    outdir = args.out or setup.outdir
    os.makedirs(outdir, exist_ok=True)
    grid, bg, stab = setup.grid, setup.background, setup.stability
    workers = _worker_count(args)

    meta = {"exponents": ",".join(fmt(x) for x in bg.exponents),
            "scalar_coeff": fmt(bg.scalar_coeff),
            "sector": setup.sector}

    try:
        state = initial_state(setup)
    except (ValueError, LapseConvergenceError, LapsePositivityError) as exc:
        print(f"config error: initial data rejected: {exc}", file=sys.stderr)
        return 2

    rec = diag.compute_record(grid, state, bg, stab, setup.norm_cfg)
    csv = CsvWriter(os.path.join(outdir, "timeseries.csv"), rec.columns())
    csv.write_row(rec.values())
    write_snapshot(os.path.join(outdir, "snapshot_000000.snap"), grid, state, meta)

    t_final = setup.evolve_cfg.t_final
    targets = [t_final * 4.0, t_final * 2.0]
    checkpoints = []

    def on_step(st, nstep):
        while targets and st.t <= targets[0] * (1 + 1e-12):
            checkpoints.append(st.copy())
            targets.pop(0)
        if nstep % setup.evolve_cfg.snapshot_every == 0:
            r = diag.compute_record(grid, st, bg, stab, setup.norm_cfg)
            csv.write_row(r.values())
            write_snapshot(os.path.join(outdir, f"snapshot_{nstep:06d}.snap"),
                           grid, st, meta)

    try:
        final, nsteps = evolve(grid, state, setup.evolve_cfg, setup.lapse_cfg,
                               on_step=on_step)
    except (EvolutionAbort, LapseConvergenceError, LapsePositivityError) as exc:
        last = exc.last_state if isinstance(exc, EvolutionAbort) else state
        write_snapshot(os.path.join(outdir, "last_good.snap"), grid, last, meta)
        csv.close()
        print(f"evolution aborted: {exc}", file=sys.stderr)
        return 1

    rec = diag.compute_record(grid, final, bg, stab, setup.norm_cfg)
    csv.write_row(rec.values())
    csv.close()
    write_snapshot(os.path.join(outdir, "final_state.snap"), grid, final, meta)

    summary = {
        "steps": nsteps,
        "t_final": final.t,
        "sector": setup.sector,
        "workers": workers,
        "seed": setup.seed if setup.seed is not None else 0,
        "stability.q": stab.q,
        "stability.sigma": stab.sigma,
        "kret_t4_sup": rec.kret_t4_sup,
        "ham_sup_final": rec.ham_sup,
        "mom_sup_final": rec.mom_sup,
        "cmc_residual": rec.cmc_residual,
    }
    checkpoints.append(final)
    if len(checkpoints) >= 3:
        fin = diag.final_kasner_data(checkpoints[-3:], stab.sigma)
        asym = diag.kretschmann_asymptotic(fin.q_inf)
        kr = final.t ** 4 * diag.kretschmann(grid, final)
        rel = float(np.max(np.abs(kr - asym)) / np.max(np.abs(asym)))
        for i in range(grid.dim):
            summary[f"q_inf_mean_{i + 1}"] = float(
                fin.q_inf[i].mean(axis=tuple(range(fin.q_inf[i].ndim))))
        summary["B_inf_mean"] = float(fin.B_inf.mean())
        summary["qinf_sum_residual"] = fin.sum_residual
        summary["qinf_sumsq_residual"] = fin.sumsq_residual
        summary["kret_vs_asymptotic_rel"] = rel
        summary["extrapolation_change"] = fin.extrapolation_change
    else:
        summary["final_kasner"] = "unavailable (run too shallow for checkpoints)"
    for key, value in sorted(setup.raw.items()):
        summary[f"config.{key}"] = value
    write_summary(os.path.join(outdir, "summary.txt"), summary)
    return 0


def cmd_evolve(args) -> int:
    return _run_evolution(args, force_u1=False)


def cmd_u1_evolve(args) -> int:
    return _run_evolution(args, force_u1=True)


def cmd_diagnose(args) -> int:
    try:
        grid, state, meta = read_snapshot(args.snapshot)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read snapshot: {exc}", file=sys.stderr)
        return 2
    try:
        if args.config:
            setup = build_setup(load_config(args.config))
            bg, stab, ncfg = setup.background, setup.stability, setup.norm_cfg
        else:
            q = np.array([float(x) for x in meta["exponents"].split(",")])
            bg = KasnerData(dim=grid.dim, exponents=q,
                            scalar_coeff=float(meta["scalar_coeff"]))
            mode = ("polarized_u1" if meta.get("sector") == "polarized_u1"
                    else "general")
            stab = StabilityParams.choose(bg, mode)
            ncfg = diag.NormConfig()
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"error: cannot reconstruct run parameters: {exc}", file=sys.stderr)
        return 2
    rec = diag.compute_record(grid, state, bg, stab, ncfg)
    for name, value in zip(rec.columns(), rec.values()):
        print(f"{name}={fmt(value)}")
    return 0


def cmd_plot(args) -> int:
    outdir = args.out or os.path.dirname(os.path.abspath(args.csv))
    os.makedirs(outdir, exist_ok=True)
    try:
        written = write_plot_scripts(args.csv, outdir)
    except (OSError, PlotInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kasnersim",
                                description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--deterministic", action="store_true",
                   help="force single-worker, fixed-order reductions")
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("exponents", help="validate or search Kasner exponents")
    pe.add_argument("--q", help="comma-separated exponent list")
    pe.add_argument("--B", type=float, default=0.0,
                    help="scalar-field coefficient (default 0)")
    pe.add_argument("--vacuum", action="store_true", help="force B = 0")
    pe.add_argument("--search", action="store_true",
                    help="search for sub-critical vacuum exponents")
    pe.add_argument("--dim", type=int, default=3)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--restarts", type=int, default=40)
    pe.add_argument("--search-tol", type=float, default=0.02)
    pe.add_argument("--tolerance", type=float, default=1e-12,
                    help="constraint validation tolerance")
    pe.set_defaults(func=cmd_exponents)

    for name, func in (("evolve", cmd_evolve), ("u1-evolve", cmd_u1_evolve)):
        pr = sub.add_parser(name, help=f"run an evolution ({name})")
        pr.add_argument("config", help="key=value config file")
        pr.add_argument("--out", help="output directory (overrides output.dir)")
        pr.set_defaults(func=func)

    pd = sub.add_parser("diagnose", help="recompute diagnostics from a snapshot")
    pd.add_argument("snapshot")
    pd.add_argument("--config", help="config file for background/stability")
    pd.set_defaults(func=cmd_diagnose)

    pp = sub.add_parser("plot", help="emit gnuplot scripts from a run CSV")
    pp.add_argument("csv")
    pp.add_argument("--out", help="output directory (default: CSV directory)")
    pp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
