"""Command line entry point: ``ckdyn <subcommand> ...``.

Exit codes: 0 success, 1 domain error (bad model, blow-up, failed
comparison), 2 usage error.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io, oracles
from .compare import compare_grids, convergence_study, long_format_rows
from .errors import DomainError
from .langevin import simulate
from .solver import residual_integral_system, solve_ck


def _load(args):
    cfg = io.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = str(args.seed)
    if getattr(args, "realizations", None) is not None:
        cfg["realizations"] = str(args.realizations)
    if getattr(args, "disorder", None) is not None:
        cfg["disorder.mode"] = args.disorder
    if getattr(args, "mode", None) is not None:
        cfg["mode"] = args.mode
    return cfg


def cmd_simulate(args):
    cfg = _load(args)
    model = io.model_from_config(cfg)
    sim_cfg = io.sim_config_from_config(cfg)
    t0 = time.perf_counter()
    obs = simulate(model, sim_cfg, n_jobs=args.jobs)
    wall = time.perf_counter() - t0
    io.write_empirical(args.out, obs, model, sim_cfg, wall_time=wall)
    print(f"simulated N={model.N}, {obs.n_realizations} realizations, "
          f"{len(obs.times)} snapshots in {wall:.1f}s -> {args.out}")
    return 0


def cmd_solve(args):
    cfg = _load(args)
    model = io.model_from_config(cfg)
    sol_cfg = io.solver_config_from_config(cfg)
    t0 = time.perf_counter()
    sol = solve_ck(model, sol_cfg)
    wall = time.perf_counter() - t0
    io.write_solution(args.out, sol, model, sol_cfg, wall_time=wall)
    print(f"solved {sol_cfg.mode} mode, h={sol_cfg.h:g}, T={sol_cfg.T:g}, "
          f"max corrector sweeps {sol.diagnostics['max_sweeps']} in {wall:.2f}s -> {args.out}")
    if args.residuals:
        rep = residual_integral_system(sol, model)
        for name, v in rep.sup_norms().items():
            print(f"  residual {name:7s} {v:.3e}")
        print(f"  boundary E(s,0) {rep.boundary_E0:.3e}   E(s,t)-E(s,s) {rep.boundary_Ediag:.3e}")
    return 0


def cmd_compare(args):
    emp = io.read_empirical(args.empirical)
    lim = io.read_solution(args.limit)
    rep = compare_grids(emp, lim, tol=args.tol)
    print(rep.summary())
    if args.plot_out:
        out = Path(args.plot_out)
        for q in ("C", "chi"):
            io.write_long_format(out / f"plot_{q}.csv", long_format_rows(emp, lim, q))
        rows = rep.difference_table()
        text = "s,t,dC,dchi\n" + "".join(
            f"{s:.17g},{t:.17g},{a:.17g},{b:.17g}\n" for s, t, a, b in rows)
        io.atomic_write_text(out / "differences.csv", text)
    return 0 if rep.passed else 1


def cmd_oracle(args):
    if args.oracle == "bessel":
        print(f"{oracles.bessel_h(args.tau):.10f}")
    elif args.oracle == "catalan":
        print(oracles.catalan(args.n))
    elif args.oracle == "nc-enumerate":
        for sigma in oracles.nc_pairings_enumerate(args.n):
            print(" ".join(f"({i},{j})" for i, j in sigma.pairs), " cr =", sigma.cr)
    elif args.oracle == "nc-series":
        res = oracles.h_series_nc(args.c, args.tau, 0.0, args.n_max)
        print(f"H = {res.value:.10f}   truncation bound {res.truncation_bound:.3e}")
        print(f"bessel_h(sqrt(c) tau) = {oracles.bessel_h(np.sqrt(args.c) * args.tau):.10f}")
    elif args.oracle == "beta-zero":
        R, C, K = oracles.beta_zero_solution(args.z, args.K0, args.s, args.t)
        print(f"R = {float(R):.7f}  C = {float(C):.7f}  K(s) = {float(K):.7f}")
    return 0


def cmd_kernel_check(args):
    cfg = _load(args)
    model = io.model_from_config(cfg)
    if args.N is not None:
        model = replace(model, N=args.N)
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal(model.N)
    y = rng.standard_normal(model.N)
    rep = oracles.kernel_mc_check(model, x, y, args.samples, seed=args.seed + 1)
    print(rep.table())
    ok = rep.passes(args.sigma)
    print(f"max |z| = {rep.max_abs_z:.3f}  ({'PASS' if ok else 'FAIL'} at {args.sigma:g} sigma)")
    return 0 if ok else 1


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_convergence(args):
    cfg = _load(args)
    model = io.model_from_config(cfg)
    sim_cfg = io.sim_config_from_config(cfg)
    cfg.setdefault("h", str(args.h_list[0]))
    sol_cfg = io.solver_config_from_config(cfg)
    study = convergence_study(model, sim_cfg, sol_cfg, args.N_list, args.h_list, n_jobs=args.jobs)
    print(study.table())
    if args.out:
        lines = ["N,h,sup,sup_C,sup_chi,rms,var_C"]
        for a, N in enumerate(study.N_list):
            for b, h in enumerate(study.h_list):
                lines.append(f"{N},{h:.17g},{study.sup[a, b]:.17g},{study.sup_C[a, b]:.17g},"
                             f"{study.sup_chi[a, b]:.17g},{study.rms[a, b]:.17g},{study.variance[a]:.17g}")
        io.atomic_write_text(Path(args.out) / "convergence.csv", "\n".join(lines) + "\n")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="ckdyn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the finite-N Langevin simulator")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--disorder", choices=("exact", "decoupled"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="integrate the limiting two-time equations")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("soft", "hard"))
    p.add_argument("--residuals", action="store_true", help="also report integral-system residuals")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="compare simulator output with a solver output")
    p.add_argument("--empirical", required=True)
    p.add_argument("--limit", required=True)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--plot-out", help="directory for long-format plot CSVs")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="independent reference values")
    osub = p.add_subparsers(dest="oracle", required=True)
    o = osub.add_parser("bessel")
    o.add_argument("--tau", type=float, required=True)
    o = osub.add_parser("catalan")
    o.add_argument("--n", type=int, required=True)
    o = osub.add_parser("nc-enumerate")
    o.add_argument("--n", type=int, required=True)
    o = osub.add_parser("nc-series")
    o.add_argument("--c", type=float, default=1.0)
    o.add_argument("--tau", type=float, required=True)
    o.add_argument("--n-max", type=int, default=4)
    o = osub.add_parser("beta-zero")
    o.add_argument("--z", type=float, required=True)
    o.add_argument("--K0", type=float, default=1.0)
    o.add_argument("--s", type=float, required=True)
    o.add_argument("--t", type=float, required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("kernel-check", help="Monte-Carlo check of the field covariance")
    p.add_argument("--config", required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--disorder", choices=("exact", "decoupled"))
    p.set_defaults(func=cmd_kernel_check)

    p = sub.add_parser("convergence-study", help="simulator-vs-solver differences over N and h")
    p.add_argument("--config", required=True)
    p.add_argument("--N-list", type=_ints, required=True)
    p.add_argument("--h-list", type=_floats, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_convergence)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
