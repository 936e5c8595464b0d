"""Command line entry point.

    fracrb <command> <config-file>

Commands: solve-fom, train, solve-rb, compare, bounds, caputo-study.
Exit status: 0 success, 1 configuration error, 2 numerical failure,
3 I/O error (including a missing or mismatched trained space).
"""
import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import scipy.linalg as la

from . import rb_online
from .caputo_l1 import convergence_study
from .config import ConfigError, RunConfig, parse_config
from .error_bounds import RieszMap, bound_series, energy_norms
from .fom_solver import SolverError, build_operators, recover_control, solve_fom
from .rb_offline import greedy_train, xnorm_rows
from .storage import StorageError, load_rb_space, metadata, persist_rb_space, write_csv, write_json

log = logging.getLogger("fracrb")

COMMANDS = ("solve-fom", "train", "solve-rb", "compare", "bounds", "caputo-study")
SPACE_FILE = "rb_space.npz"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _trajectory_rows(spec, y, p_bar, u):
    K, n = y.shape
    t = spec.T / spec.K * np.arange(K + 1)
    x = spec.mesh.nodes
    for j in range(K):
        for i in range(n):
            # slot j: state/control at t_{j+1}, adjoint at T - t_j
            yield (j, t[j + 1], spec.T - t[j], i + 1, x[i], y[j, i], u[j, i], p_bar[j, i])


TRAJECTORY_HEADER = ["slot", "t_state", "t_adjoint", "node", "x", "y", "u", "p_bar"]


def cmd_solve_fom(cfg: RunConfig, out):
    spec = cfg.spec()
    start = time.perf_counter()
    sol = solve_fom(spec, cfg.mu)
    elapsed = time.perf_counter() - start
    write_csv(out / "fom_solution.csv", TRAJECTORY_HEADER,
              _trajectory_rows(spec, sol.y, sol.p_bar, sol.u), comment=f"fom mu={cfg.mu!r}")
    write_json(out / "fom_solution.json",
               metadata(cfg, "solve-fom", {"solve": elapsed}, J=sol.J, mu=cfg.mu, residual=sol.residual))
    log.info("FOM at mu=%g: J=%.6e (%.3fs)", cfg.mu, sol.J, elapsed)


def cmd_train(cfg: RunConfig, out):
    spec = cfg.spec()
    start = time.perf_counter()
    space, rb_ops, report = greedy_train(spec, cfg.train_set(), cfg.eps, cfg.N_max,
                                         indicator=cfg.indicator, pod_tol=cfg.pod_tol)
    elapsed = time.perf_counter() - start
    persist_rb_space(space, rb_ops, out / SPACE_FILE, spec, extra={"status": report.status})
    (out / "greedy_report.txt").write_text(report.to_text())
    write_json(out / "greedy_report.json",
               metadata(cfg, "train", {"train": elapsed}, status=report.status, N=space.N,
                        selected=list(space.S_N), final_indicator=report.final_indicator,
                        records=[vars(r) for r in report.records]))
    log.info("greedy %s with %d parameters, N=%d", report.status, len(space.S_N), space.N)


def _online(cfg, out):
    spec = cfg.spec()
    space, rb_ops = load_rb_space(out / SPACE_FILE, spec)
    ops = build_operators(spec)
    start = time.perf_counter()
    sol = rb_online.solve_rb(rb_ops, ops.scheme, cfg.mu, spec.gamma)
    elapsed = time.perf_counter() - start
    return spec, space, ops, sol, elapsed


def cmd_solve_rb(cfg: RunConfig, out):
    spec, space, ops, sol, elapsed = _online(cfg, out)
    y, p = rb_online.lift(space, sol)
    write_csv(out / "rb_solution.csv", TRAJECTORY_HEADER,
              _trajectory_rows(spec, y, p, recover_control(p, spec.gamma)),
              comment=f"reduced mu={cfg.mu!r} N={space.N}")
    write_json(out / "rb_solution.json",
               metadata(cfg, "solve-rb", {"online": elapsed}, J_N=sol.J_N, N=space.N, mu=cfg.mu,
                        coefficients_y=sol.y_N.tolist(), coefficients_p=sol.p_bar_N.tolist()))


def cmd_compare(cfg: RunConfig, out):
    spec, space, ops, sol, elapsed = _online(cfg, out)
    start = time.perf_counter()
    fom = solve_fom(spec, cfg.mu, ops)
    fom_time = time.perf_counter() - start
    table = rb_online.compare(fom, rb_online.lift(space, sol), ops.fem.X, ops.fem.M)
    cols = ["state_X", "adjoint_X", "state_L2", "adjoint_L2"]
    rows = ([j, *(table[c][j] for c in cols)] for j in range(spec.K))
    write_csv(out / "compare.csv", ["slot", *cols], rows, comment=f"errors mu={cfg.mu!r} N={space.N}")
    write_json(out / "compare.json",
               metadata(cfg, "compare", {"online": elapsed, "fom": fom_time}, summary=table["summary"],
                        J=fom.J, J_N=sol.J_N, N=space.N, mu=cfg.mu))


def cmd_bounds(cfg: RunConfig, out):
    spec, space, ops, sol, elapsed = _online(cfg, out)
    y, p = rb_online.lift(space, sol)
    fom = solve_fom(spec, cfg.mu, ops)
    riesz = RieszMap(ops.fem.X)
    if cfg.bound_coupling == "full":
        series = bound_series(y, p, fom.u, fom.y, ops, cfg.mu, riesz)
    else:
        series = bound_series(y, p, recover_control(p, spec.gamma), y, ops, cfg.mu, riesz)
    err_pr = energy_norms(fom.y - y, ops, cfg.mu)
    err_du = energy_norms(fom.p_bar - p, ops, cfg.mu)
    header = ["slot", "eps_pr", "delta_pr", "err_pr", "eps_du", "delta_du", "err_du",
              "delta_pr_X", "err_pr_X", "delta_du_X", "err_du_X"]
    ex_pr, ex_du = xnorm_rows(fom.y - y, ops.fem.X), xnorm_rows(fom.p_bar - p, ops.fem.X)
    rows = ([j, series.eps_pr[j], series.delta_pr[j], err_pr[j], series.eps_du[j], series.delta_du[j],
             err_du[j], series.delta_pr_X[j], ex_pr[j], series.delta_du_X[j], ex_du[j]]
            for j in range(spec.K))
    write_csv(out / "bounds.csv", header, rows,
              comment=f"bounds mu={cfg.mu!r} coupling={cfg.bound_coupling} "
                      "primal row j is t_(j+1), dual row j is T-t_j")
    with np.errstate(divide="ignore", invalid="ignore"):
        eff_pr = np.where(err_pr > 0, series.delta_pr / err_pr, np.nan)
        eff_du = np.where(err_du > 0, series.delta_du / err_du, np.nan)
    write_json(out / "bounds.json",
               metadata(cfg, "bounds", {"online": elapsed}, mu=cfg.mu, N=space.N,
                        coupling=cfg.bound_coupling, alpha_mu=series.alpha_mu,
                        alpha_0=cfg.mu_min,
                        norm="delta_* bound (mu*a(e,e)+(e,e))^0.5; *_X columns are the H1-seminorm",
                        max_effectivity_pr=float(np.nanmax(eff_pr)) if np.any(err_pr > 0) else None,
                        max_effectivity_du=float(np.nanmax(eff_du)) if np.any(err_du > 0) else None,
                        bound_valid=bool(np.all(series.delta_pr >= err_pr - 1e-9)
                                         and np.all(series.delta_du >= err_du - 1e-9))))


def cmd_caputo_study(cfg: RunConfig, out):
    start = time.perf_counter()
    rows = convergence_study()
    write_csv(out / "caputo_study.csv", ["alpha", "K", "max_error", "fitted_order"], rows,
              comment="L1 error for g(t) = t^3 on [0, 1]")
    write_json(out / "caputo_study.json",
               metadata(cfg, "caputo-study", {"study": time.perf_counter() - start},
                        expected_order={str(a): 2 - a for a in (0.3, 0.5, 0.7)}))


HANDLERS = {
    "solve-fom": cmd_solve_fom,
    "train": cmd_train,
    "solve-rb": cmd_solve_rb,
    "compare": cmd_compare,
    "bounds": cmd_bounds,
    "caputo-study": cmd_caputo_study,
}


def run_command(cfg: RunConfig, command: str) -> int:
    if command not in HANDLERS:
        log.error("unknown command %r", command)
        return EXIT_CONFIG
    out = cfg.output_path()
    try:
        out.mkdir(parents=True, exist_ok=True)
        np.random.seed(cfg.seed)
        HANDLERS[command](cfg, out)
    except (ConfigError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (SolverError, la.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (StorageError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracrb", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="path to a key = value configuration file, or inline text")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    source = args.config
    if "=" not in source and not Path(source).is_file():
        log.error("cannot read configuration: no file %s", source)
        return EXIT_IO
    try:
        cfg = parse_config(Path(source) if "=" not in source else source)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read configuration: %s", exc)
        return EXIT_IO
    return run_command(cfg, args.command)


if __name__ == "__main__":
    sys.exit(main())
