"""Command line interface.

Subcommands: ``offline``, ``online``, ``study truth``, ``study rbm``,
``study naive-points`` and ``study timing``. Settings come from built-in
defaults, then an optional ``--config`` file of ``key = value`` lines, then
command line flags. Failures print one JSON line to stderr and exit with a
nonzero status.
"""

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import __version__
from .artifact import load_model, save_model
from .config import make_config, read_config_file
from .ercm import EmpiricalRCM
from .estimator import error_bound
from .lsrcm import LeastSquaresRCM
from .problem import stability_constant
from .studies import (
    log_linear_fit,
    study_naive_points,
    study_rbm_convergence,
    study_timing,
    study_truth_convergence,
    write_table,
)

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, *names):
    flags = {
        "problem": dict(help="problem id (diffusion, anisotropic) or custom name"),
        "method": dict(choices=["lsrcm", "ercm"]),
        "nx": dict(type=int, help="Chebyshev order of the truth grid"),
        "train_grid": dict(metavar="AxB", help="training lattice, e.g. 32x32"),
        "nmax": dict(type=int, help="maximum basis size"),
        "tol": dict(type=float, help="greedy stopping tolerance"),
        "seed": dict(type=int, help="seed for the first greedy parameter"),
        "test_seed": dict(type=int, help="seed for the random test sample"),
        "samples": dict(type=int, help="number of random test parameters"),
        "model": dict(help="model file"),
        "out": dict(help="output file"),
        "mu": dict(help="parameter point, comma separated"),
        "nx_list": dict(help="comma separated truth orders"),
        "ref_nx": dict(type=int, help="reference truth order"),
        "repetitions": dict(type=int, help="timing repetitions"),
    }
    p.add_argument("--config", help="key = value settings file; flags take precedence")
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **flags[name])


def build_parser():
    parser = _Parser(prog="redcolloc", description="Reduced collocation toolkit")
    parser.add_argument("--version", action="version", version=f"redcolloc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("offline", help="train a reduced model and write it")
    _common(p, "problem", "method", "nx", "train_grid", "nmax", "tol", "seed", "model")
    p.set_defaults(handler=cmd_offline)

    p = sub.add_parser("online", help="evaluate a trained model at one parameter")
    _common(p, "model", "mu", "out")
    p.set_defaults(handler=cmd_online)

    study = sub.add_parser("study", help="run a study and write a CSV table")
    ssub = study.add_subparsers(dest="study", required=True, parser_class=_Parser)
    p = ssub.add_parser("truth", help="truth solver self-convergence")
    _common(p, "problem", "mu", "nx_list", "ref_nx", "out")
    p.set_defaults(handler=cmd_study_truth)
    p = ssub.add_parser("rbm", help="reduced model error versus basis size")
    _common(p, "model", "samples", "test_seed", "out")
    p.set_defaults(handler=cmd_study_rbm)
    p = ssub.add_parser("naive-points", help="coarse Chebyshev points versus greedy points")
    _common(p, "model", "samples", "test_seed", "out")
    p.set_defaults(handler=cmd_study_naive)
    p = ssub.add_parser("timing", help="offline, online and truth wall times")
    _common(p, "model", "repetitions", "test_seed", "out")
    p.set_defaults(handler=cmd_study_timing)
    return parser


_FLAG_KEYS = (
    "problem",
    "method",
    "nx",
    "train_grid",
    "nmax",
    "tol",
    "seed",
    "test_seed",
    "samples",
    "model",
    "out",
    "mu",
    "nx_list",
    "ref_nx",
    "repetitions",
)


def resolve_config(args):
    """Merge defaults, the config file and command line flags (flags win)."""
    file_settings = read_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k, None) for k in _FLAG_KEYS}
    return make_config(file_settings, flags)


def _require(cfg, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + m for m in missing))


def _say(msg):
    print(msg, flush=True)


# -- commands --------------------------------------------------------------


def cmd_offline(cfg):
    _require(cfg, "model")
    problem = cfg.build_problem()
    cls = {"lsrcm": LeastSquaresRCM, "ercm": EmpiricalRCM}[cfg.method]
    model = cls(problem, n_max=cfg.nmax, tol=cfg.tol, random_state=cfg.seed)
    model.fit()
    for row in model.training_log_:
        mu = ", ".join(f"{v:.6g}" for v in row[1:-1])
        _say(f"iteration {int(row[0])}: mu=({mu}) max_delta={row[-1]:.6e}")
    if isinstance(model, EmpiricalRCM):
        for k, pt in enumerate(model.points_, 1):
            _say(f"point {k}: x={pt[0]:.6g} y={pt[1]:.6g}")
    save_model(model, cfg.model, cfg.echo())
    _say(
        f"wrote {cfg.model}: method={cfg.method} n={model.n_basis_} "
        f"offline_seconds={model.offline_time_:.3f}"
    )


def cmd_online(cfg):
    _require(cfg, "model", "mu")
    model, meta = load_model(cfg.model)
    problem = model.problem
    mu = problem.check_mu(np.asarray(cfg.mu, dtype=float))
    t0 = time.perf_counter()
    c = model.transform(mu[None])[0]
    wall = time.perf_counter() - t0
    u = c @ model.basis_
    residual = float(model.residual_norm(mu[None])[0])
    delta = error_bound(residual, stability_constant(problem, mu))
    summary = {
        "mu": ",".join(repr(float(v)) for v in mu),
        "n": model.n_basis_,
        "coefficients": " ".join(repr(float(v)) for v in c),
        "residual_norm": repr(residual),
        "delta": repr(delta),
        "wall_seconds": repr(wall),
    }
    if cfg.out:
        xy = problem.grid.interior_points()
        rows = [(float(x), float(y), float(v)) for (x, y), v in zip(xy, u)]
        echo = {**meta["config"], **{"model": cfg.model}}
        write_table(cfg.out, ["x", "y", "u"], rows, echo, summary)
    for k, v in summary.items():
        _say(f"{k}={v}")


def cmd_study_truth(cfg):
    _require(cfg, "mu", "out")
    problem = cfg.build_problem()
    cols, rows = study_truth_convergence(problem, cfg.mu, cfg.nx_list, cfg.ref_nx)
    slope, r2 = log_linear_fit([r[0] for r in rows], [r[2] for r in rows])
    notes = {"linf_fit_slope": repr(slope), "linf_fit_r2": repr(r2)}
    write_table(cfg.out, cols, rows, cfg.echo(), notes)
    for r in rows:
        _say(f"nx={r[0]} l2_error={r[1]:.6e} linf_error={r[2]:.6e}")
    _say(f"wrote {cfg.out}")


def _study_config(cfg, meta):
    echo = dict(meta["config"])
    echo.update(model=cfg.model, samples=str(cfg.samples), test_seed=str(cfg.test_seed))
    return echo


def cmd_study_rbm(cfg):
    _require(cfg, "model", "out")
    model, meta = load_model(cfg.model)
    cols, rows = study_rbm_convergence(model, cfg.samples, cfg.test_seed)
    n = [r.n for r in rows if r.n >= 2]
    notes = {}
    if len(n) >= 2:
        slope, r2 = log_linear_fit(n, [r.max_l2_error for r in rows if r.n >= 2])
        notes = {"l2_fit_slope": repr(slope), "l2_fit_r2": repr(r2)}
    write_table(cfg.out, cols, rows, _study_config(cfg, meta), notes)
    for r in rows:
        _say(f"n={r.n} max_delta_train={r.max_delta_train:.3e} max_l2_error={r.max_l2_error:.3e}")
    _say(f"wrote {cfg.out}")


def cmd_study_naive(cfg):
    _require(cfg, "model", "out")
    model, meta = load_model(cfg.model)
    if not isinstance(model, EmpiricalRCM):
        raise UsageError("study naive-points needs an ercm model")
    cols, rows = study_naive_points(model, cfg.samples, cfg.test_seed)
    write_table(cfg.out, cols, rows, _study_config(cfg, meta))
    for r in rows:
        _say(f"{r[0]} n={r[1]} min_l2_error={r[2]:.3e} min_cond={r[4]:.3e} singular={r[7]}")
    _say(f"wrote {cfg.out}")


def cmd_study_timing(cfg):
    _require(cfg, "model", "out")
    model, meta = load_model(cfg.model)
    cols, rows = study_timing(model, cfg.repetitions, seed=cfg.test_seed)
    echo = dict(meta["config"])
    echo.update(model=cfg.model, repetitions=str(cfg.repetitions))
    write_table(cfg.out, cols, rows, echo)
    _say(" ".join(f"{c}={v}" for c, v in zip(cols, rows[0])))
    _say(f"wrote {cfg.out}")


# -- entry point -----------------------------------------------------------


def _fail(kind, message, code):
    line = json.dumps({"error": kind, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr, flush=True)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s"
    )
    try:
        cfg = resolve_config(args)
        args.handler(cfg)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    except Exception as exc:  # every failure becomes one line
        return _fail(type(exc).__name__, exc, EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
