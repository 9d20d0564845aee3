"""Convergence, point-set and timing studies over trained models.

Every study returns ``(columns, rows)``; :func:`write_table` turns that into
a CSV file with a commented header carrying the format version and the
configuration echo.
"""

import csv
import math
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from .ercm import SINGULAR_COND, EmpiricalRCM, coarse_chebyshev_points
from .exceptions import SolverError
from .problem import stability_table, truth_solve
from .spectral import cheb_coeffs_2d, interpolate_at

TABLE_FORMAT_VERSION = 1


def format_float(v):
    """17 significant digits: enough to round-trip any double."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def write_table(path, columns, rows, config=None, notes=None):
    """Write ``rows`` as CSV with ``#`` header lines for version, config and notes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# format_version={TABLE_FORMAT_VERSION}\n")
        for key, value in sorted((config or {}).items()):
            fh.write(f"# config.{key}={value}\n")
        for key, value in (notes or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in record_rows(rows):
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def read_table(path):
    """Parse a file written by :func:`write_table` into ``(header dict, columns, rows)``."""
    header, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition("=")
                header[key] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    return header, columns, [row for row in reader]


# -- truth convergence -----------------------------------------------------


def study_truth_convergence(problem, mu, nx_list, ref_nx):
    """Self-convergence of the truth solver against a finer reference.

    The reference solution is interpolated spectrally to the interior nodes
    of each coarse grid and compared there.

    Returns
    -------
    columns : list of str
        ``nx, l2_error, linf_error``.
    rows : list of tuple
    """
    nx_list = [int(n) for n in nx_list]
    if not ref_nx > max(nx_list):
        raise ValueError(f"reference order {ref_nx} must exceed every nx in {nx_list}")
    desc = problem.describe()
    ref_problem = type(problem).from_description(desc, ref_nx)
    ref = truth_solve(ref_problem, mu, check_domain=False)
    ref_interp = cheb_coeffs_2d(ref_problem.grid.to_full(ref.values), ref_problem.grid)
    rows = []
    for nx in nx_list:
        p = type(problem).from_description(desc, nx)
        u = truth_solve(p, mu, check_domain=False)
        diff = u.values - interpolate_at(ref_interp, p.grid.interior_points())
        rows.append((nx, float(np.linalg.norm(diff)), float(np.abs(diff).max())))
    return ["nx", "l2_error", "linf_error"], rows


def log_linear_fit(x, y):
    """Least-squares line through ``(x, log y)``: returns ``(slope, r_squared)``."""
    x = np.asarray(x, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))
    A = np.column_stack([x, np.ones_like(x)])
    coef = np.linalg.lstsq(A, ly, rcond=None)[0]
    resid = ly - A @ coef
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(r2)


# -- reduced basis convergence ---------------------------------------------


@dataclass(frozen=True)
class ConvergenceRecord:
    n: int
    max_delta_train: float
    max_delta_test: float
    max_l2_error: float
    median_l2_error: float
    min_l2_error: float
    max_linf_error: float
    median_linf_error: float
    min_linf_error: float


def sample_parameters(model, samples, seed):
    """Uniform random test parameters in the model's parameter domain."""
    return model.problem.domain.sample(samples, seed)


def truth_table(problem, mus):
    """Truth solutions for each row of ``mus``, shape ``(M, n_dofs)``."""
    return np.array([truth_solve(problem, m).values for m in mus])


def _reduced_or_inf(model, mus, n):
    # a singular reduced system at one test point is data, not a failure
    try:
        return model.predict(mus, n)
    except SolverError:
        out = np.empty((len(mus), model.problem.n_dofs))
        for k, m in enumerate(mus):
            try:
                out[k] = model.predict(m[None], n)[0]
            except SolverError:
                out[k] = np.inf
        return out


def study_rbm_convergence(model, samples=200, seed=1, test_estimates=True, truth=None):
    """Error statistics of the reduced solution versus truth for ``n = 1..N``.

    Parameters
    ----------
    model : fitted LeastSquaresRCM or EmpiricalRCM
    samples : int
        Number of random test parameters.
    seed : int
        Seed of the test sample.
    test_estimates : bool
        Also evaluate the error bound on the test set (needs one stability
        constant per test parameter).
    truth : ndarray, optional
        Precomputed truth solutions at the test parameters.

    Returns
    -------
    columns : list of str
    rows : list of ConvergenceRecord
    """
    mus = sample_parameters(model, samples, seed)
    if truth is None:
        truth = truth_table(model.problem, mus)
    beta = None
    if test_estimates:
        beta = stability_table(model.problem, mus)
    rows = []
    for n in range(1, model.n_basis_ + 1):
        u = _reduced_or_inf(model, mus, n)
        diff = u - truth
        l2 = np.linalg.norm(diff, axis=1)
        linf = np.abs(diff).max(axis=1)
        d_test = math.nan
        if beta is not None:
            ok = np.all(np.isfinite(u), axis=1)
            d = np.full(len(mus), np.inf)
            if np.any(ok):
                d[ok] = model.error_estimate(mus[ok], n, beta=beta[ok])
            d_test = float(d.max())
        rows.append(
            ConvergenceRecord(
                n,
                float(model.estimate_history_[n - 1]),
                d_test,
                float(l2.max()),
                float(np.median(l2)),
                float(l2.min()),
                float(linf.max()),
                float(np.median(linf)),
                float(linf.min()),
            )
        )
    return [f.name for f in fields(ConvergenceRecord)], rows


# -- naive point sets ------------------------------------------------------


def study_naive_points(model, samples=200, seed=1, sizes=None, truth=None):
    """Compare coarse Chebyshev tensor points against the greedy points.

    For each ``n`` the ERCM system is solved at every test parameter with the
    first ``n`` basis functions and either point set. Ill-conditioned systems
    are still solved; the condition estimate and a singularity flag are
    recorded alongside the best-case (minimum over the sample) errors.

    Returns
    -------
    columns : list of str
    rows : list of tuple
        ``point_set, n, min_l2_error, min_linf_error, min_cond, max_cond,
        singular_count, singular``; ``singular`` is 1 when every sampled
        system has condition at or above the threshold.
    """
    if not isinstance(model, EmpiricalRCM):
        raise TypeError("the point-set study needs an EmpiricalRCM model")
    mus = sample_parameters(model, samples, seed)
    if truth is None:
        truth = truth_table(model.problem, mus)
    sizes = range(1, model.n_basis_ + 1) if sizes is None else [int(s) for s in sizes]
    rows = []
    for label in ("naive", "greedy"):
        for n in sizes:
            m = model.with_points(coarse_chebyshev_points(n)) if label == "naive" else model
            l2, linf, cond = [], [], []
            for mu, ref in zip(mus, truth):
                c, k = m.solve_with_condition(mu, n, check=False)
                diff = c @ m.basis_[:n] - ref
                l2.append(np.linalg.norm(diff) if np.all(np.isfinite(c)) else math.inf)
                linf.append(np.abs(diff).max() if np.all(np.isfinite(c)) else math.inf)
                cond.append(k)
            flags = ~(np.array(cond) < SINGULAR_COND)
            rows.append(
                (
                    label,
                    n,
                    float(np.min(l2)),
                    float(np.min(linf)),
                    float(np.min(cond)),
                    float(np.max(cond)),
                    int(flags.sum()),
                    int(flags.all()),
                )
            )
    columns = [
        "point_set",
        "n",
        "min_l2_error",
        "min_linf_error",
        "min_cond",
        "max_cond",
        "singular_count",
        "singular",
    ]
    return columns, rows


# -- timing ----------------------------------------------------------------


def _median_time(fn, repetitions):
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def time_online(model, mus, repetitions=50):
    """Median wall time of one online coefficient solve (single parameter)."""
    mus = np.atleast_2d(mus)
    rows = [m[None] for m in mus]
    model.transform(rows[0])

    def run():
        for r in rows:
            model.transform(r)

    return _median_time(run, repetitions) / len(rows)


def time_truth(problem, mus, repetitions=3):
    """Median wall time of one truth solve."""
    mus = np.atleast_2d(mus)

    def run():
        for m in mus:
            truth_solve(problem, m)

    return _median_time(run, repetitions) / len(mus)


def study_timing(model, repetitions=50, samples=20, seed=1):
    """Offline, online and truth wall times and their ratios.

    Online time covers assembling and solving the reduced system for one
    parameter; reconstructing the fine-grid field is excluded.
    """
    mus = sample_parameters(model, samples, seed)
    online = time_online(model, mus, repetitions)
    truth = time_truth(model.problem, mus[: min(5, samples)], max(1, min(3, repetitions)))
    offline = float(model.offline_time_)
    columns = [
        "method",
        "nx",
        "n",
        "offline_seconds",
        "online_seconds",
        "truth_seconds",
        "online_over_truth",
        "offline_over_truth",
    ]
    row = (
        model._method,
        model.problem.grid.nx,
        model.n_basis_,
        offline,
        online,
        truth,
        online / truth,
        offline / truth,
    )
    return columns, [row]


def record_rows(rows):
    """Plain tuples from records or tuples."""
    return [astuple(r) if hasattr(r, "__dataclass_fields__") else tuple(r) for r in rows]
