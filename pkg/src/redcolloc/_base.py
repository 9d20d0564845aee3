"""Shared greedy training loop and online interface for reduced collocation models."""

import logging
import math
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .estimator import error_bound, residual_norm_decomposed, residual_norm_direct
from .exceptions import RedCollocError, ShapeError, SolverError
from .problem import AffineProblem, stability_table, truth_solve

logger = logging.getLogger(__name__)


def check_parameters(problem, X, check_domain=True):
    """Validate a parameter matrix ``X`` of shape ``(M, dim)`` against ``problem``."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1)
    return problem.check_mu(X, check_domain)


class ReducedCollocationModel(BaseEstimator):
    """Base class: a greedy-trained reduced model over an :class:`AffineProblem`.

    Rows of ``X`` are parameter points. ``fit(X)`` runs the offline greedy
    loop over the training set ``X`` (default: the problem's training
    lattice); ``transform(X)`` returns reduced coefficients and
    ``predict(X)`` the reduced solutions on the interior dofs.
    """

    _method = None

    def __init__(self, problem=None, n_max=20, tol=1e-8, random_state=None, verbose=False):
        self.problem = problem
        self.n_max = n_max
        self.tol = tol
        self.random_state = random_state
        self.verbose = verbose

    # -- hooks -------------------------------------------------------------

    def _start(self, problem):
        raise NotImplementedError

    def _add_snapshot(self, u):
        raise NotImplementedError

    def _coefficients(self, theta_a, theta_f, n):
        raise NotImplementedError

    def _finish(self):
        pass

    # -- offline -----------------------------------------------------------

    def _check_problem(self):
        if not isinstance(self.problem, AffineProblem):
            raise TypeError(f"problem must be an AffineProblem, got {type(self.problem)!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max!r}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be non-negative, got {self.tol!r}")

    def fit(self, X=None, y=None):
        """Run the greedy offline stage.

        Parameters
        ----------
        X : array-like of shape (M, dim), optional
            Training parameters; defaults to the problem's training lattice.
        y : ignored

        Returns
        -------
        self
        """
        self._check_problem()
        problem = self.problem
        if X is None:
            X = problem.domain.training_grid()
        X = check_parameters(problem, X)
        t0 = time.perf_counter()
        rng = check_random_state(self.random_state)

        self.train_mus_ = X
        self.beta_train_ = stability_table(problem, X)
        self._theta_train = (problem.theta_a(X), problem.theta_f(X))
        self._start(problem)

        selected = []
        log = []
        idx = int(rng.randint(len(X)))
        max_delta = math.nan
        while True:
            try:
                snap = truth_solve(problem, X[idx])
            except SolverError as exc:
                raise SolverError(f"iteration {len(selected) + 1}: {exc}") from exc
            self._add_snapshot(snap.values)
            selected.append(idx)
            log.append((len(selected), idx, float(max_delta)))
            self._report(len(selected), X[idx], max_delta)
            if len(selected) >= self.n_max:
                break
            delta = self._training_estimates(len(selected))
            delta[selected] = -np.inf
            if np.all(delta == -np.inf):
                raise RedCollocError("every training parameter has already been selected")
            idx = int(np.argmax(delta))
            max_delta = delta[idx]
            if max_delta <= self.tol:
                break
        self._finish()

        self.selected_index_ = np.array(selected)
        self.selected_mus_ = X[self.selected_index_]
        self.training_log_ = np.array(
            [(i, *X[k], d) for i, k, d in log], dtype=float
        ).reshape(len(log), 2 + X.shape[1])
        self.estimate_history_ = np.array(
            [self._training_estimates(n).max() for n in range(1, self.n_basis_ + 1)]
        )
        self.offline_time_ = time.perf_counter() - t0
        del self._theta_train
        return self

    def _training_estimates(self, n):
        ta, tf = self._theta_train
        c, ok = self._safe_coefficients(ta, tf, n)
        delta = np.full(len(ta), np.inf)
        if np.any(ok):
            r = residual_norm_decomposed(self.cache_, ta[ok], tf[ok], c[ok])
            delta[ok] = error_bound(r, self.beta_train_[ok])
        return delta

    def _safe_coefficients(self, ta, tf, n):
        # a singular reduced system at one training point must not stop the sweep
        try:
            return self._coefficients(ta, tf, n), np.ones(len(ta), dtype=bool)
        except (np.linalg.LinAlgError, SolverError):
            c = np.zeros((len(ta), n))
            ok = np.ones(len(ta), dtype=bool)
            for m in range(len(ta)):
                try:
                    c[m] = self._coefficients(ta[m : m + 1], tf[m : m + 1], n)[0]
                except (np.linalg.LinAlgError, SolverError):
                    ok[m] = False
            return c, ok

    def _report(self, i, mu, max_delta):
        msg = "iteration %d: mu=%s max estimate=%.6e"
        logger.info(msg, i, np.array2string(mu, precision=6), max_delta)
        if self.verbose:
            print(msg % (i, np.array2string(mu, precision=6), max_delta))

    # -- online ------------------------------------------------------------

    @property
    def n_basis_(self):
        check_is_fitted(self, "basis_")
        return self.basis_.shape[0]

    def _check_n(self, n):
        if n is None:
            return self.n_basis_
        if int(n) != n or not 1 <= n <= self.n_basis_:
            raise ShapeError(f"n must be in [1, {self.n_basis_}], got {n!r}")
        return int(n)

    def transform(self, X, n=None, check_domain=True):
        """Reduced coefficients, shape ``(M, n)``."""
        check_is_fitted(self, "basis_")
        X = check_parameters(self.problem, X, check_domain)
        n = self._check_n(n)
        ta = self.problem.theta_a(X, check_domain)
        tf = self.problem.theta_f(X, check_domain)
        return self._coefficients(ta, tf, n)

    def predict(self, X, n=None, check_domain=True):
        """Reduced solutions on the interior dofs, shape ``(M, n_dofs)``."""
        n = self._check_n(n)
        return self.transform(X, n, check_domain) @ self.basis_[:n]

    def residual_norm(self, X, n=None, method="decomposed", check_domain=True):
        """Residual norm of the reduced solution: ``'decomposed'`` or ``'direct'``."""
        n = self._check_n(n)
        X = check_parameters(self.problem, X, check_domain)
        c = self.transform(X, n, check_domain)
        if method == "direct":
            return np.array(
                [
                    residual_norm_direct(self.problem, m, cm, self.basis_[:n], check_domain)
                    for m, cm in zip(X, c)
                ]
            )
        if method != "decomposed":
            raise ValueError(f"unknown residual method {method!r}")
        ta = self.problem.theta_a(X, check_domain)
        tf = self.problem.theta_f(X, check_domain)
        return residual_norm_decomposed(self.cache_, ta, tf, c)

    def error_estimate(self, X, n=None, method="decomposed", beta=None):
        """A posteriori bound ``Delta_n(mu)`` for each row of ``X``.

        ``beta`` defaults to the exact stability constant, computed and cached
        on the problem.
        """
        X = check_parameters(self.problem, X)
        if beta is None:
            beta = stability_table(self.problem, X)
        return error_bound(self.residual_norm(X, n, method), beta)
