"""Empirical reduced collocation.

Greedy selection of parameters, basis functions and reduced collocation
points in one loop. Each new snapshot is made to vanish at the points chosen
so far and normalized to one at its own maximum-modulus node, so the point
evaluation matrix ``B[k, j] = xi_j(x_k)`` is lower triangular with unit
diagonal. Online, the residual is collocated at the ``N`` reduced points:

    sum_j c_j sum_q a_q(mu) I[L_q xi_j](x_k) = sum_q b_q(mu) f_q(x_k)

where ``I`` is the tensor Chebyshev interpolant of the fine-grid field.
"""

import copy

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from ._base import ReducedCollocationModel
from .estimator import _empty_cache, cache_build, cache_extend
from .exceptions import DegenerateBasisError, ShapeError, SingularSystemError
from .lsrcm import weighted_gram_schmidt
from .spectral import cheb_coeffs_2d, interpolate_at

_EPS = np.finfo(float).eps
# reduced systems with a larger condition estimate are reported as singular
SINGULAR_COND = 1e12


def collocation_system(op_rows, rhs_rows, coef_at_points, rhs_coef_at_points):
    """Assemble reduced collocation systems from per-point coefficient values.

    Only point values of the coefficient functions enter, so the same
    assembly serves coefficients that vary in space.

    Parameters
    ----------
    op_rows : ndarray, shape (n, Qa, n)
        ``I[L_q xi_j](x_k)`` indexed ``[k, q, j]``.
    rhs_rows : ndarray, shape (n, Qf)
        ``f_q(x_k)``.
    coef_at_points : ndarray, shape (M, n, Qa)
        Operator coefficients at each reduced point.
    rhs_coef_at_points : ndarray, shape (M, n, Qf)

    Returns
    -------
    matrices : ndarray, shape (M, n, n)
    rhs : ndarray, shape (M, n)
    """
    matrices = np.einsum("mkq,kqj->mkj", coef_at_points, op_rows)
    rhs = np.einsum("mkq,kq->mk", rhs_coef_at_points, rhs_rows)
    return matrices, rhs


def _point_value(interp, point):
    # one point per call keeps every reduced entry independent of batch shape
    return interpolate_at(interp, np.reshape(point, (1, 2)))[0]


def _point_rows(op_interp, point):
    """``I[L_q xi_j](point)`` for all ``q, j``: shape ``(Qa, len(op_interp))``."""
    return np.array([[_point_value(I, point) for I in terms] for terms in op_interp]).T


def _affine_at_points(theta, n):
    theta = np.atleast_2d(theta)
    return np.broadcast_to(theta[:, None, :], (theta.shape[0], n, theta.shape[1]))


def lu_solve_checked(matrix, rhs, mu=None, check=True):
    """LU solve with partial pivoting; returns ``(solution, condition estimate)``.

    With ``check=False`` ill-conditioned systems are still solved and only an
    exactly zero pivot yields a NaN solution with infinite condition.
    """
    n = matrix.shape[0]
    lu, piv, info = lapack.dgetrf(matrix)
    if info > 0:
        if not check:
            return np.full(n, np.nan), np.inf
        raise SingularSystemError(f"reduced system with n={n} is exactly singular", mu)
    rcond, _ = lapack.dgecon(lu, np.linalg.norm(matrix, 1), norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if check and not cond < SINGULAR_COND:
        raise SingularSystemError(
            f"reduced system with n={n} is numerically singular (cond={cond:.3e})", mu
        )
    return sla.lu_solve((lu, piv), rhs, check_finite=False), cond


class EmpiricalRCM(ReducedCollocationModel):
    """Empirical reduced collocation model.

    Parameters
    ----------
    problem : AffineProblem
    n_max : int, default 20
    tol : float, default 1e-8
    random_state : int, RandomState or None
    gram_schmidt : bool, default False
        After each new point, orthonormalize the basis (Euclidean modified
        Gram-Schmidt) and re-triangularize it against the selected points.
        The triangular normalization fixes the basis of a nested span, so this
        changes the basis only at roundoff level.
    verbose : bool

    Attributes
    ----------
    basis_ : ndarray of shape (N, n_dofs)
        Triangularized, max-normalized basis ``xi_j``.
    point_index_ : ndarray of shape (N,)
        Interior dof index of each reduced point.
    points_ : ndarray of shape (N, 2)
        Coordinates of the reduced points.
    B_ : ndarray of shape (N, N)
        ``xi_j(x_k)``.
    op_rows_ : ndarray of shape (N, Qa, N)
    rhs_rows_ : ndarray of shape (N, Qf)
    """

    _method = "ercm"

    def __init__(
        self,
        problem=None,
        n_max=20,
        tol=1e-8,
        random_state=None,
        gram_schmidt=False,
        verbose=False,
    ):
        super().__init__(problem, n_max, tol, random_state, verbose)
        self.gram_schmidt = gram_schmidt

    # -- offline -----------------------------------------------------------

    def _start(self, problem):
        self._interior_points = problem.grid.interior_points()
        self._rhs_interp = [cheb_coeffs_2d(f, problem.grid) for f in problem.rhs_terms_full]
        self._op_interp = []
        self._snapshots = []
        self.basis_ = np.zeros((0, problem.n_dofs))
        self.point_index_ = np.zeros(0, dtype=int)
        self.points_ = np.zeros((0, 2))
        self.B_ = np.zeros((0, 0))
        self.op_rows_ = np.zeros((0, problem.n_operator_terms, 0))
        self.rhs_rows_ = np.zeros((0, problem.n_rhs_terms))
        self.cache_ = _empty_cache(problem)

    def _term_interpolants(self, xi):
        full = self.problem.apply_term_full
        return [
            cheb_coeffs_2d(full(q, xi), self.problem.grid)
            for q in range(self.problem.n_operator_terms)
        ]

    def _add_snapshot(self, u):
        self._snapshots.append(np.array(u))
        n = self.basis_.shape[0]
        idx = self.point_index_
        if n:
            alpha = sla.solve_triangular(self.B_, u[idx], lower=True, unit_diagonal=True)
            xi = u - alpha @ self.basis_
        else:
            xi = np.array(u, dtype=float)
        k = int(np.argmax(np.abs(xi)))
        if not abs(xi[k]) > 1e-12 * np.max(np.abs(u)):
            raise DegenerateBasisError(
                f"snapshot {n + 1} lies numerically in the span of the basis"
            )
        xi = xi / xi[k]
        self.basis_ = np.vstack([self.basis_, xi])
        self.point_index_ = np.append(idx, k)
        self.points_ = self._interior_points[self.point_index_]
        self._op_interp.append(self._term_interpolants(xi))
        if self.gram_schmidt:
            self._orthonormalize_and_retriangularize()
        else:
            self._extend_rows()
            self.cache_ = cache_extend(self.cache_, self.problem, xi)

    def _extend_rows(self):
        n = self.basis_.shape[0]
        qa = self.problem.n_operator_terms
        B = np.zeros((n, n))
        B[: n - 1, : n - 1] = self.B_
        B[n - 1, :] = self.basis_[:, self.point_index_[n - 1]]
        B[:, n - 1] = self.basis_[n - 1, self.point_index_]
        op_rows = np.zeros((n, qa, n))
        op_rows[: n - 1, :, : n - 1] = self.op_rows_
        op_rows[n - 1] = _point_rows(self._op_interp, self.points_[n - 1])
        for k in range(n - 1):
            op_rows[k, :, n - 1] = _point_rows(self._op_interp[n - 1 :], self.points_[k])[:, 0]
        rhs_rows = np.zeros((n, self.problem.n_rhs_terms))
        rhs_rows[: n - 1] = self.rhs_rows_
        rhs_rows[n - 1] = [_point_value(I, self.points_[n - 1]) for I in self._rhs_interp]
        self.B_, self.op_rows_, self.rhs_rows_ = B, op_rows, rhs_rows

    def _orthonormalize_and_retriangularize(self):
        idx = self.point_index_
        basis = []
        for v in weighted_gram_schmidt(self.basis_, None):
            if basis:
                Bk = np.array(basis)[:, idx[: len(basis)]].T
                alpha = sla.solve_triangular(Bk, v[idx[: len(basis)]], lower=True)
                v = v - alpha @ np.array(basis)
            basis.append(v / v[idx[len(basis)]])
        self.basis_ = np.array(basis)
        self._op_interp = [self._term_interpolants(xi) for xi in self.basis_]
        self.B_ = self.basis_[:, idx].T
        self.op_rows_ = self._rows_at(self.points_)
        self.rhs_rows_ = self._rhs_rows_at(self.points_)
        self.cache_ = cache_build(self.problem, self.basis_)

    def _rows_at(self, points):
        return np.array([_point_rows(self._op_interp, p) for p in points])

    def _rhs_rows_at(self, points):
        return np.array([[_point_value(I, p) for I in self._rhs_interp] for p in points])

    def _finish(self):
        self.snapshots_ = np.array(self._snapshots)
        del self._snapshots, self._interior_points

    # -- online ------------------------------------------------------------

    def _coefficients(self, theta_a, theta_f, n):
        if n > self.op_rows_.shape[0]:
            raise ShapeError(f"model holds {self.op_rows_.shape[0]} points, requested {n}")
        M, rhs = collocation_system(
            self.op_rows_[:n, :, :n],
            self.rhs_rows_[:n],
            _affine_at_points(theta_a, n),
            _affine_at_points(theta_f, n),
        )
        try:
            return np.linalg.solve(M, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise SingularSystemError(f"reduced system with n={n} is singular") from None

    def solve_with_condition(self, mu, n=None, check=True):
        """Coefficients and 1-norm condition estimate of the reduced system at ``mu``.

        ``check=False`` returns ill-conditioned solutions instead of raising.
        """
        n = self._check_n(n)
        mu = self.problem.check_mu(np.asarray(mu, dtype=float).ravel())
        M, rhs = collocation_system(
            self.op_rows_[:n, :, :n],
            self.rhs_rows_[:n],
            _affine_at_points(self.problem.theta_a(mu), n),
            _affine_at_points(self.problem.theta_f(mu), n),
        )
        return lu_solve_checked(M[0], rhs[0], mu, check)

    def with_points(self, points):
        """Copy of the model collocating at arbitrary ``points`` instead.

        The first ``len(points)`` basis functions are kept as they are; only
        the reduced rows are re-evaluated by spectral interpolation.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        if points.shape[1] != 2 or not 1 <= n <= self.n_basis_:
            raise ShapeError(f"need between 1 and {self.n_basis_} points of shape (n, 2)")
        if not hasattr(self, "_op_interp"):
            # models read from disk carry only the reduced arrays
            self._op_interp = [self._term_interpolants(xi) for xi in self.basis_]
            self._rhs_interp = [
                cheb_coeffs_2d(f, self.problem.grid) for f in self.problem.rhs_terms_full
            ]
        other = copy.copy(self)
        other.basis_ = self.basis_[:n]
        other.snapshots_ = self.snapshots_[:n]
        other.points_ = points
        other.point_index_ = np.full(n, -1)
        other.cache_ = self.cache_.truncate(n)
        other._op_interp = self._op_interp[:n]
        grid = self.problem.grid
        basis_interp = [cheb_coeffs_2d(grid.to_full(xi), grid) for xi in other.basis_]
        other.B_ = np.array([[_point_value(I, p) for I in basis_interp] for p in points])
        other.op_rows_ = other._rows_at(points)
        other.rhs_rows_ = other._rhs_rows_at(points)
        return other


def ercm_online_solve(model, mu, n_active=None):
    """Coefficients and reduced solution for one parameter."""
    n = model._check_n(n_active)
    c, _ = model.solve_with_condition(mu, n)
    return c, c @ model.basis_[:n]


def coarse_chebyshev_points(n):
    """First ``n`` points of the smallest interior Chebyshev tensor grid holding ``n``.

    The grid has ``k = ceil(sqrt(n))`` points per direction at
    ``cos(pi i / (k + 1))``, ``i = 1..k``; points are taken in row-major order.
    """
    k = int(np.ceil(np.sqrt(n)))
    nodes = np.cos(np.pi * np.arange(1, k + 1) / (k + 1))
    X, Y = np.meshgrid(nodes, nodes, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])[:n]
