"""Least squares reduced collocation.

The reduced coefficients minimize the fine-grid collocation residual over
the span of the greedy snapshots, i.e. solve the normal equations
``(A^T A) c = A^T f`` with ``A = [L(mu) xi_1, ..., L(mu) xi_N]``. Both sides
are assembled online from the cached inner products ``(L_p xi_i).(L_q xi_j)``
and ``(L_p xi_i).f_q``.
"""

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ._base import ReducedCollocationModel
from .estimator import cache_build, cache_extend, _empty_cache
from .exceptions import DegenerateBasisError, IllConditionedModelError, ShapeError
from .problem import operator_at

_EPS = np.finfo(float).eps


def weighted_gram_schmidt(vectors, weight, reorthogonalize=True):
    """Modified Gram-Schmidt in the inner product ``(W u) . (W v)``.

    Parameters
    ----------
    vectors : sequence of ndarray
        Vectors in processing order.
    weight : ndarray or None
        Square matrix ``W``; ``None`` means the Euclidean inner product.
    reorthogonalize : bool
        Run a second projection sweep per vector (keeps orthogonality at
        roundoff when the input is nearly dependent).

    Returns
    -------
    ndarray of shape (len(vectors), n)
    """
    if weight is None:
        def apply(x):
            return x.copy()
    else:
        def apply(x):
            return weight @ x
    basis, images = [], []
    for v in vectors:
        x = np.array(v, dtype=float)
        wx = apply(x)
        scale = np.linalg.norm(wx)
        for _ in range(2 if reorthogonalize else 1):
            for b, wb in zip(basis, images):
                r = np.dot(wb, wx)
                x -= r * b
                wx -= r * wb
            wx = apply(x)
        norm = np.linalg.norm(wx)
        if not norm > 1e-14 * scale:
            raise DegenerateBasisError(
                f"vector {len(basis) + 1} is numerically dependent on its predecessors"
            )
        basis.append(x / norm)
        images.append(wx / norm)
    return np.array(basis).reshape(len(basis), -1)


def normal_equations(cache, theta_a, theta_f, n):
    """Online ``A^T A`` and ``A^T f`` for each parameter row.

    Returns arrays of shape ``(M, n, n)`` and ``(M, n)``.
    """
    ta = np.atleast_2d(theta_a)
    tf = np.atleast_2d(theta_f)
    if n > cache.size:
        raise ShapeError(f"model holds {cache.size} basis vectors, requested {n}")
    G = cache.uLLu[:n, :, :n, :]
    AtA = np.einsum("mp,mq,ipjq->mij", ta, ta, G)
    Atf = np.einsum("mp,mq,qpi->mi", ta, tf, cache.fLu[:, :, :n])
    return AtA, Atf


def solve_normal_equations(AtA, Atf):
    """Cholesky solve of a stack of normal equations."""
    try:
        chol = np.linalg.cholesky(AtA)
    except np.linalg.LinAlgError:
        raise IllConditionedModelError(
            f"normal equations with N={AtA.shape[-1]} are not positive definite"
        ) from None
    d = np.abs(np.diagonal(chol, axis1=-2, axis2=-1))
    cond = (d.max(axis=-1) / d.min(axis=-1)) ** 2
    if np.any(~(cond < 1.0 / _EPS)):
        raise IllConditionedModelError(
            f"normal equations with N={AtA.shape[-1]} have condition > 1/eps"
        )
    y = np.linalg.solve(chol, Atf[..., None])
    return np.linalg.solve(np.swapaxes(chol, -1, -2), y)[..., 0]


class LeastSquaresRCM(ReducedCollocationModel):
    """Least squares reduced collocation model.

    Parameters
    ----------
    problem : AffineProblem
    n_max : int, default 20
        Maximum number of basis functions.
    tol : float, default 1e-8
        Stop once the largest error bound over the training set is below ``tol``.
    random_state : int, RandomState or None
        Seeds the choice of the first parameter.
    orthonormalize : {'end', 'incremental'}, default 'end'
        When to apply the weighted Gram-Schmidt step. ``'end'`` trains on raw
        snapshots and orthonormalizes once afterwards; ``'incremental'``
        orthonormalizes each snapshot as it arrives. Both yield the same
        final basis up to roundoff.
    verbose : bool

    Attributes
    ----------
    basis_ : ndarray of shape (N, n_dofs)
        Orthonormalized basis.
    snapshots_ : ndarray of shape (N, n_dofs)
        Truth solutions at ``selected_mus_``.
    cache_ : EstimatorCache
        Inner products against ``basis_``; doubles as the online Gram tensors.
    """

    _method = "lsrcm"

    def __init__(
        self,
        problem=None,
        n_max=20,
        tol=1e-8,
        random_state=None,
        orthonormalize="end",
        verbose=False,
    ):
        super().__init__(problem, n_max, tol, random_state, verbose)
        self.orthonormalize = orthonormalize

    def _start(self, problem):
        if self.orthonormalize not in ("end", "incremental"):
            raise ValueError(f"unknown orthonormalize mode {self.orthonormalize!r}")
        self._weight = operator_at(problem, problem.domain.center)
        self._snapshots = []
        self._vectors = []
        self.cache_ = _empty_cache(problem)

    def _add_snapshot(self, u):
        self._snapshots.append(np.array(u))
        if self.orthonormalize == "incremental":
            xi = weighted_gram_schmidt(self._vectors + [u], self._weight)[-1]
        else:
            xi = np.array(u)
        self._vectors.append(xi)
        self.cache_ = cache_extend(self.cache_, self.problem, xi)
        self.basis_ = np.array(self._vectors)

    def _finish(self):
        self.snapshots_ = np.array(self._snapshots)
        if self.orthonormalize == "end":
            self.basis_ = weighted_gram_schmidt(self._snapshots, self._weight)
            self.cache_ = cache_build(self.problem, self.basis_)
        else:
            self.basis_ = np.array(self._vectors)
        del self._snapshots, self._vectors, self._weight

    def _coefficients(self, theta_a, theta_f, n):
        AtA, Atf = normal_equations(self.cache_, theta_a, theta_f, n)
        return solve_normal_equations(AtA, Atf)

    @property
    def gram_(self):
        """``(L_p xi_i).(L_q xi_j)`` indexed ``[i, p, j, q]``."""
        check_is_fitted(self, "cache_")
        return self.cache_.uLLu

    @property
    def rhs_gram_(self):
        """``(L_p xi_i).f_q`` indexed ``[i, p, q]``."""
        check_is_fitted(self, "cache_")
        return self.cache_.fLu.transpose(2, 1, 0)


def ls_online_matrix(model, mu, n_active=None):
    """Online ``(A^T A, A^T f)`` for one parameter."""
    n = model._check_n(n_active)
    mu = model.problem.check_mu(np.asarray(mu, dtype=float).ravel())
    AtA, Atf = normal_equations(
        model.cache_, model.problem.theta_a(mu), model.problem.theta_f(mu), n
    )
    return AtA[0], Atf[0]


def ls_online_solve(model, mu, n_active=None):
    """Coefficients and reduced solution for one parameter."""
    n = model._check_n(n_active)
    c = model.transform(np.atleast_2d(mu), n)[0]
    return c, c @ model.basis_[:n]
