"""Residual-based a posteriori error bound and its offline/online split.

The squared residual ``||f(mu) - L(mu) sum_j c_j u_j||^2`` expands into
``e1 - 2 e3 + e2`` with

* ``e1 = sum a^f_p a^f_q  f_p . f_q``
* ``e2 = sum c_i c_j a_p a_q  (L_p u_i) . (L_q u_j)``
* ``e3 = sum a^f_p a_q c_j  f_p . (L_q u_j)``

so that only small tensors are needed once the inner products are cached.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidStabilityError, NumericalInconsistencyError, ShapeError
from .problem import operator_at, rhs_at

# negative radicand clamped up to this fraction of its absolute-value roundoff scale
RADICAND_TOL = 1e-12


@dataclass(frozen=True)
class EstimatorCache:
    """Inner-product tensors for residual evaluation.

    Attributes
    ----------
    ff : ndarray, shape (Qf, Qf)
        ``f_p . f_q``.
    uLLu : ndarray, shape (n, Qa, n, Qa)
        ``(L_p u_i) . (L_q u_j)`` indexed ``[i, p, j, q]``.
    fLu : ndarray, shape (Qf, Qa, n)
        ``f_p . (L_q u_j)`` indexed ``[p, q, j]``.
    """

    ff: np.ndarray
    uLLu: np.ndarray
    fLu: np.ndarray
    # fine-grid vectors L_q u_j, kept offline so the cache can be extended;
    # never touched by the online evaluation
    workspace: tuple = field(default=(), repr=False, compare=False)

    @property
    def size(self):
        return self.uLLu.shape[0]

    @property
    def n_operator_terms(self):
        return self.fLu.shape[1]

    @property
    def n_rhs_terms(self):
        return self.ff.shape[0]

    def truncate(self, n):
        return EstimatorCache(
            self.ff,
            self.uLLu[:n, :, :n, :],
            self.fLu[:, :, :n],
            self.workspace[:n],
        )

    def online_arrays(self):
        return {"ff": self.ff, "uLLu": self.uLLu, "fLu": self.fLu}


def _empty_cache(problem):
    F = np.stack(problem.rhs_terms)
    qf = F.shape[0]
    qa = problem.n_operator_terms
    ff = np.empty((qf, qf))
    for p in range(qf):
        for q in range(p, qf):
            ff[p, q] = ff[q, p] = np.dot(F[p], F[q])
    return EstimatorCache(ff, np.zeros((0, qa, 0, qa)), np.zeros((qf, qa, 0)), ())


def cache_extend(cache, problem, u):
    """Return a new cache with basis vector ``u`` appended.

    Only the entries that involve ``u`` are computed.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (problem.n_dofs,):
        raise ShapeError(f"basis vector has shape {u.shape}, expected ({problem.n_dofs},)")
    n = cache.size
    qa = problem.n_operator_terms
    Lu = np.stack([Lq @ u for Lq in problem.operator_terms])
    F = np.stack(problem.rhs_terms)

    uLLu = np.zeros((n + 1, qa, n + 1, qa))
    uLLu[:n, :, :n, :] = cache.uLLu
    for j, Lu_j in enumerate(cache.workspace):
        block = Lu @ Lu_j.T
        uLLu[n, :, j, :] = block
        uLLu[j, :, n, :] = block.T
    block = Lu @ Lu.T
    iu = np.triu_indices(qa)
    block.T[iu] = block[iu]
    uLLu[n, :, n, :] = block

    fLu = np.zeros(cache.fLu.shape[:2] + (n + 1,))
    fLu[:, :, :n] = cache.fLu
    fLu[:, :, n] = F @ Lu.T
    return EstimatorCache(cache.ff, uLLu, fLu, cache.workspace + (Lu,))


def cache_build(problem, basis):
    """Build the cache for a list of interior basis vectors.

    Implemented as repeated ``cache_extend`` so that building at once and
    extending step by step give bit-identical tensors.
    """
    cache = _empty_cache(problem)
    for u in basis:
        cache = cache_extend(cache, problem, u)
    return cache


def residual_norm_direct(problem, mu, coeffs, basis, check_domain=True):
    """Fine-grid residual norm ``||f(mu) - L(mu) sum_j c_j u_j||``."""
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    basis = np.asarray(basis, dtype=float).reshape(-1, problem.n_dofs)
    if len(coeffs) != len(basis):
        raise ShapeError(f"{len(coeffs)} coefficients for {len(basis)} basis vectors")
    u = coeffs @ basis
    r = rhs_at(problem, mu, check_domain) - operator_at(problem, mu, check_domain) @ u
    return float(np.linalg.norm(r))


def residual_norm_decomposed(cache, theta_a, theta_f, coeffs):
    """Residual norm from cached inner products; cost independent of grid size.

    Parameters
    ----------
    cache : EstimatorCache
    theta_a : array-like, shape (Qa,) or (M, Qa)
    theta_f : array-like, shape (Qf,) or (M, Qf)
    coeffs : array-like, shape (n,) or (M, n)
        Reduced coefficients; ``n`` may be smaller than the cache size.

    Returns
    -------
    float or ndarray of shape (M,)
    """
    ta = np.asarray(theta_a, dtype=float)
    tf = np.asarray(theta_f, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    single = c.ndim == 1
    ta, tf, c = np.atleast_2d(ta), np.atleast_2d(tf), np.atleast_2d(c)
    n = c.shape[1]
    if n > cache.size:
        raise ShapeError(f"cache holds {cache.size} basis vectors, got {n} coefficients")
    qa = cache.n_operator_terms
    e1 = np.einsum("mp,pq,mq->m", tf, cache.ff, tf)
    w = (c[:, :, None] * ta[:, None, :]).reshape(c.shape[0], n * qa)
    G = cache.uLLu[:n, :, :n, :].reshape(n * qa, n * qa)
    e2 = np.einsum("mk,kl,ml->m", w, G, w)
    H = cache.fLu[:, :, :n].transpose(0, 2, 1).reshape(tf.shape[1], n * qa)
    e3 = np.einsum("mp,pk,mk->m", tf, H, w)
    r2 = e1 - 2.0 * e3 + e2
    bad = r2 < 0
    if np.any(bad):
        # roundoff scale of the three sums: same products with absolute values
        aw, atf = np.abs(w), np.abs(tf)
        scale = (
            np.einsum("mp,pq,mq->m", atf, np.abs(cache.ff), atf)
            + 2.0 * np.einsum("mp,pk,mk->m", atf, np.abs(H), aw)
            + np.einsum("mk,kl,ml->m", aw, np.abs(G), aw)
        )
        bad &= r2 < -RADICAND_TOL * scale
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NumericalInconsistencyError(
            f"negative squared residual {r2[k]:.3e} (e1={e1[k]:.3e})"
        )
    r = np.sqrt(np.maximum(r2, 0.0))
    return float(r[0]) if single else r


def error_bound(residual_norm, beta_lb):
    """Error bound ``residual / sqrt(beta_lb)``."""
    beta_lb = np.asarray(beta_lb, dtype=float)
    if np.any(~(beta_lb > 0)):
        raise InvalidStabilityError("stability lower bound must be positive")
    out = np.asarray(residual_norm, dtype=float) / np.sqrt(beta_lb)
    return float(out) if out.ndim == 0 else out
