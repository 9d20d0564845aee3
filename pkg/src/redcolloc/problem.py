"""Affinely parametrized elliptic problems on a Chebyshev tensor grid.

A problem is described declaratively: a list of operator terms, each a
symbolic spatial operator tag paired with a coefficient expression in the
parameters ``mu1, mu2, ...``, and a list of right-hand side terms, each a
spatial expression in ``x, y`` paired with a coefficient expression. Zero
Dirichlet data is imposed by dropping boundary rows and columns.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .exceptions import DomainError, RedCollocError, ShapeError, SolverError
from .spectral import TensorGrid2D, cheb_diff

OPERATOR_TAGS = ("dxx", "dyy", "x*dxx", "y*dyy", "identity")

_EXPR_FUNCS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "abs")
}
_EXPR_FUNCS["pi"] = np.pi

# dense singular values are cheaper than factorize + Lanczos below this size
_DENSE_BETA_MAX = 500
_DOMAIN_SLACK = 1e-12


class Expression:
    """A whitelisted arithmetic expression compiled once and evaluated with numpy."""

    def __init__(self, source, variables):
        self.source = str(source).strip()
        self.variables = tuple(variables)
        try:
            self._code = compile(self.source, "<expression>", "eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse expression {self.source!r}: {exc}") from None
        unknown = set(self._code.co_names) - set(self.variables) - set(_EXPR_FUNCS)
        if unknown:
            raise ValueError(
                f"expression {self.source!r} uses unknown names {sorted(unknown)}"
            )

    def __call__(self, shape, **values):
        out = eval(self._code, {"__builtins__": {}}, {**_EXPR_FUNCS, **values})
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"


def _parse_tag(tag):
    tag = tag.replace(" ", "")
    sign = 1.0
    if tag.startswith("-"):
        sign, tag = -1.0, tag[1:]
    if tag not in OPERATOR_TAGS:
        raise ValueError(f"unknown operator tag {tag!r}; expected one of {OPERATOR_TAGS}")
    return sign, tag


@dataclass(frozen=True)
class ParameterDomain:
    """Box parameter domain with a uniform Cartesian training lattice."""

    bounds: tuple
    train_shape: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        shape = tuple(int(s) for s in self.train_shape)
        if len(bounds) != len(shape):
            raise ValueError("bounds and training shape must have the same dimension")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"empty parameter interval [{lo}, {hi}]")
        if any(s < 1 for s in shape):
            raise ValueError(f"training shape must be positive, got {shape}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "train_shape", shape)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def center(self):
        return np.array([0.5 * (lo + hi) for lo, hi in self.bounds])

    def with_train_shape(self, shape):
        return ParameterDomain(self.bounds, tuple(shape))

    def training_grid(self):
        """Training set as an array ``(prod(train_shape), dim)``; first axis slowest."""
        axes = [
            np.linspace(lo, hi, s) if s > 1 else np.array([0.5 * (lo + hi)])
            for (lo, hi), s in zip(self.bounds, self.train_shape)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def sample(self, n, random_state=None):
        rng = np.random.default_rng(random_state)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return lo + (hi - lo) * rng.random((n, self.dim))

    def contains(self, mu):
        mu = np.atleast_2d(mu)
        ok = np.ones(mu.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate(self.bounds):
            slack = _DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
            ok &= (mu[:, k] >= lo - slack) & (mu[:, k] <= hi + slack)
        return ok


@dataclass(frozen=True)
class TruthSolution:
    mu: np.ndarray
    values: np.ndarray = field(repr=False)
    grid: TensorGrid2D
    residual: float = float("nan")


class AffineProblem:
    """Linear problem ``sum_q a_q(mu) L_q u = sum_q b_q(mu) f_q`` on interior dofs.

    Parameters
    ----------
    name : str
    nx : int
        Chebyshev order in each direction.
    bounds : sequence of (lo, hi)
        Parameter box.
    train_shape : sequence of int
        Lattice counts for the training set.
    operator : sequence of (tag, coefficient) pairs
        ``tag`` is one of ``dxx, dyy, x*dxx, y*dyy, identity`` with an
        optional leading minus; ``coefficient`` is an expression in
        ``mu1, mu2, ...``.
    rhs : sequence of (expression, coefficient) pairs
        Spatial expression in ``x, y`` and a parameter coefficient.
    """

    def __init__(self, name, nx, bounds, train_shape, operator, rhs):
        self.name = str(name)
        self.grid = TensorGrid2D(nx)
        self.domain = ParameterDomain(bounds, train_shape)
        mu_vars = [f"mu{k + 1}" for k in range(self.domain.dim)]
        if not operator or not rhs:
            raise ValueError("a problem needs at least one operator and one rhs term")
        self.operator_spec = tuple((str(t), str(c)) for t, c in operator)
        self.rhs_spec = tuple((str(e), str(c)) for e, c in rhs)
        self._op_terms = [_parse_tag(t) for t, _ in self.operator_spec]
        self._op_coeffs = [Expression(c, mu_vars) for _, c in self.operator_spec]
        self._rhs_exprs = [Expression(e, ("x", "y")) for e, _ in self.rhs_spec]
        self._rhs_coeffs = [Expression(c, mu_vars) for _, c in self.rhs_spec]
        self._mu_vars = mu_vars

        g = self.grid
        self._d2x = cheb_diff(g.nx, 2)
        self._d2y = cheb_diff(g.ny, 2)
        self._X, self._Y = g.mesh()
        self.operator_terms = [self._assemble(s, t) for s, t in self._op_terms]
        X, Y = self._X, self._Y
        self.rhs_terms_full = [e(X.shape, x=X, y=Y) for e in self._rhs_exprs]
        self.rhs_terms = [g.to_interior(f) for f in self.rhs_terms_full]
        for a in self.operator_terms + self.rhs_terms:
            a.setflags(write=False)
        self._beta_cache = {}

    # -- description -----------------------------------------------------

    @classmethod
    def from_description(cls, description, nx=None):
        d = dict(description)
        if nx is not None:
            d["nx"] = nx
        return cls(
            d["name"], d["nx"], d["bounds"], d["train_shape"], d["operator"], d["rhs"]
        )

    def describe(self):
        """Plain-data description; ``from_description(describe())`` rebuilds the problem."""
        return {
            "name": self.name,
            "nx": self.grid.nx,
            "bounds": [list(b) for b in self.domain.bounds],
            "train_shape": list(self.domain.train_shape),
            "operator": [list(t) for t in self.operator_spec],
            "rhs": [list(t) for t in self.rhs_spec],
        }

    def with_train_shape(self, shape):
        d = self.describe()
        d["train_shape"] = list(shape)
        return AffineProblem.from_description(d)

    # -- sizes -----------------------------------------------------------

    @property
    def n_dofs(self):
        return self.grid.n_interior

    @property
    def n_operator_terms(self):
        return len(self.operator_terms)

    @property
    def n_rhs_terms(self):
        return len(self.rhs_terms)

    # -- assembly --------------------------------------------------------

    def _assemble(self, sign, tag):
        g = self.grid
        ix = np.eye(g.nx - 1)
        iy = np.eye(g.ny - 1)
        d2x = self._d2x[1:-1, 1:-1]
        d2y = self._d2y[1:-1, 1:-1]
        pts = g.interior_points()
        if tag == "dxx":
            m = np.kron(d2x, iy)
        elif tag == "dyy":
            m = np.kron(ix, d2y)
        elif tag == "x*dxx":
            m = pts[:, 0:1] * np.kron(d2x, iy)
        elif tag == "y*dyy":
            m = pts[:, 1:2] * np.kron(ix, d2y)
        else:
            m = np.eye(g.n_interior)
        return sign * m

    def apply_term_full(self, q, u):
        """Apply operator term ``q`` to interior vector(s) ``u`` on the full grid.

        The field is extended by zero to the boundary and differentiated with the
        full Chebyshev matrices, so the result is also defined at boundary
        nodes. Its interior part equals ``operator_terms[q] @ u``.
        """
        sign, tag = self._op_terms[q]
        U = self.grid.to_full(u)
        if tag == "dxx":
            out = np.einsum("ik,...kj->...ij", self._d2x, U)
        elif tag == "dyy":
            out = np.einsum("...ik,jk->...ij", U, self._d2y)
        elif tag == "x*dxx":
            out = self._X * np.einsum("ik,...kj->...ij", self._d2x, U)
        elif tag == "y*dyy":
            out = self._Y * np.einsum("...ik,jk->...ij", U, self._d2y)
        else:
            out = U
        return sign * out

    # -- parameter dependence -------------------------------------------

    def check_mu(self, mu, check_domain=True):
        """Validate parameters; returns a float array ``(dim,)`` or ``(M, dim)``.

        ``check_domain=False`` skips the box check, for studies that probe
        parameters on or beyond the edge of the declared domain.
        """
        mu = np.asarray(mu, dtype=float)
        single = mu.ndim == 1
        mu = np.atleast_2d(mu)
        if mu.shape[-1] != self.domain.dim or mu.ndim != 2:
            raise ShapeError(
                f"parameters must have trailing dimension {self.domain.dim}, got {mu.shape}"
            )
        if not np.all(np.isfinite(mu)):
            raise DomainError("parameters must be finite")
        inside = self.domain.contains(mu)
        if check_domain and not np.all(inside):
            bad = mu[np.argmin(inside)]
            raise DomainError(
                f"parameter {tuple(float(v) for v in bad)} lies outside the domain {self.domain.bounds}"
            )
        return mu[0] if single else mu

    def _theta(self, exprs, mu, check_domain=True):
        mu = self.check_mu(mu, check_domain)
        m2 = np.atleast_2d(mu)
        env = {v: m2[:, k] for k, v in enumerate(self._mu_vars)}
        out = np.column_stack([e((m2.shape[0],), **env) for e in exprs])
        return out[0] if mu.ndim == 1 else out

    def theta_a(self, mu, check_domain=True):
        """Operator coefficients ``a_q(mu)``: shape ``(Qa,)`` or ``(M, Qa)``."""
        return self._theta(self._op_coeffs, mu, check_domain)

    def theta_f(self, mu, check_domain=True):
        """Right-hand side coefficients: shape ``(Qf,)`` or ``(M, Qf)``."""
        return self._theta(self._rhs_coeffs, mu, check_domain)

    def __repr__(self):
        return f"AffineProblem(name={self.name!r}, nx={self.grid.nx})"


_DIFFUSION = {
    "name": "diffusion",
    "bounds": [[-0.99, 0.99], [-0.99, 0.99]],
    "train_shape": [64, 64],
    "operator": [["dxx", "1"], ["x*dxx", "mu1"], ["dyy", "1"], ["y*dyy", "mu2"]],
    "rhs": [["exp(4*x*y)", "1"]],
}

_ANISOTROPIC = {
    "name": "anisotropic",
    "bounds": [[0.1, 4.0], [0.0, 2.0]],
    "train_shape": [128, 64],
    "operator": [["-dxx", "1"], ["-dyy", "mu1"], ["-identity", "mu2"]],
    "rhs": [["-10*sin(8*x*(y-1))", "1"]],
}


def _check_nx(nx):
    if int(nx) != nx or nx < 4:
        raise ValueError(f"truth order must be an integer >= 4, got {nx!r}")


def build_diffusion(nx):
    """``(1 + mu1 x) u_xx + (1 + mu2 y) u_yy = exp(4xy)`` with zero Dirichlet data."""
    _check_nx(nx)
    return AffineProblem.from_description(_DIFFUSION, nx=int(nx))


def build_anisotropic(nx):
    """``-u_xx - mu1 u_yy - mu2 u = -10 sin(8x(y - 1))`` with zero Dirichlet data."""
    _check_nx(nx)
    return AffineProblem.from_description(_ANISOTROPIC, nx=int(nx))


BUILTIN_PROBLEMS = {"diffusion": build_diffusion, "anisotropic": build_anisotropic}


def build_problem(name, nx):
    try:
        return BUILTIN_PROBLEMS[name](nx)
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}; expected one of {sorted(BUILTIN_PROBLEMS)}"
        ) from None


def operator_at(problem, mu, check_domain=True):
    """Interior matrix ``L(mu) = sum_q a_q(mu) L_q``."""
    theta = problem.theta_a(np.asarray(mu, dtype=float).ravel(), check_domain)
    out = theta[0] * problem.operator_terms[0]
    for t, m in zip(theta[1:], problem.operator_terms[1:]):
        out = out + t * m
    return out


def rhs_at(problem, mu, check_domain=True):
    """Interior vector ``f(mu) = sum_q b_q(mu) f_q``."""
    theta = problem.theta_f(np.asarray(mu, dtype=float).ravel(), check_domain)
    return np.asarray(theta) @ np.stack(problem.rhs_terms)


def truth_solve(problem, mu, rhs=None, check_domain=True):
    """Dense LU solve of the truth collocation system at ``mu``.

    Parameters
    ----------
    problem : AffineProblem
    mu : array-like, shape (dim,)
    rhs : array-like, optional
        Right-hand side overriding ``rhs_at(problem, mu)``.
    check_domain : bool, default True
        Reject parameters outside the declared domain.

    Returns
    -------
    TruthSolution
    """
    mu = problem.check_mu(np.asarray(mu, dtype=float).ravel(), check_domain)
    L = operator_at(problem, mu, check_domain)
    f = rhs_at(problem, mu, check_domain) if rhs is None else np.asarray(rhs, dtype=float)
    lu, piv = sla.lu_factor(L, check_finite=False)
    rcond, info = lapack.dgecon(lu, np.linalg.norm(L, 1), norm="1")
    if info != 0 or not rcond > np.finfo(float).eps:
        raise SolverError(f"truth operator is numerically singular (rcond={rcond:.3e})", mu)
    u = sla.lu_solve((lu, piv), f, check_finite=False)
    r = f - L @ u
    # one step of iterative refinement keeps the residual at roundoff for large nx
    if np.linalg.norm(r) > 1e-12 * np.linalg.norm(f):
        u = u + sla.lu_solve((lu, piv), r, check_finite=False)
        r = f - L @ u
    if not np.all(np.isfinite(u)):
        raise SolverError("truth solve produced non-finite values", mu)
    u.setflags(write=False)
    return TruthSolution(mu, u, problem.grid, float(np.linalg.norm(r)))


def smallest_eigenvalue_normal(L, method="auto"):
    """Smallest eigenvalue of ``L^T L``, i.e. the squared smallest singular value.

    ``method='dense'`` uses a full singular value decomposition;
    ``method='lanczos'`` factorizes ``L`` once and runs Lanczos on
    ``L^{-1} L^{-T}``, whose largest eigenvalue is ``1 / sigma_min^2``.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if method == "auto":
        method = "dense" if n <= _DENSE_BETA_MAX else "lanczos"
    if method == "dense":
        s = sla.svdvals(L, check_finite=False)
        return float(s[-1] ** 2)
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    lu_piv = sla.lu_factor(L, check_finite=False)

    def matvec(v):
        w = sla.lu_solve(lu_piv, np.ravel(v), trans=1, check_finite=False)
        return sla.lu_solve(lu_piv, w, check_finite=False)

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        vals = eigsh(op, k=1, which="LA", v0=v0, tol=1e-14, maxiter=50 * n)[0]
    except ArpackNoConvergence as exc:
        raise RedCollocError("Lanczos iteration for sigma_min did not converge") from exc
    return float(1.0 / vals[0])


def stability_constant(problem, mu, method="auto"):
    """Stability constant ``beta(mu)``: smallest eigenvalue of ``L(mu)^T L(mu)``."""
    mu = problem.check_mu(np.asarray(mu, dtype=float).ravel())
    key = (method if method != "auto" else "auto", mu.tobytes())
    if key not in problem._beta_cache:
        try:
            beta = smallest_eigenvalue_normal(operator_at(problem, mu), method)
        except (np.linalg.LinAlgError, RedCollocError) as exc:
            raise SolverError(f"stability constant failed: {exc}", mu) from exc
        if not math.isfinite(beta):
            raise SolverError("stability constant is not finite", mu)
        problem._beta_cache[key] = beta
    return problem._beta_cache[key]


def stability_table(problem, mus=None):
    """``beta(mu)`` for every row of ``mus`` (default: the training set)."""
    if mus is None:
        mus = problem.domain.training_grid()
    mus = np.atleast_2d(problem.check_mu(mus))
    return np.array([stability_constant(problem, m) for m in mus])
