"""Chebyshev grids, differentiation matrices and tensor Chebyshev interpolation.

Nodes follow the Gauss-Lobatto convention ``x_j = cos(pi * j / n)``, so they
run from +1 down to -1. Two-dimensional fields are stored as arrays of shape
``(nx + 1, ny + 1)`` with ``values[i, j]`` sampled at ``(x_i, y_j)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, InvalidOrderError, ShapeError

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class ChebGrid1D:
    """Chebyshev-Gauss-Lobatto nodes of polynomial order ``n``."""

    n: int
    nodes: np.ndarray = field(repr=False)

    @property
    def interior(self):
        return self.nodes[1:-1]


def cheb_nodes(n):
    """Return the ``n + 1`` Chebyshev-Gauss-Lobatto nodes ``cos(pi j / n)``.

    Parameters
    ----------
    n : int
        Polynomial order, at least 2.

    Returns
    -------
    ChebGrid1D
    """
    if int(n) != n or n < 2:
        raise InvalidOrderError(f"Chebyshev order must be an integer >= 2, got {n!r}")
    n = int(n)
    nodes = np.cos(np.pi * np.arange(n + 1) / n)
    nodes.setflags(write=False)
    return ChebGrid1D(n, nodes)


def cheb_diff(n, order=1):
    """Chebyshev collocation differentiation matrix of order 1 or 2.

    Off-diagonal entries use the closed form with node differences computed
    through the product-of-sines identity; diagonal entries use the negative
    sum trick so that constants are differentiated to zero. The second
    derivative matrix is the square of the first.

    Parameters
    ----------
    n : int
        Polynomial order (the matrix is ``(n + 1) x (n + 1)``).
    order : {1, 2}
        Derivative order.

    Returns
    -------
    numpy.ndarray
    """
    if order not in (1, 2):
        raise InvalidOrderError(f"derivative order must be 1 or 2, got {order!r}")
    grid = cheb_nodes(n)
    n = grid.n
    k = np.arange(n + 1)
    theta = np.pi * k / n
    # x_i - x_j = 2 sin((theta_j + theta_i)/2) sin((theta_j - theta_i)/2)
    dx = 2.0 * np.sin(0.5 * (theta[None, :] + theta[:, None])) * np.sin(
        0.5 * (theta[None, :] - theta[:, None])
    )
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** k
    np.fill_diagonal(dx, 1.0)
    d1 = np.outer(c, 1.0 / c) / dx
    np.fill_diagonal(d1, 0.0)
    np.fill_diagonal(d1, -d1.sum(axis=1))
    if order == 1:
        return d1
    return d1 @ d1


def chebyshev_t(k, x):
    """Evaluate ``T_k(x) = cos(k arccos x)`` for ``|x| <= 1``.

    ``k`` and ``x`` broadcast against each other.
    """
    x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return np.cos(np.multiply.outer(np.arccos(x), np.asarray(k, dtype=float)))


def chebyshev_vandermonde(x, n):
    """Matrix ``V[p, k] = T_k(x_p)`` for ``k = 0..n``."""
    return chebyshev_t(np.arange(n + 1), np.asarray(x, dtype=float).ravel())


def _transform_matrix(n):
    # a_k = 2/(n c_k) sum_j w_j cos(pi j k / n) / c_j
    k = np.arange(n + 1)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    return 2.0 / n * np.cos(np.pi * np.outer(k, k) / n) / np.outer(c, c)


class TensorGrid2D:
    """Tensor product of two Chebyshev grids with an interior dof numbering.

    Interior sites ``(i, j)`` with ``1 <= i < nx`` and ``1 <= j < ny`` map to
    flat dof ``(i - 1) * (ny - 1) + (j - 1)``; boundary nodes carry no dof.
    """

    def __init__(self, nx, ny=None):
        self.gx = cheb_nodes(nx)
        self.gy = cheb_nodes(nx if ny is None else ny)

    @property
    def nx(self):
        return self.gx.n

    @property
    def ny(self):
        return self.gy.n

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    @property
    def interior_shape(self):
        return (self.nx - 1, self.ny - 1)

    @property
    def n_interior(self):
        return (self.nx - 1) * (self.ny - 1)

    def mesh(self):
        """Full-grid coordinate arrays ``(X, Y)`` in ``indexing='ij'`` layout."""
        return np.meshgrid(self.gx.nodes, self.gy.nodes, indexing="ij")

    def interior_points(self):
        """Coordinates of the interior dofs, shape ``(n_interior, 2)``."""
        X, Y = np.meshgrid(self.gx.interior, self.gy.interior, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def dof_to_site(self, dof):
        i, j = np.divmod(np.asarray(dof), self.ny - 1)
        return i + 1, j + 1

    def site_to_dof(self, i, j):
        i, j = np.asarray(i), np.asarray(j)
        if np.any((i < 1) | (i >= self.nx) | (j < 1) | (j >= self.ny)):
            raise DomainError("boundary sites carry no dof")
        return (i - 1) * (self.ny - 1) + (j - 1)

    def to_full(self, interior):
        """Embed interior dof vectors into full-grid arrays with zero boundary.

        Accepts a single vector ``(n_interior,)`` or a stack ``(..., n_interior)``.
        """
        interior = np.asarray(interior, dtype=float)
        if interior.shape[-1] != self.n_interior:
            raise ShapeError(
                f"expected trailing dimension {self.n_interior}, got {interior.shape}"
            )
        lead = interior.shape[:-1]
        full = np.zeros(lead + self.shape)
        full[..., 1:-1, 1:-1] = interior.reshape(lead + self.interior_shape)
        return full

    def to_interior(self, full):
        full = np.asarray(full, dtype=float)
        if full.shape[-2:] != self.shape:
            raise ShapeError(f"expected full-grid shape {self.shape}, got {full.shape}")
        return full[..., 1:-1, 1:-1].reshape(full.shape[:-2] + (self.n_interior,))

    def __eq__(self, other):
        return isinstance(other, TensorGrid2D) and (self.nx, self.ny) == (other.nx, other.ny)

    def __hash__(self):
        return hash((self.nx, self.ny))

    def __repr__(self):
        return f"TensorGrid2D(nx={self.nx}, ny={self.ny})"


@dataclass(frozen=True)
class SpectralInterpolant:
    """Tensor Chebyshev expansion ``sum a[k1, k2] T_k1(x) T_k2(y)``."""

    coeffs: np.ndarray

    @property
    def nx(self):
        return self.coeffs.shape[0] - 1

    @property
    def ny(self):
        return self.coeffs.shape[1] - 1


def cheb_coeffs_2d(values, grid):
    """Tensor Chebyshev coefficients of full-grid samples.

    Applies the discrete Chebyshev transform along ``x`` and then along ``y``;
    the cost is ``O(nx ny (nx + ny))``.

    Parameters
    ----------
    values : array-like, shape (nx + 1, ny + 1)
        Samples on the full tensor grid, boundary included.
    grid : TensorGrid2D

    Returns
    -------
    SpectralInterpolant
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ShapeError(f"values have shape {values.shape}, grid expects {grid.shape}")
    coeffs = _transform_matrix(grid.nx) @ values @ _transform_matrix(grid.ny).T
    coeffs.setflags(write=False)
    return SpectralInterpolant(coeffs)


def _check_inside(coords):
    if coords.size and np.max(np.abs(coords)) > 1.0 + _DOMAIN_SLACK:
        raise DomainError("evaluation points must lie in [-1, 1]^2")


def interpolate_at(interp, points):
    """Evaluate a tensor Chebyshev expansion at scattered points.

    Parameters
    ----------
    interp : SpectralInterpolant
    points : array-like, shape (P, 2)

    Returns
    -------
    numpy.ndarray, shape (P,)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != 2:
        raise ShapeError(f"points must have shape (P, 2), got {points.shape}")
    _check_inside(points)
    vx = chebyshev_vandermonde(points[:, 0], interp.nx)
    vy = chebyshev_vandermonde(points[:, 1], interp.ny)
    return np.einsum("pk,kl,pl->p", vx, interp.coeffs, vy)


def interpolate_grid(interp, xs, ys):
    """Evaluate on the tensor grid ``xs x ys``; returns shape ``(len(xs), len(ys))``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    _check_inside(np.concatenate([xs.ravel(), ys.ravel()]))
    vx = chebyshev_vandermonde(xs, interp.nx)
    vy = chebyshev_vandermonde(ys, interp.ny)
    return vx @ interp.coeffs @ vy.T
