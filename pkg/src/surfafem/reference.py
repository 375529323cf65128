"""
Reference simplex machinery: quadrature rules, equispaced Lagrange bases and
L2 projections onto polynomial spaces.

The reference simplex of dimension ``n`` is ``{x >= 0, sum(x) <= 1}``.  Vertex
``0`` sits at the origin and vertex ``i`` at the unit vector ``e_i``, so the
barycentric coordinates of a point ``x`` are ``(1 - sum(x), x_1, ..., x_n)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special


@dataclass(frozen=True)
class QuadratureRule:
    """Points ``(Q, dim)`` and weights ``(Q,)`` on the reference simplex."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)


def _gauss_legendre01(m):
    x, w = special.roots_legendre(m)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    """Collapsed-coordinate (Stroud conical product) rule exact for ``degree``.

    Supported dimensions are 0 (a point), 1 (segment) and 2 (triangle).
    """
    degree = max(int(degree), 0)
    m = max(1, -(-(degree + 1) // 2))
    if dim == 0:
        pts, wts = np.zeros((1, 0)), np.ones(1)
    elif dim == 1:
        x, w = _gauss_legendre01(m)
        pts, wts = x[:, None], w
    elif dim == 2:
        # x1 = u, x2 = (1 - u) v with the (1 - u) Jacobian folded into Gauss-Jacobi
        xj, wj = special.roots_jacobi(m, 1.0, 0.0)
        u, wu = 0.5 * (xj + 1.0), wj / 4.0
        v, wv = _gauss_legendre01(m)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        pts = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
        wts = np.outer(wu, wv).ravel()
    else:
        raise ValueError(f"unsupported simplex dimension {dim}")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


def barycentric(points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates ``(..., dim+1)`` of reference points ``(..., dim)``."""
    points = np.asarray(points, dtype=float)
    return np.concatenate([1.0 - points.sum(axis=-1, keepdims=True), points], axis=-1)


@lru_cache(maxsize=None)
def multi_indices(dim: int, degree: int) -> np.ndarray:
    """Barycentric multi-indices of the degree-``degree`` Lagrange nodes.

    Vertex nodes come first (in vertex order), then the rest in lexicographic
    order.  Shape ``(n_nodes, dim+1)``.
    """
    idx = [a for a in itertools.product(range(degree + 1), repeat=dim + 1) if sum(a) == degree]
    vertices = [tuple(degree if j == i else 0 for j in range(dim + 1)) for i in range(dim + 1)]
    rest = sorted(a for a in idx if a not in vertices)
    out = np.array(vertices + rest, dtype=int)
    out.setflags(write=False)
    return out


def lattice(dim: int, order: int) -> np.ndarray:
    """Reference points of the barycentric lattice of the given order (includes vertices)."""
    return multi_indices(dim, order)[:, 1:] / float(order)


def _monomial_exponents(dim, degree):
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]


class LagrangeBasis:
    """Equispaced degree-``degree`` Lagrange basis on the reference ``dim``-simplex."""

    def __init__(self, dim: int, degree: int):
        if degree < 1:
            raise ValueError("Lagrange degree must be >= 1")
        self.dim = dim
        self.degree = degree
        self.alphas = multi_indices(dim, degree)
        self.nodes = self.alphas[:, 1:] / float(degree)
        self._exps = np.array(_monomial_exponents(dim, degree), dtype=int)
        vander = self._monomials(self.nodes)
        # columns of coef give each basis function in the monomial basis
        self._coef = np.linalg.inv(vander)

    def __len__(self) -> int:
        return len(self.alphas)

    def _monomials(self, x, deriv=()):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones((x.shape[0], len(self._exps)))
        for j, e in enumerate(self._exps):
            e = e.copy()
            c = 1.0
            for d in deriv:
                c *= e[d]
                e[d] = max(e[d] - 1, 0)
            if c == 0.0:
                out[:, j] = 0.0
                continue
            col = np.full(x.shape[0], c)
            for d in range(self.dim):
                if e[d]:
                    col = col * x[:, d] ** e[d]
            out[:, j] = col
        return out

    def values(self, x) -> np.ndarray:
        """Basis values, shape ``(Q, n_basis)``."""
        return self._monomials(x) @ self._coef

    def gradients(self, x) -> np.ndarray:
        """Reference gradients, shape ``(Q, n_basis, dim)``."""
        return np.stack([self._monomials(x, (d,)) @ self._coef for d in range(self.dim)], axis=-1)

    def hessians(self, x) -> np.ndarray:
        """Reference Hessians, shape ``(Q, n_basis, dim, dim)``."""
        n = self.dim
        q = np.atleast_2d(x).shape[0]
        out = np.empty((q, len(self), n, n))
        for a in range(n):
            for b in range(a, n):
                h = self._monomials(x, (a, b)) @ self._coef
                out[:, :, a, b] = h
                out[:, :, b, a] = h
        return out


@lru_cache(maxsize=None)
def lagrange_basis(dim: int, degree: int) -> LagrangeBasis:
    return LagrangeBasis(dim, degree)


def orthonormal_projector(rule: QuadratureRule, degree: int) -> np.ndarray:
    """Matrix ``Q`` with orthonormal columns spanning ``sqrt(w) * P_degree``.

    For samples ``v`` at the rule points, ``||(id - Pi) v||^2`` is
    ``|s - Q Q^T s|^2`` with ``s = sqrt(w) v``.
    """
    exps = _monomial_exponents(rule.dim, max(degree, 0))
    x = rule.points
    vander = np.ones((len(rule), len(exps)))
    for j, e in enumerate(exps):
        for d, p in enumerate(e):
            vander[:, j] *= x[:, d] ** p
    q, _ = np.linalg.qr(np.sqrt(rule.weights)[:, None] * vander)
    return q
