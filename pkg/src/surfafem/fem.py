"""
Degree-``r`` Lagrange finite elements on the interpolated surface: space,
assembly, preconditioned CG and error measurement through the distance lift.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .discrete_surface import DiscreteSurface
from .geometry import GeometryError, Surface
from .mesh import SurfaceMesh, _edge_keys, lagrange_nodes
from .parallel import map_chunks
from .reference import QuadratureRule, lagrange_basis, simplex_rule

MODES = ("mean_zero", "dirichlet")


class SolverError(RuntimeError):
    """CG did not reach the requested tolerance."""


@dataclass
class ProblemData:
    """Right-hand side on the exact surface and optional exact solution.

    ``f``, ``u`` and ``dirichlet`` map points ``(..., m)`` on the surface to
    values ``(...)``; ``grad_u`` returns the ambient tangential gradient
    ``(..., m)``.  Points within ``exclude_radius`` of a ``singularities``
    entry are dropped from error integrals.
    """

    f: Callable
    u: Callable | None = None
    grad_u: Callable | None = None
    dirichlet: Callable | None = None
    singularities: tuple = ()
    exclude_radius: float = 1e-12
    name: str = "problem"

    def boundary_values(self, x):
        if self.dirichlet is not None:
            return self.dirichlet(x)
        if self.u is not None:
            return self.u(x)
        return np.zeros(np.shape(x)[:-1])

    def keep_mask(self, y):
        mask = np.ones(y.shape[:-1], dtype=bool)
        for s in self.singularities:
            mask &= np.linalg.norm(y - np.asarray(s), axis=-1) >= self.exclude_radius
        return mask


def node_positions(mesh: SurfaceMesh, surface: Surface, keys: np.ndarray, owner_macro: np.ndarray):
    """Points ``P(flat node)`` on the surface for Lagrange node keys."""
    deg = keys.shape[1]
    flat = mesh.flat[keys].sum(axis=1) / deg
    pts = np.empty_like(flat)
    for m in np.unique(owner_macro):
        sel = owner_macro == m
        pts[sel] = surface.lift(int(m), flat[sel])
    is_vertex = np.all(keys == keys[:, :1], axis=1)
    pts[is_vertex] = mesh.points[keys[is_vertex, 0]]
    return pts


@dataclass
class FemSpace:
    """Global DOF map of the degree-``r`` Lagrange space.

    ``ids`` numbers all nodes (including constrained ones); ``free`` flags the
    unknowns and ``N`` counts them.
    """

    mesh: SurfaceMesh
    ds: DiscreteSurface
    r: int
    mode: str
    ids: np.ndarray
    keys: np.ndarray
    free: np.ndarray
    node_points: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.keys)

    @property
    def N(self) -> int:
        return int(self.free.sum())

    @property
    def basis(self):
        return lagrange_basis(self.mesh.dim, self.r)


def _boundary_nodes(mesh: SurfaceMesh, keys: np.ndarray) -> np.ndarray:
    bv = mesh.boundary_vertices
    out = np.all(bv[keys], axis=1)
    if mesh.dim == 2 and out.any():
        bf = mesh.face_vertices[mesh.boundary_faces]
        bkeys = np.sort(_edge_keys(bf[:, 0], bf[:, 1]))
        lo, hi = keys.min(axis=1), keys.max(axis=1)
        distinct = np.array([len(set(k)) for k in keys[out]])
        idx = np.nonzero(out)[0]
        two = idx[distinct == 2]
        ek = _edge_keys(lo[two], hi[two])
        pos = np.minimum(np.searchsorted(bkeys, ek), max(len(bkeys) - 1, 0))
        out[two] = bkeys[pos] == ek if len(bkeys) else False
        out[idx[distinct > 2]] = False
    return out


def build_space(mesh: SurfaceMesh, ds: DiscreteSurface, r: int, mode: str = "mean_zero") -> FemSpace:
    """Lagrange space of degree ``r`` with ``mean_zero`` or ``dirichlet`` constraints."""
    if mode not in MODES:
        raise ValueError(f"unknown constraint mode {mode!r}")
    r = int(r)
    if r < 1:
        raise ValueError("FEM degree r must be >= 1")
    ids, keys = lagrange_nodes(mesh, r)
    owner = np.empty(len(keys), dtype=np.int64)
    owner[ids.ravel()] = np.repeat(mesh.macro, ids.shape[1])
    pts = node_positions(mesh, ds.surface, keys, owner)
    free = np.ones(len(keys), dtype=bool)
    if mode == "dirichlet":
        free &= ~_boundary_nodes(mesh, keys)
    return FemSpace(mesh, ds, r, mode, ids, keys, free, pts)


def default_rule(dim, r, k) -> QuadratureRule:
    return simplex_rule(dim, 2 * r + 2 * k)


@dataclass
class SparseSystem:
    """Full (unconstrained) matrices plus the reduced system for the unknowns."""

    space: FemSpace
    A_full: sp.csr_matrix
    b_full: np.ndarray
    mass_row: np.ndarray  # integrals of the basis functions over Gamma
    A: sp.csr_matrix
    b: np.ndarray
    g: np.ndarray  # prescribed nodal values (zero on free nodes)


def _local_matrices(ds, space, data, rule, chunk):
    basis = space.basis
    D = basis.gradients(rule.points)  # (Q, nb, n)
    phi = basis.values(rule.points)
    c = ds.element_cache(rule, chunk, exact=data is not None)
    w = rule.weights
    K = np.einsum("q,eq,qia,eqab,qjb->eij", w, c.q_Gamma, D, c.ginv_Gamma, D, optimize=True)
    M1 = np.einsum("q,eq,qi->ei", w, c.q_Gamma, phi)
    F = None
    if data is not None:
        F = np.einsum("q,eq,qi->ei", w, data.f(c.chi) * c.q, phi)
    return K, M1, F


def assemble(ds: DiscreteSurface, space: FemSpace, data: ProblemData | None, rule: QuadratureRule | None = None):
    """Stiffness ``sum q_Gamma D phi g^-1 D phi^T`` and load ``sum (f o chi) phi q``."""
    rule = rule or default_rule(ds.dim, space.r, ds.k)
    ids = space.ids
    parts = map_chunks(lambda ch: _local_matrices(ds, space, data, rule, ch), ds.n_elements)
    K = np.concatenate([p[0] for p in parts])
    M1 = np.concatenate([p[1] for p in parts])
    nn = space.n_nodes
    nb = ids.shape[1]
    rows = np.repeat(ids, nb, axis=1).ravel()
    cols = np.tile(ids, (1, nb)).ravel()
    A_full = sp.csr_matrix((K.ravel(), (rows, cols)), shape=(nn, nn))
    A_full = (0.5 * (A_full + A_full.T)).tocsr()
    mass = np.bincount(ids.ravel(), weights=M1.ravel(), minlength=nn)
    if data is not None:
        F = np.concatenate([p[2] for p in parts])
        b_full = np.bincount(ids.ravel(), weights=F.ravel(), minlength=nn)
    else:
        b_full = np.zeros(nn)
    g = np.zeros(nn)
    if space.mode == "dirichlet":
        fixed = ~space.free
        if data is not None and fixed.any():
            g[fixed] = data.boundary_values(space.node_points[fixed])
        A = A_full[space.free][:, space.free].tocsr()
        b = b_full[space.free] - A_full[space.free][:, fixed] @ g[fixed]
    else:
        A = A_full
        # consistent right-hand side: remove the multiple of the mass row that constants see
        b = b_full - (b_full.sum() / mass.sum()) * mass
    return SparseSystem(space, A_full, b_full, mass, A, b, g)


@dataclass
class FemSolution:
    space: FemSpace
    ds: DiscreteSurface
    U: np.ndarray  # all nodal values
    iterations: int
    residual: float
    system: SparseSystem | None = field(default=None, repr=False)


def pcg(A, b, tol=1e-10, maxiter=None, project=None):
    """Jacobi-preconditioned CG; ``project`` is applied to every iterate."""
    n = len(b)
    maxiter = 10 * max(n, 1) if maxiter is None else maxiter
    nb = np.linalg.norm(b)
    x = np.zeros(n)
    if nb == 0:
        return x, 0, 0.0
    diag = A.diagonal()
    inv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    r = b.copy()
    z = inv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError(f"matrix not positive definite on the search direction (iteration {it})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            x = project(x)
        res = np.linalg.norm(r) / nb
        if res <= tol:
            true_res = np.linalg.norm(b - A @ x) / nb
            if true_res <= tol:
                return x, it, true_res
            r = b - A @ x
        z = inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / nb
    raise SolverError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})")


def solve(system: SparseSystem, tol: float = 1e-10, maxiter: int | None = None) -> FemSolution:
    if not tol > 0:
        raise ValueError("solver tolerance must be positive")
    space = system.space
    if space.mode == "mean_zero":
        m = system.mass_row
        msum = m.sum()

        def project(x):
            return x - (m @ x / msum)

        x, it, res = pcg(system.A, system.b, tol, maxiter, project)
        x = project(x)
        U = x
    else:
        U = system.g.copy()
        if space.N:
            x, it, res = pcg(system.A, system.b, tol, maxiter)
            U[space.free] = x
        else:
            it, res = 0, 0.0
    return FemSolution(space, space.ds, U, it, res, system)


def solve_problem(ds: DiscreteSurface, r: int, mode: str, data: ProblemData, tol: float = 1e-10) -> FemSolution:
    space = build_space(ds.mesh, ds, r, mode)
    return solve(assemble(ds, space, data), tol)


def interpolate(space: FemSpace, fn: Callable) -> np.ndarray:
    """Nodal interpolant of a function given on the exact surface."""
    return np.asarray(fn(space.node_points), dtype=float)


def _error_chunk(sol, data, rule, chunk):
    ds = sol.ds
    c = ds.element_cache(rule, chunk, oracle=True)
    D = sol.space.basis.gradients(rule.points)
    Uh = sol.U[sol.space.ids[chunk]]  # (E, nb)
    gradU = np.einsum("ej,qja->eqa", Uh, D)
    m = c.X.shape[-1]
    P = np.eye(m) - c.nu[..., :, None] * c.nu[..., None, :] - c.d[..., None, None] * c.W
    Gd = np.einsum("eqij,eqjn->eqin", P, c.G_Gamma)
    gd = np.einsum("eqia,eqib->eqab", Gd, Gd)
    lifted = np.einsum("eqia,eqab,eqb->eqi", Gd, np.linalg.inv(gd), gradU)
    y = c.X - c.d[..., None] * c.nu
    keep = data.keep_mask(y)
    diff = np.zeros_like(lifted)
    diff[keep] = data.grad_u(y[keep]) - lifted[keep]
    return float(np.sum(rule.weights * c.q_d * np.sum(diff**2, axis=-1)))


def lifted_h1_error(sol: FemSolution, data: ProblemData, surface: Surface | None = None, rule=None) -> float:
    """``|| grad_gamma (u - U o P_d^-1) ||_{L2(gamma)}`` by quadrature on ``Gamma``."""
    surface = surface or sol.ds.surface
    if data.grad_u is None:
        raise ValueError("exact solution gradient required for the lifted error")
    if not surface.has_distance:
        raise GeometryError("lifted error requires a distance oracle")
    rule = rule or simplex_rule(sol.ds.dim, 2 * sol.space.r + 2 * sol.ds.k + 2)
    parts = map_chunks(lambda ch: _error_chunk(sol, data, rule, ch), sol.ds.n_elements)
    return float(np.sqrt(sum(parts)))


def write_matrix_market(path, system: SparseSystem):
    """Dump the reduced stiffness matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), system.A, comment="surfafem stiffness", symmetry="symmetric")
