"""
Interpolated surface ``Gamma``: per element ``X_T = I_k chi_T`` in the
degree-``k`` Lagrange basis, plus cached geometric quantities at quadrature
points for both ``Gamma`` and the exact surface.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, Surface
from .mesh import SurfaceMesh, lagrange_nodes
from .reference import QuadratureRule, lagrange_basis, simplex_rule


@dataclass
class ShapeRegularity:
    """Admissible singular values of ``DX_T`` relative to the element diameter."""

    lower: float = 0.05
    upper: float = 20.0


@dataclass
class ElementGeometryCache:
    """Geometry of a batch of elements at the points of one reference rule.

    Arrays are indexed ``(element, quad point, ...)``.  Exact-surface and
    oracle fields are ``None`` when not requested or unavailable.
    """

    elements: np.ndarray
    rule: QuadratureRule
    X: np.ndarray  # (E, Q, m)
    G_Gamma: np.ndarray  # (E, Q, m, n)
    g_Gamma: np.ndarray
    ginv_Gamma: np.ndarray
    q_Gamma: np.ndarray  # (E, Q)
    nu_Gamma: np.ndarray  # (E, Q, m)
    H_Gamma: np.ndarray | None = None  # (E, Q, m, n, n)
    chi: np.ndarray | None = None
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    q: np.ndarray | None = None
    d: np.ndarray | None = None
    nu: np.ndarray | None = None
    W: np.ndarray | None = None
    q_d: np.ndarray | None = None

    @property
    def has_oracle(self) -> bool:
        return self.q_d is not None


@dataclass
class FaceGeometryCache:
    """Geometry on one side of a batch of faces.

    ``xhat`` are the element reference coordinates of the face quadrature
    points, ordered consistently from both sides (by the sorted global face
    vertices).
    """

    faces: np.ndarray
    elements: np.ndarray
    local: np.ndarray
    rule: QuadratureRule
    xhat: np.ndarray  # (F, Q, n)
    conormal: np.ndarray  # (F, Q, m)
    r_Gamma: np.ndarray  # (F, Q)
    G_Gamma: np.ndarray
    ginv_Gamma: np.ndarray
    q_Gamma: np.ndarray
    layout: np.ndarray  # (F,) code of the local vertex order
    layout_points: dict  # layout code -> (Q, n) reference points

    def eval_grouped(self, fn, out_shape):
        """Evaluate ``fn(points, mask)`` per layout and scatter into ``(F,) + out_shape``."""
        out = np.empty((len(self.faces),) + tuple(out_shape))
        for lay, pts in self.layout_points.items():
            sel = self.layout == lay
            out[sel] = fn(pts, sel)
        return out


def unit_normal(G: np.ndarray) -> np.ndarray:
    """Unit normal of the tangent frame ``G`` of shape ``(..., n+1, n)``."""
    if G.shape[-1] == 2:
        N = np.cross(G[..., :, 0], G[..., :, 1])
    elif G.shape[-1] == 1:
        t = G[..., :, 0]
        N = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    else:
        raise GeometryError("only n = 1, 2 supported")
    return N / np.linalg.norm(N, axis=-1, keepdims=True)


def _gram(F):
    """``F^T F`` for stacked ``(..., m, n)`` matrices; explicit sums beat batched matmul for tiny n."""
    n = F.shape[-1]
    if n > 2:
        return np.swapaxes(F, -1, -2) @ F
    g = np.empty(F.shape[:-2] + (n, n))
    for a in range(n):
        for b in range(a, n):
            g[..., a, b] = g[..., b, a] = np.sum(F[..., a] * F[..., b], axis=-1)
    return g


def _forms(G):
    g = _gram(G)
    n = g.shape[-1]
    if n == 1:
        det = g[..., 0, 0]
    elif n == 2:
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    else:
        det = np.linalg.det(g)
    if np.any(~(det > 0)):
        raise GeometryError("singular first fundamental form (degenerate geometry)")
    if n == 1:
        ginv = 1.0 / g
    elif n == 2:
        # closed-form 2x2 inverse, much faster than batched LAPACK calls
        ginv = np.empty_like(g)
        ginv[..., 0, 0] = g[..., 1, 1] / det
        ginv[..., 1, 1] = g[..., 0, 0] / det
        ginv[..., 0, 1] = -g[..., 0, 1] / det
        ginv[..., 1, 0] = -g[..., 1, 0] / det
    else:
        ginv = np.linalg.inv(g)
    return g, ginv, np.sqrt(det)


def singular_range(F):
    """Smallest and largest singular values of stacked ``(..., m, n)`` matrices, ``n <= 2``."""
    g = _gram(F)
    if F.shape[-1] == 1:
        s = np.sqrt(g[..., 0, 0])
        return s, s
    if F.shape[-1] != 2:
        sv = np.linalg.svd(F, compute_uv=False)
        return sv[..., -1], sv[..., 0]
    mid = 0.5 * (g[..., 0, 0] + g[..., 1, 1])
    rad = np.hypot(0.5 * (g[..., 0, 0] - g[..., 1, 1]), g[..., 0, 1])
    return np.sqrt(np.maximum(mid - rad, 0.0)), np.sqrt(mid + rad)


class DiscreteSurface:
    """Degree-``k`` Lagrange interpolant of the charts on every mesh element."""

    def __init__(self, mesh: SurfaceMesh, surface: Surface, k: int, coeffs: np.ndarray):
        self.mesh = mesh
        self.surface = surface
        self.k = int(k)
        self.basis = lagrange_basis(mesh.dim, self.k)
        self.coeffs = coeffs  # (E, nb, m)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    # ------------------------------------------------------------ maps

    def flat_points(self, xhat, elements=None) -> np.ndarray:
        """Points ``Xbar_T(xhat)`` on the macro facets, shape ``(E, Q, m)``."""
        els = self.mesh.elements if elements is None else self.mesh.elements[elements]
        v = self.mesh.flat[els]
        xhat = np.atleast_2d(xhat)
        return v[:, None, 0] + xhat @ (v[:, 1:] - v[:, :1])

    def chart(self, xhat, elements=None, jacobian=True):
        """Exact chart ``chi_T = P o Xbar_T`` and its Jacobian at reference points."""
        elements = np.arange(self.n_elements) if elements is None else np.asarray(elements)
        flat = self.flat_points(xhat, elements)
        macro = self.mesh.macro[elements]
        pts = np.empty_like(flat)
        jac = np.empty(flat.shape + (self.dim,)) if jacobian else None
        v = self.mesh.flat[self.mesh.elements[elements]]
        B = np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)  # (E, m, n)
        for m in np.unique(macro):
            sel = macro == m
            pts[sel] = self.surface.lift(int(m), flat[sel])
            if jacobian:
                DP = self.surface.lift_jacobian(int(m), flat[sel])
                jac[sel] = DP @ B[sel][:, None]
        return pts, jac

    def X(self, xhat, elements=None):
        c = self.coeffs if elements is None else self.coeffs[elements]
        return self.basis.values(xhat) @ c

    def DX(self, xhat, elements=None):
        c = self.coeffs if elements is None else self.coeffs[elements]
        return np.tensordot(c, self.basis.gradients(xhat), axes=([1], [1])).transpose(0, 2, 1, 3)

    def D2X(self, xhat, elements=None):
        c = self.coeffs if elements is None else self.coeffs[elements]
        return np.tensordot(c, self.basis.hessians(xhat), axes=([1], [1])).transpose(0, 2, 1, 3, 4)

    # ------------------------------------------------------------ caches

    def element_cache(
        self, rule: QuadratureRule, elements=None, second=False, exact=False, oracle=False
    ) -> ElementGeometryCache:
        elements = np.arange(self.n_elements) if elements is None else np.asarray(elements, dtype=np.int64)
        x = rule.points
        X = self.X(x, elements)
        G = self.DX(x, elements)
        g, ginv, qG = _forms(G)
        cache = ElementGeometryCache(elements, rule, X, G, g, ginv, qG, unit_normal(G))
        if second:
            cache.H_Gamma = self.D2X(x, elements)
        if exact:
            chi, Gx = self.chart(x, elements)
            cache.chi, cache.G = chi, Gx
            cache.g, _, cache.q = _forms(Gx)
        if oracle and self.surface.has_distance:
            d, nu, W = self.surface.distance(X)
            m = X.shape[-1]
            Gd = np.einsum("eqij,eqjn->eqin", np.eye(m) - nu[..., :, None] * nu[..., None, :] - d[..., None, None] * W, G)
            _, _, qd = _forms(Gd)
            cache.d, cache.nu, cache.W, cache.q_d = d, nu, W, qd
        return cache

    def face_side_cache(self, faces, side: int, rule: QuadratureRule) -> FaceGeometryCache:
        """Geometry of side ``side`` (0 or 1) of the given faces."""
        mesh = self.mesh
        faces = np.asarray(faces, dtype=np.int64)
        els = mesh.face_elems[faces, side]
        loc = mesh.face_local[faces, side]
        if np.any(els < 0):
            raise ValueError("requested side does not exist (boundary face)")
        n = self.dim
        ref = np.vstack([np.zeros(n), np.eye(n)])  # reference vertices
        fv = mesh.face_vertices[faces]  # sorted global ids
        elv = mesh.elements[els]
        # local index of each sorted face vertex inside the element
        lidx = np.argmax(elv[:, None, :] == fv[:, :, None], axis=-1)  # (F, n)
        t = rule.points  # (Q, n-1)
        bary = np.concatenate([1.0 - t.sum(axis=1, keepdims=True), t], axis=1)  # (Q, n)
        xhat = np.einsum("qj,fjd->fqd", bary, ref[lidx])
        # evaluate basis at per-face points: group by the (small) set of distinct local layouts
        F, Q = len(faces), len(rule)
        m = self.coeffs.shape[-1]
        G = np.empty((F, Q, m, n))
        layout = lidx @ (np.array([(n + 1) ** j for j in range(n)]))
        layout_points = {}
        for lay in np.unique(layout):
            sel = layout == lay
            pts = xhat[np.nonzero(sel)[0][0]]
            layout_points[int(lay)] = pts
            G[sel] = self.DX(pts, els[sel])
        g, ginv, qG = _forms(G)
        nref = _reference_normals(n)[loc]  # (F, n)
        a = np.einsum("fqab,fb->fqa", ginv, nref)
        cn = np.einsum("fqma,fqa->fqm", G, a)
        cn /= np.linalg.norm(cn, axis=-1, keepdims=True)
        if n == 1:
            r = np.ones((F, Q))
        else:
            tau = ref[lidx[:, 1]] - ref[lidx[:, 0]]  # (F, n)
            r = np.linalg.norm(np.einsum("fqma,fa->fqm", G, tau), axis=-1)
        return FaceGeometryCache(faces, els, loc, rule, xhat, cn, r, G, ginv, qG, layout, layout_points)

    def total_area(self, rule: QuadratureRule | None = None) -> float:
        rule = rule or simplex_rule(self.dim, 2 * self.k + 2)
        c = self.element_cache(rule)
        return float(np.sum(c.q_Gamma * rule.weights))


def _reference_normals(n):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    return np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]) / np.array([[np.sqrt(2.0)], [1.0], [1.0]])


def interpolate_geometry(
    mesh: SurfaceMesh, surface: Surface | None = None, k: int = 1, shape: ShapeRegularity | None = None
) -> DiscreteSurface:
    """Build ``X_T = I_k chi_T`` for every element.

    Coefficients of shared nodes are computed once per global node, so
    neighbouring elements agree bitwise on their common faces.  Vertex
    coefficients are the mesh vertex positions.
    """
    surface = surface or mesh.surface
    if surface is not mesh.surface and surface.name != mesh.surface.name:
        raise GeometryError("mesh and surface do not share macro topology")
    k = int(k)
    if k < 1:
        raise ValueError("geometry degree k must be >= 1")
    ids, keys = lagrange_nodes(mesh, k)
    flat = mesh.flat[keys].sum(axis=1) / k
    pts = np.empty_like(flat)
    # macro owner of each node; any element holding it is fine (charts agree on shared faces)
    owner = np.empty(len(keys), dtype=np.int64)
    owner[ids.ravel()] = np.repeat(mesh.macro, ids.shape[1])
    for m in np.unique(owner):
        sel = owner == m
        pts[sel] = surface.lift(int(m), flat[sel])
    is_vertex = np.all(keys == keys[:, :1], axis=1)
    pts[is_vertex] = mesh.points[keys[is_vertex, 0]]
    ds = DiscreteSurface(mesh, surface, k, pts[ids])
    check_shape_regularity(ds, shape or ShapeRegularity())
    return ds


def check_shape_regularity(ds: DiscreteSurface, shape: ShapeRegularity, rule: QuadratureRule | None = None):
    rule = rule or simplex_rule(ds.dim, 2 * ds.k)
    x = np.vstack([rule.points, np.vstack([np.zeros(ds.dim), np.eye(ds.dim)])])
    diam = ds.mesh.diameters()
    for start in range(0, ds.n_elements, 4096):
        els = np.arange(start, min(start + 4096, ds.n_elements))
        lo, hi = singular_range(ds.DX(x, els))  # (E, Q)
        d = diam[els, None]
        bad = np.nonzero(((lo / d).min(axis=1) < shape.lower) | ((hi / d).max(axis=1) > shape.upper))[0]
        if bad.size:
            t = int(els[bad[0]])
            raise GeometryError(f"shape regularity violated on element {t}")


def geometry_cache(ds: DiscreteSurface, T: int, quad: QuadratureRule) -> ElementGeometryCache:
    """Full geometry cache (Gamma, exact surface and oracle) of one element."""
    return ds.element_cache(quad, np.array([T]), second=True, exact=True, oracle=True)


def face_cache(ds: DiscreteSurface, face: int, quad: QuadratureRule) -> list:
    """Side caches of one face (one entry for boundary faces, two otherwise)."""
    sides = [0] if ds.mesh.face_elems[face, 1] < 0 else [0, 1]
    return [ds.face_side_cache(np.array([face]), s, quad) for s in sides]
