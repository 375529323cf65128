"""
Exact surface descriptions.

A surface owns its coarse polyhedral macro mesh (vertices on the surface and
simplicial macro elements) and a lift ``P`` from the flat macro facets onto
the surface.  The chart of macro element ``M`` is ``chi_M = P o Xbar_M`` where
``Xbar_M`` is the affine map from the reference simplex onto the flat facet.

Built-in surfaces also carry an oracle for the signed distance function
``d`` with its gradient (the unit normal) and Hessian (the Weingarten map).
The oracle is only used for diagnostics and error measurement; nothing in the
estimator or the adaptive loop depends on it.

Sign convention: ``d < 0`` inside closed surfaces, ``grad d`` points outward
(upward for graphs), so a sphere of radius ``R`` has principal curvatures
``+1/R``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SURFACE_IDS = ("sphere", "half_sphere", "graph", "flat_patch", "circle")


class GeometryError(ValueError):
    """Raised for invalid surface parameters or points outside a chart/oracle domain."""


@dataclass(frozen=True)
class CurvatureReport:
    kappas: np.ndarray  # (..., n) principal curvatures
    K: np.ndarray  # (...,) max |kappa_i|


class Surface:
    """Base class; subclasses define the macro mesh, the lift and (optionally) the oracle."""

    name = "surface"
    dim = 2
    closed = True
    has_distance = True
    curvature_bound = 0.0

    macro_vertices: np.ndarray
    macro_elements: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    def params(self) -> dict:
        return {}

    def to_json(self) -> str:
        return json.dumps({"surface": self.name, **self.params()}, sort_keys=True)

    # lift from flat facets onto the surface; ``macro`` is accepted for
    # surfaces whose lift differs per facet
    def lift(self, macro, xbar: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lift_jacobian(self, macro, xbar: np.ndarray) -> np.ndarray:
        """Ambient Jacobian ``(..., n+1, n+1)`` of the lift at flat points."""
        raise NotImplementedError

    def distance(self, x: np.ndarray):
        """Return ``(d, grad d, D^2 d)`` at points ``x`` of the tubular neighbourhood."""
        raise GeometryError(f"no distance oracle for surface {self.name!r}")

    def tube_width(self) -> float:
        return np.inf if self.curvature_bound == 0 else 1.0 / self.curvature_bound

    def _check_tube(self, d):
        if np.any(np.abs(d) >= self.tube_width()):
            raise GeometryError("point outside the tubular neighbourhood of the surface")


def chart_eval(surface: Surface, macro: int, xhat):
    """Evaluate the macro chart ``chi_M`` and its ``(n+1) x n`` Jacobian at reference points."""
    xhat = np.asarray(xhat, dtype=float)
    n = surface.dim
    if xhat.shape[-1] != n:
        raise GeometryError(f"reference points must have {n} coordinates")
    bary_sum = xhat.sum(axis=-1)
    if np.any(xhat < -1e-12) or np.any(bary_sum > 1 + 1e-12):
        raise GeometryError("reference point outside the reference simplex")
    verts = surface.macro_vertices[surface.macro_elements[macro]]
    B = (verts[1:] - verts[0]).T
    xbar = verts[0] + xhat @ B.T
    point = surface.lift(macro, xbar)
    jac = surface.lift_jacobian(macro, xbar) @ B
    return point, jac


def closest_point(surface: Surface, x):
    """Closest-point projection ``P_d(x) = x - d(x) grad d(x)``.

    Returns ``(point, d, nu)``.
    """
    x = np.asarray(x, dtype=float)
    d, nu, _ = surface.distance(x)
    return x - d[..., None] * nu, d, nu


def curvature(surface: Surface, x) -> CurvatureReport:
    """Principal curvatures at ``x``: tangential eigenvalues of ``D^2 d(x)``."""
    x = np.asarray(x, dtype=float)
    _, nu, W = surface.distance(x)
    T = tangent_basis(nu)
    Wt = np.einsum("...ia,...ij,...jb->...ab", T, W, T)
    kappas = np.linalg.eigvalsh(Wt)
    return CurvatureReport(kappas, np.abs(kappas).max(axis=-1))


def tangent_basis(nu: np.ndarray) -> np.ndarray:
    """Orthonormal basis ``(..., n+1, n)`` of the complement of unit vectors ``nu``."""
    nu = np.asarray(nu, dtype=float)
    m = nu.shape[-1]
    # Householder reflection mapping e_last to nu; its other columns span nu^perp
    e = np.zeros(m)
    e[-1] = 1.0
    s = np.where(nu[..., -1:] >= 0, 1.0, -1.0)
    v = nu * s - e
    vv = np.einsum("...i,...i->...", v, v)
    safe = np.where(vv < 1e-30, 1.0, vv)
    H = np.eye(m) - 2.0 * np.einsum("...i,...j->...ij", v, v) / safe[..., None, None]
    H = np.where((vv < 1e-30)[..., None, None], np.eye(m), H)
    return H[..., :, :-1]


# ---------------------------------------------------------------- built-ins


def _octahedron(R, upper_only=False):
    v = R * np.array(
        [[0, 0, 1], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 0, -1]], dtype=float
    )
    # newest vertex (the pole) first; the equatorial edge is the refinement edge
    upper = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]]
    lower = [[5, 2, 1], [5, 3, 2], [5, 4, 3], [5, 1, 4]]
    if upper_only:
        return v[:5], np.array(upper)
    return v, np.array(upper + lower)


def square_mesh(n_sub, x0=0.0, x1=1.0, y0=0.0, y1=1.0):
    """Structured ``n_sub x n_sub`` square mesh, each cell cut by its ``/`` diagonal.

    The right-angle vertex of every triangle is its newest vertex, so the
    diagonal is the (shared) refinement edge.
    """
    xs = np.linspace(x0, x1, n_sub + 1)
    ys = np.linspace(y0, y1, n_sub + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    idx = lambda i, j: j * (n_sub + 1) + i  # noqa: E731
    tris = []
    for j in range(n_sub):
        for i in range(n_sub):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append([b, c, a])
            tris.append([d, a, c])
    return verts, np.array(tris)


class Sphere(Surface):
    name = "sphere"

    def __init__(self, radius=1.0):
        radius = float(radius)
        if not radius > 0:
            raise GeometryError("sphere radius must be positive")
        self.radius = radius
        self.curvature_bound = 1.0 / radius
        self.macro_vertices, self.macro_elements = _octahedron(radius)

    def params(self):
        return {"radius": self.radius}

    def lift(self, macro, xbar):
        xbar = np.asarray(xbar, dtype=float)
        r = np.linalg.norm(xbar, axis=-1, keepdims=True)
        if np.any(r == 0):
            raise GeometryError("radial chart undefined at the centre")
        return self.radius * xbar / r

    def lift_jacobian(self, macro, xbar):
        xbar = np.asarray(xbar, dtype=float)
        r = np.linalg.norm(xbar, axis=-1)
        u = xbar / r[..., None]
        m = xbar.shape[-1]
        return (self.radius / r)[..., None, None] * (np.eye(m) - np.einsum("...i,...j->...ij", u, u))

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        d = r - self.radius
        # the radial projection is unique everywhere except at the centre
        if np.any(r <= 0):
            raise GeometryError("closest point undefined at the centre of the sphere")
        nu = x / r[..., None]
        m = x.shape[-1]
        W = (np.eye(m) - np.einsum("...i,...j->...ij", nu, nu)) / r[..., None, None]
        return d, nu, W


class HalfSphere(Sphere):
    """Upper half sphere ``z >= 0``; its boundary is the equator."""

    name = "half_sphere"
    closed = False

    def __init__(self, radius=1.0):
        super().__init__(radius)
        self.macro_vertices, self.macro_elements = _octahedron(self.radius, upper_only=True)


class Circle(Sphere):
    """Circle of radius ``R`` in the plane (one-dimensional test surface)."""

    name = "circle"
    dim = 1

    def __init__(self, radius=1.0):
        super().__init__(radius)
        R = self.radius
        self.macro_vertices = R * np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
        self.macro_elements = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])


class FlatPatch(Surface):
    """Planar patch ``[x0, x1] x [y0, y1] x {0}`` with the identity chart."""

    name = "flat_patch"
    closed = False

    def __init__(self, x0=0.0, x1=1.0, y0=0.0, y1=1.0, n_sub=1):
        if not (x1 > x0 and y1 > y0):
            raise GeometryError("flat patch needs x1 > x0 and y1 > y0")
        if int(n_sub) < 1:
            raise GeometryError("n_sub must be >= 1")
        self.bounds = (float(x0), float(x1), float(y0), float(y1))
        self.n_sub = int(n_sub)
        self.macro_vertices, self.macro_elements = square_mesh(self.n_sub, *self.bounds)

    def params(self):
        x0, x1, y0, y1 = self.bounds
        return {"x0": x0, "x1": x1, "y0": y0, "y1": y1, "n_sub": self.n_sub}

    def lift(self, macro, xbar):
        return np.array(xbar, dtype=float)

    def lift_jacobian(self, macro, xbar):
        xbar = np.asarray(xbar, dtype=float)
        return np.broadcast_to(np.eye(3), xbar.shape[:-1] + (3, 3)).copy()

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        nu = np.zeros_like(x)
        nu[..., 2] = 1.0
        return x[..., 2].copy(), nu, np.zeros(x.shape + (3,))


class GraphSurface(Surface):
    """Graph of ``z = (c - x^2 - y^2)_+^(2 + alpha)`` over the unit square.

    The surface is ``C^{2, alpha}``: second derivatives are continuous across
    the circle ``x^2 + y^2 = c`` and vanish outside it.
    """

    name = "graph"
    closed = False

    def __init__(self, alpha=0.4, c=0.75, n_sub=2, samples=128):
        alpha = float(alpha)
        if not 0 < alpha <= 1:
            raise GeometryError("alpha must lie in (0, 1]")
        if not float(c) > 0:
            raise GeometryError("c must be positive")
        if int(n_sub) < 1:
            raise GeometryError("n_sub must be >= 1")
        self.alpha = alpha
        self.c = float(c)
        self.n_sub = int(n_sub)
        self.power = 2.0 + alpha
        self.macro_vertices, self.macro_elements = square_mesh(self.n_sub)
        self.curvature_bound = 1.1 * self._sampled_curvature(int(samples))

    def params(self):
        return {"alpha": self.alpha, "c": self.c, "n_sub": self.n_sub}

    def height(self, s, t):
        """Return ``z, (z_s, z_t), (z_ss, z_st, z_tt)``."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        p = self.power
        a = self.c - s * s - t * t
        pos = a > 0
        ap = np.where(pos, a, 1.0)
        z = np.where(pos, ap**p, 0.0)
        d1 = np.where(pos, p * ap ** (p - 1), 0.0)
        d2 = np.where(pos, p * (p - 1) * ap ** (p - 2), 0.0)
        zs, zt = -2 * s * d1, -2 * t * d1
        zss = -2 * d1 + 4 * s * s * d2
        zst = 4 * s * t * d2
        ztt = -2 * d1 + 4 * t * t * d2
        return z, (zs, zt), (zss, zst, ztt)

    def chart(self, s, t):
        """Graph chart ``(s, t) -> (s, t, z)`` with tangent vectors and second derivatives."""
        z, (zs, zt), (zss, zst, ztt) = self.height(s, t)
        pt = np.stack([s, t, z], axis=-1)
        zero, one = np.zeros_like(z), np.ones_like(z)
        Xs = np.stack([one, zero, zs], axis=-1)
        Xt = np.stack([zero, one, zt], axis=-1)
        Xss = np.stack([zero, zero, zss], axis=-1)
        Xst = np.stack([zero, zero, zst], axis=-1)
        Xtt = np.stack([zero, zero, ztt], axis=-1)
        return pt, Xs, Xt, Xss, Xst, Xtt

    def lift(self, macro, xbar):
        xbar = np.asarray(xbar, dtype=float)
        z, _, _ = self.height(xbar[..., 0], xbar[..., 1])
        return np.stack([xbar[..., 0], xbar[..., 1], z], axis=-1)

    def lift_jacobian(self, macro, xbar):
        xbar = np.asarray(xbar, dtype=float)
        _, (zs, zt), _ = self.height(xbar[..., 0], xbar[..., 1])
        J = np.zeros(xbar.shape[:-1] + (3, 3))
        J[..., 0, 0] = 1.0
        J[..., 1, 1] = 1.0
        J[..., 2, 0] = zs
        J[..., 2, 1] = zt
        return J

    def shape_operator(self, s, t):
        """Unit normal and ambient shape operator ``S = D nu`` at graph points."""
        _, Xs, Xt, Xss, Xst, Xtt = self.chart(s, t)
        N = np.cross(Xs, Xt)
        w = np.linalg.norm(N, axis=-1)
        nu = N / w[..., None]
        G = np.stack([Xs, Xt], axis=-1)
        g = np.einsum("...ia,...ib->...ab", G, G)
        # second fundamental form with respect to the upward normal
        II = np.empty_like(g)
        II[..., 0, 0] = np.einsum("...i,...i->...", Xss, nu)
        II[..., 0, 1] = II[..., 1, 0] = np.einsum("...i,...i->...", Xst, nu)
        II[..., 1, 1] = np.einsum("...i,...i->...", Xtt, nu)
        # D nu G = -G g^{-1} II  (Weingarten equations)
        ginv = np.linalg.inv(g)
        S = -np.einsum("...ia,...ab,...bc,...cd,...jd->...ij", G, ginv, II, ginv, G)
        return nu, 0.5 * (S + np.swapaxes(S, -1, -2))

    def _sampled_curvature(self, samples):
        s, t = np.meshgrid(np.linspace(0, 1, samples), np.linspace(0, 1, samples))
        _, S = self.shape_operator(s.ravel(), t.ravel())
        return float(np.abs(np.linalg.eigvalsh(S)).max())

    def project_parameters(self, x, tol=1e-12, maxiter=50):
        """Damped Newton for the foot point parameters ``(s, t)`` of ``x``."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        st = flat[:, :2].copy()

        def objective(p):
            q = self.lift(None, np.column_stack([p, np.zeros(len(p))]))
            return 0.5 * np.sum((flat_act - q) ** 2, axis=-1)

        active = np.ones(len(flat), dtype=bool)
        for _ in range(maxiter):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            flat_act = flat[idx]
            p = st[idx]
            pt, Xs, Xt, Xss, Xst, Xtt = self.chart(p[:, 0], p[:, 1])
            r = flat_act - pt
            grad = -np.column_stack([np.sum(r * Xs, -1), np.sum(r * Xt, -1)])
            H = np.empty((len(idx), 2, 2))
            H[:, 0, 0] = np.sum(Xs * Xs, -1) - np.sum(r * Xss, -1)
            H[:, 0, 1] = H[:, 1, 0] = np.sum(Xs * Xt, -1) - np.sum(r * Xst, -1)
            H[:, 1, 1] = np.sum(Xt * Xt, -1) - np.sum(r * Xtt, -1)
            step = -np.linalg.solve(H, grad[..., None])[..., 0]
            f0 = objective(p)
            lam = np.ones(len(idx))
            for _ in range(30):
                f1 = objective(p + lam[:, None] * step)
                bad = f1 > f0 + 1e-16 * (1 + f0)
                if not bad.any():
                    break
                lam = np.where(bad, 0.5 * lam, lam)
            st[idx] = p + lam[:, None] * step
            done = np.linalg.norm(lam[:, None] * step, axis=-1) <= tol * (1 + np.linalg.norm(p, axis=-1))
            done |= np.linalg.norm(grad, axis=-1) <= 1e-15
            active[idx[done]] = False
        if active.any():
            raise GeometryError("closest-point Newton iteration did not converge")
        return st.reshape(x.shape[:-1] + (2,))

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        st = self.project_parameters(x)
        s, t = st[..., 0], st[..., 1]
        foot = self.lift(None, np.stack([s, t, np.zeros_like(s)], axis=-1))
        nu, S = self.shape_operator(s, t)
        d = np.einsum("...i,...i->...", x - foot, nu)
        self._check_tube(d)
        # W(x) = S (I + d S)^{-1} keeps the eigenvectors and maps kappa -> kappa / (1 + d kappa)
        I = np.eye(3)
        W = np.einsum("...ij,...jk->...ik", S, np.linalg.inv(I + d[..., None, None] * S))
        return d, nu, 0.5 * (W + np.swapaxes(W, -1, -2))


class PolyhedralSurface(Surface):
    """User macro mesh with identity charts per facet (no distance oracle)."""

    name = "polyhedral"
    has_distance = False

    def __init__(self, vertices, elements, closed=True):
        self.macro_vertices = np.asarray(vertices, dtype=float)
        self.macro_elements = np.asarray(elements, dtype=int)
        self.dim = self.macro_elements.shape[1] - 1
        self.closed = closed

    def lift(self, macro, xbar):
        return np.array(xbar, dtype=float)

    def lift_jacobian(self, macro, xbar):
        xbar = np.asarray(xbar, dtype=float)
        m = xbar.shape[-1]
        return np.broadcast_to(np.eye(m), xbar.shape[:-1] + (m, m)).copy()


_REGISTRY = {
    "sphere": Sphere,
    "half_sphere": HalfSphere,
    "graph": GraphSurface,
    "flat_patch": FlatPatch,
    "circle": Circle,
}


def make_surface(surface_id: str, params: dict | None = None) -> Surface:
    """Build a built-in surface from its id and a parameter mapping."""
    try:
        cls = _REGISTRY[surface_id]
    except KeyError:
        raise GeometryError(f"unknown surface id {surface_id!r}; expected one of {SURFACE_IDS}") from None
    try:
        return cls(**(params or {}))
    except TypeError as exc:
        raise GeometryError(f"bad parameters for {surface_id!r}: {exc}") from None


def surface_from_json(text: str) -> Surface:
    """Parse ``{"surface": id, ...params}``."""
    obj = json.loads(text)
    obj = dict(obj)
    return make_surface(obj.pop("surface"), obj)
