"""
A posteriori quantities: residual estimator, oscillation, geometric
indicators ``lambda_T``, ``beta_T``, ``mu_T = beta_T + lambda_T^2``, the
computable resolution checks and oracle-based consistency diagnostics.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .discrete_surface import DiscreteSurface, singular_range
from .fem import FemSolution, ProblemData
from .mesh import SurfaceMesh, element_size
from .parallel import map_chunks
from .reference import lattice, orthonormal_projector, simplex_rule

# ---------------------------------------------------------------- containers


@dataclass
class IndicatorField:
    """Per-element indicators with the global reductions."""

    h: np.ndarray
    eta: np.ndarray | None = None
    osc: np.ndarray | None = None
    lam: np.ndarray | None = None
    beta: np.ndarray | None = None

    @property
    def mu(self):
        if self.lam is None or self.beta is None:
            return None
        return self.beta + self.lam**2

    @staticmethod
    def _l2(v):
        return float(np.sqrt(np.sum(v**2))) if v is not None else float("nan")

    @staticmethod
    def _max(v):
        return float(np.max(v)) if v is not None and len(v) else float("nan")

    @property
    def eta_total(self):
        return self._l2(self.eta)

    @property
    def osc_total(self):
        return self._l2(self.osc)

    @property
    def lam_total(self):
        return self._max(self.lam)

    @property
    def beta_total(self):
        return self._max(self.beta)

    @property
    def mu_total(self):
        return self._max(self.mu)

    def cell_data(self) -> dict:
        out = {"h": self.h}
        for name in ("eta", "osc", "lam", "beta", "mu"):
            v = getattr(self, name)
            if v is not None:
                out["lambda" if name == "lam" else name] = v
        return out

    def to_csv(self, path):
        cols = ["eta", "osc", "lam", "beta", "mu"]
        nan = np.full(len(self.h), np.nan)
        vals = [getattr(self, c) if getattr(self, c) is not None else nan for c in cols]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "h", "eta", "osc", "lambda", "beta", "mu"])
            for t in range(len(self.h)):
                w.writerow([t, repr(float(self.h[t]))] + [repr(float(v[t])) for v in vals])


# ---------------------------------------------------------------- Laplace-Beltrami


def laplace_beltrami(gradU, hessU, G, H, ginv):
    """``Delta_Gamma U`` at reference points from reference derivatives.

    ``(1/q) d_i (q g^ia d_a U)`` expanded with ``d_i g_ab = H_ia . G_b + G_a . H_ib``
    and ``d_i g^-1 = -g^-1 (d_i g) g^-1``.
    """
    dg = np.moveaxis(H, -3, -1) @ G[..., None, :, :]  # (..., i, a, b)
    dg = dg + np.swapaxes(dg, -1, -2)
    gi = ginv[..., None, :, :]
    dlogq = 0.5 * np.sum(gi * dg, axis=(-2, -1))
    dginv = -(gi @ dg @ gi)
    ggrad = (ginv @ gradU[..., None])[..., 0]
    lap = np.sum(ginv * hessU, axis=(-2, -1)) + np.sum(dlogq * ggrad, axis=-1)
    lap = lap + np.sum(np.diagonal(dginv, axis1=-3, axis2=-2).sum(axis=-1) * gradU, axis=-1)
    return lap


def surface_gradient(gradU, G, ginv):
    """Ambient tangential gradient ``G g^-1 grad U`` from the reference gradient."""
    return np.einsum("...ma,...ab,...b->...m", G, ginv, gradU)


def _rules(sol):
    n, r, k = sol.ds.dim, sol.space.r, sol.ds.k
    return simplex_rule(n, 2 * r + 2 * k), simplex_rule(n - 1, 2 * r + k)


def _interior(sol, data, rule, proj_m, chunk):
    ds, space = sol.ds, sol.space
    c = ds.element_cache(rule, chunk, second=True, exact=True)
    basis = space.basis
    Uh = sol.U[space.ids[chunk]]
    gradU = np.tensordot(Uh, basis.gradients(rule.points), axes=([1], [1]))
    hessU = np.tensordot(Uh, basis.hessians(rule.points), axes=([1], [1]))
    lap = laplace_beltrami(gradU, hessU, c.G_Gamma, c.H_Gamma, c.ginv_Gamma)
    fq = data.f(c.chi) * c.q
    R = fq / c.q_Gamma + lap
    w = rule.weights
    res = np.sum(w * c.q_Gamma * R**2, axis=1)
    osc = None
    if proj_m is not None:
        s = np.sqrt(w) * (c.q_Gamma * R)  # f q + div(q_Gamma grad U g^-1)
        s = s - (s @ proj_m) @ proj_m.T
        osc = np.sum(s**2, axis=1)
    return res, osc


def face_jumps(sol: FemSolution, face_rule=None, faces=None):
    """Co-normal flux jumps ``J = grad U+ . n+ + grad U- . n-`` on interior faces.

    Returns ``(faces, J, r_Gamma, weights)`` with ``J`` and ``r_Gamma`` of shape ``(F, Q)``.
    """
    ds, space = sol.ds, sol.space
    mesh = ds.mesh
    face_rule = face_rule or _rules(sol)[1]
    if faces is None:
        faces = np.nonzero(~mesh.boundary_faces)[0]
    basis = space.basis
    J = np.zeros((len(faces), len(face_rule)))
    r = np.zeros_like(J)
    for part in range(0, len(faces), 4096):
        fs = faces[part : part + 4096]
        sl = slice(part, part + len(fs))
        for side in (0, 1):
            fc = ds.face_side_cache(fs, side, face_rule)
            Uh = sol.U[space.ids[fc.elements]]
            gradU = fc.eval_grouped(
                lambda pts, sel: np.einsum("ej,qja->eqa", Uh[sel], basis.gradients(pts)),
                (len(face_rule), ds.dim),
            )
            grad = surface_gradient(gradU, fc.G_Gamma, fc.ginv_Gamma)
            J[sl] += np.sum(grad * fc.conormal, axis=-1)
            if side == 0:
                r[sl] = fc.r_Gamma
    return faces, J, r, face_rule.weights


def _residual_and_osc(sol, data, m=None, mprime=None, want_osc=False):
    ds = sol.ds
    mesh = ds.mesh
    h = mesh.sizes()
    rule, frule = _rules(sol)
    proj_m = orthonormal_projector(rule, m) if want_osc else None
    parts = map_chunks(lambda ch: _interior(sol, data, rule, proj_m, ch), ds.n_elements)
    interior = np.concatenate([p[0] for p in parts])
    faces, J, r, w = face_jumps(sol, frule)
    jump_int = np.sum(w * J**2 * r, axis=1)
    fe = mesh.face_elems[faces]
    face_sum = np.bincount(fe[:, 0], weights=jump_int, minlength=ds.n_elements)
    face_sum += np.bincount(fe[:, 1], weights=jump_int, minlength=ds.n_elements)
    eta = np.sqrt(h**2 * interior + h * face_sum)
    osc = None
    if want_osc:
        osc_int = np.concatenate([p[1] for p in parts])
        if ds.dim == 1:
            face_osc = np.zeros(len(faces))  # point faces: constants are exact
        else:
            proj_f = orthonormal_projector(frule, mprime)
            s = np.sqrt(w) * (r * J)
            s = s - (s @ proj_f) @ proj_f.T
            face_osc = np.sum(s**2, axis=1)
        fo = np.bincount(fe[:, 0], weights=face_osc, minlength=ds.n_elements)
        fo += np.bincount(fe[:, 1], weights=face_osc, minlength=ds.n_elements)
        osc = np.sqrt(h**2 * osc_int + h * fo)
    return eta, osc


def default_osc_degrees(r: int):
    """Oscillation degrees ``(max(2r-2, 1), 2r-1)``."""
    return max(2 * r - 2, 1), 2 * r - 1


def residual_indicators(sol: FemSolution, ds: DiscreteSurface | None, data: ProblemData) -> np.ndarray:
    """``eta_T^2 = h^2 ||F_Gamma + Lap_Gamma U||^2_T + h ||J(U)||^2_dT``."""
    return _residual_and_osc(sol, data)[0]


def oscillation_indicators(sol: FemSolution, ds: DiscreteSurface | None, data: ProblemData, m=None, mprime=None):
    dm, dmp = default_osc_degrees(sol.space.r)
    m = dm if m is None else int(m)
    mprime = dmp if mprime is None else int(mprime)
    if m < 1 or mprime < 0:
        raise ValueError("oscillation degrees need m >= 1 and m' >= 0")
    return _residual_and_osc(sol, data, m, mprime, want_osc=True)[1]


def estimate(sol: FemSolution, data: ProblemData, m=None, mprime=None):
    """``(eta_T, osc_T)`` in one pass."""
    dm, dmp = default_osc_degrees(sol.space.r)
    m = dm if m is None else int(m)
    mprime = dmp if mprime is None else int(mprime)
    return _residual_and_osc(sol, data, m, mprime, want_osc=True)


# ---------------------------------------------------------------- geometry


def lattice_order(k: int) -> int:
    """Sampling order ``12 k``; lattice doubling then moves the maxima by under 1%."""
    return 12 * int(k)


def _geo_chunk(ds, pts, chunk):
    chunk = np.asarray(chunk)
    chi, Dchi = ds.chart(pts, chunk)
    X = ds.X(pts, chunk)
    DX = ds.DX(pts, chunk)
    beta = np.max(np.linalg.norm(chi - X, axis=-1), axis=1)
    B = ds.mesh.edge_matrices()[chunk]  # reference-to-flat-simplex map through the vertex points
    w, V = np.linalg.eigh(np.einsum("eia,eib->eab", B, B))
    S = np.einsum("eab,eb,ecb->eac", V, 1.0 / np.sqrt(w), V)  # (B^T B)^(-1/2)
    lam = np.max(singular_range((Dchi - DX) @ S[:, None])[1], axis=1)
    return lam, beta


def geometric_indicators(mesh: SurfaceMesh, surface, ds: DiscreteSurface, order: int | None = None, elements=None):
    """``(lambda_T, beta_T, mu_T)`` by maximization over a reference lattice.

    ``lambda_T`` is the spectral norm of ``D(chi_T - X_T)`` composed with the
    pseudo-inverse of the affine vertex map, ``beta_T`` the largest distance
    ``|chi_T - X_T|``.  ``elements`` restricts the evaluation to a subset.
    """
    order = order or lattice_order(ds.k)
    pts = lattice(ds.dim, order)
    els = np.arange(ds.n_elements) if elements is None else np.asarray(elements, dtype=np.int64)
    parts = map_chunks(lambda ch: _geo_chunk(ds, pts, els[ch]), len(els), 1024)
    lam = np.concatenate([p[0] for p in parts])
    beta = np.concatenate([p[1] for p in parts])
    return lam, beta, beta + lam**2


# ---------------------------------------------------------------- consistency


def _consistency_chunk(ds, pts, chunk):
    from .reference import QuadratureRule

    rule = QuadratureRule(pts, np.ones(len(pts)), 0)
    c = ds.element_cache(rule, chunk, oracle=True)
    m = c.X.shape[-1]
    I = np.eye(m)
    Ag = I - c.nu[..., :, None] * c.nu[..., None, :]
    AG = I - c.nu_Gamma[..., :, None] * c.nu_Gamma[..., None, :]
    Q = I - c.d[..., None, None] * c.W
    E = (c.q_Gamma / c.q_d)[..., None, None] * (Ag @ Q @ AG @ Q @ Ag) - Ag
    e_norm = np.max(np.linalg.norm(E, ord=2, axis=(-2, -1)), axis=1)
    nu_mis = np.max(np.linalg.norm(c.nu - c.nu_Gamma, axis=-1), axis=1)
    q_mis = np.max(np.abs(1.0 - c.q_Gamma / c.q_d), axis=1)
    return e_norm, nu_mis, q_mis


def consistency_field(ds: DiscreteSurface, order: int | None = None):
    """Per-element ``(||E||_inf, ||nu - nu_Gamma||_inf, ||1 - q_Gamma/q_d||_inf)`` on the lattice."""
    if not ds.surface.has_distance:
        raise ValueError("consistency diagnostics need a distance oracle")
    pts = lattice(ds.dim, order or lattice_order(ds.k))
    parts = map_chunks(lambda ch: _consistency_chunk(ds, pts, ch), ds.n_elements, 1024)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def consistency_diagnostics(ds: DiscreteSurface, T: int, order: int | None = None):
    """Consistency norms of one element."""
    if not ds.surface.has_distance:
        raise ValueError("consistency diagnostics need a distance oracle")
    pts = lattice(ds.dim, order or lattice_order(ds.k))
    e, n, q = _consistency_chunk(ds, pts, np.array([T]))
    return float(e[0]), float(n[0]), float(q[0])


# ---------------------------------------------------------------- assumption checks


@dataclass
class AssumptionReport:
    """Per-element margins (positive means satisfied) and global verdicts."""

    tube_margin: np.ndarray
    mismatch_margin: np.ndarray
    q_ratio: np.ndarray  # (E, 2) min/max of q / q_Gamma
    qd_ratio: np.ndarray  # (E, 2) min/max of q_d / q_Gamma (nan without oracle)
    nu_mismatch: np.ndarray
    L: np.ndarray
    c_hat: np.ndarray
    curvature_bound: float
    ratio_bounds: tuple = (0.5, 2.0)
    notes: list = field(default_factory=list)

    @property
    def tube_ok(self) -> bool:
        return bool(np.all(self.tube_margin >= 0))

    @property
    def mismatch_ok(self) -> bool:
        return bool(np.all(self.mismatch_margin >= 0))

    @property
    def q_ok(self) -> bool:
        lo, hi = self.ratio_bounds
        vals = [self.q_ratio]
        if np.all(np.isfinite(self.qd_ratio)):
            vals.append(self.qd_ratio)
        return all(bool(np.all((v[:, 0] >= lo) & (v[:, 1] <= hi))) for v in vals)

    @property
    def ok(self) -> bool:
        return self.tube_ok and self.mismatch_ok and self.q_ok

    def failures(self) -> list:
        out = []
        if not self.tube_ok:
            t = int(np.argmin(self.tube_margin))
            out.append(f"tube condition beta <= 1/(2K) fails (element {t}, margin {self.tube_margin[t]:.3e})")
        if not self.mismatch_ok:
            t = int(np.argmin(self.mismatch_margin))
            out.append(f"mismatch condition 3 beta_T <= h_T c_T / L fails (element {t})")
        if not self.q_ok:
            out.append("area element ratios outside [1/2, 2]")
        return out


def _cyclic_star(mesh, v, star):
    """Order the elements around vertex ``v``: returns ``(chain, closed)``.

    ``chain`` lists ``(element, a, b)`` with ``(v, a, b)`` positively oriented,
    consecutive entries sharing the spoke ``(v, b)``.
    """
    nxt = {}
    for e in star:
        el = list(mesh.elements[e])
        i = el.index(v)
        a, b = el[(i + 1) % 3], el[(i + 2) % 3]
        nxt[a] = (e, a, b)
    prev = {b: (e, a, b) for (e, a, b) in nxt.values()}
    return nxt, prev


def _angle(p, a, b):
    u, w = a - p, b - p
    c = u @ w / np.sqrt((u @ u) * (w @ w))
    return float(np.arccos(min(1.0, max(-1.0, c))))


def _seg_point_dist(p, a, b):
    """Distances from points ``p`` to segments ``[a, b]`` (broadcasting)."""
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, -1) / np.sum(ab * ab, -1), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def _cross2(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _triangle_segment_dist(tri, A, B):
    """Smallest distance between a triangle ``(3, 2)`` and segments ``A[i] B[i]``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    best = np.full(len(A), np.inf)
    for i in range(3):
        p, q = tri[i], tri[(i + 1) % 3]
        d1, d2 = _cross2(A, B, p), _cross2(A, B, q)
        d3, d4 = _cross2(p, q, A), _cross2(p, q, B)
        hit = (d1 * d2 < 0) & (d3 * d4 < 0)
        d = np.minimum(_seg_point_dist(p, A, B), np.minimum(_seg_point_dist(A, p, q), _seg_point_dist(B, p, q)))
        best = np.minimum(best, np.where(hit, 0.0, d))
    return best


def develop_patch(mesh: SurfaceMesh, t: int):
    """Unfold the vertex stars of element ``t`` into its reference plane.

    Angles at every vertex are measured on the macro facets; other elements'
    angles are rescaled so that closed stars sum to ``2 pi`` while ``t`` keeps
    its own shape.  Returns a list of developed triangles
    ``(star, element, vertex ids, reference coords (3, 2))`` and the list of
    patch-boundary segments in reference coordinates.
    """
    flat = mesh.flat
    el = list(mesh.elements[t])
    P = flat[el]
    e1 = P[1] - P[0]
    nrm = np.cross(P[1] - P[0], P[2] - P[0])
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(nrm / np.linalg.norm(nrm), e1)
    to2 = lambda x: np.array([(x - P[0]) @ e1, (x - P[0]) @ e2])  # noqa: E731
    pos2 = {v: to2(flat[v]) for v in el}
    A = np.column_stack([pos2[el[1]] - pos2[el[0]], pos2[el[2]] - pos2[el[0]]])
    Ainv = np.linalg.inv(A)
    to_ref = lambda y: Ainv @ (y - pos2[el[0]])  # noqa: E731
    ve = mesh.vertex_elements
    bverts = mesh.boundary_vertices
    tri_out = []
    segments = []
    Tset = set(el)
    for i, v in enumerate(el):
        star = [int(e) for e in ve[v].indices]
        nxt, prev = _cyclic_star(mesh, v, star)
        a0 = el[(i + 1) % 3]
        theta = {e: _angle(flat[v], flat[a], flat[b]) for (e, a, b) in nxt.values()}
        closed = not bverts[v]
        total = sum(theta.values())
        scale = 1.0
        if closed and len(star) > 1:
            scale = (2 * np.pi - theta[t]) / (total - theta[t])
        origin = pos2[v]
        base = pos2[a0] - origin
        phi0 = np.arctan2(base[1], base[0])

        def place(w, phi):
            r = np.linalg.norm(flat[w] - flat[v])
            return origin + r * np.array([np.cos(phi), np.sin(phi)])

        # forward (counter-clockwise) from the spoke (v, a0)
        phi = phi0
        chain = []
        cur = a0
        seen = set()
        while cur in nxt and nxt[cur][0] not in seen:
            e, a, b = nxt[cur]
            seen.add(e)
            ang = theta[e] if e == t else theta[e] * scale
            pa, pb = place(a, phi), place(b, phi + ang)
            if e == t:
                pa, pb = pos2[a], pos2[b]
            chain.append((e, (v, a, b), (origin, pa, pb)))
            phi += ang
            cur = b
            if cur == a0:
                break
        if not closed:
            phi = phi0
            cur = a0
            while cur in prev and prev[cur][0] not in seen:
                e, a, b = prev[cur]
                seen.add(e)
                ang = theta[e]
                pa, pb = place(a, phi - ang), place(b, phi)
                chain.append((e, (v, a, b), (origin, pa, pb)))
                phi -= ang
                cur = a
        for e, vids, pts in chain:
            ref = np.array([to_ref(p) for p in pts])
            tri_out.append((i, e, vids, ref))
            _, a, b = vids
            if e == t or a in Tset or b in Tset:
                continue
            if _is_boundary_edge(mesh, a, b):
                continue
            segments.append((ref[1], ref[2]))
    return tri_out, segments


def _is_boundary_edge(mesh, a, b):
    if not (mesh.boundary_vertices[a] and mesh.boundary_vertices[b]):
        return False
    bf = mesh.face_vertices[mesh.boundary_faces]
    lo, hi = min(a, b), max(a, b)
    return bool(np.any((bf[:, 0] == lo) & (bf[:, 1] == hi)))


_REF_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def patch_constants(mesh: SurfaceMesh, ds: DiscreteSurface, t: int, samples: int = 4, h: float | None = None):
    """Estimate ``(L, c_hat)`` for element ``t`` on its developed patch.

    ``c_hat`` is the reference distance from ``T^`` to the patch boundary
    (``inf`` when the patch has no interior boundary); ``L`` is the largest
    of ``ratio`` and ``1/ratio`` over sampled pairs, where
    ``ratio = |chi(x) - chi(y)| / (h_T |x - y|)``.
    """
    h = element_size(mesh, t) if h is None else h
    if mesh.dim == 1:
        return _patch_constants_curve(mesh, ds, t, h)
    tris, segs = develop_patch(mesh, t)
    if segs:
        c_hat = float(_triangle_segment_dist(_REF_TRI, np.array([a for a, _ in segs]), np.array([b for _, b in segs])).min())
    else:
        c_hat = np.inf
    lat = lattice(2, samples)
    ebary = np.column_stack([1 - lat.sum(1), lat])  # barycentric in each element's own order
    chi, _ = ds.chart(lat, np.array([e for _, e, _, _ in tris]), jacobian=False)
    pts_ref, pts_surf = {}, {}
    for j, (star, e, vids, ref) in enumerate(tris):
        el = list(mesh.elements[e])
        perm = [el.index(v) for v in vids]
        dev = ebary[:, perm] @ ref
        pts_ref.setdefault(star, []).append(dev)
        pts_surf.setdefault(star, []).append(chi[j])
    L = 1.0
    for star in pts_ref:
        R = np.vstack(pts_ref[star])
        S = np.vstack(pts_surf[star])
        dr = np.linalg.norm(R[:, None] - R[None], axis=-1)
        dd = np.linalg.norm(S[:, None] - S[None], axis=-1)
        mask = dr > 1e-9
        ratio = dd[mask] / (h * dr[mask])
        L = max(L, float(ratio.max()), float(1.0 / ratio.min()))
    return L, float(c_hat)


def _patch_constants_curve(mesh, ds, t, h):
    fe = mesh.face_elems[mesh.elem_faces[t]]
    lengths = mesh.measures()
    c_hat = np.inf
    for row in fe:
        other = row[row != t]
        if len(other) and other[0] >= 0:
            c_hat = min(c_hat, lengths[other[0]] / h)
    xs = np.linspace(0, 1, 9)[:, None]
    chi, _ = ds.chart(xs, np.array([t]), jacobian=False)
    dr = np.abs(xs - xs.T)
    dd = np.linalg.norm(chi[0][:, None] - chi[0][None], axis=-1)
    mask = dr > 0
    ratio = dd[mask] / (h * dr[mask])
    return float(max(ratio.max(), 1.0 / ratio.min())), float(c_hat)


def check_assumptions(mesh: SurfaceMesh, surface, ds: DiscreteSurface, indicators=None) -> AssumptionReport:
    """Computable sufficient conditions for the geometric resolution assumptions."""
    surface = surface or ds.surface
    lam, beta, _ = indicators if indicators is not None else geometric_indicators(mesh, surface, ds)
    K = float(surface.curvature_bound)
    tube = np.full(mesh.n_elements, np.inf) if K == 0 else 0.5 / K - beta
    h = mesh.sizes()
    L = np.empty(mesh.n_elements)
    c_hat = np.empty(mesh.n_elements)
    for t in range(mesh.n_elements):
        L[t], c_hat[t] = patch_constants(mesh, ds, t, h=h[t])
    bound = h * c_hat / L
    # beta_T = 0 satisfies the condition for any constants
    mismatch = np.where((beta == 0) | np.isinf(bound), np.inf, bound - 3 * beta)
    rule = simplex_rule(ds.dim, 2 * ds.k + 2)
    c = ds.element_cache(rule, exact=True, oracle=True)
    qr = c.q / c.q_Gamma
    q_ratio = np.column_stack([qr.min(1), qr.max(1)])
    notes = ["L is estimated by pair sampling and is approximate"]
    if c.has_oracle:
        qd = c.q_d / c.q_Gamma
        qd_ratio = np.column_stack([qd.min(1), qd.max(1)])
        _, nu_mis, _ = consistency_field(ds)
    else:
        qd_ratio = np.full((mesh.n_elements, 2), np.nan)
        nu_mis = np.full(mesh.n_elements, np.nan)
        notes.append("no distance oracle: q_d ratios and normal mismatch not available")
    return AssumptionReport(tube, mismatch, q_ratio, qd_ratio, nu_mis, L, c_hat, K, notes=notes)


def write_assumptions_csv(path, report: AssumptionReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["id", "tube_margin", "mismatch_margin", "q_ratio_min", "q_ratio_max", "qd_ratio_min", "qd_ratio_max",
             "nu_mismatch", "L", "c_hat"]
        )
        for t in range(len(report.tube_margin)):
            w.writerow(
                [t] + [repr(float(x)) for x in (
                    report.tube_margin[t], report.mismatch_margin[t], *report.q_ratio[t], *report.qd_ratio[t],
                    report.nu_mismatch[t], report.L[t], report.c_hat[t])]
            )
        verdict = "PASS" if report.ok else "FAIL"
        reasons = "; ".join(report.failures())
        w.writerow([f"GLOBAL {verdict}" + (f": {reasons}" if reasons else "")])
