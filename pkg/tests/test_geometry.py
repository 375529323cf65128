import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surfafem.geometry import (
    Circle, FlatPatch, GeometryError, GraphSurface, HalfSphere, Sphere, chart_eval, closest_point, curvature,
    make_surface, surface_from_json, tangent_basis,
)
from surfafem.reference import lattice

SURFACES = [Sphere(), Sphere(radius=2.5), HalfSphere(), FlatPatch(), GraphSurface()]


def random_reference(rng, n, margin=0.02):
    x = rng.dirichlet(np.ones(3), size=n)[:, 1:]
    return margin + (1 - 3 * margin) * x


# ---------------------------------------------------------------- chart_eval


def test_flat_chart_is_affine():
    s = FlatPatch()
    verts = s.macro_vertices[s.macro_elements[0]]
    p, J = chart_eval(s, 0, [0.3, 0.4])
    B = (verts[1:] - verts[0]).T
    assert np.allclose(p, verts[0] + B @ [0.3, 0.4])
    assert np.allclose(J, B)


def test_flat_identity_jacobian_on_unit_triangle():
    # chart of the unit reference triangle placed at the origin is the identity embedding
    from surfafem.geometry import PolyhedralSurface

    s = PolyhedralSurface(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]), closed=False)
    p, J = chart_eval(s, 0, [0.3, 0.4])
    assert np.allclose(p, [0.3, 0.4, 0])
    assert np.allclose(J, [[1, 0], [0, 1], [0, 0]])


def test_sphere_barycenter():
    s = Sphere()
    els = s.macro_elements
    verts = s.macro_vertices
    m = next(i for i, e in enumerate(els) if np.allclose(np.sort(verts[e], axis=0).sum(axis=0), [1, 1, 1]) and np.all(verts[e] >= 0))
    p, _ = chart_eval(s, m, [1 / 3, 1 / 3])
    assert np.allclose(p, np.ones(3) / np.sqrt(3), atol=1e-15)


def test_graph_closed_form():
    g = GraphSurface()
    z, _, _ = g.height(0.5, 0.5)
    assert np.isclose(z, 0.25**2.4, rtol=1e-14)
    assert np.isclose(z, 0.035897, atol=1e-6)
    p = g.chart(np.array(0.5), np.array(0.5))[0]
    assert np.allclose(p, [0.5, 0.5, 0.25**2.4])


@pytest.mark.parametrize("surface", SURFACES + [Circle()], ids=lambda s: f"{s.name}")
def test_chart_jacobian_finite_differences(surface, rng):
    n = surface.dim
    step = 1e-6
    for m in range(len(surface.macro_elements)):
        x = random_reference(rng, 1000 // len(surface.macro_elements) + 1) if n == 2 else rng.uniform(0.02, 0.98, (60, 1))
        _, J = chart_eval(surface, m, x)
        for a in range(n):
            e = np.zeros(n)
            e[a] = step
            fd = (chart_eval(surface, m, x + e)[0] - chart_eval(surface, m, x - e)[0]) / (2 * step)
            scale = np.linalg.norm(J[..., a], axis=-1, keepdims=True)
            assert np.all(np.abs(fd - J[..., a]) <= 1e-6 * scale + 1e-9)
        # full rank
        sv = np.linalg.svd(J, compute_uv=False)
        assert sv.min() > 0


def test_chart_outside_reference_rejected():
    with pytest.raises(GeometryError):
        chart_eval(Sphere(), 0, [0.8, 0.8])


def test_charts_agree_on_shared_faces():
    for s in SURFACES:
        mv, me = s.macro_vertices, s.macro_elements
        for i in range(len(me)):
            for j in range(i + 1, len(me)):
                shared = sorted(set(me[i]) & set(me[j]))
                if len(shared) != 2:
                    continue
                t = np.linspace(0, 1, 7)[:, None]
                pts = mv[shared[0]] + t * (mv[shared[1]] - mv[shared[0]])
                assert np.allclose(s.lift(i, pts), s.lift(j, pts), atol=1e-14)


# ---------------------------------------------------------------- closest point


def test_closest_point_examples():
    p, d, nu = closest_point(Sphere(), [2.0, 0, 0])
    assert np.allclose(p, [1, 0, 0]) and np.isclose(d, 1) and np.allclose(nu, [1, 0, 0])
    p, d, nu = closest_point(FlatPatch(), [0.3, 0.4, 0.2])
    assert np.allclose(p, [0.3, 0.4, 0]) and np.isclose(d, 0.2) and np.allclose(nu, [0, 0, 1])
    p, d, nu = closest_point(GraphSurface(), [0.9, 0.9, 0.1])
    assert np.allclose(p, [0.9, 0.9, 0], atol=1e-12) and abs(d - 0.1) < 1e-12 and np.allclose(nu, [0, 0, 1], atol=1e-12)


def test_distance_sign_convention():
    d, nu, _ = Sphere(radius=2.0).distance(np.array([[0.0, 0.0, 1.5], [0.0, 3.0, 0.0]]))
    assert np.allclose(d, [-0.5, 1.0])
    assert np.allclose(nu, [[0, 0, 1], [0, 1, 0]])


def test_outside_tube_rejected():
    with pytest.raises(GeometryError):
        Sphere().distance(np.array([0.0, 0.0, 0.0]))
    with pytest.raises(GeometryError):
        GraphSurface().distance(np.array([0.2, 0.2, 2.0]))


def tube_points(surface, rng, n):
    """Random points of the tubular neighbourhood away from the surface boundary."""
    xhat = random_reference(rng, n, margin=0.15)
    macro = rng.integers(0, len(surface.macro_elements), n)
    base = np.array([chart_eval(surface, int(m), x)[0] for m, x in zip(macro, xhat)])
    _, nu, _ = surface.distance(base)
    width = min(0.5 * surface.tube_width(), 0.05 if not surface.closed else 0.5)
    return base + rng.uniform(-width, width, (n, 1)) * nu


@pytest.mark.parametrize("surface", SURFACES, ids=lambda s: s.name)
def test_closest_point_optimality(surface, rng):
    lat = lattice(2, 40)
    cloud = np.concatenate([chart_eval(surface, m, lat)[0] for m in range(len(surface.macro_elements))])
    x = tube_points(surface, rng, 1000)
    p, d, _ = closest_point(surface, x)
    assert np.allclose(np.linalg.norm(x - p, axis=1), np.abs(d), atol=1e-12)
    dist = np.sqrt(((x[:, None, :] - cloud[None]) ** 2).sum(-1)).min(axis=1)
    assert np.all(np.abs(d) <= dist + 1e-12)


@pytest.mark.parametrize("surface", SURFACES, ids=lambda s: s.name)
def test_distance_oracle_identities(surface, rng):
    x = tube_points(surface, rng, 1000)
    d, nu, W = surface.distance(x)
    assert np.allclose(np.linalg.norm(nu, axis=1), 1.0, atol=1e-10)
    assert np.abs(np.einsum("qij,qj->qi", W, nu)).max() < 1e-10
    assert np.allclose(W, np.swapaxes(W, 1, 2), atol=1e-10)
    # idempotence of the projection
    p = x - d[:, None] * nu
    d2, _, _ = surface.distance(p)
    assert np.abs(d2).max() < 1e-12


# ---------------------------------------------------------------- curvature


def test_curvature_sphere():
    rep = curvature(Sphere(), [[0.0, 0.6, 0.8]])
    assert np.allclose(rep.kappas, 1.0) and np.isclose(rep.K[0], 1.0)
    rep = curvature(Sphere(), [[1.5, 0.0, 0.0]])
    assert np.allclose(np.abs(rep.kappas), 2 / 3)
    # off-surface values relate to on-surface ones by kappa / (1 + d kappa)
    kap, d = 1.0, 0.5
    assert np.allclose(rep.kappas, kap / (1 + d * kap))


def test_curvature_flat():
    rep = curvature(FlatPatch(), [[0.2, 0.3, 0.0], [0.5, 0.5, 0.1]])
    assert np.allclose(rep.kappas, 0) and np.allclose(rep.K, 0)


@given(st.floats(0.2, 3.0), st.floats(-0.15, 0.15))
def test_curvature_offset_relation(radius, frac):
    s = Sphere(radius=radius)
    d = frac * radius
    x = np.array([[0.0, 0.0, radius + d]])
    k = curvature(s, x).kappas
    on = 1.0 / radius
    assert np.allclose(k, on / (1 + d * on))


def test_graph_curvature_seam_continuity():
    g = GraphSurface()
    r = np.sqrt(g.c)
    ang = 0.6

    def K_at(rad):
        s, t = rad * np.cos(ang), rad * np.sin(ang)
        _, S = g.shape_operator(np.array([s]), np.array([t]))
        return np.abs(np.linalg.eigvalsh(S)).max()

    # exactly on the seam the one-sided closed form and the outer value (0) agree
    assert K_at(r) == 0.0 and K_at(r + 1e-7) == 0.0
    # from the inside the curvature vanishes like (distance to the seam)^alpha
    k1, k2 = K_at(r - 1e-6), K_at(r - 1e-8)
    assert k2 < k1
    assert np.isclose(k2 / k1, 1e-2**g.alpha, rtol=0.02)


def test_graph_curvature_bound_covers_samples(rng):
    g = GraphSurface()
    s, t = rng.uniform(0, 1, (2, 4000))
    K = np.abs(np.linalg.eigvalsh(g.shape_operator(s, t)[1])).max(axis=-1)
    assert K.max() <= g.curvature_bound
    assert g.curvature_bound > 0


def test_tangent_basis_orthonormal(rng):
    nu = rng.normal(size=(200, 3))
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    nu[0] = [0, 0, 1]
    nu[1] = [0, 0, -1]
    T = tangent_basis(nu)
    assert np.allclose(np.einsum("qia,qib->qab", T, T), np.eye(2), atol=1e-12)
    assert np.abs(np.einsum("qia,qi->qa", T, nu)).max() < 1e-12


# ---------------------------------------------------------------- construction


def test_make_surface_and_json():
    s = surface_from_json(json.dumps({"surface": "graph", "alpha": 0.4}))
    assert isinstance(s, GraphSurface) and s.alpha == 0.4
    assert surface_from_json(s.to_json()).params() == s.params()
    with pytest.raises(GeometryError):
        make_surface("torus")
    with pytest.raises(GeometryError):
        make_surface("sphere", {"radius": 0})
    with pytest.raises(GeometryError):
        make_surface("sphere", {"bogus": 1})
    with pytest.raises(GeometryError):
        GraphSurface(alpha=1.5)


def test_boundary_maps_to_boundary():
    # the half-sphere lift keeps equator edges on the equator
    h = HalfSphere()
    mv, me = h.macro_vertices, h.macro_elements
    eq = np.nonzero(np.isclose(mv[:, 2], 0))[0]
    for m, el in enumerate(me):
        e = [v for v in el if v in eq]
        if len(e) == 2:
            t = np.linspace(0, 1, 9)[:, None]
            pts = h.lift(m, mv[e[0]] + t * (mv[e[1]] - mv[e[0]]))
            assert np.allclose(pts[:, 2], 0) and np.allclose(np.linalg.norm(pts, axis=1), 1)
