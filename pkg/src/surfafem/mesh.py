"""
Conforming simplicial surface meshes with newest-vertex bisection.

Element convention (triangles): ``elements[t] = (p0, p1, p2)`` with ``p0`` the
newest vertex; the refinement edge is ``(p1, p2)``.  Local face ``j`` is the
face opposite local vertex ``j``.

Every vertex keeps two positions: ``flat`` on the macro polyhedron (where the
refinement tree lives, so that charts are ``P`` composed with affine maps) and
``points = P(flat)`` on the exact surface.
"""
from __future__ import annotations

from functools import cached_property
from math import factorial

import numpy as np
import scipy.sparse as sp

from .geometry import PolyhedralSurface, Surface, make_surface

_BIG = np.int64(1) << np.int64(32)


class MeshError(ValueError):
    """Broken or unsupported mesh topology."""


def _edge_keys(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return np.minimum(a, b) * _BIG + np.maximum(a, b)


class SurfaceMesh:
    """Simplicial mesh of a surface with its refinement data.

    Parameters
    ----------
    surface : Surface
        Exact surface providing the lift ``P`` used to place new vertices.
    flat, points : (V, n+1) arrays
        Vertex positions on the macro polyhedron and on the surface.
    elements : (E, n+1) int array
        Vertex indices, newest vertex first.
    macro, level : (E,) int arrays
        Macro parent and bisection generation of each element.
    """

    def __init__(self, surface: Surface, flat, points, elements, macro, level):
        self.surface = surface
        self.flat = np.asarray(flat, dtype=float)
        self.points = np.asarray(points, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        self.macro = np.asarray(macro, dtype=np.int64)
        self.level = np.asarray(level, dtype=np.int64)
        for a in (self.flat, self.points, self.elements, self.macro, self.level):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.elements.shape[1] - 1

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    def __repr__(self):
        return f"SurfaceMesh({self.surface.name}, {self.n_elements} elements, {self.n_vertices} vertices)"

    # ------------------------------------------------------------ topology

    @cached_property
    def _faces(self):
        n = self.dim
        E = self.n_elements
        els = self.elements
        if n == 1:
            fv = els[:, ::-1].reshape(E, 2, 1)  # face j opposite vertex j is the other vertex
            keys = fv[:, :, 0]
        elif n == 2:
            fv = np.stack([els[:, [1, 2]], els[:, [2, 0]], els[:, [0, 1]]], axis=1)
            keys = _edge_keys(fv[..., 0], fv[..., 1])
        else:
            raise MeshError("only curves (n=1) and surfaces (n=2) are supported")
        uniq, inv, counts = np.unique(keys.ravel(), return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: a face is shared by more than two elements")
        elem_faces = inv.reshape(E, n + 1)
        F = len(uniq)
        face_elems = -np.ones((F, 2), dtype=np.int64)
        face_local = -np.ones((F, 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        flat_e, flat_l = np.divmod(order, n + 1)
        sorted_faces = inv[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_faces[1:] != sorted_faces[:-1]
        face_elems[sorted_faces[first], 0] = flat_e[first]
        face_local[sorted_faces[first], 0] = flat_l[first]
        face_elems[sorted_faces[~first], 1] = flat_e[~first]
        face_local[sorted_faces[~first], 1] = flat_l[~first]
        if n == 1:
            face_vertices = uniq[:, None]
        else:
            face_vertices = np.column_stack(np.divmod(uniq, _BIG))
        return face_vertices, elem_faces, face_elems, face_local

    @property
    def face_vertices(self) -> np.ndarray:
        """(F, n) sorted global vertex ids of each face."""
        return self._faces[0]

    @property
    def elem_faces(self) -> np.ndarray:
        """(E, n+1) face id of local face ``j`` (opposite local vertex ``j``)."""
        return self._faces[1]

    @property
    def face_elems(self) -> np.ndarray:
        """(F, 2) adjacent elements; ``-1`` in column 1 marks a boundary face."""
        return self._faces[2]

    @property
    def face_local(self) -> np.ndarray:
        return self._faces[3]

    @property
    def boundary_faces(self) -> np.ndarray:
        """(F,) boolean flags."""
        return self.face_elems[:, 1] < 0

    @property
    def faces(self) -> dict:
        """Face adjacency map ``face id -> [(element, local face), ...]``."""
        out = {}
        for f, (es, ls) in enumerate(zip(self.face_elems, self.face_local)):
            out[f] = [(int(e), int(loc)) for e, loc in zip(es, ls) if e >= 0]
        return out

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.face_vertices[self.boundary_faces].ravel()] = True
        return flags

    @cached_property
    def vertex_elements(self) -> sp.csr_matrix:
        """Vertex-to-element incidence (V x E)."""
        E, k = self.elements.shape
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(E), k)
        return sp.csr_matrix((np.ones(E * k, dtype=np.int8), (rows, cols)), shape=(self.n_vertices, E))

    # ------------------------------------------------------------ measures

    def edge_matrices(self, which="points") -> np.ndarray:
        """(E, n+1, n) columns ``x_i - x_0`` of the flat simplices."""
        x = self.points if which == "points" else self.flat
        v = x[self.elements]
        return np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)

    def measures(self) -> np.ndarray:
        """Measure of the flat simplex spanned by each element's vertex positions."""
        B = self.edge_matrices()
        gram = np.einsum("eia,eib->eab", B, B)
        return np.sqrt(np.clip(np.linalg.det(gram), 0, None)) / factorial(self.dim)

    def sizes(self) -> np.ndarray:
        """``h_T = |T|^(1/n)`` for every element."""
        meas = self.measures()
        if np.any(meas <= 0):
            bad = int(np.argmin(meas))
            raise MeshError(f"degenerate element {bad} (zero measure)")
        return meas ** (1.0 / self.dim)

    def diameters(self) -> np.ndarray:
        v = self.points[self.elements]
        k = v.shape[1]
        d = np.zeros(self.n_elements)
        for i in range(k):
            for j in range(i + 1, k):
                d = np.maximum(d, np.linalg.norm(v[:, i] - v[:, j], axis=-1))
        return d

    def min_angles(self, which="points") -> np.ndarray:
        """Smallest interior angle of each triangle (radians), on the surface points or the flat facets."""
        v = (self.points if which == "points" else self.flat)[self.elements]
        out = np.full(self.n_elements, np.pi)
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            cos = np.sum(a * b, -1) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
            out = np.minimum(out, np.arccos(np.clip(cos, -1, 1)))
        return out

    def macro_reference_coords(self, t: int) -> np.ndarray:
        """Reference coordinates of element ``t``'s vertices inside its macro simplex."""
        m = self.surface.macro_elements[self.macro[t]]
        mv = self.surface.macro_vertices[m]
        B = (mv[1:] - mv[0]).T
        rel = self.flat[self.elements[t]] - mv[0]
        return np.linalg.lstsq(B, rel.T, rcond=None)[0].T

    def validate(self):
        """Check conformity and that no element is degenerate."""
        fe = self.face_elems
        if self.surface.closed and np.any(fe[:, 1] < 0):
            raise MeshError("closed surface mesh has boundary faces (hanging nodes)")
        self.sizes()
        return True


# ---------------------------------------------------------------- building


def build_initial_mesh(surface_id, params: dict | None = None) -> SurfaceMesh:
    """Coarsest conforming macro mesh of a built-in surface (or of a given Surface)."""
    surface = surface_id if isinstance(surface_id, Surface) else make_surface(surface_id, params)
    mesh = mesh_from_surface(surface)
    check_patches_flattenable(mesh)
    return mesh


def mesh_from_surface(surface: Surface) -> SurfaceMesh:
    v = surface.macro_vertices
    els = surface.macro_elements
    E = len(els)
    pts = np.empty_like(v)
    for m, el in enumerate(els):
        pts[el] = surface.lift(m, v[el])
    mesh = SurfaceMesh(surface, v, pts, els, np.arange(E), np.zeros(E, dtype=int))
    mesh.validate()
    return mesh


def check_patches_flattenable(mesh: SurfaceMesh):
    """Reject closed meshes where some patch is the whole surface (cannot be flattened)."""
    if not mesh.surface.closed or mesh.dim != 2:
        return
    for t in range(mesh.n_elements):
        if len(patch(mesh, t)) == mesh.n_elements:
            raise MeshError(f"patch of element {t} covers the whole closed surface and cannot be flattened")


# ---------------------------------------------------------------- refinement


def _place_vertices(mesh, a, b, macro):
    flat = 0.5 * (mesh.flat[a] + mesh.flat[b])
    pts = np.empty_like(flat)
    for m in np.unique(macro):
        sel = macro == m
        pts[sel] = mesh.surface.lift(int(m), flat[sel])
    return flat, pts


def refine(mesh: SurfaceMesh, marked) -> SurfaceMesh:
    """Bisect every marked element at least once and restore conformity.

    Triangles use newest-vertex bisection; marked refinement edges are closed
    under "an element with a marked edge has its refinement edge marked",
    which guarantees a conforming result.  New vertices are placed on the
    surface by lifting the flat midpoint with the macro chart.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise MeshError("marked element id out of range")
    if marked.size == 0:
        return mesh
    if mesh.dim == 1:
        return _refine_curve(mesh, marked)
    return _refine_nvb(mesh, marked)


def _refine_curve(mesh, marked):
    els = mesh.elements
    a, b = els[marked, 0], els[marked, 1]
    flat, pts = _place_vertices(mesh, a, b, mesh.macro[marked])
    V = mesh.n_vertices
    mids = V + np.arange(len(marked))
    keep = np.ones(mesh.n_elements, dtype=bool)
    keep[marked] = False
    new_els = np.concatenate([els[keep], np.column_stack([a, mids]), np.column_stack([mids, b])])
    macro = np.concatenate([mesh.macro[keep], mesh.macro[marked], mesh.macro[marked]])
    level = np.concatenate([mesh.level[keep], mesh.level[marked] + 1, mesh.level[marked] + 1])
    return SurfaceMesh(
        mesh.surface,
        np.concatenate([mesh.flat, flat]),
        np.concatenate([mesh.points, pts]),
        new_els,
        macro,
        level,
    )


def _refine_nvb(mesh, marked):
    els = mesh.elements
    keys = np.stack(
        [_edge_keys(els[:, 1], els[:, 2]), _edge_keys(els[:, 2], els[:, 0]), _edge_keys(els[:, 0], els[:, 1])],
        axis=1,
    )
    medges = np.unique(keys[marked, 0])
    while True:
        has = np.isin(keys, medges).any(axis=1)
        need = has & ~np.isin(keys[:, 0], medges)
        if not need.any():
            break
        medges = np.union1d(medges, keys[need, 0])

    # one new vertex per marked edge; the macro of any element holding the edge is fine
    owner = np.full(len(medges), -1, dtype=np.int64)
    flat_keys = keys.ravel()
    pos = np.searchsorted(medges, flat_keys)
    pos_c = np.minimum(pos, len(medges) - 1)
    hit = medges[pos_c] == flat_keys
    owner[pos_c[hit]] = np.arange(len(flat_keys))[hit] // 3
    a, b = np.divmod(medges, _BIG)
    flat, pts = _place_vertices(mesh, a, b, mesh.macro[owner])
    mids = mesh.n_vertices + np.arange(len(medges))

    macro, level = mesh.macro, mesh.level
    while True:
        rk = _edge_keys(els[:, 1], els[:, 2])
        pos = np.minimum(np.searchsorted(medges, rk), len(medges) - 1)
        sel = medges[pos] == rk
        if not sel.any():
            break
        p0, p1, p2 = els[sel, 0], els[sel, 1], els[sel, 2]
        m = mids[pos[sel]]
        els = np.concatenate([els[~sel], np.column_stack([m, p0, p1]), np.column_stack([m, p2, p0])])
        macro = np.concatenate([macro[~sel], macro[sel], macro[sel]])
        level = np.concatenate([level[~sel], level[sel] + 1, level[sel] + 1])
    return SurfaceMesh(
        mesh.surface,
        np.concatenate([mesh.flat, flat]),
        np.concatenate([mesh.points, pts]),
        els,
        macro,
        level,
    )


def refine_uniform(mesh: SurfaceMesh, times: int = 1) -> SurfaceMesh:
    """Uniform refinement halving ``h``: two bisection generations per pass for triangles."""
    passes = times * (2 if mesh.dim == 2 else 1)
    for _ in range(passes):
        mesh = refine(mesh, np.arange(mesh.n_elements))
    return mesh


# ---------------------------------------------------------------- queries


def element_size(mesh: SurfaceMesh, t: int) -> float:
    """``h_T = |T|^(1/n)`` of the flat simplex through the element's vertices."""
    v = mesh.points[mesh.elements[t]]
    B = (v[1:] - v[0]).T
    meas = np.sqrt(max(np.linalg.det(B.T @ B), 0.0)) / factorial(mesh.dim)
    if meas <= 0:
        raise MeshError(f"degenerate element {t} (zero measure)")
    return float(meas ** (1.0 / mesh.dim))


def patch(mesh: SurfaceMesh, t: int) -> set:
    """Elements sharing at least one vertex with element ``t`` (including ``t``)."""
    ve = mesh.vertex_elements
    rows = ve[mesh.elements[t]]
    return set(int(e) for e in np.unique(rows.indices))


def patch_sizes(mesh: SurfaceMesh) -> np.ndarray:
    """Cardinality of every element patch."""
    ve = mesh.vertex_elements.astype(np.int32)
    ee = (ve.T @ ve).tocsr()
    return np.diff(ee.indptr)


# ---------------------------------------------------------------- file formats


def read_off(path):
    """Read an ASCII OFF file; returns ``(vertices, faces)``."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError("missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos : pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        faces.append([int(x) for x in tokens[pos + 1 : pos + 1 + k]])
        pos += 1 + k
    if any(len(f) != 3 for f in faces):
        raise MeshError("only triangular OFF faces are supported")
    return verts, np.array(faces, dtype=np.int64)


def write_off(path, vertices, faces):
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    if vertices.shape[1] == 2:
        vertices = np.column_stack([vertices, np.zeros(len(vertices))])
    edges = len(np.unique(_edge_keys(faces[:, [0, 1, 2]].ravel(), faces[:, [1, 2, 0]].ravel())))
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(vertices)} {len(faces)} {edges}\n")
        for v in vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        for f in faces:
            fh.write(f"{len(f)} " + " ".join(str(int(i)) for i in f) + "\n")


def _longest_edge_first(verts, faces):
    """Rotate each triangle so the newest vertex is opposite its longest edge."""
    out = faces.copy()
    for i, f in enumerate(faces):
        lengths = [np.linalg.norm(verts[f[(j + 1) % 3]] - verts[f[(j + 2) % 3]]) for j in range(3)]
        j = int(np.argmax(lengths))
        out[i] = [f[j], f[(j + 1) % 3], f[(j + 2) % 3]]
    return out


def mesh_from_off(path) -> SurfaceMesh:
    """Macro mesh from an OFF file with identity charts per facet."""
    verts, faces = read_off(path)
    faces = _longest_edge_first(verts, faces)
    keys = _edge_keys(faces[:, [1, 2, 0]].ravel(), faces[:, [2, 0, 1]].ravel())
    _, counts = np.unique(keys, return_counts=True)
    surface = PolyhedralSurface(verts, faces, closed=bool(np.all(counts == 2)))
    mesh = mesh_from_surface(surface)
    check_patches_flattenable(mesh)
    return mesh


_VTK_CELL = {1: 3, 2: 5}


def write_vtk(path, mesh: SurfaceMesh, cell_data: dict | None = None, title="surfafem mesh"):
    """Legacy ASCII VTK unstructured grid with optional per-cell scalar arrays."""
    pts = mesh.points
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    els = mesh.elements
    k = els.shape[1]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(pts)} double")
    lines.extend(" ".join(repr(float(x)) for x in p) for p in pts)
    lines.append(f"CELLS {len(els)} {len(els) * (k + 1)}")
    lines.extend(f"{k} " + " ".join(str(int(i)) for i in e) for e in els)
    lines.append(f"CELL_TYPES {len(els)}")
    lines.extend([str(_VTK_CELL[mesh.dim])] * len(els))
    if cell_data:
        lines.append(f"CELL_DATA {len(els)}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (len(els),):
                raise ValueError(f"cell array {name!r} has wrong length")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(x)) for x in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- Lagrange nodes


def lagrange_nodes(mesh: SurfaceMesh, degree: int):
    """Global numbering of the degree-``degree`` Lagrange nodes.

    A node is identified by the sorted multiset of element vertices weighted
    by its barycentric multi-index, so nodes on shared faces coincide.

    Returns
    -------
    ids : (E, n_basis) int array
        Global node id of every element-local node.
    keys : (N, degree) int array
        Sorted vertex multiset of every global node.
    """
    from .reference import multi_indices

    alphas = multi_indices(mesh.dim, degree)
    reps = np.concatenate([np.repeat(np.arange(mesh.dim + 1), a)[None] for a in alphas])
    keys = np.sort(mesh.elements[:, reps], axis=-1)  # (E, nb, degree)
    E, nb, _ = keys.shape
    flat = keys.reshape(-1, degree)
    base = np.int64(mesh.n_vertices)
    if float(mesh.n_vertices) ** degree < 2.0**62:
        code = np.zeros(len(flat), dtype=np.int64)
        for j in range(degree):
            code = code * base + flat[:, j]
        _, first, inv = np.unique(code, return_index=True, return_inverse=True)
        uniq = flat[first]
    else:
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    return inv.reshape(E, nb), uniq
