"""Structured triangulations of axis-aligned rectangles and their side skeletons.

A mesh at refinement level ``l`` splits the rectangle into ``2^l x 2^l``
squares and each square into two triangles along the bottom-left to
top-right diagonal, giving ``2 * 4^l`` elements.  The side skeleton
carries, per side, the adjacency, a fixed unit normal, the midpoint,
the length and a boundary tag.
"""

from __future__ import annotations

import numpy as np

# side tags
INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2


def all_dirichlet(midpoints):
    """Boundary classifier marking every boundary side as Dirichlet."""
    return np.ones(len(midpoints), dtype=bool)


def all_neumann(midpoints):
    """Boundary classifier marking every boundary side as Neumann."""
    return np.zeros(len(midpoints), dtype=bool)


def _as_bounds(domain):
    a = np.asarray(domain, dtype=float).ravel()
    if a.size != 4:
        raise ValueError("domain must give four bounds (xmin, xmax, ymin, ymax)")
    x0, x1, y0, y1 = a
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain rectangle is degenerate")
    return float(x0), float(x1), float(y0), float(y1)


class Mesh:
    """Triangulation of a rectangle with counterclockwise elements."""

    def __init__(self, vertices, triangles, level=0, domain=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be an (nt, 3) array")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle vertex index out of range")
        self.level = int(level)
        if domain is None:
            x0, y0 = self.vertices.min(axis=0)
            x1, y1 = self.vertices.max(axis=0)
            self.domain = (float(x0), float(x1), float(y0), float(y1))
        else:
            self.domain = _as_bounds(domain)

        corners = self.vertices[self.triangles]
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(signed <= 0.0):
            bad = int(np.argmax(signed <= 0.0))
            raise ValueError(
                f"triangle {bad} is degenerate or clockwise (signed area {signed[bad]:g})"
            )
        self.areas = signed
        self.barycenters = corners.mean(axis=1)
        for arr in (self.vertices, self.triangles, self.areas, self.barycenters):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def corner_coords(self):
        """Vertex coordinates per element, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @property
    def max_side(self):
        """Maximal side length (the mesh size h)."""
        c = self.corner_coords()
        d = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=2)
        return float(d.max())

    def __repr__(self):
        return (
            f"Mesh(level={self.level}, nv={self.n_vertices}, "
            f"nt={self.n_triangles}, domain={self.domain})"
        )


def structured_mesh(domain, level):
    """Uniform diagonal triangulation of a rectangle.

    Parameters
    ----------
    domain : four bounds ``(xmin, xmax, ymin, ymax)`` or a pair of pairs.
    level : int >= 0, number of uniform refinements of the two-triangle mesh;
        the grid has ``2^level`` squares per axis.
    """
    x0, x1, y0, y1 = _as_bounds(domain)
    if level < 0:
        raise ValueError("level must be nonnegative")
    n = 1 << int(level)
    xs = x0 + (x1 - x0) * np.arange(n + 1) / n
    ys = y0 + (y1 - y0) * np.arange(n + 1) / n
    # exact endpoint reproduction regardless of rounding in the interior
    xs[-1] = x1
    ys[-1] = y1
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i = i.ravel()
    j = j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    # two triangles per square, split along the v00 -> v11 diagonal
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles, level=level, domain=(x0, x1, y0, y1))


class SideSet:
    """Side skeleton of a mesh: adjacency, normals, midpoints, lengths, tags.

    Sides are ordered by their sorted endpoint pair.  For interior sides
    ``tris[s, 0] < tris[s, 1]`` and the stored unit normal points out of
    ``tris[s, 0]`` into ``tris[s, 1]``; for boundary sides it is the outward
    domain normal and ``tris[s, 1] == -1``.
    """

    def __init__(self, mesh, ends, tris, local_idx, end_corner, normal, mid, length, tag):
        self.mesh = mesh
        self.ends = ends
        self.tris = tris
        self.local_idx = local_idx
        self.end_corner = end_corner
        self.normal = normal
        self.mid = mid
        self.length = length
        self.tag = tag
        # per-element view: tri_sides[t, i] is the global side opposite local
        # vertex i, tri_side_sign[t, i] = +1 where the stored normal is outward
        nt = mesh.n_triangles
        self.tri_sides = np.full((nt, 3), -1, dtype=np.int64)
        self.tri_side_sign = np.zeros((nt, 3))
        for k in (0, 1):
            sel = tris[:, k] >= 0
            self.tri_sides[tris[sel, k], local_idx[sel, k]] = np.flatnonzero(sel)
            self.tri_side_sign[tris[sel, k], local_idx[sel, k]] = 1.0 if k == 0 else -1.0
        if np.any(self.tri_sides < 0):
            raise ValueError("incomplete side incidence (mesh is not face-to-face)")
        for arr in (
            self.ends, self.tris, self.local_idx, self.end_corner, self.normal,
            self.mid, self.length, self.tag, self.tri_sides, self.tri_side_sign,
        ):
            arr.setflags(write=False)

    @property
    def n_sides(self):
        return len(self.length)

    @property
    def h_max(self):
        return float(self.length.max())

    @property
    def interior(self):
        return self.tag == INTERIOR

    @property
    def boundary(self):
        return self.tag != INTERIOR

    def not_neumann(self):
        return self.tag != NEUMANN

    def not_dirichlet(self):
        return self.tag != DIRICHLET

    def __repr__(self):
        nb = int(np.count_nonzero(self.boundary))
        return f"SideSet(ns={self.n_sides}, boundary={nb}, h_max={self.h_max:g})"


def side_topology(mesh, dirichlet=all_dirichlet):
    """Build the side skeleton of a conforming mesh.

    ``dirichlet`` is a classifier applied to boundary side midpoints; sides
    where it returns True are tagged Dirichlet, the rest Neumann.  Rejects
    meshes with hanging nodes or sides shared by more than two elements.
    """
    tris = mesh.triangles
    nt = mesh.n_triangles
    nv = mesh.n_vertices
    # local side i of element t is (t[i+1], t[i+2]), opposite local vertex i
    a = tris[:, [1, 2, 0]].ravel()
    b = tris[:, [2, 0, 1]].ravel()
    tri_ids = np.repeat(np.arange(nt, dtype=np.int64), 3)
    loc_ids = np.tile(np.array([0, 1, 2], dtype=np.int64), nt)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    key = lo * np.int64(nv) + hi
    order = np.argsort(key, kind="stable")
    ks = key[order]
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    counts = np.diff(np.r_[starts, len(ks)])
    if np.any(counts > 2):
        raise ValueError("side shared by more than two elements")
    ns = len(starts)
    first = order[starts]
    second = np.where(counts == 2, order[np.minimum(starts + 1, len(ks) - 1)], -1)

    side_tris = np.full((ns, 2), -1, dtype=np.int64)
    side_loc = np.full((ns, 2), -1, dtype=np.int64)
    side_tris[:, 0] = tri_ids[first]
    side_loc[:, 0] = loc_ids[first]
    has2 = second >= 0
    side_tris[has2, 1] = tri_ids[second[has2]]
    side_loc[has2, 1] = loc_ids[second[has2]]
    # stable sort within equal keys keeps element-major order, so tris[:,0] is
    # the lower-indexed element on interior sides
    ends = np.column_stack([lo[first], hi[first]])

    p0 = mesh.vertices[ends[:, 0]]
    p1 = mesh.vertices[ends[:, 1]]
    tangent = p1 - p0
    length = np.linalg.norm(tangent, axis=1)
    if np.any(length <= 0.0):
        raise ValueError("zero-length side")
    mid = 0.5 * (p0 + p1)
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / length[:, None]
    flip = np.einsum("ij,ij->i", normal, mid - mesh.barycenters[side_tris[:, 0]]) < 0.0
    normal[flip] *= -1.0

    x0, x1, y0, y1 = mesh.domain
    scale = max(x1 - x0, y1 - y0)
    tol = 1e-12 * scale
    on_boundary = (
        (np.abs(mid[:, 0] - x0) < tol)
        | (np.abs(mid[:, 0] - x1) < tol)
        | (np.abs(mid[:, 1] - y0) < tol)
        | (np.abs(mid[:, 1] - y1) < tol)
    )
    single = ~has2
    hanging = single & ~on_boundary
    if np.any(hanging):
        s = int(np.argmax(hanging))
        raise ValueError(
            f"nonconforming mesh: side {tuple(ends[s])} has one element "
            "but lies in the interior (hanging node)"
        )

    tag = np.full(ns, INTERIOR, dtype=np.uint8)
    if np.any(single):
        bmid = mid[single]
        mask = np.asarray(dirichlet(bmid), dtype=bool)
        if mask.shape != (len(bmid),):
            raise ValueError("dirichlet classifier must return one flag per side")
        btag = np.where(mask, DIRICHLET, NEUMANN).astype(np.uint8)
        tag[single] = btag

    # local corner position of each endpoint within each adjacent element
    end_corner = np.full((ns, 2, 2), -1, dtype=np.int64)
    for k in (0, 1):
        sel = side_tris[:, k] >= 0
        tcorners = tris[side_tris[sel, k]]
        for e in (0, 1):
            match = tcorners == ends[sel, e][:, None]
            if not np.all(match.any(axis=1)):
                raise ValueError("side endpoint missing from adjacent element")
            end_corner[sel, k, e] = np.argmax(match, axis=1)

    return SideSet(mesh, ends, side_tris, side_loc, end_corner, normal, mid, length, tag)


def write_mesh_text(mesh, sides, stream):
    """Plain-text dump: header ``NV NT NS``, then vertices, elements, sides."""
    close = False
    if isinstance(stream, (str, bytes)):
        stream = open(stream, "w")
        close = True
    try:
        stream.write(f"{mesh.n_vertices} {mesh.n_triangles} {sides.n_sides}\n")
        for x, y in mesh.vertices:
            stream.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            stream.write(f"{i} {j} {k}\n")
        for (vA, vB), t in zip(sides.ends, sides.tag):
            stream.write(f"{vA} {vB} {int(t)}\n")
    finally:
        if close:
            stream.close()
