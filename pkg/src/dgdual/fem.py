"""Broken finite element fields and their elementary operations.

Two field types live on a mesh:

* ``DGField``: elementwise affine scalars stored as barycenter value plus
  constant gradient, ``u|_T(x) = u_T + g_T . (x - x_T)``.
* ``RTField``: broken lowest-order flux fields stored as barycenter value
  plus divergence, ``z|_T(x) = a_T + b_T (x - x_T) / 2``, so ``div z|_T = b_T``
  and normal traces are constant along each side.

Side quantities follow the stored normal convention: the jump on a side is
the trace from the element the normal points out of minus the trace from
the element it points into; on boundary sides jump and average both equal
the single trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quadrature
from .mesh import DIRICHLET, NEUMANN


class DGField:
    """Elementwise affine scalar field."""

    def __init__(self, mesh, values, gradients):
        self.mesh = mesh
        self.values = np.ascontiguousarray(values, dtype=float)
        self.gradients = np.ascontiguousarray(gradients, dtype=float)
        if self.values.shape != (mesh.n_triangles,):
            raise ValueError("values must have one entry per element")
        if self.gradients.shape != (mesh.n_triangles, 2):
            raise ValueError("gradients must be (nt, 2)")

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_triangles), np.zeros((mesh.n_triangles, 2)))

    def __call__(self, points, elements):
        points = np.asarray(points, dtype=float)
        d = points - self.mesh.barycenters[elements]
        return self.values[elements] + np.einsum("...d,...d->...", self.gradients[elements], d)

    def corner_values(self):
        """Trace at the three element corners, shape (nt, 3)."""
        d = self.mesh.corner_coords() - self.mesh.barycenters[:, None, :]
        return self.values[:, None] + np.einsum("tcd,td->tc", d, self.gradients)

    def midside_values(self):
        """Trace at the three side midpoints (side i opposite corner i)."""
        c = self.corner_values()
        # affine: value at a side midpoint is the mean of its endpoint values
        return 0.5 * (np.roll(c, -1, axis=1) + np.roll(c, -2, axis=1))

    def l2_norm(self):
        m = self.midside_values()
        return float(np.sqrt(np.sum(self.mesh.areas[:, None] / 3.0 * m * m)))

    def __add__(self, other):
        self._check(other)
        return DGField(self.mesh, self.values + other.values, self.gradients + other.gradients)

    def __sub__(self, other):
        self._check(other)
        return DGField(self.mesh, self.values - other.values, self.gradients - other.gradients)

    def _check(self, other):
        if other.mesh is not self.mesh:
            raise ValueError("fields live on different meshes")


class RTField:
    """Broken lowest-order flux field with elementwise constant divergence."""

    def __init__(self, mesh, values, divergences):
        self.mesh = mesh
        self.values = np.ascontiguousarray(values, dtype=float)
        self.divergences = np.ascontiguousarray(divergences, dtype=float)
        if self.values.shape != (mesh.n_triangles, 2):
            raise ValueError("values must be (nt, 2)")
        if self.divergences.shape != (mesh.n_triangles,):
            raise ValueError("divergences must have one entry per element")

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros((mesh.n_triangles, 2)), np.zeros(mesh.n_triangles))

    def __call__(self, points, elements):
        points = np.asarray(points, dtype=float)
        d = points - self.mesh.barycenters[elements]
        return self.values[elements] + 0.5 * self.divergences[elements][..., None] * d


@dataclass
class SideTraces:
    """Per-side jump and average of a broken field (scalars per side)."""

    jump: np.ndarray
    average: np.ndarray


def _require_same_mesh(field, sides):
    if field.mesh is not sides.mesh:
        raise ValueError("field and side set belong to different meshes")


def side_traces_dg(u, sides):
    """Midpoint jump and average of a DG field on every side.

    Traces are affine along each side, so the midpoint value equals the
    integral mean.
    """
    _require_same_mesh(u, sides)
    t0 = sides.tris[:, 0]
    t1 = sides.tris[:, 1]
    tr0 = u(sides.mid, t0)
    inner = t1 >= 0
    tr1 = np.where(inner, u(sides.mid, np.maximum(t1, 0)), tr0)
    jump = np.where(inner, tr0 - tr1, tr0)
    avg = np.where(inner, 0.5 * (tr0 + tr1), tr0)
    return SideTraces(jump, avg)


def side_traces_rt(z, sides):
    """Jump and average of the normal component of a broken flux field."""
    _require_same_mesh(z, sides)
    t0 = sides.tris[:, 0]
    t1 = sides.tris[:, 1]
    q0 = np.einsum("sd,sd->s", z(sides.mid, t0), sides.normal)
    inner = t1 >= 0
    q1 = np.where(
        inner,
        np.einsum("sd,sd->s", z(sides.mid, np.maximum(t1, 0)), sides.normal),
        q0,
    )
    jump = np.where(inner, q0 - q1, q0)
    avg = np.where(inner, 0.5 * (q0 + q1), q0)
    return SideTraces(jump, avg)


def endpoint_jumps(u, sides):
    """Jumps of a DG field at the two side endpoints, shape (ns, 2).

    Needed for penalties that integrate the full affine jump along a side
    rather than only its mean.
    """
    _require_same_mesh(u, sides)
    cv = u.corner_values()
    t0 = sides.tris[:, 0]
    t1 = sides.tris[:, 1]
    inner = t1 >= 0
    out = np.empty((sides.n_sides, 2))
    for e in (0, 1):
        v0 = cv[t0, sides.end_corner[:, 0, e]]
        v1 = np.where(
            inner,
            cv[np.maximum(t1, 0), np.where(inner, sides.end_corner[:, 1, e], 0)],
            0.0,
        )
        out[:, e] = np.where(inner, v0 - v1, v0)
    return out


def broken_gradient(u):
    """Elementwise gradient, shape (nt, 2)."""
    return np.array(u.gradients)


def rt_divergence(z):
    """Elementwise divergence, shape (nt,)."""
    return np.array(z.divergences)


def pi0_project(f, mesh, degree=2, subdiv_mask=None, subdiv_levels=4):
    """L2 projection onto elementwise constants (per-element means).

    ``f`` maps (N, 2) points to scalars or 2-vectors; returns (nt,) or (nt, 2).
    For affine integrands this is the barycenter value.
    """
    ints = quadrature.integrate_elementwise(
        f, mesh, degree=degree, subdiv_mask=subdiv_mask, subdiv_levels=subdiv_levels
    )
    if ints.ndim == 1:
        return ints / mesh.areas
    return ints / mesh.areas[:, None]


def pi0_field(u):
    """Means of a DG field (its barycenter values)."""
    return np.array(u.values)


def cr_gradients(mesh, sides):
    """Gradients of the local midside nodal basis, shape (nt, 3, 2).

    Basis function i equals one at the midpoint of the side opposite corner
    i and minus one at that corner; its gradient is ``|S_i| n_i / |T|`` with
    the outward normal.
    """
    n_out = sides.normal[sides.tri_sides] * sides.tri_side_sign[:, :, None]
    lens = sides.length[sides.tri_sides]
    return lens[:, :, None] * n_out / mesh.areas[:, None, None]


def dg_from_midside(mesh, sides, midside):
    """Assemble a DG field from per-element midside values, shape (nt, 3)."""
    grads = np.einsum("ti,tid->td", midside, cr_gradients(mesh, sides))
    return DGField(mesh, midside.mean(axis=1), grads)


def cr_interpolate(f, mesh, sides, degree=3, subdiv=0):
    """Elementwise affine interpolant matching side integral means.

    Adjacent elements share the computed side mean, so interior jump means
    of the result vanish identically and the broken gradient equals the
    elementwise mean of the gradient of ``f`` (up to side quadrature).
    """
    means = quadrature.side_means(f, sides, degree=degree, subdiv=subdiv)
    return dg_from_midside(mesh, sides, means[sides.tri_sides])


def rt_from_fluxes(mesh, sides, flux):
    """Assemble a broken flux field from per-side normal fluxes.

    ``flux[s]`` is the constant normal component on side ``s`` with respect
    to the stored normal; both adjacent elements receive the same value, so
    the result has continuous normal traces.
    """
    f_out = flux[sides.tri_sides] * sides.tri_side_sign
    lens = sides.length[sides.tri_sides]
    corners = mesh.corner_coords()
    divs = np.einsum("ti,ti->t", f_out, lens) / mesh.areas
    vals = np.einsum(
        "ti,tid->td",
        f_out * lens,
        mesh.barycenters[:, None, :] - corners,
    ) / (2.0 * mesh.areas[:, None])
    return RTField(mesh, vals, divs)


def rt_interpolate(f, mesh, sides, degree=3, subdiv=0):
    """Broken flux interpolant with side fluxes equal to side means of f . n.

    The divergence of the result is the elementwise mean of ``div f`` (up to
    side quadrature), and normal traces are continuous across interior sides.
    """
    flux = quadrature.side_means(f, sides, degree=degree, subdiv=subdiv, normal_component=True)
    return rt_from_fluxes(mesh, sides, flux)


def ibp_terms(u, z, sides):
    """The four terms of the broken integration-by-parts identity.

    Returns ``(vol_div, vol_grad, side_jump_u, side_jump_flux)`` with

    * ``vol_div = integral of u div z``
    * ``vol_grad = integral of grad_h u . z``
    * ``side_jump_u = sum over non-Neumann sides of jump-mean(u) {z.n} |S|``
    * ``side_jump_flux = sum over non-Dirichlet sides of {u} jump(z.n) |S|``

    All four are exact for these field types: volume integrands reduce to
    barycenter values, side traces are affine with constant flux factors.
    """
    _require_same_mesh(u, sides)
    _require_same_mesh(z, sides)
    mesh = u.mesh
    vol_div = float(np.sum(mesh.areas * u.values * z.divergences))
    vol_grad = float(np.sum(mesh.areas * np.einsum("td,td->t", u.gradients, z.values)))
    tu = side_traces_dg(u, sides)
    tz = side_traces_rt(z, sides)
    m1 = sides.tag != NEUMANN
    m2 = sides.tag != DIRICHLET
    s1 = float(np.sum(tu.jump[m1] * tz.average[m1] * sides.length[m1]))
    s2 = float(np.sum(tu.average[m2] * tz.jump[m2] * sides.length[m2]))
    return vol_div, vol_grad, s1, s2


def ibp_residual(u, z, sides):
    """Residual of the broken integration-by-parts identity (zero up to rounding)."""
    vol_div, vol_grad, s1, s2 = ibp_terms(u, z, sides)
    return vol_div + vol_grad - s1 - s2


def write_dg_text(u, stream):
    """Plain-text dump, one line per element: ``T u(x_T) g1 g2``."""
    close = False
    if isinstance(stream, (str, bytes)):
        stream = open(stream, "w")
        close = True
    try:
        for t in range(u.mesh.n_triangles):
            g = u.gradients[t]
            stream.write(f"{t} {u.values[t]:.17g} {g[0]:.17g} {g[1]:.17g}\n")
    finally:
        if close:
            stream.close()


def write_rt_text(z, stream):
    """Plain-text dump, one line per element: ``T a1 a2 b``."""
    close = False
    if isinstance(stream, (str, bytes)):
        stream = open(stream, "w")
        close = True
    try:
        for t in range(z.mesh.n_triangles):
            a = z.values[t]
            stream.write(f"{t} {a[0]:.17g} {a[1]:.17g} {z.divergences[t]:.17g}\n")
    finally:
        if close:
            stream.close()
