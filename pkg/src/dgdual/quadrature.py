"""Quadrature rules on segments and triangles, with dyadic subdivision.

Segment rules are Gauss-Legendre on [0, 1] with weights summing to one.
Triangle rules are given in barycentric coordinates with weights summing
to one; degrees 1, 2 and 5 are provided.  Elements or sides crossing a
data discontinuity can be subdivided dyadically before applying the base
rule.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

_SQRT15 = np.sqrt(15.0)

# 7-point degree-5 rule
_A1 = (6.0 - _SQRT15) / 21.0
_A2 = (6.0 + _SQRT15) / 21.0
_W1 = (155.0 - _SQRT15) / 1200.0
_W2 = (155.0 + _SQRT15) / 1200.0

_TRI_RULES = {
    1: (
        np.array([[1 / 3, 1 / 3, 1 / 3]]),
        np.array([1.0]),
    ),
    2: (
        np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]),
        np.array([1 / 3, 1 / 3, 1 / 3]),
    ),
    5: (
        np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [_A1, _A1, 1.0 - 2.0 * _A1],
                [_A1, 1.0 - 2.0 * _A1, _A1],
                [1.0 - 2.0 * _A1, _A1, _A1],
                [_A2, _A2, 1.0 - 2.0 * _A2],
                [_A2, 1.0 - 2.0 * _A2, _A2],
                [1.0 - 2.0 * _A2, _A2, _A2],
            ]
        ),
        np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2]),
    ),
}


def segment_rule(degree):
    """Gauss points and weights on [0, 1], exact for the given degree."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    n = max(1, (int(degree) + 2) // 2)
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree):
    """Barycentric points and weights, exact for the given degree."""
    for d in sorted(_TRI_RULES):
        if degree <= d:
            return _TRI_RULES[d]
    raise ValueError(f"no triangle rule of degree {degree} (max 5)")


def refine_triangles(corners):
    """One dyadic refinement of a stack of triangles, (m,3,2) -> (4m,3,2)."""
    A = corners[:, 0]
    B = corners[:, 1]
    C = corners[:, 2]
    mAB = 0.5 * (A + B)
    mBC = 0.5 * (B + C)
    mCA = 0.5 * (C + A)
    out = np.empty((4 * len(corners), 3, 2))
    out[0::4] = np.stack([A, mAB, mCA], axis=1)
    out[1::4] = np.stack([mAB, B, mBC], axis=1)
    out[2::4] = np.stack([mCA, mBC, C], axis=1)
    out[3::4] = np.stack([mAB, mBC, mCA], axis=1)
    return out


def _eval_on_triangles(f, corners, degree):
    """Integrals of f over a stack of triangles, one value (or 2-vector) each."""
    bary, w = triangle_rule(degree)
    pts = np.einsum("kb,mbd->mkd", bary, corners)
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    vals = np.asarray(f(pts.reshape(-1, 2)))
    if vals.ndim == 1:
        vals = vals.reshape(len(corners), len(w))
        return np.einsum("mk,k->m", vals, w) * area
    vals = vals.reshape(len(corners), len(w), -1)
    return np.einsum("mkd,k->md", vals, w) * area[:, None]


def integrate_elementwise(f, mesh, degree=2, subdiv_mask=None, subdiv_levels=4):
    """Per-element integrals of a pointwise function.

    Parameters
    ----------
    f : callable mapping (N, 2) points to (N,) scalars or (N, 2) vectors.
    degree : polynomial exactness of the base triangle rule.
    subdiv_mask : optional boolean element mask; masked elements are split
        ``subdiv_levels`` times dyadically before quadrature (for integrands
        with a curve discontinuity).
    """
    corners = mesh.corner_coords()
    out = _eval_on_triangles(f, corners, degree)
    if subdiv_mask is not None and np.any(subdiv_mask):
        idx = np.flatnonzero(subdiv_mask)
        sub = corners[idx]
        for _ in range(subdiv_levels):
            sub = refine_triangles(sub)
        pieces = _eval_on_triangles(f, sub, degree)
        nchild = 4 ** subdiv_levels
        if pieces.ndim == 1:
            out[idx] = pieces.reshape(len(idx), nchild).sum(axis=1)
        else:
            out[idx] = pieces.reshape(len(idx), nchild, -1).sum(axis=1)
    return out


def segment_points(degree, subdiv=0):
    """Composite Gauss parameters and weights on [0, 1] (weights sum to 1)."""
    t, w = segment_rule(degree)
    if subdiv <= 0:
        return t, w
    n = 1 << int(subdiv)
    offs = np.arange(n) / n
    tt = (offs[:, None] + t[None, :] / n).ravel()
    ww = np.tile(w / n, n)
    return tt, ww


def side_means(f, sides, degree=3, subdiv=0, normal_component=False):
    """Integral means of f over every side.

    With ``normal_component`` the function must return (N, 2) vectors and the
    mean of ``f . n_S`` (stored normal) is taken.
    """
    t, w = segment_points(degree, subdiv)
    p0 = sides.mesh.vertices[sides.ends[:, 0]]
    p1 = sides.mesh.vertices[sides.ends[:, 1]]
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    vals = np.asarray(f(pts.reshape(-1, 2)))
    if normal_component:
        vals = vals.reshape(sides.n_sides, len(t), 2)
        vn = np.einsum("skd,sd->sk", vals, sides.normal)
        return np.einsum("sk,k->s", vn, w)
    vals = vals.reshape(sides.n_sides, len(t))
    return np.einsum("sk,k->s", vals, w)


def triangle_samples(rng, corners, n):
    """Uniform random points in each triangle of a (m,3,2) stack, (m,n,2)."""
    u = rng.random((len(corners), n))
    v = rng.random((len(corners), n))
    flip = u + v > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    A = corners[:, None, 0]
    return A + u[..., None] * (corners[:, None, 1] - A) + v[..., None] * (
        corners[:, None, 2] - A
    )
