"""Benchmark catalog: data, exact solutions, parameter grids, error norms.

Three problem classes on square domains with known minimizers: a smooth
linear model problem, total-variation denoising of a disc indicator with a
piecewise-constant minimizer, and an obstacle problem with a radially
symmetric contact set and inhomogeneous boundary values.

Exact dual fields are provided where known.  For the denoising problem the
radial flux field is stored with the interior branch negated relative to the
usual way it is printed: only then is the normal trace continuous across the
interface and the dual energy equal to the primal one, which is asserted at
catalog build time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import fem, quadrature
from .functionals import ProblemSpec, circle_cut_elements
from .mesh import all_dirichlet, side_topology

SELECTORS = ("brokenH1_vs_exact", "L2_pi0", "brokenH1_vs_interp")

TV_RADIUS = 0.5
TV_FIDELITY = 10.0
TV_PLATEAU = max(1.0 - 2.0 / (TV_FIDELITY * TV_RADIUS), 0.0)


@dataclass(frozen=True)
class ExperimentCase:
    """One benchmark: problem data, exact solutions, and run grid."""

    name: str
    spec: ProblemSpec
    domain: Tuple[float, float, float, float]
    exact: Callable
    exact_gradient: Optional[Callable]
    exact_dual: Optional[Callable]
    exact_dual_div: Optional[Callable]
    selector: str
    levels: range
    gammas: Tuple[float, ...]
    c_alphas: Tuple[float, ...]
    rs: Tuple[float, ...]
    jump: str


@dataclass(frozen=True)
class ErrorRecord:
    """One convergence-table row."""

    level: int
    n_elements: int
    h: float
    error: float
    eoc: float


def poisson_exact(x):
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def poisson_gradient(x):
    x = np.asarray(x, dtype=float)
    s1 = np.sin(np.pi * x[..., 0])
    c1 = np.cos(np.pi * x[..., 0])
    s2 = np.sin(np.pi * x[..., 1])
    c2 = np.cos(np.pi * x[..., 1])
    return np.pi * np.stack([c1 * s2, s1 * c2], axis=-1)


def poisson_load(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * np.pi**2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def poisson_laplacian(x):
    x = np.asarray(x, dtype=float)
    return -2.0 * np.pi**2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def tv_datum(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return np.where(r < TV_RADIUS, 1.0, 0.0)


def tv_exact(x):
    return TV_PLATEAU * tv_datum(x)


def tv_dual(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.maximum(r, TV_RADIUS)
    return np.where(r <= TV_RADIUS, -x / TV_RADIUS, -TV_RADIUS * x / safe**2)


def tv_dual_div(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return np.where(r <= TV_RADIUS, -2.0 / TV_RADIUS, 0.0)


def obstacle_exact(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    rr = np.maximum(r, 1.0)
    return np.where(r >= 1.0, 0.5 * rr**2 - np.log(rr) - 0.5, 0.0)


def obstacle_gradient(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    rr = np.maximum(r, 1.0)
    return np.where(r >= 1.0, (1.0 - 1.0 / rr**2) * x, 0.0)


def obstacle_load(x):
    x = np.asarray(x, dtype=float)
    return np.full(x.shape[:-1], -2.0)


def obstacle_obstacle(x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1])


def obstacle_laplacian(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return np.where(r >= 1.0, 2.0, 0.0)


def obstacle_dual_div(x):
    return obstacle_laplacian(x)


def _fd_laplacian(f, pts, h=1e-4):
    acc = -4.0 * f(pts)
    for d in (np.array([h, 0.0]), np.array([0.0, h])):
        acc = acc + f(pts + d) + f(pts - d)
    return acc / h**2


def _fd_divergence(z, pts, h=1e-5):
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    dx = (z(pts + ex)[..., 0] - z(pts - ex)[..., 0]) / (2.0 * h)
    dy = (z(pts + ey)[..., 1] - z(pts - ey)[..., 1]) / (2.0 * h)
    return dx + dy


def _polar_grid(r0, r1, n_r=64, n_t=256):
    q, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (r1 - r0) * (q + 1.0) + r0
    wr = 0.5 * (r1 - r0) * w
    t = (np.arange(n_t) + 0.5) * (2.0 * np.pi / n_t)
    wt = 2.0 * np.pi / n_t
    rr, tt = np.meshgrid(r, t, indexing="ij")
    pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
    weights = (wr[:, None] * rr) * wt
    return pts.reshape(-1, 2), weights.ravel()


def tv_continuous_energies(n_r=64, n_t=256):
    """Primal and dual energies of the denoising benchmark by quadrature.

    The total-variation measure of the piecewise-constant minimizer lives on
    the interface circle and equals perimeter times plateau height; the
    remaining integrals are evaluated pointwise over the disc (both
    integrands vanish identically outside it).
    """
    c = TV_PLATEAU
    primal_tv = 2.0 * np.pi * TV_RADIUS * c
    pts, w = _polar_grid(0.0, TV_RADIUS, n_r=n_r, n_t=n_t)
    mis = tv_exact(pts) - tv_datum(pts)
    primal = primal_tv + 0.5 * TV_FIDELITY * float(np.sum(w * mis * mis))
    dv = tv_dual_div(pts)
    dual = -float(np.sum(w * (tv_datum(pts) * dv + dv**2 / (2.0 * TV_FIDELITY))))
    return primal, dual


def _interior_points(rng, domain, n, margin=0.05):
    x0, x1, y0, y1 = domain
    dx = (x1 - x0) * margin
    dy = (y1 - y0) * margin
    return np.column_stack(
        [
            rng.uniform(x0 + dx, x1 - dx, size=n),
            rng.uniform(y0 + dy, y1 - dy, size=n),
        ]
    )


def _validate_poisson(case, rng):
    pts = _interior_points(rng, case.domain, 100)
    res = np.abs(-poisson_laplacian(pts) - case.spec.f(pts))
    scale = max(1.0, float(np.max(np.abs(case.spec.f(pts)))))
    if np.max(res) > 1e-12 * scale:
        raise AssertionError("load is not the negative laplacian of the solution")
    fd = np.abs(_fd_laplacian(poisson_exact, pts) - poisson_laplacian(pts))
    if np.max(fd) > 1e-4 * scale:
        raise AssertionError("closed-form laplacian disagrees with finite differences")


def _validate_tv(case, rng):
    pts = _interior_points(rng, case.domain, 200, margin=0.01)
    zn = np.linalg.norm(tv_dual(pts), axis=-1)
    if np.max(zn) > 1.0 + 1e-12:
        raise AssertionError("dual field leaves the unit ball")
    # divergence check away from the interface circle, where the field is smooth
    r = np.linalg.norm(pts, axis=-1)
    away = np.abs(r - TV_RADIUS) > 0.05
    fd = _fd_divergence(tv_dual, pts[away])
    if np.max(np.abs(fd - tv_dual_div(pts[away]))) > 1e-5:
        raise AssertionError("closed-form divergence disagrees with finite differences")
    primal, dual = tv_continuous_energies()
    if abs(primal - dual) > 1e-4 * abs(primal):
        raise AssertionError("continuous energies do not agree")


def _validate_obstacle(case, rng):
    pts = _interior_points(rng, case.domain, 200, margin=0.01)
    u = obstacle_exact(pts)
    if np.min(u) < 0.0:
        raise AssertionError("exact solution dips below the obstacle")
    r = np.linalg.norm(pts, axis=-1)
    out = r > 1.05
    res = np.abs(-obstacle_laplacian(pts[out]) - case.spec.f(pts[out]))
    if np.max(res, initial=0.0) > 1e-12 * 2.0:
        raise AssertionError("load mismatch outside the contact set")
    fd = np.abs(_fd_laplacian(obstacle_exact, pts[out]) - obstacle_laplacian(pts[out]))
    if np.max(fd, initial=0.0) > 1e-4:
        raise AssertionError("closed-form laplacian disagrees with finite differences")
    x0, x1, y0, y1 = case.domain
    t = rng.uniform(x0, x1, size=50)
    bpts = np.concatenate(
        [
            np.column_stack([t, np.full(50, y0)]),
            np.column_stack([t, np.full(50, y1)]),
            np.column_stack([np.full(50, x0), t]),
            np.column_stack([np.full(50, x1), t]),
        ]
    )
    if np.max(np.abs(obstacle_exact(bpts) - case.spec.u_dirichlet(bpts))) > 1e-12:
        raise AssertionError("boundary datum mismatch")


_CATALOG = None


def catalog():
    """The three benchmark cases; exact-solution sanity runs on first build."""
    global _CATALOG
    if _CATALOG is not None:
        return _CATALOG
    poisson = ExperimentCase(
        name="poisson",
        spec=ProblemSpec("poisson", f=poisson_load, dirichlet=all_dirichlet),
        domain=(-1.0, 1.0, -1.0, 1.0),
        exact=poisson_exact,
        exact_gradient=poisson_gradient,
        exact_dual=poisson_gradient,
        exact_dual_div=lambda x: -poisson_load(x),
        selector="brokenH1_vs_exact",
        levels=range(2, 8),
        gammas=(0.5, 1.0, 1.5, 2.0),
        c_alphas=(1.0, 0.25),
        rs=(2.0,),
        jump="full",
    )
    tv = ExperimentCase(
        name="tv",
        spec=ProblemSpec(
            "tv",
            g=tv_datum,
            fidelity=TV_FIDELITY,
            dirichlet=all_dirichlet,
            cut_radius=TV_RADIUS,
        ),
        domain=(-1.0, 1.0, -1.0, 1.0),
        exact=tv_exact,
        exact_gradient=None,
        exact_dual=tv_dual,
        exact_dual_div=tv_dual_div,
        selector="L2_pi0",
        levels=range(2, 7),
        gammas=(0.0, 1.0, 2.0),
        c_alphas=(0.1,),
        rs=(1.0, 2.0),
        jump="mean",
    )
    obstacle = ExperimentCase(
        name="obstacle",
        spec=ProblemSpec(
            "obstacle",
            f=obstacle_load,
            chi=obstacle_obstacle,
            u_dirichlet=obstacle_exact,
            dirichlet=all_dirichlet,
            cut_radius=1.0,
        ),
        domain=(-1.5, 1.5, -1.5, 1.5),
        exact=obstacle_exact,
        exact_gradient=obstacle_gradient,
        exact_dual=obstacle_gradient,
        exact_dual_div=obstacle_dual_div,
        selector="brokenH1_vs_interp",
        levels=range(2, 7),
        gammas=(1.0, 1.5),
        c_alphas=(1.0, 0.25),
        rs=(2.0,),
        jump="full",
    )
    rng = np.random.default_rng(0x5EED)
    _validate_poisson(poisson, rng)
    _validate_tv(tv, rng)
    _validate_obstacle(obstacle, rng)
    _CATALOG = [poisson, tv, obstacle]
    return _CATALOG


def case_by_name(name):
    for case in catalog():
        if case.name == name:
            return case
    raise KeyError(f"unknown experiment {name!r}")


def error_norms(
    u_exact,
    u_h,
    mesh,
    selector,
    exact_gradient=None,
    sides=None,
    cut_radius=None,
    degree=5,
    subdiv_levels=4,
):
    """Error of an elementwise-affine approximation against an exact solution.

    ``brokenH1_vs_exact`` is the broken gradient error, ``L2_pi0`` the L2
    distance of the exact solution to the elementwise means of the
    approximation, ``brokenH1_vs_interp`` the broken gradient distance to the
    midside-mean interpolant of the exact solution (exact, no volume
    quadrature).  Elements cut by the circle of radius ``cut_radius`` are
    integrated on a dyadically refined subgrid.
    """
    if selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}")
    mask = circle_cut_elements(mesh, cut_radius) if cut_radius is not None else None
    areas = mesh.areas

    def integrate(f):
        return quadrature.integrate_elementwise(
            f, mesh, degree=degree, subdiv_mask=mask, subdiv_levels=subdiv_levels
        )

    if selector == "brokenH1_vs_exact":
        if exact_gradient is None:
            raise ValueError("selector needs the exact gradient")
        int_g = integrate(exact_gradient)
        int_g2 = integrate(
            lambda x: np.einsum("...d,...d->...", exact_gradient(x), exact_gradient(x))
        )
        G = u_h.gradients
        e2 = (
            float(np.sum(int_g2))
            - 2.0 * float(np.sum(np.einsum("td,td->t", G, int_g)))
            + float(np.sum(areas * np.einsum("td,td->t", G, G)))
        )
        return math.sqrt(max(e2, 0.0))
    if selector == "L2_pi0":
        int_u = integrate(u_exact)
        int_u2 = integrate(lambda x: u_exact(x) ** 2)
        ub = u_h.values
        e2 = (
            float(np.sum(int_u2))
            - 2.0 * float(np.sum(ub * int_u))
            + float(np.sum(areas * ub * ub))
        )
        return math.sqrt(max(e2, 0.0))
    if sides is None:
        sides = side_topology(mesh)
    subdiv = 2 if cut_radius is not None else 0
    iu = fem.cr_interpolate(u_exact, mesh, sides, degree=degree, subdiv=subdiv)
    d = u_h.gradients - iu.gradients
    return math.sqrt(float(np.sum(areas * np.einsum("td,td->t", d, d))))


def eoc_sequence(errors):
    """log2 ratios of consecutive errors under uniform halving."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(e[:-1] / e[1:])


def observed_order(errors):
    """Median of the last three consecutive-level rate estimates."""
    q = eoc_sequence(errors)
    q = q[np.isfinite(q)]
    if len(q) == 0:
        return float("nan")
    return float(np.median(q[-3:]))
