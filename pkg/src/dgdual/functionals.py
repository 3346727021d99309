"""Penalty functionals, power conjugates, discrete energies and duality gaps.

Extended-real values are plain floats with ``math.inf``: every combination
arising here is {finite, +inf} for primal energies minus {finite, -inf} for
dual energies, which IEEE arithmetic evaluates without NaN, so the float is
a faithful tagged (finite | +inf | -inf) value.

Penalty weights are powers of the side length, ``alpha_S = c_alpha h_S^gamma``
and ``beta_S = c_beta h_S^sigma``.  Jump penalties come in two flavours:
``mean`` penalizes the side-integral mean of the jump, ``full`` integrates
the affine jump along the side (two-point Gauss, exact for squared jumps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fem, quadrature
from .mesh import DIRICHLET, NEUMANN, all_dirichlet

INF = math.inf

_BALL_SLACK = 1e-12

# two-point Gauss on [0,1], exact through cubics
_T_GAUSS2 = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
_W_GAUSS2 = np.array([0.5, 0.5])


def _conjugate_exponent(p):
    if p <= 1.0:
        return INF
    return p / (p - 1.0)


@dataclass(frozen=True)
class PenaltyParams:
    """Side penalty exponents and weights."""

    r: float = 2.0
    s: float = 2.0
    c_alpha: float = 1.0
    gamma: float = 0.0
    c_beta: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.r < 1.0 or self.s < 1.0:
            raise ValueError("exponents r, s must be >= 1")
        if self.c_alpha < 0.0 or self.c_beta < 0.0:
            raise ValueError("weight constants must be nonnegative")

    @property
    def r_conj(self):
        return _conjugate_exponent(self.r)

    @property
    def s_conj(self):
        return _conjugate_exponent(self.s)

    def alpha(self, sides):
        return self.c_alpha * sides.length ** self.gamma

    def beta(self, sides):
        return self.c_beta * sides.length ** self.sigma


def _reg_abs(x, eps):
    if eps == 0.0:
        return np.abs(x)
    return np.hypot(x, eps)


def _jump_samples(u, sides, variant):
    """Jump values and quadrature weights along each side, shape (ns, k)."""
    if variant == "mean":
        tr = fem.side_traces_dg(u, sides)
        return tr.jump[:, None], np.array([1.0])
    if variant == "full":
        ej = fem.endpoint_jumps(u, sides)
        vals = ej[:, 0:1] * (1.0 - _T_GAUSS2)[None, :] + ej[:, 1:2] * _T_GAUSS2[None, :]
        return vals, _W_GAUSS2
    raise ValueError(f"unknown jump variant {variant!r}")


def penalty_J(u, sides, params, variant="mean", eps=0.0, tol=None):
    """Primal side penalty.

    ``(1/r) sum over non-Neumann sides of alpha_S^{-r} |jump|^r h_S``
    plus ``(1/s) sum over non-Dirichlet sides of beta_S^s |avg|^s h_S``.
    Sides with ``alpha_S = 0`` act as a constraint: any nonvanishing jump
    mean there gives +inf.  ``eps`` regularizes the jump modulus.
    """
    m1 = sides.tag != NEUMANN
    total = 0.0
    if np.any(m1):
        alpha = params.alpha(sides)[m1]
        h = sides.length[m1]
        jumps, w = _jump_samples(u, sides, variant)
        jumps = jumps[m1]
        if tol is None:
            scale = float(np.max(np.abs(u.corner_values()), initial=0.0))
            tol = 1e-12 * max(1.0, scale)
        zero_a = alpha == 0.0
        if np.any(zero_a):
            if np.max(np.abs(jumps[zero_a]), initial=0.0) > tol:
                return INF
        act = ~zero_a
        if np.any(act):
            mod = _reg_abs(jumps[act], eps)
            contrib = np.einsum("sk,k->s", mod ** params.r, w) * h[act] * alpha[act] ** (
                -params.r
            )
            total += contrib.sum() / params.r

    m2 = sides.tag != DIRICHLET
    if np.any(m2) and params.c_beta != 0.0:
        beta = params.beta(sides)[m2]
        tr = fem.side_traces_dg(u, sides)
        avg = tr.average[m2]
        total += float(
            np.sum(beta ** params.s * np.abs(avg) ** params.s * sides.length[m2])
        ) / params.s
    return total


def penalty_K(z, sides, params, tol=None):
    """Dual side penalty with conjugate exponents.

    First term over non-Neumann sides in ``{z.n}`` with weight ``alpha_S``;
    for r = 1 it degenerates to the indicator of ``sup alpha_S |{z.n}| <= 1``.
    Second term over non-Dirichlet sides in the normal jump with weight
    ``beta_S^{-1}``; where ``beta_S = 0`` it is the indicator of a continuous
    normal trace (conformity).
    """
    tr = fem.side_traces_rt(z, sides)
    if tol is None:
        scale = max(np.max(np.abs(tr.average), initial=0.0), np.max(np.abs(tr.jump), initial=0.0))
        tol = 1e-12 * max(1.0, scale)
    total = 0.0

    m1 = sides.tag != NEUMANN
    if np.any(m1):
        alpha = params.alpha(sides)[m1]
        avg = tr.average[m1]
        h = sides.length[m1]
        if params.r == 1.0:
            if np.max(np.abs(alpha * avg), initial=0.0) > 1.0 + _BALL_SLACK:
                return INF
        else:
            rc = params.r_conj
            total += float(np.sum(alpha ** rc * np.abs(avg) ** rc * h)) / rc

    m2 = sides.tag != DIRICHLET
    if np.any(m2):
        beta = params.beta(sides)[m2]
        jmp = tr.jump[m2]
        h = sides.length[m2]
        zero_b = beta == 0.0
        if np.any(zero_b):
            if np.max(np.abs(jmp[zero_b]), initial=0.0) > tol:
                return INF
        act = ~zero_b
        if np.any(act):
            if params.s == 1.0:
                if np.max(np.abs(jmp[act] / beta[act]), initial=0.0) > 1.0 + _BALL_SLACK:
                    return INF
            else:
                sc = params.s_conj
                total += float(
                    np.sum(beta[act] ** (-sc) * np.abs(jmp[act]) ** sc * h[act])
                ) / sc
    return total


def power_value(c, sigma, v):
    """g(v) = (1/sigma) c^sigma |v|^sigma for c >= 0, sigma >= 1."""
    if c < 0.0 or sigma < 1.0:
        raise ValueError("need c >= 0 and sigma >= 1")
    n = float(np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float))))
    return (c ** sigma) * n ** sigma / sigma


def power_conjugate(c, sigma, w):
    """Conjugate of the power function g(v) = (1/sigma) c^sigma |v|^sigma.

    For sigma > 1 this is ``(1/sigma') c^{-sigma'} |w|^{sigma'}``; for
    sigma = 1 the indicator of the ball ``|w| <= c``.
    """
    if c < 0.0 or sigma < 1.0:
        raise ValueError("need c >= 0 and sigma >= 1")
    n = float(np.linalg.norm(np.atleast_1d(np.asarray(w, dtype=float))))
    if sigma == 1.0:
        return 0.0 if n <= c * (1.0 + _BALL_SLACK) else INF
    sc = _conjugate_exponent(sigma)
    if c == 0.0:
        return 0.0 if n == 0.0 else INF
    return c ** (-sc) * n ** sc / sc


@dataclass(eq=False)
class ProblemSpec:
    """Data of one variational problem class.

    ``tag`` selects the energy pair: "poisson" (quadratic gradient energy,
    linear load), "tv" (regularized total variation with L2 fidelity), or
    "obstacle" (quadratic energy with a pointwise lower bound; with a
    boundary datum the homogeneous transformed form is used).
    """

    tag: str
    f: Optional[Callable] = None
    g: Optional[Callable] = None
    fidelity: float = 1.0
    chi: Optional[Callable] = None
    u_dirichlet: Optional[Callable] = None
    epsilon: float = 0.0
    dirichlet: Callable = all_dirichlet
    cut_radius: Optional[float] = None
    quad_degree: int = 5

    def __post_init__(self):
        if self.tag not in ("poisson", "tv", "obstacle"):
            raise ValueError(f"unknown problem tag {self.tag!r}")
        if self.tag == "poisson" and self.f is None:
            raise ValueError("poisson needs a load f")
        if self.tag == "tv":
            if self.g is None:
                raise ValueError("tv needs a datum g")
            if self.fidelity <= 0.0:
                raise ValueError("tv fidelity weight must be positive")
        if self.tag == "obstacle" and self.f is None:
            raise ValueError("obstacle needs a load f")


def circle_cut_elements(mesh, radius):
    """Elements whose interior crosses the circle |x| = radius."""
    corners = mesh.corner_coords()
    dist = np.linalg.norm(corners, axis=2)
    dmax = dist.max(axis=1)
    dmin = np.full(mesh.n_triangles, np.inf)
    for i in range(3):
        p = corners[:, i]
        q = corners[:, (i + 1) % 3]
        d = q - p
        denom = np.einsum("td,td->t", d, d)
        t = np.clip(-np.einsum("td,td->t", p, d) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
        proj = p + t[:, None] * d
        dmin = np.minimum(dmin, np.linalg.norm(proj, axis=1))
    # origin strictly inside an element makes the minimum distance zero
    s = np.ones(mesh.n_triangles, dtype=bool)
    for i in range(3):
        p = corners[:, i]
        q = corners[:, (i + 1) % 3]
        cross = (q[:, 0] - p[:, 0]) * (-p[:, 1]) - (q[:, 1] - p[:, 1]) * (-p[:, 0])
        s &= cross >= 0.0
    dmin[s] = 0.0
    return (dmin < radius) & (radius < dmax)


_DATA_CACHE: dict = {}


class _ProblemData:
    """Per-mesh discretized data of a ProblemSpec (cached)."""

    def __init__(self, spec, mesh, sides):
        deg = spec.quad_degree
        mask = None
        if spec.cut_radius is not None:
            mask = circle_cut_elements(mesh, spec.cut_radius)
        self.cut_mask = mask
        self.f_bar = (
            fem.pi0_project(spec.f, mesh, degree=deg, subdiv_mask=mask)
            if spec.f is not None
            else np.zeros(mesh.n_triangles)
        )
        self.g_bar = (
            fem.pi0_project(spec.g, mesh, degree=deg, subdiv_mask=mask)
            if spec.g is not None
            else None
        )
        self.chi_bar = (
            fem.pi0_project(spec.chi, mesh, degree=deg, subdiv_mask=mask)
            if spec.chi is not None
            else np.zeros(mesh.n_triangles)
        )
        if spec.u_dirichlet is not None:
            self.ud = fem.cr_interpolate(spec.u_dirichlet, mesh, sides, degree=deg)
            self.chi_tilde = self.chi_bar - self.ud.values
            self.w_shift = self.ud.gradients
        else:
            self.ud = None
            self.chi_tilde = self.chi_bar
            self.w_shift = np.zeros((mesh.n_triangles, 2))


def problem_data(spec, mesh, sides):
    key = (id(spec), id(mesh), id(sides))
    hit = _DATA_CACHE.get(key)
    if hit is not None and hit[0] is spec and hit[1] is mesh and hit[2] is sides:
        return hit[3]
    data = _ProblemData(spec, mesh, sides)
    _DATA_CACHE[key] = (spec, mesh, sides, data)
    return data


def primal_energy(spec, u, sides, params, variant="mean", eps=None):
    """Discrete primal energy of the spec's problem class.

    ``eps`` overrides the spec's regularization (TV only); the jump penalty
    uses the same regularized modulus as the volume term.
    """
    mesh = u.mesh
    data = problem_data(spec, mesh, sides)
    areas = mesh.areas
    grads = u.gradients
    if spec.tag == "poisson":
        vol = 0.5 * float(np.sum(areas * np.einsum("td,td->t", grads, grads)))
        load = float(np.sum(areas * data.f_bar * u.values))
        return vol - load + penalty_J(u, sides, params, variant=variant)
    if spec.tag == "tv":
        e = spec.epsilon if eps is None else eps
        gn = np.linalg.norm(grads, axis=1)
        vol = float(np.sum(areas * _reg_abs(gn, e)))
        mis = u.values - data.g_bar
        fid = 0.5 * spec.fidelity * float(np.sum(areas * mis * mis))
        return vol + fid + penalty_J(u, sides, params, variant=variant, eps=e)
    if spec.tag == "obstacle":
        lo = data.chi_tilde
        scale = max(
            1.0,
            float(np.max(np.abs(lo), initial=0.0)),
            float(np.max(np.abs(u.values), initial=0.0)),
        )
        if np.min(u.values - lo, initial=0.0) < -1e-12 * scale:
            return INF
        vol = 0.5 * float(np.sum(areas * np.einsum("td,td->t", grads, grads)))
        load = float(np.sum(areas * data.f_bar * u.values))
        cross = float(np.sum(areas * np.einsum("td,td->t", data.w_shift, grads)))
        return vol - load + cross + penalty_J(u, sides, params, variant=variant)
    raise ValueError(spec.tag)


def dual_energy(spec, z, sides, params, feas_tol=None):
    """Discrete dual energy; -inf when a constraint indicator is violated.

    ``feas_tol`` loosens the divergence-constraint indicators, needed when z
    is an interpolated certificate carrying side-quadrature error.
    """
    mesh = z.mesh
    data = problem_data(spec, mesh, sides)
    areas = mesh.areas
    a = z.values
    b = z.divergences
    K = penalty_K(z, sides, params)
    if K == INF:
        return -INF
    if spec.tag == "poisson":
        fscale = max(1.0, float(np.max(np.abs(data.f_bar), initial=0.0)))
        tol = 1e-10 * fscale if feas_tol is None else feas_tol
        if np.max(np.abs(b + data.f_bar), initial=0.0) > tol:
            return -INF
        return -0.5 * float(np.sum(areas * np.einsum("td,td->t", a, a))) - K
    if spec.tag == "tv":
        if np.max(np.linalg.norm(a, axis=1), initial=0.0) > 1.0 + _BALL_SLACK:
            return -INF
        al = spec.fidelity
        t = b + al * data.g_bar
        val = -float(np.sum(areas * t * t)) / (2.0 * al)
        val += 0.5 * al * float(np.sum(areas * data.g_bar**2))
        return val - K
    if spec.tag == "obstacle":
        fscale = max(1.0, float(np.max(np.abs(data.f_bar), initial=0.0)))
        tol = 1e-12 * fscale if feas_tol is None else feas_tol
        t = b + data.f_bar
        if np.max(t, initial=0.0) > tol:
            return -INF
        d = a - data.w_shift
        val = -0.5 * float(np.sum(areas * np.einsum("td,td->t", d, d)))
        val -= float(np.sum(areas * data.chi_tilde * t))
        return val - K
    raise ValueError(spec.tag)


def reconstruct_dual(spec, u, sides, params):
    """Flux reconstruction from a minimizer of the mean-jump primal energy.

    ``a_T`` is the gradient of the volume density at the broken gradient and
    ``b_T`` the derivative of the zero-order density at the element mean, so
    the result satisfies the dual divergence constraint exactly.  Returns the
    field and a diagnostics dict with the maximal interior normal-jump mean
    and the maximal defect of the side relation
    ``alpha_S^{-2} jump-mean(u) = {z.n}``.
    """
    if params.r != 2.0 or params.s != 2.0 or params.c_beta != 0.0:
        raise ValueError("reconstruction requires r = s = 2 and beta = 0")
    mesh = u.mesh
    data = problem_data(spec, mesh, sides)
    if spec.tag == "poisson":
        a = np.array(u.gradients)
        b = -data.f_bar
    elif spec.tag == "tv":
        # experimental: requires eps-smoothing of volume and jump terms
        e = spec.epsilon
        if e <= 0.0:
            raise ValueError("tv reconstruction needs a positive regularization")
        gn = _reg_abs(np.linalg.norm(u.gradients, axis=1), e)
        a = u.gradients / gn[:, None]
        b = spec.fidelity * (u.values - data.g_bar)
    else:
        raise ValueError("reconstruction needs a differentiable zero-order term")
    z = fem.RTField(mesh, a, b)
    tz = fem.side_traces_rt(z, sides)
    tu = fem.side_traces_dg(u, sides)
    m2 = sides.tag != DIRICHLET
    m1 = sides.tag != NEUMANN
    alpha = params.alpha(sides)
    with np.errstate(divide="ignore"):
        rel = np.where(alpha > 0, alpha, 1.0) ** (-2.0) * tu.jump + tz.average
    diag = {
        "max_flux_jump": float(np.max(np.abs(tz.jump[m2]), initial=0.0)),
        "max_side_residual": float(np.max(np.abs(rel[m1]), initial=0.0)),
    }
    return z, diag


def duality_gap(spec, u, z, sides, params, variant="mean", eps=None, feas_tol=None):
    """I_h(u) - D_h(z); nonnegative for admissible pairs."""
    I = primal_energy(spec, u, sides, params, variant=variant, eps=eps)
    D = dual_energy(spec, z, sides, params, feas_tol=feas_tol)
    return I - D
