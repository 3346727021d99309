"""Randomized identity and weak-duality trials.

These runners back both the command-line self test and the test suite: each
draws random fields, checks an exact algebraic property (integration by
parts, per-side jump-product expansion, conjugate inequalities) or generates
random admissible primal-dual pairs and evaluates the duality gap, and
returns the worst scaled violation observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, functionals
from .fem import DGField, RTField
from .functionals import PenaltyParams, dual_energy, primal_energy, problem_data
from .mesh import NEUMANN


def random_dg(rng, mesh, scale=1.0):
    return DGField(
        mesh,
        scale * rng.standard_normal(mesh.n_triangles),
        scale * rng.standard_normal((mesh.n_triangles, 2)),
    )


def random_rt(rng, mesh, scale=1.0):
    return RTField(
        mesh,
        scale * rng.standard_normal((mesh.n_triangles, 2)),
        scale * rng.standard_normal(mesh.n_triangles),
    )


def flux_divergence_matrix(mesh, sides):
    """Sparse map from per-side normal fluxes to element divergences."""
    nt = mesh.n_triangles
    rows = np.repeat(np.arange(nt), 3)
    cols = sides.tri_sides.ravel()
    data = (
        sides.tri_side_sign * sides.length[sides.tri_sides] / mesh.areas[:, None]
    ).ravel()
    return sp.csr_matrix((data, (rows, cols)), shape=(nt, sides.n_sides))


class FluxSampler:
    """Draws conforming flux fields, optionally with prescribed divergences.

    The divergence constraint is met by the least-norm correction of the
    free fluxes; fluxes on Neumann sides are held at zero so results lie in
    the conforming space with vanishing normal trace there.
    """

    def __init__(self, mesh, sides):
        self.mesh = mesh
        self.sides = sides
        self.free = sides.tag != NEUMANN
        B = flux_divergence_matrix(mesh, sides)[:, self.free]
        self.B = B
        self.solve_gram = spla.factorized((B @ B.T).tocsc())

    def sample(self, rng, div_target=None, scale=1.0):
        q = np.zeros(self.sides.n_sides)
        qf = scale * rng.standard_normal(int(self.free.sum()))
        if div_target is not None:
            qf = qf + self.B.T @ self.solve_gram(div_target - self.B @ qf)
        q[self.free] = qf
        return fem.rt_from_fluxes(self.mesh, self.sides, q), q


def ibp_trials(rng, mesh, sides, n_trials):
    """Worst scaled integration-by-parts residual over random pairs."""
    worst = 0.0
    for _ in range(n_trials):
        u = random_dg(rng, mesh)
        z = random_rt(rng, mesh)
        vd, vg, s1, s2 = fem.ibp_terms(u, z, sides)
        scale = max(1.0, abs(vd), abs(vg), abs(s1), abs(s2))
        worst = max(worst, abs(vd + vg - s1 - s2) / scale)
    return worst


def jump_product_trials(rng, mesh, sides, n_trials):
    """Worst interior-side defect of the trace-product expansion.

    The one-sided traces are taken from independently computed corner values
    and side-midpoint evaluations, the jump/average factors from the trace
    helpers, so the two sides of the identity follow different code paths.
    Boundary sides carry one-sided jump and average values for which the
    product expansion does not apply, so they are excluded.
    """
    inner = sides.tris[:, 1] >= 0
    t0 = sides.tris[:, 0]
    t1 = np.maximum(sides.tris[:, 1], 0)
    worst = 0.0
    for _ in range(n_trials):
        u = random_dg(rng, mesh)
        z = random_rt(rng, mesh)
        u0 = u(sides.mid, t0)
        u1 = np.where(inner, u(sides.mid, t1), 0.0)
        q0 = np.einsum("sd,sd->s", z(sides.mid, t0), sides.normal)
        q1 = np.where(
            inner, np.einsum("sd,sd->s", z(sides.mid, t1), sides.normal), 0.0
        )
        lhs = u0 * q0 - u1 * q1
        tu = fem.side_traces_dg(u, sides)
        tz = fem.side_traces_rt(z, sides)
        rhs = tu.jump * tz.average + tu.average * tz.jump
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        defect = np.abs(lhs - rhs) / scale
        worst = max(worst, float(np.max(defect[inner], initial=0.0)))
    return worst


def fenchel_trials(rng, n_trials):
    """Worst violations of the conjugate inequality and its tightness.

    Returns (inequality defect, tightness defect at derivative pairs); both
    should be at roundoff level.
    """
    worst_ineq = 0.0
    worst_tight = 0.0
    for _ in range(n_trials):
        c = float(rng.uniform(0.1, 3.0))
        sigma = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        v = rng.standard_normal(2) * rng.uniform(0.1, 2.0)
        w = rng.standard_normal(2) * rng.uniform(0.1, 2.0)
        gv = functionals.power_value(c, sigma, v)
        gw = functionals.power_conjugate(c, sigma, w)
        pair = float(v @ w)
        scale = max(1.0, gv, abs(pair))
        if math.isfinite(gw):
            worst_ineq = max(worst_ineq, (pair - gv - gw) / scale)
        nv = float(np.linalg.norm(v))
        if sigma == 1.0:
            wt = c * v / nv
        else:
            wt = c**sigma * nv ** (sigma - 2.0) * v
        gwt = functionals.power_conjugate(c, sigma, wt)
        defect = gv + gwt - float(v @ wt)
        worst_tight = max(worst_tight, abs(defect) / scale)
    return worst_ineq, worst_tight


@dataclass
class GapStats:
    min_scaled_gap: float
    trials: int


def tv_scaled(z, sides, params, slack=1e-12):
    """Shrink a conforming field into the dual constraint set."""
    tr = fem.side_traces_rt(z, sides)
    m1 = sides.tag != NEUMANN
    s = max(1.0, float(np.max(np.linalg.norm(z.values, axis=1), initial=0.0)))
    if params.r == 1.0:
        alpha = params.alpha(sides)[m1]
        s = max(s, float(np.max(alpha * np.abs(tr.average[m1]), initial=0.0)))
    s *= 1.0 + slack
    return RTField(z.mesh, z.values / s, z.divergences / s)


def weak_duality_trials(spec, mesh, sides, params, rng, n_trials, variant="mean"):
    """Minimum scaled duality gap over random admissible pairs."""
    data = problem_data(spec, mesh, sides)
    sampler = FluxSampler(mesh, sides)
    worst = math.inf
    for _ in range(n_trials):
        u = random_dg(rng, mesh)
        if spec.tag == "poisson":
            z, _ = sampler.sample(rng, div_target=-data.f_bar)
        elif spec.tag == "tv":
            z0, _ = sampler.sample(rng)
            z = tv_scaled(z0, sides, params)
        else:
            slack = np.abs(rng.standard_normal(mesh.n_triangles)) + 1e-6
            z, _ = sampler.sample(rng, div_target=-data.f_bar - slack)
            lo = data.chi_tilde
            u = DGField(
                mesh,
                lo + np.abs(u.values - lo),
                u.gradients,
            )
        I = primal_energy(spec, u, sides, params, variant=variant, eps=spec.epsilon)
        D = dual_energy(spec, z, sides, params)
        if not (math.isfinite(I) and math.isfinite(D)):
            raise AssertionError(
                f"sampled pair not admissible: I={I!r} D={D!r} ({spec.tag})"
            )
        scale = max(1.0, abs(I), abs(D))
        worst = min(worst, (I - D) / scale)
    return GapStats(worst, n_trials)
