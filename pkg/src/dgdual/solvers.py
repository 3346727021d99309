"""Assembly and solvers on the elementwise-affine space.

Unknowns are midside nodal values, three per element: DOF ``3 t + i`` is the
trace of the element-``t`` polynomial at the midpoint of the side opposite
corner ``i``.  In this basis the element mean is the arithmetic mean of the
three unknowns, the local mass matrix is diagonal (``|T|/3`` per DOF), and a
side's jump mean couples exactly the two facing unknowns.

Jump penalties come in a ``mean`` variant (penalize the side mean of the
jump, one quadrature point at the side midpoint) and a ``full`` variant
(integrate the affine jump, two-point Gauss, exact for squared jumps).  Both
are assembled from per-side endpoint-jump rows, so the same code path serves
the quadratic solvers and the lagged weights of the total-variation solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .mesh import DIRICHLET, NEUMANN

# two-point Gauss on [0,1]
_T_GAUSS2 = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
_W_GAUSS2 = np.array([0.5, 0.5])
_T_MID = np.array([0.5])
_W_MID = np.array([1.0])

_DESCENT_SLACK = 1e-12


def _reg_abs(x, eps):
    if eps == 0.0:
        return np.abs(x)
    return np.hypot(x, eps)


def _jump_rule(variant):
    if variant == "mean":
        return _T_MID, _W_MID
    if variant == "full":
        return _T_GAUSS2, _W_GAUSS2
    raise ValueError(f"unknown jump variant {variant!r}")


def _cell_means(v, mesh, degree=5):
    if v is None:
        return np.zeros(mesh.n_triangles)
    if callable(v):
        return fem.pi0_project(v, mesh, degree=degree)
    arr = np.asarray(v, dtype=float)
    if arr.shape != (mesh.n_triangles,):
        raise ValueError("cell data must be one value per element")
    return arr


def _require_dirichlet_boundary(sides):
    if np.any(sides.tag == NEUMANN):
        raise ValueError("solver requires the whole boundary to be Dirichlet")


@dataclass
class LinearSystem:
    """Sparse symmetric system in midside unknowns, three per element."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def n_dofs(self):
        return self.rhs.shape[0]

    def solve(self):
        """Direct sparse factorization; returns (x, backward error).

        The residual is normalized by ``|b| + |A| |x|`` so the measure stays
        meaningful on strongly penalized systems where the matrix norm
        dominates the load; refinement passes with the same factors push it
        to machine precision.
        """
        A = self.matrix.tocsc()
        lu = spla.splu(A)
        x = lu.solve(self.rhs)
        norm_a = float(np.max(np.abs(A).sum(axis=1)))

        def backward(v):
            scale = np.linalg.norm(self.rhs) + norm_a * np.linalg.norm(v)
            return np.linalg.norm(A @ v - self.rhs) / max(scale, 1e-300)

        res = backward(x)
        for _ in range(3):
            if res <= 1e-14:
                break
            xn = x + lu.solve(self.rhs - A @ x)
            new = backward(xn)
            if new >= res:
                break
            x, res = xn, new
        return x, float(res)


@dataclass
class SolveReport:
    """Outcome of one solver run."""

    converged: bool
    iterations: int
    residual: float
    energy: float
    reason: str
    energy_history: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    multipliers: Optional[np.ndarray] = None
    active: Optional[np.ndarray] = None


class Assembler:
    """Precomputed element and side block structure on one mesh."""

    def __init__(self, mesh, sides):
        self.mesh = mesh
        self.sides = sides
        nt = mesh.n_triangles
        self.n_dofs = 3 * nt
        self.G = fem.cr_gradients(mesh, sides)
        self.stiff_blocks = mesh.areas[:, None, None] * np.einsum(
            "tid,tjd->tij", self.G, self.G
        )
        self.pimass_blocks = (mesh.areas / 9.0)[:, None, None] * np.ones((1, 3, 3))
        cols = np.arange(self.n_dofs).reshape(nt, 3)
        self.elem_dofs = cols
        self._erows = np.repeat(cols, 3, axis=1).ravel()
        self._ecols = np.tile(cols, (1, 3)).ravel()
        self._setup_jump()
        self._setup_average()

    def _setup_jump(self):
        sides = self.sides
        pen = np.flatnonzero(sides.tag != NEUMANN)
        self.jump_sides = pen
        npen = len(pen)
        t0 = sides.tris[pen, 0]
        t1 = sides.tris[pen, 1]
        inner = t1 >= 0
        # endpoint-jump rows over the six local DOFs (first element, then
        # second); vertex trace of element t is sum of its midside values
        # minus twice the value at the side opposite that vertex's corner
        R = np.zeros((npen, 2, 6))
        R[:, :, 0:3] = 1.0
        idx = np.arange(npen)
        for e in (0, 1):
            R[idx, e, sides.end_corner[pen, 0, e]] -= 2.0
        ii = np.flatnonzero(inner)
        R[ii, :, 3:6] = -1.0
        for e in (0, 1):
            R[ii, e, 3 + sides.end_corner[pen[ii], 1, e]] += 2.0
        cols = np.empty((npen, 6), dtype=np.int64)
        cols[:, 0:3] = 3 * t0[:, None] + np.arange(3)
        cols[:, 3:6] = np.where(
            inner[:, None],
            3 * np.maximum(t1, 0)[:, None] + np.arange(3),
            cols[:, 0:3],
        )
        self.jump_rows = R
        self.jump_cols = cols
        self.jump_h = sides.length[pen]

    def _setup_average(self):
        sides = self.sides
        avg = np.flatnonzero(sides.tag != DIRICHLET)
        self.avg_sides = avg
        navg = len(avg)
        R = np.zeros((navg, 6))
        cols = np.empty((navg, 6), dtype=np.int64)
        t0 = sides.tris[avg, 0]
        t1 = sides.tris[avg, 1]
        inner = t1 >= 0
        idx = np.arange(navg)
        R[idx, sides.local_idx[avg, 0]] = np.where(inner, 0.5, 1.0)
        cols[:, 0:3] = 3 * t0[:, None] + np.arange(3)
        cols[:, 3:6] = np.where(
            inner[:, None],
            3 * np.maximum(t1, 0)[:, None] + np.arange(3),
            cols[:, 0:3],
        )
        ii = np.flatnonzero(inner)
        R[ii, 3 + sides.local_idx[avg[ii], 1]] = 0.5
        self.avg_row = R
        self.avg_cols = cols
        self.avg_h = sides.length[avg]

    def element_matrix(self, blocks, coef=None):
        data = blocks if coef is None else blocks * coef[:, None, None]
        return sp.coo_matrix(
            (data.ravel(), (self._erows, self._ecols)),
            shape=(self.n_dofs, self.n_dofs),
        )

    def jump_point_rows(self, tpoints):
        """Jump rows at relative side positions, shape (npen, npts, 6)."""
        t = np.asarray(tpoints)
        return (
            (1.0 - t)[None, :, None] * self.jump_rows[:, None, 0, :]
            + t[None, :, None] * self.jump_rows[:, None, 1, :]
        )

    def jump_values(self, x, tpoints):
        """Jump of the field x at relative side positions, shape (npen, npts)."""
        rows = self.jump_point_rows(tpoints)
        return np.einsum("sgk,sk->sg", rows, x[self.jump_cols])

    def jump_matrix(self, point_coefs, tpoints):
        """Sum over penalty sides and points of ``c[s, g] R(t_g)^T R(t_g)``."""
        rows = self.jump_point_rows(tpoints)
        B = np.einsum("sg,sgk,sgl->skl", point_coefs, rows, rows)
        r = np.repeat(self.jump_cols, 6, axis=1).ravel()
        c = np.tile(self.jump_cols, (1, 6)).ravel()
        return sp.coo_matrix((B.ravel(), (r, c)), shape=(self.n_dofs, self.n_dofs))

    def average_matrix(self, side_coefs):
        B = np.einsum("s,sk,sl->skl", side_coefs, self.avg_row, self.avg_row)
        r = np.repeat(self.avg_cols, 6, axis=1).ravel()
        c = np.tile(self.avg_cols, (1, 6)).ravel()
        return sp.coo_matrix((B.ravel(), (r, c)), shape=(self.n_dofs, self.n_dofs))

    def average_values(self, x):
        return np.einsum("sk,sk->s", self.avg_row, x[self.avg_cols])

    def penalty_matrix(self, params, variant, lag_jumps=None, eps=0.0):
        """Side penalty stiffness for exponent-2 terms or lagged weights.

        With ``r = 2`` the jump term is quadratic and exact; with ``r = 1``
        per-point weights ``alpha^{-1} / |jump|_eps`` from ``lag_jumps`` give
        the linearized form.  The average term requires ``s = 2``.
        """
        t, w = _jump_rule(variant)
        alpha = params.alpha(self.sides)[self.jump_sides]
        if np.any(alpha <= 0.0):
            raise ValueError("jump penalty weights must be positive")
        base = self.jump_h[:, None] * w[None, :]
        if params.r == 2.0:
            coefs = base * alpha[:, None] ** (-2.0)
        elif params.r == 1.0:
            if lag_jumps is None:
                raise ValueError("exponent-1 jump term needs lagged jump values")
            coefs = base / (alpha[:, None] * _reg_abs(lag_jumps, eps))
        else:
            raise ValueError("jump exponent must be 1 or 2 in the solvers")
        M = self.jump_matrix(coefs, t)
        if params.c_beta > 0.0:
            if params.s != 2.0:
                raise ValueError("average exponent must be 2 in the solvers")
            beta = params.beta(self.sides)[self.avg_sides]
            M = M + self.average_matrix(beta**2 * self.avg_h)
        return M

    def field(self, x):
        return fem.dg_from_midside(self.mesh, self.sides, x.reshape(-1, 3))

    def dofs(self, u):
        return u.midside_values().ravel()

    def pi_load(self, cell_values):
        """Load vector of ``(c, mean of v)``: each DOF gets ``|T| c_T / 3``."""
        b = (self.mesh.areas * cell_values / 3.0)[:, None] * np.ones((1, 3))
        return b.ravel()

    def gradient_load(self, cell_vectors):
        """Load vector of ``(w, broken gradient of v)``."""
        b = self.mesh.areas[:, None] * np.einsum("td,tid->ti", cell_vectors, self.G)
        return b.ravel()

    def increment_norms(self, dx):
        """(projected L2 norm, broken H1 norm) of a coefficient increment."""
        m = dx.reshape(-1, 3)
        areas = self.mesh.areas
        dbar = m.mean(axis=1)
        l2_pi = math.sqrt(float(np.sum(areas * dbar * dbar)))
        grads = np.einsum("ti,tid->td", m, self.G)
        l2 = float(np.sum(areas[:, None] / 3.0 * m * m))
        h1 = math.sqrt(l2 + float(np.sum(areas * np.einsum("td,td->t", grads, grads))))
        return l2_pi, h1


def assemble_poisson(mesh, sides, params, f, jump="full"):
    """Symmetric positive definite system for the quadratic model problem."""
    if params.c_alpha <= 0.0:
        raise ValueError("the jump weight constant must be positive")
    if params.r != 2.0 or params.s != 2.0:
        raise ValueError("the quadratic solver requires exponents r = s = 2")
    _require_dirichlet_boundary(sides)
    asm = Assembler(mesh, sides)
    f_bar = _cell_means(f, mesh)
    A = asm.element_matrix(asm.stiff_blocks) + asm.penalty_matrix(params, jump)
    return LinearSystem(A.tocsr(), asm.pi_load(f_bar)), asm


def solve_poisson(mesh, sides, params, f, jump="full"):
    """Minimize the quadratic broken energy with side penalties."""
    system, asm = assemble_poisson(mesh, sides, params, f, jump=jump)
    x, res = system.solve()
    if res > 1e-10:
        raise RuntimeError(f"direct solve residual {res:.3e} above tolerance")
    energy = 0.5 * float(x @ (system.matrix @ x)) - float(system.rhs @ x)
    report = SolveReport(
        converged=True,
        iterations=1,
        residual=res,
        energy=energy,
        reason="direct solve",
        energy_history=[energy],
    )
    return asm.field(x), report


def _tv_energy(asm, x, params, variant, g_bar, fid, eps, tpoints, weights):
    mesh = asm.mesh
    m = x.reshape(-1, 3)
    grads = np.einsum("ti,tid->td", m, asm.G)
    gn = np.linalg.norm(grads, axis=1)
    vol = float(np.sum(mesh.areas * _reg_abs(gn, eps)))
    ubar = m.mean(axis=1)
    mis = ubar - g_bar
    val = vol + 0.5 * fid * float(np.sum(mesh.areas * mis * mis))
    alpha = params.alpha(asm.sides)[asm.jump_sides]
    jp = asm.jump_values(x, tpoints)
    mod = _reg_abs(jp, eps)
    r = params.r
    jt = np.einsum("sg,g->s", mod**r, weights) * asm.jump_h * alpha ** (-r)
    val += float(jt.sum()) / r
    if params.c_beta > 0.0:
        beta = params.beta(asm.sides)[asm.avg_sides]
        av = asm.average_values(x)
        val += 0.5 * float(np.sum(beta**2 * av * av * asm.avg_h))
    return val


def solve_tv(
    mesh,
    sides,
    params,
    g,
    fidelity=1.0,
    eps=None,
    tau=1.0,
    eps_stop=None,
    max_iters=500,
    jump="mean",
):
    """Lagged-diffusivity iteration for regularized total variation.

    Each step solves the quadratic problem obtained by freezing the moduli
    in the volume term and, for exponent one, in the jump term, plus a
    proximal term ``(1/(2 tau)) ||mean of (u - u_k)||^2``.  The smoothed
    energy then never increases; this is asserted every step.
    """
    if params.c_alpha <= 0.0:
        raise ValueError("the jump weight constant must be positive")
    if fidelity <= 0.0:
        raise ValueError("the fidelity weight must be positive")
    h = sides.h_max
    if eps is None:
        eps = h
    if eps <= 0.0:
        raise ValueError("the regularization parameter must be positive")
    if eps_stop is None:
        eps_stop = h / 100.0
    asm = Assembler(mesh, sides)
    g_bar = _cell_means(g, mesh)
    tpoints, weights = _jump_rule(jump)
    alpha_s = params.alpha(sides)[asm.jump_sides]

    x = np.zeros(asm.n_dofs)
    energy = _tv_energy(asm, x, params, jump, g_bar, fidelity, eps, tpoints, weights)
    history = [energy]
    increments = []
    mass_coef = (1.0 / tau + fidelity) * np.ones(mesh.n_triangles)
    converged = False
    reason = "not converged"
    iters = 0
    for k in range(max_iters):
        iters = k + 1
        m = x.reshape(-1, 3)
        grads = np.einsum("ti,tid->td", m, asm.G)
        diff_coef = 1.0 / _reg_abs(np.linalg.norm(grads, axis=1), eps)
        A = (
            asm.element_matrix(asm.stiff_blocks, diff_coef)
            + asm.element_matrix(asm.pimass_blocks, mass_coef)
        )
        if params.r == 1.0:
            lag = asm.jump_values(x, tpoints)
            A = A + asm.penalty_matrix(params, jump, lag_jumps=lag, eps=eps)
        else:
            A = A + asm.penalty_matrix(params, jump)
        ubar = m.mean(axis=1)
        rhs = asm.pi_load(ubar / tau + fidelity * g_bar)
        xn = spla.splu(A.tocsc()).solve(rhs)
        new_energy = _tv_energy(
            asm, xn, params, jump, g_bar, fidelity, eps, tpoints, weights
        )
        if new_energy > energy * (1.0 + _DESCENT_SLACK):
            raise AssertionError(
                f"energy increased at step {iters}: {energy!r} -> {new_energy!r}"
            )
        inc, _ = asm.increment_norms(xn - x)
        increments.append(inc)
        history.append(new_energy)
        x = xn
        energy = new_energy
        if inc <= eps_stop:
            converged = True
            reason = "projected increment below tolerance"
            break
    report = SolveReport(
        converged=converged,
        iterations=iters,
        residual=increments[-1] if increments else 0.0,
        energy=energy,
        reason=reason,
        energy_history=history,
        increments=increments,
    )
    return asm.field(x), report


def solve_obstacle(
    mesh,
    sides,
    params,
    f,
    chi,
    u_dirichlet=None,
    tol=None,
    jump="full",
    max_iters=100,
):
    """Primal-dual active set iteration for the constrained quadratic problem.

    The unknown is the homogeneous part: with a boundary datum the constraint
    bound and the load are shifted by its interpolant, and callers add the
    interpolant back to obtain the full approximation.  Element means are
    pinned to the shifted bound on the active set through a saddle system;
    the multiplier density drives the active set update with unit weight.
    """
    if params.c_alpha <= 0.0:
        raise ValueError("the jump weight constant must be positive")
    if params.r != 2.0 or params.s != 2.0:
        raise ValueError("the constrained solver requires exponents r = s = 2")
    _require_dirichlet_boundary(sides)
    if tol is None:
        tol = sides.h_max
    asm = Assembler(mesh, sides)
    f_bar = _cell_means(f, mesh)
    chi_bar = _cell_means(chi, mesh)
    if u_dirichlet is None:
        ud = None
        chi_tilde = chi_bar
        b = asm.pi_load(f_bar)
    else:
        if isinstance(u_dirichlet, fem.DGField):
            ud = u_dirichlet
        else:
            ud = fem.cr_interpolate(u_dirichlet, mesh, sides, degree=5)
        chi_tilde = chi_bar - ud.values
        b = asm.pi_load(f_bar) - asm.gradient_load(ud.gradients)
    A = (
        asm.element_matrix(asm.stiff_blocks) + asm.penalty_matrix(params, jump)
    ).tocsr()

    nt = mesh.n_triangles
    n = asm.n_dofs
    x = np.zeros(n)
    lam = np.zeros(nt)
    active = chi_tilde > 0.0
    converged = False
    reason = "not converged"
    increments = []
    history = []
    iters = 0
    for k in range(max_iters):
        iters = k + 1
        act = np.flatnonzero(active)
        if len(act):
            rows = np.repeat(np.arange(len(act)), 3)
            cols = asm.elem_dofs[act].ravel()
            P = sp.coo_matrix(
                (np.full(3 * len(act), 1.0 / 3.0), (rows, cols)),
                shape=(len(act), n),
            )
            K = sp.bmat([[A, P.T], [P, None]], format="csc")
            rhs = np.concatenate([b, chi_tilde[act]])
            y = spla.splu(K).solve(rhs)
            xn = y[:n]
            mu = -y[n:]
        else:
            xn = spla.splu(A.tocsc()).solve(b)
            mu = np.zeros(0)
        lam = np.zeros(nt)
        lam[act] = mu / mesh.areas[act]
        ubar = xn.reshape(nt, 3).mean(axis=1)
        new_active = (lam + (chi_tilde - ubar)) > 0.0
        _, h1 = asm.increment_norms(xn - x)
        increments.append(h1)
        x = xn
        energy = 0.5 * float(x @ (A @ x)) - float(b @ x)
        history.append(energy)
        if np.array_equal(new_active, active) and h1 < tol:
            converged = True
            reason = "active set stable and increment below tolerance"
            break
        active = new_active
    report = SolveReport(
        converged=converged,
        iterations=iters,
        residual=increments[-1] if increments else 0.0,
        energy=history[-1] if history else 0.0,
        reason=reason,
        energy_history=history,
        increments=increments,
        multipliers=lam,
        active=active.copy(),
    )
    return asm.field(x), report
