"""
Linearized stepping.

:func:`linearize_at` freezes a forward trajectory and exposes the exact
derivative of :func:`chemorep.forward.step_state` with respect to
``(u^n, v^n, f^n)``.  Writing ``P^n`` for the face interpolant (average, or
donor selection frozen at ``v^n``), one tangent step reads

    A_u^n U^{n+1} = M_uu^n U^n + M_uv^n V^n
    A_v^n V^{n+1} = V^n + dt psi'(u^{n+1}) U^{n+1} + dt m v^{n+1} F^n

    M_uu^n = I + dt (D_u^n + r) - dt mu diag(phi'(u^n) u^{n+1})
    M_uv^n = dt D_v^n
    D_u^n U = -sum G^T (G v^n * P^n U),   D_v^n V = -sum G^T (P^n u^n * G V)

:func:`solve_coupled_linear` is an independent semi-implicit solver for the
generic system

    U_t - lap U + a U + div(U c) + div(d grad V) = g0 - div g1
    V_t - lap V + b1 V + b2 U = gV

with zero normal total flux on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import forward as fw
from . import grid as gr
from .errors import GridMismatch, StabilityViolation
from .forward import ModelParams, StateTrajectory
from .grid import Grid, TimeGrid
from .linalg import SPDSolver


@dataclass
class LinCoeffs:
    """Coefficient trajectories of the generic coupled linear system.

    Cell arrays have shape ``(rows, grid.size)``; face arrays are tuples with
    one ``(rows, n_faces_i)`` array per axis.  Step ``n`` reads row ``n``.
    ``c`` is a velocity on faces; ``d`` is a cell coefficient.
    """

    a: np.ndarray
    c: tuple[np.ndarray, ...] | None = None
    d: np.ndarray | None = None
    beta1: np.ndarray | None = None
    beta2: np.ndarray | None = None
    gU0: np.ndarray | None = None
    gU1: tuple[np.ndarray, ...] | None = None
    gV: np.ndarray | None = None


class Linearization:
    """Frozen base trajectory plus the per-step operators of the tangent map."""

    def __init__(self, traj: StateTrajectory, params: ModelParams):
        self.traj = traj
        self.params = params
        self.grid = traj.grid
        self.timegrid = traj.timegrid
        self.dt = traj.timegrid.dt
        self.mask = traj.grid.mask_float
        self._solvers: dict[tuple[str, int], SPDSolver] = {}
        self._ops: dict[int, tuple[sp.csr_matrix, sp.csr_matrix]] = {}

    @property
    def N(self) -> int:
        return self.timegrid.N

    def _solver(self, kind: str, n: int) -> SPDSolver:
        key = (kind, n)
        if key not in self._solvers:
            t, p = self.traj, self.params
            if kind == "u":
                mat = fw.u_matrix(self.grid, p, t.u[n], self.dt)
            else:
                mat = fw.v_matrix(self.grid, t.f[n] * self.mask, self.dt)
            self._solvers[key] = SPDSolver(mat, p.solver, p.solver_tol)
        return self._solvers[key]

    def operators(self, n: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """``(M_uu^n, M_uv^n)`` for step ``n``."""
        if n not in self._ops:
            g, t, p, dt = self.grid, self.traj, self.params, self.dt
            donors = gr.donor_operators(g, t.v[n], p.drift_scheme)
            du = sp.csr_matrix((g.size, g.size))
            dv = sp.csr_matrix((g.size, g.size))
            for grad, pop in zip(g.gradients, donors):
                du = du - grad.T @ sp.diags(grad @ t.v[n]) @ pop
                dv = dv - grad.T @ sp.diags(pop @ t.u[n]) @ grad
            lag = p.mu * fw.damping_deriv(t.u[n], p.p) * t.u[n + 1]
            muu = sp.identity(g.size, format="csr") + dt * (du + p.r * sp.identity(g.size)) - dt * sp.diags(lag)
            self._ops[n] = (sp.csr_matrix(muu), sp.csr_matrix(dt * dv))
        return self._ops[n]

    def production_slope(self, n: int) -> np.ndarray:
        """``psi'(u^{n+1})``, the coupling of ``U^{n+1}`` into the ``V`` step."""
        return fw.production_deriv(self.traj.u[n + 1], self.params.p)

    def control_weight(self, n: int) -> np.ndarray:
        """``m v^{n+1}``: how ``F^n`` enters the ``V`` step."""
        return self.mask * self.traj.v[n + 1]

    def solve_u(self, n, rhs):
        return self._solver("u", n).solve(rhs)

    def solve_v(self, n, rhs):
        return self._solver("v", n).solve(rhs)

    @cached_property
    def coeffs(self) -> LinCoeffs:
        """Coefficients ``a, c, d, beta1, beta2`` of the linearized system, one row per step."""
        g, t, p = self.grid, self.traj, self.params
        u_now, u_next, v_now = t.u[:-1], t.u[1:], t.v[:-1]
        a = (
            -p.r
            + p.mu * fw.damping(u_now, p.p)
            + p.mu * fw.damping_deriv(u_now, p.p) * u_next
        )
        c = tuple(-(grad @ v_now.T).T for grad in g.gradients)
        return LinCoeffs(
            a=a,
            c=c,
            d=-u_now.copy(),
            beta1=-(t.f * self.mask),
            beta2=-fw.production_deriv(u_next, p.p),
        )


def linearize_at(traj: StateTrajectory, params: ModelParams, f: np.ndarray | None = None) -> Linearization:
    """Freeze ``traj`` (computed with control ``f``) for tangent/adjoint sweeps."""
    if params.eps > 0:
        raise ValueError("the tangent map is defined for the unregularized stepper (eps = 0)")
    if f is not None:
        f = np.asarray(f, dtype=float)
        if f.shape != traj.f.shape:
            raise GridMismatch(f"control shape {f.shape} != trajectory control {traj.f.shape}")
        if not np.array_equal(f * traj.grid.mask_float, traj.f):
            raise ValueError("control differs from the one the trajectory was computed with")
    size = traj.grid.size
    if traj.u.shape != (traj.timegrid.N + 1, size) or traj.v.shape != traj.u.shape:
        raise GridMismatch("trajectory arrays do not match grid/time grid")
    return Linearization(traj, params)


# ---------------------------------------------------------------- tangent


def tangent_step(lin: Linearization, n: int, U: np.ndarray, V: np.ndarray, F: np.ndarray | None):
    """Derivative of step ``n`` applied to ``(U^n, V^n, F^n)``."""
    muu, muv = lin.operators(n)
    U1 = lin.solve_u(n, muu @ U + muv @ V)
    rhs = V + lin.dt * lin.production_slope(n) * U1
    if F is not None:
        rhs = rhs + lin.dt * lin.control_weight(n) * F
    V1 = lin.solve_v(n, rhs)
    return U1, V1


def tangent_step_transpose(lin: Linearization, n: int, a: np.ndarray, b: np.ndarray):
    """Transpose of :func:`tangent_step` (Euclidean inner products).

    Maps ``(a, b)`` paired with ``(U^{n+1}, V^{n+1})`` to
    ``(a_U, a_V, a_F, z, y)`` paired with ``(U^n, V^n, F^n)``; ``z`` and ``y``
    are the multipliers of the ``u`` and ``v`` solves.
    """
    muu, muv = lin.operators(n)
    y = lin.solve_v(n, b)
    z = lin.solve_u(n, a + lin.dt * lin.production_slope(n) * y)
    aU = muu.T @ z
    aV = y + muv.T @ z
    aF = lin.dt * lin.control_weight(n) * y
    return aU, aV, aF, z, y


def solve_tangent(lin: Linearization, F: np.ndarray):
    """Directional derivative of ``f -> (u, v)`` along ``F``; arrays of shape ``(N+1, size)``."""
    F = np.asarray(F, dtype=float)
    size = lin.grid.size
    U = np.zeros((lin.N + 1, size))
    V = np.zeros((lin.N + 1, size))
    for n in range(lin.N):
        U[n + 1], V[n + 1] = tangent_step(lin, n, U[n], V[n], F[n])
    return U, V


# ------------------------------------------------------ generic linear system


def _rows(x, rows, size):
    if x is None:
        return np.zeros((rows, size))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return np.broadcast_to(x, (rows, size))
    return x


def solve_coupled_linear(
    grid: Grid,
    timegrid: TimeGrid,
    coeffs: LinCoeffs,
    U0: np.ndarray | None = None,
    V0: np.ndarray | None = None,
    solver: str = "cg",
    tol: float = 1e-12,
):
    """Semi-implicit solve of the generic coupled system.

    Diffusion and the reactions ``a U``, ``b1 V`` are implicit; drift,
    cross-diffusion and sources are explicit at node ``n``; ``b2 U`` uses
    ``U^{n+1}`` (sequential update).  Drift and cross-diffusion fluxes use
    face averages.  Returns ``(U, V)`` of shape ``(N+1, size)``.
    """
    N, dt, size = timegrid.N, timegrid.dt, grid.size
    rows = N + 1
    a = _rows(coeffs.a, rows, size)
    d = None if coeffs.d is None else _rows(coeffs.d, rows, size)
    b1 = _rows(coeffs.beta1, rows, size)
    b2 = _rows(coeffs.beta2, rows, size)
    g0 = _rows(coeffs.gU0, rows, size)
    gv = _rows(coeffs.gV, rows, size)
    if np.any(1.0 + dt * a[:N] <= 0) or np.any(1.0 + dt * b1[:N] <= 0):
        raise StabilityViolation("implicit reaction makes 1 + dt*a (or 1 + dt*beta1) nonpositive")
    if coeffs.c is not None:
        # explicit central drift against implicit diffusion: von Neumann
        # stable iff dt |c|^2 <= 2, independent of h
        speed = max(np.max(np.abs(c[:N]), initial=0.0) for c in coeffs.c)
        if dt * speed**2 > 2.0:
            raise StabilityViolation(f"drift stability number dt*|c|^2 = {dt * speed**2:.3e} exceeds 2")
    lap = grid.laplacian_matrix
    solve_u = _reaction_solver(lap, dt, a, solver, tol)
    solve_v = _reaction_solver(lap, dt, b1, solver, tol)
    U = np.zeros((rows, size))
    V = np.zeros((rows, size))
    if U0 is not None:
        U[0] = U0
    if V0 is not None:
        V[0] = V0
    for n in range(N):
        rhs = U[n] + dt * g0[n]
        fluxes = [np.zeros(gr_.shape[0]) for gr_ in grid.gradients]
        if coeffs.c is not None:
            for i, avg in enumerate(grid.face_average):
                fluxes[i] = fluxes[i] + (avg @ U[n]) * coeffs.c[i][n]
        if d is not None:
            for i, (avg, grad) in enumerate(zip(grid.face_average, grid.gradients)):
                fluxes[i] = fluxes[i] + (avg @ d[n]) * (grad @ V[n])
        if coeffs.gU1 is not None:
            for i in range(grid.dim):
                fluxes[i] = fluxes[i] + coeffs.gU1[i][n]
        rhs = rhs - dt * grid.divergence(fluxes)
        U[n + 1] = solve_u(n, rhs)
        rhs = V[n] + dt * (gv[n] - b2[n] * U[n + 1])
        V[n + 1] = solve_v(n, rhs)
    return U, V


def _reaction_solver(lap, dt, coef, solver, tol):
    """``rhs -> (I + dt diag(coef[n]) - dt L)^{-1} rhs``, refactoring only when ``coef[n]`` changes."""
    cache = {"row": None, "solver": None}

    def solve(n, rhs):
        row = coef[n]
        if cache["row"] is None or not np.array_equal(row, cache["row"]):
            cache["row"] = np.array(row)
            cache["solver"] = SPDSolver(sp.diags(1.0 + dt * row) - dt * lap, solver, tol)
        return cache["solver"].solve(rhs)

    return solve
