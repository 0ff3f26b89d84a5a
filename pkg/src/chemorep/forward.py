"""
Semi-implicit finite-difference stepping for the controlled chemo-repulsion
system

    u_t - lap u = div(u grad v) + r u - mu u^p
    v_t - lap v + v = u^p + f v 1_c

with no-flux boundaries.  One step ``n -> n+1`` is

    (1 + dt mu phi(u^n)) u^{n+1} - dt L u^{n+1} = u^n + dt (D(u^n, v^n) + r u^n)
    (1 + dt - dt f^n m) v^{n+1} - dt L v^{n+1} = v^n + dt psi(u^{n+1})

with ``phi(u) = max(u, 0)^(p-1)``, ``psi(u) = max(u, 0)^p`` and ``m`` the
control mask.  Both systems are SPD M-matrices.  The control ``f^n`` acts on
step ``n`` and multiplies ``v^{n+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import grid as gr
from .errors import KappaViolation, NegativeInitialData, StabilityViolation
from .grid import Grid, TimeGrid
from .linalg import SOLVERS, SPDSolver


@dataclass(frozen=True)
class ModelParams:
    """Model exponents/coefficients and scheme options.

    ``logistic=False`` selects the system without ``r u - mu u^p`` and
    requires ``r = mu = 0``.
    """

    p: float
    r: float = 0.0
    mu: float = 0.0
    eps: float = 0.0
    logistic: bool = False
    drift_scheme: str = gr.UPWIND
    solver: str = "cg"
    solver_tol: float = 1e-12

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if self.r < 0 or self.mu < 0 or self.eps < 0:
            raise ValueError("r, mu and eps must be nonnegative")
        if not self.logistic and (self.r != 0 or self.mu != 0):
            raise ValueError("r and mu must be 0 unless logistic=True")
        if self.drift_scheme not in (gr.CENTRAL, gr.UPWIND):
            raise ValueError(f"unknown drift scheme {self.drift_scheme!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class StateTrajectory:
    grid: Grid
    timegrid: TimeGrid
    u: np.ndarray
    v: np.ndarray
    f: np.ndarray
    w: np.ndarray | None = field(default=None)

    @property
    def N(self) -> int:
        return self.timegrid.N


# ------------------------------------------------------------ nonlinearities


def pos_power(u: np.ndarray, e: float) -> np.ndarray:
    """``max(u, 0)^e`` with the value 0 wherever ``u <= 0``."""
    up = np.maximum(u, 0.0)
    out = np.zeros_like(up)
    pos = up > 0
    out[pos] = up[pos] ** e
    return out


def production(u, p):
    return pos_power(u, p)


def production_deriv(u, p):
    return p * pos_power(u, p - 1.0)


def damping(u, p):
    return pos_power(u, p - 1.0)


def damping_deriv(u, p):
    return (p - 1.0) * pos_power(u, p - 2.0)


# ----------------------------------------------------------------- matrices


def u_matrix(grid: Grid, params: ModelParams, un: np.ndarray, dt: float) -> sp.csr_matrix:
    diag = 1.0 + dt * params.mu * damping(un, params.p)
    return sp.csr_matrix(sp.diags(diag) - dt * grid.laplacian_matrix)


def v_matrix(grid: Grid, fn_masked: np.ndarray, dt: float) -> sp.csr_matrix:
    diag = 1.0 + dt - dt * fn_masked
    return sp.csr_matrix(sp.diags(diag) - dt * grid.laplacian_matrix)


def control_masked(grid: Grid, fn: np.ndarray | None) -> np.ndarray:
    if fn is None:
        return np.zeros(grid.size)
    return np.asarray(fn, dtype=float) * grid.mask_float


def check_step(grid: Grid, params: ModelParams, v: np.ndarray, fm: np.ndarray, dt: float) -> None:
    """Raise :class:`StabilityViolation` if a step would lose the M-matrix/positivity structure."""
    if np.any(1.0 / dt + 1.0 - fm <= 0):
        raise StabilityViolation(
            f"1/dt + 1 - max(f) = {1.0 / dt + 1.0 - fm.max():.3e} <= 0; reduce dt"
        )
    if params.drift_scheme == gr.UPWIND:
        outflow = dt * gr.upwind_outflow_rate(grid, v)
        limit = 1.0 + dt * params.r
        if np.any(outflow > limit):
            raise StabilityViolation(
                f"upwind CFL violated: dt * outflow = {outflow.max():.3e} > {limit:.3e}"
            )


def _solve(matrix, rhs, params: ModelParams):
    return SPDSolver(matrix, params.solver, params.solver_tol).solve(rhs)


def _u_step(grid, params, un, v_drift, dt, src_u=None):
    rhs = un + dt * (gr.drift_divergence(grid, un, v_drift, params.drift_scheme) + params.r * un)
    if src_u is not None:
        rhs = rhs + dt * src_u
    return _solve(u_matrix(grid, params, un, dt), rhs, params)


# -------------------------------------------------------------------- steps


def step_state(grid, un, vn, fn, params: ModelParams, dt, src_u=None, src_v=None):
    """Advance ``(u^n, v^n)`` by one step; returns ``(u^{n+1}, v^{n+1})``.

    ``src_u``/``src_v`` are optional explicit forcing terms (used for
    manufactured solutions).
    """
    fm = control_masked(grid, fn)
    check_step(grid, params, vn, fm, dt)
    u1 = _u_step(grid, params, un, vn, dt, src_u)
    rhs = vn + dt * production(u1, params.p)
    if src_v is not None:
        rhs = rhs + dt * src_v
    v1 = _solve(v_matrix(grid, fm, dt), rhs, params)
    return u1, v1


def _check_initial(u0, v0):
    if np.any(np.asarray(u0) < 0) or np.any(np.asarray(v0) < 0):
        raise NegativeInitialData("initial data must be nonnegative")


def _controls(grid, timegrid, f):
    if f is None:
        return np.zeros((timegrid.N, grid.size))
    f = np.asarray(f, dtype=float)
    if f.shape != (timegrid.N, grid.size):
        raise ValueError(f"control shape {f.shape} != {(timegrid.N, grid.size)}")
    return f * grid.mask_float


def solve_state(
    grid: Grid,
    u0: np.ndarray,
    v0: np.ndarray,
    f: np.ndarray | None,
    params: ModelParams,
    timegrid: TimeGrid,
    forcing: tuple[np.ndarray, np.ndarray] | None = None,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> StateTrajectory:
    """Run the stepper over ``timegrid``; regularized when ``params.eps > 0``.

    ``forcing`` holds node trajectories ``(g_u, g_v)``; step ``n`` uses row
    ``n``.  ``callback(n, u^n, v^n)`` is called at every node.
    """
    if params.eps > 0:
        if forcing is not None:
            raise ValueError("forcing is not supported by the regularized stepper")
        return solve_state_regularized(grid, u0, v0, f, params, timegrid, callback)
    _check_initial(u0, v0)
    f = _controls(grid, timegrid, f)
    N, dt = timegrid.N, timegrid.dt
    u = np.empty((N + 1, grid.size))
    v = np.empty((N + 1, grid.size))
    u[0], v[0] = u0, v0
    if callback:
        callback(0, u[0], v[0])
    for n in range(N):
        su = sv = None
        if forcing is not None:
            su, sv = forcing[0][n], forcing[1][n]
        u[n + 1], v[n + 1] = step_state(grid, u[n], v[n], f[n], params, dt, su, sv)
        if callback:
            callback(n + 1, u[n + 1], v[n + 1])
    return StateTrajectory(grid, timegrid, u, v, f)


# ------------------------------------------------------------- regularized


def elliptic_solve(grid, w, params: ModelParams):
    """``v`` with ``v - eps L v = w``; the identity when eps = 0."""
    if params.eps == 0:
        return np.array(w, dtype=float)
    matrix = sp.identity(grid.size, format="csr") - params.eps * grid.laplacian_matrix
    return _solve(matrix, w, params)


def initial_w(grid, v0, params: ModelParams):
    if params.eps == 0:
        return np.array(v0, dtype=float)
    return v0 - params.eps * gr.laplacian(grid, v0)


def step_state_regularized(grid, un, wn, fn, params: ModelParams, dt, vn=None):
    """One step of the regularized system; returns ``(u^{n+1}, w^{n+1}, v^{n+1})``.

    ``v = v(w)`` solves ``v - eps L v = w``.  The positive part of the
    bilinear term is lagged as an indicator, ``f max(v, 0) ~ f 1[v^n >= 0] v^{n+1}``,
    and ``w^{n+1} = (I - eps L) v^{n+1}`` is eliminated, so each step solves
    one SPD system for ``v^{n+1}``.  With eps = 0 every operation coincides
    with :func:`step_state`.
    """
    v = elliptic_solve(grid, wn, params) if vn is None else vn
    fm = control_masked(grid, fn) * (v >= 0)
    check_step(grid, params, v, fm, dt)
    u1 = _u_step(grid, params, un, v, dt)
    rhs = wn + dt * production(u1, params.p)
    if params.eps == 0:
        matrix = v_matrix(grid, fm, dt)
    else:
        lap = grid.laplacian_matrix
        eye = sp.identity(grid.size, format="csr")
        matrix = ((1.0 + dt) * eye - dt * lap) @ (eye - params.eps * lap) - dt * sp.diags(fm)
    v1 = _solve(matrix, rhs, params)
    w1 = v1 - params.eps * gr.laplacian(grid, v1) if params.eps > 0 else v1
    return u1, w1, v1


def solve_state_regularized(grid, u0, v0, f, params: ModelParams, timegrid: TimeGrid, callback=None):
    _check_initial(u0, v0)
    f = _controls(grid, timegrid, f)
    N, dt = timegrid.N, timegrid.dt
    u = np.empty((N + 1, grid.size))
    v = np.empty((N + 1, grid.size))
    w = np.empty((N + 1, grid.size))
    u[0], v[0], w[0] = u0, v0, initial_w(grid, np.asarray(v0, dtype=float), params)
    if callback:
        callback(0, u[0], v[0])
    for n in range(N):
        u[n + 1], w[n + 1], v[n + 1] = step_state_regularized(
            grid, u[n], w[n], f[n], params, dt, vn=v[n]
        )
        if callback:
            callback(n + 1, u[n + 1], v[n + 1])
    return StateTrajectory(grid, timegrid, u, v, f, w)


# ------------------------------------------------------------------ seeding


def seed_admissible(grid: Grid, u0, v0, params: ModelParams, timegrid: TimeGrid):
    """Construct an admissible control on the whole domain.

    Solves the pure heat equation for ``v`` from ``v0 >= kappa > 0``, then the
    ``u`` equation with drift against that ``v``, and sets
    ``f^n = 1 - psi(u^{n+1}) / v^{n+1}`` so that the discrete ``v`` equation
    holds exactly.  Returns ``(f, trajectory)``.
    """
    if not grid.control_mask.all():
        raise ValueError("seeding requires the control region to be the whole domain")
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    _check_initial(u0, v0)
    kappa = float(v0.min())
    if not kappa > 0:
        raise KappaViolation("seeding requires min(v0) > 0")
    params = replace(params, eps=0.0)
    N, dt = timegrid.N, timegrid.dt
    heat = SPDSolver(
        sp.identity(grid.size, format="csr") - dt * grid.laplacian_matrix,
        params.solver, params.solver_tol,
    )
    u = np.empty((N + 1, grid.size))
    v = np.empty((N + 1, grid.size))
    f = np.empty((N, grid.size))
    u[0], v[0] = u0, v0
    for n in range(N):
        v[n + 1] = heat.solve(v[n])
        if v[n + 1].min() < 0.5 * kappa:
            raise KappaViolation(f"v dropped to {v[n + 1].min():.3e} < kappa/2 at node {n + 1}")
        check_step(grid, params, v[n], np.zeros(grid.size), dt)
        u[n + 1] = _u_step(grid, params, u[n], v[n], dt)
        f[n] = 1.0 - production(u[n + 1], params.p) / v[n + 1]
    return f, StateTrajectory(grid, timegrid, u, v, f)
