"""
Manufactured-solution convergence studies.

Targets:

* ``a11``: ``w_t - lap w + a w = g``
* ``a1``:  ``w_t - lap w + div(w c) + a w = g0 - div g1``
* ``a19``: the coupled linear system of :func:`solve_coupled_linear`
* ``nonlinear``: the full forced state system through :func:`solve_state`

Exact fields are products of cosines times ``exp(-t)``, so every Neumann
condition holds; ``c`` and ``g1`` are built from ``sin(pi x_i)`` and have
zero normal component on the boundary.  Forcing terms are evaluated at
``t_{n+1}`` for step ``n`` (backward-Euler consistent).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import forward as fw
from . import grid as gr
from .diagnostics import observed_rate
from .linearized import LinCoeffs, solve_coupled_linear

TARGETS = ("a1", "a11", "a19", "nonlinear")

# constant coefficients of the linear targets
A_COEF = 1.0
D_COEF = 0.3
BETA1 = 0.5
BETA2 = -0.4
C_AMP = 0.5
G1_AMP = 0.3
# nonlinear target
P_EXP = 2.0
R_COEF = 1.0
MU_COEF = 1.0
F_CONST = 0.5


class CosMode:
    """``prod_i cos(k pi x_i)`` with its gradient and Laplacian."""

    def __init__(self, k: float):
        self.k = k

    def value(self, xs):
        out = np.ones_like(xs[0])
        for x in xs:
            out = out * np.cos(self.k * np.pi * x)
        return out

    def grad(self, xs):
        kp = self.k * np.pi
        comps = []
        for i in range(len(xs)):
            c = -kp * np.sin(kp * xs[i])
            for j, x in enumerate(xs):
                if j != i:
                    c = c * np.cos(kp * x)
            comps.append(c)
        return comps

    def lap(self, xs):
        return -len(xs) * (self.k * np.pi) ** 2 * self.value(xs)


def _velocity(x):
    """Axis component of ``c`` (``g1`` uses the same shape)."""
    return np.sin(np.pi * x)


def _velocity_dx(x):
    return np.pi * np.cos(np.pi * x)


# ------------------------------------------------------------ exact fields


def exact_linear(target: str, xs, t):
    """``(U, V)`` exact values at points ``xs`` and time ``t`` (V is None for scalar targets)."""
    e = np.exp(-t)
    U = e * CosMode(1).value(xs)
    V = e * CosMode(2).value(xs) if target == "a19" else None
    return U, V


def linear_forcing(target: str, xs, t):
    """``(g0, gV)`` at points ``xs`` for the linear targets, with ``g1`` of amplitude ``G1_AMP``."""
    e = np.exp(-t)
    mu_ = CosMode(1)
    U = e * mu_.value(xs)
    gU = e * np.array(mu_.grad(xs))
    # U_t - lap U + a U
    g0 = -U - e * mu_.lap(xs) + A_COEF * U
    gV = None
    if target in ("a1", "a19"):
        for i, x in enumerate(xs):
            g0 = g0 + C_AMP * (gU[i] * _velocity(x) + U * _velocity_dx(x))
            g0 = g0 + G1_AMP * e * _velocity_dx(x)
    if target == "a19":
        mv = CosMode(2)
        V = e * mv.value(xs)
        g0 = g0 + D_COEF * e * mv.lap(xs)
        gV = -V - e * mv.lap(xs) + BETA1 * V + BETA2 * U
    return g0, gV


def exact_nonlinear(xs, t):
    e = np.exp(-t)
    return 1.0 + 0.5 * e * CosMode(1).value(xs), 1.0 + 0.5 * e * CosMode(2).value(xs)


def nonlinear_forcing(xs, t, p=P_EXP, r=R_COEF, mu=MU_COEF, f=F_CONST):
    """Sources making ``exact_nonlinear`` solve the state system with constant control ``f``."""
    e = np.exp(-t)
    m1, m2 = CosMode(1), CosMode(2)
    u, v = exact_nonlinear(xs, t)
    u_t, v_t = -0.5 * e * m1.value(xs), -0.5 * e * m2.value(xs)
    lap_u, lap_v = 0.5 * e * m1.lap(xs), 0.5 * e * m2.lap(xs)
    grad_u = [0.5 * e * g for g in m1.grad(xs)]
    grad_v = [0.5 * e * g for g in m2.grad(xs)]
    drift = sum(a * b for a, b in zip(grad_u, grad_v)) + u * lap_v
    gu = u_t - lap_u - drift - r * u + mu * u**p
    gv = v_t - lap_v + v - u**p - f * v
    return gu, gv


# ------------------------------------------------------------- single runs


def _error_l2q(grid, timegrid, num, exact):
    """``L^2(Q)`` error over nodes ``1..N`` (the initial node is exact)."""
    diff = np.asarray(num)[1:] - np.asarray(exact)[1:]
    return float(np.sqrt(timegrid.dt * grid.cell_volume * np.sum(diff**2)))


def run_linear(target: str, dim: int, n: int, N: int, T: float = 1.0, solver: str = "direct") -> float:
    """Error of one linear MMS run (sum of U and V errors for ``a19``)."""
    if target not in ("a1", "a11", "a19"):
        raise ValueError(f"unknown linear target {target!r}")
    g = gr.build_grid(dim, [1.0] * dim, [n] * dim, "all")
    tg = gr.TimeGrid(T, N)
    xs = g.centers()
    nodes = tg.nodes
    g0 = np.empty((N + 1, g.size))
    gV = np.zeros((N + 1, g.size))
    for k in range(N):
        a, b = linear_forcing(target, xs, nodes[k + 1])
        g0[k] = a
        if b is not None:
            gV[k] = b
    coeffs = LinCoeffs(a=np.full(g.size, A_COEF), gU0=g0)
    if target in ("a1", "a19"):
        coeffs.c = tuple(
            np.broadcast_to(C_AMP * _velocity(g.face_centers(i)[i]), (N + 1, g.gradients[i].shape[0]))
            for i in range(dim)
        )
        coeffs.gU1 = tuple(
            np.outer(G1_AMP * np.exp(-nodes[1:]), _velocity(g.face_centers(i)[i]))
            for i in range(dim)
        )
    if target == "a19":
        coeffs.d = np.full(g.size, D_COEF)
        coeffs.beta1 = np.full(g.size, BETA1)
        coeffs.beta2 = np.full(g.size, BETA2)
        coeffs.gV = gV
    U0, V0 = exact_linear(target, xs, 0.0)
    U, V = solve_coupled_linear(g, tg, coeffs, U0, V0, solver=solver)
    exU = np.array([exact_linear(target, xs, t)[0] for t in nodes])
    err = _error_l2q(g, tg, U, exU)
    if target == "a19":
        exV = np.array([exact_linear(target, xs, t)[1] for t in nodes])
        err += _error_l2q(g, tg, V, exV)
    return err


def run_nonlinear(dim: int, n: int, N: int, T: float = 1.0, scheme: str = gr.CENTRAL, solver: str = "direct") -> float:
    g = gr.build_grid(dim, [1.0] * dim, [n] * dim, "all")
    tg = gr.TimeGrid(T, N)
    xs = g.centers()
    nodes = tg.nodes
    params = fw.ModelParams(
        p=P_EXP, r=R_COEF, mu=MU_COEF, logistic=True, drift_scheme=scheme, solver=solver
    )
    su = np.empty((N, g.size))
    sv = np.empty((N, g.size))
    for k in range(N):
        su[k], sv[k] = nonlinear_forcing(xs, nodes[k + 1])
    u0, v0 = exact_nonlinear(xs, 0.0)
    f = np.full((N, g.size), F_CONST)
    traj = fw.solve_state(g, u0, v0, f, params, tg, forcing=(su, sv))
    ex = [exact_nonlinear(xs, t) for t in nodes]
    eu = _error_l2q(g, tg, traj.u, np.array([e[0] for e in ex]))
    ev = _error_l2q(g, tg, traj.v, np.array([e[1] for e in ex]))
    return eu + ev


def run_target(target: str, dim: int, n: int, N: int, T: float = 1.0, solver: str = "direct") -> float:
    if target == "nonlinear":
        return run_nonlinear(dim, n, N, T, solver=solver)
    return run_linear(target, dim, n, N, T, solver=solver)


# ------------------------------------------------------------- studies


@dataclass
class ConvergenceRow:
    level: int
    h: float
    dt: float
    error: float
    rate: float | None


def _table(target, dim, levels, T, solver, ratio):
    rows: list[ConvergenceRow] = []
    for level, (n, N) in enumerate(levels):
        err = run_target(target, dim, n, N, T, solver)
        rate = None if not rows else observed_rate(rows[-1].error, err, ratio)
        rows.append(ConvergenceRow(level, 1.0 / n, T / N, err, rate))
    return rows


# Default refinement ladders.  Spatial studies hold dt tiny so the O(dt)
# floor sits well below the O(h^2) error; temporal studies hold h fine.
SPACE_LEVELS = {1: [(8, 0), (16, 0), (32, 0)], 2: [(6, 0), (12, 0), (24, 0)]}
TIME_LEVELS = {1: [(256, 8), (256, 16), (256, 32)], 2: [(96, 4), (96, 8), (96, 16)]}
SPACE_T = 0.05
SPACE_N = 400
TIME_T = 1.0


def space_study(target: str, dim: int, levels=None, T: float = SPACE_T, N: int = SPACE_N, solver="direct"):
    """Refine ``h`` by 2 at fixed ``dt``; rates are orders in ``h``."""
    cells = [n for n, _ in (levels or SPACE_LEVELS[dim])]
    return _table(target, dim, [(n, N) for n in cells], T, solver, 2.0)


def time_study(target: str, dim: int, levels=None, T: float = TIME_T, solver="direct"):
    """Refine ``dt`` by 2 at fixed ``h``; rates are orders in ``dt``."""
    return _table(target, dim, levels or TIME_LEVELS[dim], T, solver, 2.0)


def write_table(path: str | Path, rows: list[ConvergenceRow]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["level", "h", "dt", "error", "rate"])
        for r in rows:
            out.writerow([r.level, repr(r.h), repr(r.dt), repr(r.error), "" if r.rate is None else repr(r.rate)])
