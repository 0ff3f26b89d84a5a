"""
Tracking cost, reduced gradient and projected gradient descent.

The cost is

    J = g_u * ( 2/(5p) int ||u - u_d||_{5p/2}^{5p/2} + 3/10 int ||u - u_d||_{10/3}^{10/3} )
      + g_v/2 * int ||v - v_d||^2 + 2 g_f/5 * int ||f||_{L^{5/2+delta}(control)}^{5/2}

with the left-endpoint rule in time (nodes ``0..N-1`` for states, every
step for the control).  The reduced gradient is the exact gradient of this
discrete functional of the control.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import forward as fw
from . import grid as gr
from .adjoint import AdjointPair, AdjointSources, h_source, solve_adjoint
from .errors import GridMismatch, LineSearchFailure, SolverFailure, StabilityViolation
from .forward import ModelParams, StateTrajectory
from .grid import Grid, TimeGrid
from .linearized import linearize_at

log = logging.getLogger(__name__)


@dataclass
class CostParams:
    gamma_u: float
    gamma_v: float = 0.0
    gamma_f: float = 0.0
    delta: float = 0.0
    u_d: np.ndarray | float = 0.0
    v_d: np.ndarray | float = 0.0

    def __post_init__(self):
        if not self.gamma_u > 0:
            raise ValueError("gamma_u must be positive")
        if self.gamma_v < 0 or self.gamma_f < 0 or self.delta < 0:
            raise ValueError("gamma_v, gamma_f and delta must be nonnegative")

    @property
    def q(self) -> float:
        """Space exponent of the control norm."""
        return 2.5 + self.delta


@dataclass
class AdmissibleBox:
    """Pointwise bounds ``f_min <= f <= f_max`` (scalars or control-shaped arrays)."""

    f_min: np.ndarray | float = -np.inf
    f_max: np.ndarray | float = np.inf

    def __post_init__(self):
        if np.any(np.asarray(self.f_min) > np.asarray(self.f_max)):
            raise ValueError("f_min must not exceed f_max")

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.f_min)) and np.all(np.isfinite(self.f_max)))


@dataclass
class CostBreakdown:
    term_u_5p2: float
    term_u_103: float
    term_v: float
    term_f: float
    total: float


@dataclass
class Scenario:
    """Everything the control-to-state map needs besides the control."""

    grid: Grid
    timegrid: TimeGrid
    u0: np.ndarray
    v0: np.ndarray
    params: ModelParams

    def solve(self, f: np.ndarray | None) -> StateTrajectory:
        return fw.solve_state(self.grid, self.u0, self.v0, f, self.params, self.timegrid)

    def zero_control(self) -> np.ndarray:
        return np.zeros((self.timegrid.N, self.grid.size))


def _target(value, shape):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape == shape[1:]:
        return np.broadcast_to(arr, shape)
    if arr.shape != shape:
        raise GridMismatch(f"target shape {arr.shape} != trajectory shape {shape}")
    return arr


def eval_cost(traj: StateTrajectory, f: np.ndarray, cost: CostParams, p: float) -> CostBreakdown:
    g, tg = traj.grid, traj.timegrid
    f = np.asarray(f, dtype=float)
    if f.shape != (tg.N, g.size):
        raise GridMismatch(f"control shape {f.shape} != {(tg.N, g.size)}")
    wu = gr.time_rows(traj.u - _target(cost.u_d, traj.u.shape), tg)
    wv = gr.time_rows(traj.v - _target(cost.v_d, traj.v.shape), tg)
    weight = tg.dt * g.cell_volume
    a = np.abs(wu)
    t1 = 2.0 / (5.0 * p) * np.sum(a ** (2.5 * p)) * weight
    t2 = 0.3 * np.sum(a ** (10.0 / 3.0)) * weight
    t3 = 0.5 * np.sum(wv**2) * weight
    fm = f * g.mask_float
    t4 = 0.4 * tg.dt * sum(gr.lq_norm(g, row, cost.q) ** 2.5 for row in fm)
    total = cost.gamma_u * (t1 + t2) + cost.gamma_v * t3 + cost.gamma_f * t4
    return CostBreakdown(float(t1), float(t2), float(t3), float(t4), float(total))


def cost_state_derivative(traj: StateTrajectory, cost: CostParams, p: float) -> AdjointSources:
    """Pointwise derivative of the state part of the cost integrand."""
    wu = traj.u - _target(cost.u_d, traj.u.shape)
    wv = traj.v - _target(cost.v_d, traj.v.shape)
    return AdjointSources(su=cost.gamma_u * h_source(wu, p), sv=cost.gamma_v * wv)


def control_cost_gradient(grid: Grid, f: np.ndarray, delta: float) -> np.ndarray:
    """Pointwise gradient of ``2/5 ||f(t)||_q^{5/2}``: ``||f||^{-delta} sgn(f) |f|^{3/2+delta}``."""
    fm = np.asarray(f, dtype=float) * grid.mask_float
    out = np.sign(fm) * np.abs(fm) ** (1.5 + delta)
    if delta > 0:
        for n, row in enumerate(fm):
            norm = gr.lq_norm(grid, row, 2.5 + delta)
            out[n] = out[n] * norm ** (-delta) if norm > 0 else 0.0
    return out


def reduced_gradient(f: np.ndarray, traj: StateTrajectory, adj: AdjointPair, cost: CostParams) -> np.ndarray:
    """L2(Q)-gradient of the reduced cost, zero off the control region."""
    g = traj.grid
    lin_part = g.mask_float * traj.v[1:] * adj.eta[:-1]
    return cost.gamma_f * control_cost_gradient(g, f, cost.delta) + lin_part


@dataclass
class Evaluation:
    f: np.ndarray
    traj: StateTrajectory
    cost: CostBreakdown
    grad: np.ndarray | None = None
    adjoint: AdjointPair | None = None


def evaluate(scenario: Scenario, f: np.ndarray, cost: CostParams, with_gradient: bool = True) -> Evaluation:
    traj = scenario.solve(f)
    ev = Evaluation(traj.f, traj, eval_cost(traj, traj.f, cost, scenario.params.p))
    return _with_gradient(scenario, ev, cost) if with_gradient else ev


# -------------------------------------------------------------- constraints


def project(f: np.ndarray, box: AdmissibleBox, grid: Grid) -> np.ndarray:
    return np.clip(f, box.f_min, box.f_max) * grid.mask_float


def optimality_residual(f, grad, box: AdmissibleBox, grid: Grid, timegrid: TimeGrid) -> float:
    """Projected-gradient residual ``||f - P(f - s0 grad)||_{L2(Q)} / s0`` with ``s0 = 1``."""
    step = f - project(f - grad, box, grid)
    return float(np.sqrt(gr.spacetime_inner(grid, timegrid, step, step)))


def sample_box(box: AdmissibleBox, f: np.ndarray, grid: Grid, rng: np.random.Generator, count: int):
    """Random admissible controls: uniform in a bounded box, Gaussian around ``f`` otherwise."""
    lo = np.broadcast_to(box.f_min, f.shape)
    hi = np.broadcast_to(box.f_max, f.shape)
    out = []
    for _ in range(count):
        x = np.where(
            np.isfinite(lo) & np.isfinite(hi),
            rng.uniform(np.where(np.isfinite(lo), lo, 0), np.where(np.isfinite(hi), hi, 1)),
            f + rng.standard_normal(f.shape),
        )
        out.append(project(x, box, grid))
    return out


def vi_check(f, grad, box: AdmissibleBox, grid: Grid, timegrid: TimeGrid, samples) -> dict:
    """Pairings ``<grad, f_s - f>`` over sampled admissible ``f_s``."""
    pairings = [gr.spacetime_inner(grid, timegrid, grad, s - f) for s in samples]
    gnorm = float(np.sqrt(gr.spacetime_inner(grid, timegrid, grad, grad)))
    return {
        "min_pairing": float(min(pairings)) if pairings else 0.0,
        "grad_norm": gnorm,
        "samples": len(pairings),
    }


# ----------------------------------------------------------------- residual


def step_residuals(traj: StateTrajectory, params: ModelParams, forcing=None) -> tuple[np.ndarray, np.ndarray]:
    """Relative 2-norm residuals of the discrete u and v equations at every step."""
    g, dt = traj.grid, traj.timegrid.dt
    ru, rv = [], []
    for n in range(traj.timegrid.N):
        un, vn, u1, v1 = traj.u[n], traj.v[n], traj.u[n + 1], traj.v[n + 1]
        fm = traj.f[n] * g.mask_float
        rhs = un + dt * (gr.drift_divergence(g, un, vn, params.drift_scheme) + params.r * un)
        if forcing is not None:
            rhs = rhs + dt * forcing[0][n]
        ru.append(_rel(fw.u_matrix(g, params, un, dt) @ u1 - rhs, rhs))
        rhs = vn + dt * fw.production(u1, params.p)
        if forcing is not None:
            rhs = rhs + dt * forcing[1][n]
        rv.append(_rel(fw.v_matrix(g, fm, dt) @ v1 - rhs, rhs))
    return np.array(ru), np.array(rv)


def _rel(res, rhs):
    scale = np.linalg.norm(rhs)
    num = np.linalg.norm(res)
    if scale == 0:
        return num
    return num / scale


def residual_check(traj: StateTrajectory, params: ModelParams, forcing=None) -> float:
    """Largest per-step residual of the discrete state equations."""
    ru, rv = step_residuals(traj, params, forcing)
    return float(max(ru.max(initial=0.0), rv.max(initial=0.0)))


# ---------------------------------------------------------------- optimizer


@dataclass
class PGDOptions:
    max_iters: int = 200
    tol_J: float = 0.0
    tol_opt: float = 1e-6
    s_init: float = 1.0
    c1: float = 1e-4
    shrink: float = 0.5
    max_shrinks: int = 60
    grow: float = 2.0


@dataclass
class PGDResult:
    f: np.ndarray
    evaluation: Evaluation
    history: list[dict] = field(default_factory=list)
    residual: float = np.inf
    reason: str = ""


def _with_gradient(scenario: Scenario, ev: Evaluation, cost: CostParams) -> Evaluation:
    lin = linearize_at(ev.traj, scenario.params)
    adj = solve_adjoint(lin, cost_state_derivative(ev.traj, cost, scenario.params.p))
    return Evaluation(ev.f, ev.traj, ev.cost, reduced_gradient(ev.f, ev.traj, adj, cost), adj)


def _armijo(scenario, cost, box, f, ev, s, opts: PGDOptions, it, history):
    """Backtrack from step ``s``; returns the accepted ``(step, evaluation)``."""
    g, tg = scenario.grid, scenario.timegrid
    for _ in range(opts.max_shrinks):
        trial = project(f - s * ev.grad, box, g)
        decrease = gr.spacetime_inner(g, tg, ev.grad, trial - f)
        try:
            trial_ev = evaluate(scenario, trial, cost, with_gradient=False)
        except (StabilityViolation, SolverFailure) as exc:
            log.debug("trial step %.3e rejected: %s", s, exc)
        else:
            J = trial_ev.cost.total
            if J < ev.cost.total and J <= ev.cost.total + opts.c1 * decrease:
                return s, trial_ev
        s *= opts.shrink
    raise LineSearchFailure(
        f"Armijo search failed after {opts.max_shrinks} shrinks at iteration {it}",
        last_control=f, history=history,
    )


def pgd(f0, scenario: Scenario, cost: CostParams, box: AdmissibleBox, opts: PGDOptions | None = None) -> PGDResult:
    """Projected gradient descent with Armijo backtracking.

    Every accepted step strictly decreases ``J``.  The search at each
    iteration starts from ``grow`` times the previous accepted step
    (``s_init`` at the first one).  History rows are
    ``(iter, J, cost terms, residual, step)``, one per accepted iterate.
    """
    opts = opts or PGDOptions()
    if cost.gamma_f == 0 and not box.bounded:
        raise ValueError("gamma_f = 0 requires a bounded admissible box")
    g, tg = scenario.grid, scenario.timegrid
    f = project(np.asarray(f0, dtype=float), box, g)
    ev = evaluate(scenario, f, cost)
    res = optimality_residual(f, ev.grad, box, g, tg)
    history = [_record(0, ev, res, 0.0)]
    s = opts.s_init
    reason = "max_iters"
    for it in range(1, opts.max_iters + 1):
        if res < opts.tol_opt:
            break
        J_old = ev.cost.total
        s, trial_ev = _armijo(scenario, cost, box, f, ev, s, opts, it, history)
        ev = _with_gradient(scenario, trial_ev, cost)
        f = ev.f
        res = optimality_residual(f, ev.grad, box, g, tg)
        history.append(_record(it, ev, res, s))
        log.info("pgd iter %d: J=%.10e residual=%.3e step=%.3e", it, ev.cost.total, res, s)
        if J_old - ev.cost.total < opts.tol_J:
            reason = "tol_J"
            break
        s *= opts.grow
    if res < opts.tol_opt:
        reason = "tol_opt"
    return PGDResult(f, ev, history, res, reason)


def _record(it: int, ev: Evaluation, res: float, step: float) -> dict:
    return {"iter": it, "J": ev.cost.total, **_terms(ev.cost), "residual": res, "step": step}


def _terms(br: CostBreakdown) -> dict:
    d = asdict(br)
    d.pop("total")
    return d
