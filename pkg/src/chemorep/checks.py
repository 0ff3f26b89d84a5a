"""
Property battery run by ``chemorep verify`` and the acceptance suite.

Each check builds its own small scenarios from a seeded generator and
returns a :class:`CheckResult`; nothing here asserts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import diagnostics as dg
from . import forward as fw
from . import grid as gr
from .adjoint import control_pairing, pullback, solve_adjoint
from .cost import CostParams, Scenario, cost_state_derivative, evaluate
from .errors import StabilityViolation
from .linearized import linearize_at, solve_tangent


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: value={self.value:.3e} threshold={self.threshold:.3e}"

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- scenarios


def tracking_scenario(p: float, rng: np.random.Generator, n: int = 16, N: int = 20, T: float = 0.2,
                      scheme: str = gr.UPWIND):
    """1D logistic scenario on a partial control region with a random base control.

    Returns ``(scenario, f, cost)``.
    """
    g = gr.build_grid(1, 1.0, n, [(0.2, 0.8)])
    tg = gr.TimeGrid(T, N)
    x = g.centers()[0]
    u0 = 1.0 + 0.5 * np.cos(np.pi * x) + 0.1 * rng.random(n)
    v0 = 1.0 + 0.3 * np.cos(2.0 * np.pi * x) + 0.1 * rng.random(n)
    params = fw.ModelParams(p=p, r=1.0, mu=1.0, logistic=True, drift_scheme=scheme)
    # magnitudes kept >= 0.1: the control cost |f|^{5/2} is only C^{2,1/2} at 0,
    # which spoils finite-difference oracles there
    z = rng.standard_normal((N, n))
    f = np.sign(z) * (0.1 + 0.3 * np.abs(z)) * g.mask_float
    cost = CostParams(gamma_u=1.0, gamma_v=1.0, gamma_f=0.1, u_d=0.8, v_d=1.1)
    return Scenario(g, tg, u0, v0, params), f, cost


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


# -------------------------------------------------------------- transpose


def dense_maps(scenario: Scenario, f: np.ndarray):
    """Dense matrices of the tangent map and of the adjoint pullback.

    Tangent: control ``F`` (``N x size``) -> ``(U, V)`` at nodes ``0..N-1``.
    Adjoint: sources at nodes ``0..N-1`` -> control.  Both spaces carry the
    same ``dt * vol`` weight, so the adjoint matrix must equal the transpose.
    """
    traj = scenario.solve(f)
    lin = linearize_at(traj, scenario.params)
    N, size = scenario.timegrid.N, scenario.grid.size
    ctrl = N * size
    tangent = np.zeros((2 * ctrl, ctrl))
    for k in range(ctrl):
        F = np.zeros(ctrl)
        F[k] = 1.0
        U, V = solve_tangent(lin, F.reshape(N, size))
        tangent[:, k] = np.concatenate([U[:N].ravel(), V[:N].ravel()])
    adjoint = np.zeros((ctrl, 2 * ctrl))
    for k in range(2 * ctrl):
        S = np.zeros((2, N + 1, size))
        S.reshape(2, -1)[k // ctrl, k % ctrl] = 1.0
        adjoint[:, k] = pullback(lin, S[0], S[1]).ravel()
    return lin, tangent, adjoint


def transpose_check(rng: np.random.Generator, tol: float = 1e-10, pairs: int = 100) -> CheckResult:
    scenario, f, _ = tracking_scenario(2.0, rng, n=8, N=4, T=0.04)
    lin, tangent, adjoint = dense_maps(scenario, f)
    mat_err = float(np.linalg.norm(adjoint - tangent.T) / np.linalg.norm(tangent))
    g, tg = scenario.grid, scenario.timegrid
    N, size = tg.N, g.size
    worst = 0.0
    for _ in range(pairs):
        F = rng.standard_normal((N, size)) * g.mask_float
        su, sv = rng.standard_normal((N + 1, size)), rng.standard_normal((N + 1, size))
        U, V = solve_tangent(lin, F)
        lhs = gr.spacetime_inner(g, tg, su, U) + gr.spacetime_inner(g, tg, sv, V)
        rhs = gr.spacetime_inner(g, tg, pullback(lin, su, sv), F)
        worst = max(worst, _rel(lhs, rhs))
    value = max(mat_err, worst)
    return CheckResult("transpose", value <= tol, value, tol,
                       {"matrix_rel_error": mat_err, "pairing_rel_error": worst, "pairs": pairs})


# --------------------------------------------------------------- gradient


def donor_pattern(traj) -> np.ndarray:
    """Upwind donor choice at every face and step (``grad v > 0``)."""
    g = traj.grid
    return np.concatenate([(grad @ traj.v[:-1].T > 0).ravel() for grad in g.gradients])


def central_difference(scenario: Scenario, f: np.ndarray, F: np.ndarray, cost: CostParams,
                       step: float = 1e-4, min_step: float = 1e-8) -> tuple[float, float]:
    """Richardson-extrapolated central difference of the discrete cost along ``F``.

    Returns ``(derivative, step used)``.  With upwind drift the discrete cost
    is only piecewise smooth, with kinks where a face gradient of ``v``
    changes sign; the step is halved until every probe keeps the donor
    pattern of the base point, so no quotient straddles a kink.
    """
    base = donor_pattern(scenario.solve(f)) if scenario.params.drift_scheme == gr.UPWIND else None

    def quotient(s):
        plus = evaluate(scenario, f + s * F, cost, with_gradient=False)
        minus = evaluate(scenario, f - s * F, cost, with_gradient=False)
        smooth = base is None or (
            np.array_equal(donor_pattern(plus.traj), base) and np.array_equal(donor_pattern(minus.traj), base)
        )
        return (plus.cost.total - minus.cost.total) / (2.0 * s), smooth

    while True:
        coarse, ok = quotient(step)
        if ok or step / 2.0 < min_step:
            fine, _ = quotient(step / 2.0)
            return (4.0 * fine - coarse) / 3.0, step
        step /= 2.0


def gradient_check(rng: np.random.Generator, tol: float = 1e-5, directions: int = 10,
                   p_values=(1.5, 2.0, 2.5), step: float = 1e-4) -> CheckResult:
    """Reduced gradient against central differences of the discrete cost."""
    per_p, smallest = {}, step
    for p in p_values:
        scenario, f, cost = tracking_scenario(p, rng)
        ev = evaluate(scenario, f, cost)
        g, tg = scenario.grid, scenario.timegrid
        errs = []
        for _ in range(directions):
            F = rng.standard_normal(f.shape) * g.mask_float
            fd, used = central_difference(scenario, f, F, cost, step)
            smallest = min(smallest, used)
            errs.append(_rel(fd, gr.spacetime_inner(g, tg, ev.grad, F)))
        per_p[str(p)] = max(errs)
    value = max(per_p.values())
    return CheckResult("gradient", value <= tol, value, tol,
                       {"max_rel_error_by_p": per_p, "smallest_step": smallest})


def duality_check(rng: np.random.Generator, tol: float = 1e-9, directions: int = 20,
                  p_values=(1.5, 2.0, 2.5)) -> CheckResult:
    """``<cost sources, tangent(F)>_Q = <m v eta, F>_Q`` for random ``F``."""
    per_p = {}
    for p in p_values:
        scenario, f, cost = tracking_scenario(p, rng)
        traj = scenario.solve(f)
        lin = linearize_at(traj, scenario.params)
        sources = cost_state_derivative(traj, cost, p)
        adj = solve_adjoint(lin, sources)
        pairing = control_pairing(lin, adj)
        g, tg = scenario.grid, scenario.timegrid
        errs = []
        for _ in range(directions):
            F = rng.standard_normal(f.shape) * g.mask_float
            U, V = solve_tangent(lin, F)
            lhs = gr.spacetime_inner(g, tg, sources.su, U) + gr.spacetime_inner(g, tg, sources.sv, V)
            errs.append(_rel(lhs, gr.spacetime_inner(g, tg, pairing, F)))
        per_p[str(p)] = max(errs)
    value = max(per_p.values())
    return CheckResult("duality", value <= tol, value, tol, {"max_rel_error_by_p": per_p})


# ------------------------------------------------------------------- mass


def mass_check(rng: np.random.Generator, tol: float = 1e-10, drift_tol: float = 1e-10,
               slack: float = 1e-8) -> CheckResult:
    """Per-step mass law, 200-step conservation without reactions, and the ``K0`` bound."""
    g = gr.build_grid(2, (1.0, 1.0), (12, 12), "all")
    x, y = g.centers()
    u0 = 1.0 + 0.9 * np.cos(np.pi * x) * np.cos(np.pi * y)
    v0 = np.exp(-10.0 * ((x - 0.3) ** 2 + (y - 0.6) ** 2))
    free = fw.solve_state(g, u0, v0, None, fw.ModelParams(p=2.0), gr.TimeGrid(1.0, 200))
    rep = dg.mass_report(free, fw.ModelParams(p=2.0))
    drift = abs(rep["mass_series"][-1] - rep["mass_series"][0]) / rep["mass_series"][0]
    residual = rep["mass_residual_max"]
    bound_gap = rep["max_mass"] - rep["K0"]
    for p, r, mu in ((1.5, 1.0, 1.0), (2.0, 2.0, 0.5), (3.0, 0.5, 2.0)):
        g1 = gr.build_grid(1, 1.0, 24, "all")
        xs = g1.centers()[0]
        params = fw.ModelParams(p=p, r=r, mu=mu, logistic=True)
        u = 0.5 + rng.random(g1.size) * (1.0 + np.cos(np.pi * xs))
        v = 1.0 + 0.2 * rng.random(g1.size)
        traj = fw.solve_state(g1, u, v, None, params, gr.TimeGrid(2.0, 400))
        rep = dg.mass_report(traj, params)
        residual = max(residual, rep["mass_residual_max"])
        bound_gap = max(bound_gap, rep["max_mass"] - rep["K0"])
    passed = residual <= tol and drift <= drift_tol and bound_gap <= slack
    return CheckResult("mass", passed, residual, tol,
                       {"drift_200_steps": drift, "drift_tol": drift_tol,
                        "max_mass_minus_K0": bound_gap, "slack": slack})


# ------------------------------------------------------------- positivity


def random_upwind_scenario(rng: np.random.Generator, steps: int = 20):
    """Random nonnegative data (with zero patches), random control and exponents."""
    dim = int(rng.integers(1, 3))
    n = int(rng.integers(6, 20)) if dim == 1 else int(rng.integers(4, 9))
    g = gr.build_grid(dim, [1.0] * dim, [n] * dim, "all" if rng.random() < 0.5 else [(0.0, 0.6)] * dim)
    logistic = bool(rng.integers(2))
    params = fw.ModelParams(
        p=float(rng.uniform(1.1, 3.0)),
        r=float(rng.uniform(0, 2)) if logistic else 0.0,
        mu=float(rng.uniform(0, 2)) if logistic else 0.0,
        logistic=logistic,
    )
    u0 = rng.uniform(0, 2, g.size) * (rng.random(g.size) < 0.7)
    v0 = rng.uniform(0, 2, g.size) * (rng.random(g.size) < 0.7)
    f = rng.uniform(-1, 1, (steps, g.size))
    return g, params, u0, v0, f, 0.2 / n**2


def positivity_check(rng: np.random.Generator, scenarios: int = 50, steps: int = 20) -> CheckResult:
    """Upwind runs that satisfy the step preconditions must stay nonnegative exactly.

    When a step precondition fails, ``dt`` is halved and the scenario rerun.
    """
    worst = np.inf
    for _ in range(scenarios):
        g, params, u0, v0, f, dt = random_upwind_scenario(rng, steps)
        while True:
            try:
                traj = fw.solve_state(g, u0, v0, f, params, gr.TimeGrid(dt * steps, steps))
                break
            except StabilityViolation:
                dt *= 0.5
        worst = min(worst, float(traj.u.min()), float(traj.v.min()))
    return CheckResult("positivity", worst >= 0.0, worst, 0.0, {"scenarios": scenarios})


# ----------------------------------------------------------------- energy

ENERGY_LEVELS = ((16, 40), (32, 160), (64, 640))


def energy_scenario(p: float, logistic: bool, n: int, N: int, T: float = 0.1):
    """Smooth data, constant control, central drift; returns the energy report."""
    g = gr.build_grid(1, 1.0, n, "all")
    x = g.centers()[0]
    params = fw.ModelParams(
        p=p, r=1.0 if logistic else 0.0, mu=1.0 if logistic else 0.0,
        logistic=logistic, drift_scheme=gr.CENTRAL,
    )
    u0 = 1.0 + 0.5 * np.cos(np.pi * x)
    v0 = 1.0 + 0.5 * np.cos(np.pi * x)
    traj = fw.solve_state(g, u0, v0, np.full((N, n), 0.5), params, gr.TimeGrid(T, N))
    return dg.energy_report(traj, params)


def energy_rate_check(rate: float = 0.9, levels=ENERGY_LEVELS) -> CheckResult:
    """Order in ``dt`` of the energy-balance residual under joint ``(dt, h^2)`` refinement."""
    rates = {}
    for p, logistic in ((1.5, False), (2.5, True)):
        errs = [energy_scenario(p, logistic, n, N)["energy_residual_max"] for n, N in levels]
        ratio = levels[1][1] / levels[0][1]
        rates[f"p={p},logistic={logistic}"] = [
            dg.observed_rate(a, b, ratio) for a, b in zip(errs, errs[1:])
        ]
    value = min(min(r) for r in rates.values())
    return CheckResult("energy_rate", value >= rate, value, rate, {"rates": rates})


# ------------------------------------------------------------------ battery


def run_battery(settings: dict) -> list[CheckResult]:
    rng = np.random.default_rng(int(settings.get("seed", 0)))
    return [
        transpose_check(rng, settings.get("transpose_tol", 1e-10), int(settings.get("transpose_pairs", 100))),
        gradient_check(rng, settings.get("gradient_tol", 1e-5), int(settings.get("gradient_directions", 10))),
        mass_check(rng, settings.get("mass_tol", 1e-10), settings.get("mass_drift_tol", 1e-10),
                   settings.get("K0_slack", 1e-8)),
        positivity_check(rng, int(settings.get("positivity_scenarios", 50))),
        duality_check(rng, settings.get("duality_tol", 1e-9), int(settings.get("duality_directions", 20))),
        energy_rate_check(settings.get("energy_rate", 0.9)),
    ]
