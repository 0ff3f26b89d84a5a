"""
Post-processing of state trajectories: mass law, energy balance, integrability
norms, positivity, and the p-dependent exponent table.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import forward as fw
from . import grid as gr
from .forward import ModelParams, StateTrajectory


def exponent_table(p: float) -> dict[str, float]:
    """Integrability exponents as functions of the production power ``p``.

    gamma: gradient integrability of u; alpha, beta: strong-solution spaces;
    mu: time integrability of the time derivative bound.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if p <= 2:
        gamma = 5.0 * p / (3.0 + p)
    elif p < 12.0 / 5.0:
        gamma = 25.0 * p / (18.0 + 5.0 * p)
    else:
        gamma = 2.0
    mu = 10.0 * p / (7.0 * p - 6.0) if p <= 2 else 2.5
    return {
        "gamma": gamma,
        "alpha": max(3.0, 3.0 * (p - 1.0)),
        "beta": max(5.0, 5.0 * (p - 1.0)),
        "mu": mu,
    }


# --------------------------------------------------------------------- mass


def mass_bound(grid: gr.Grid, u0: np.ndarray, params: ModelParams) -> float:
    """Upper bound ``K0`` for ``int u(t)``.

    ``r = mu = 0``: the initial mass; ``r, mu > 0``: the max of the initial
    mass and the logistic equilibrium mass ``(r/mu)^(1/(p-1)) |Omega|``.
    """
    m0 = gr.integrate(grid, u0)
    r, mu, p = params.r, params.mu, params.p
    if r == 0:
        return m0
    if mu == 0:
        return np.inf
    return max(m0, (r / mu) ** (1.0 / (p - 1.0)) * grid.volume)


def mass_report(traj: StateTrajectory, params: ModelParams) -> dict:
    """Mass series, per-step residual of the discrete mass law, and ``K0``.

    The discrete law is ``M^{n+1} - M^n = dt (r M^n - mu int phi(u^n) u^{n+1})``;
    residuals are relative to ``max(M^n, M^{n+1})``.
    """
    g, dt = traj.grid, traj.timegrid.dt
    mass = np.array([gr.integrate(g, u) for u in traj.u])
    res = []
    for n in range(traj.timegrid.N):
        loss = gr.integrate(g, fw.damping(traj.u[n], params.p) * traj.u[n + 1])
        r = mass[n + 1] - mass[n] - dt * (params.r * mass[n] - params.mu * loss)
        scale = max(abs(mass[n]), abs(mass[n + 1]))
        res.append(abs(r) / scale if scale > 0 else abs(r))
    res = np.array(res)
    K0 = mass_bound(g, traj.u[0], params)
    return {
        "mass_series": mass,
        "mass_residuals": res,
        "mass_residual_max": float(res.max(initial=0.0)),
        "K0": K0,
        "max_mass": float(mass.max()),
    }


# ------------------------------------------------------------------- energy


def energy(grid: gr.Grid, u: np.ndarray, v: np.ndarray, p: float) -> float:
    """``1/(p(p-1)) ||u^{p/2}||^2 + 1/(2p) ||v||_{H1}^2`` (u clamped at 0)."""
    up = fw.pos_power(u, p / 2.0)
    return gr.lq_norm(grid, up, 2) ** 2 / (p * (p - 1.0)) + gr.h1_norm_sq(grid, v) / (2.0 * p)


def energy_terms(grid: gr.Grid, u, v, f, params: ModelParams) -> tuple[float, float]:
    """Dissipation ``D`` and source ``S`` of the exact energy balance ``dE/dt + D = S``.

    Testing the u equation with ``u^{p-1}/(p-1)`` and the v equation with
    ``-lap v / p`` plus ``(int v)/p`` cancels the drift against the
    production and leaves

        D = 4/p^2 ||grad u^{p/2}||^2 + 1/p ||lap v||^2 + 1/p ||grad v||^2
            + 1/p (int v)^2 + mu/(p-1) ||u||_{2p-1}^{2p-1}
        S = r/(p-1) ||u||_p^p - 1/p int f v 1_c lap v
            + 1/p (int v) (int u^p + int f v 1_c)
    """
    p = params.p
    fv = f * grid.mask_float * v
    lap_v = gr.laplacian(grid, v)
    mean_v = gr.integrate(grid, v)
    dissipation = (
        4.0 / p**2 * gr.gradient_norm_sq(grid, fw.pos_power(u, p / 2.0))
        + gr.lq_norm(grid, lap_v, 2) ** 2 / p
        + gr.gradient_norm_sq(grid, v) / p
        + mean_v**2 / p
        + params.mu / (p - 1.0) * gr.integrate(grid, fw.pos_power(u, 2.0 * p - 1.0))
    )
    source = (
        params.r / (p - 1.0) * gr.integrate(grid, fw.pos_power(u, p))
        - gr.integrate(grid, fv * lap_v) / p
        + mean_v * (gr.integrate(grid, fw.pos_power(u, p)) + gr.integrate(grid, fv)) / p
    )
    return dissipation, source


def energy_report(traj: StateTrajectory, params: ModelParams) -> dict:
    """Energy series and per-step balance residual ``R^n``.

    ``R^n = (E^{n+1} - E^n)/dt + D^{n+1} - S^{n+1}`` with ``S`` using
    ``f^n``; it vanishes as ``dt, h -> 0`` and measures discretization error.
    """
    g, dt, p = traj.grid, traj.timegrid.dt, params.p
    E = np.array([energy(g, u, v, p) for u, v in zip(traj.u, traj.v)])
    R = np.empty(traj.timegrid.N)
    for n in range(traj.timegrid.N):
        D, S = energy_terms(g, traj.u[n + 1], traj.v[n + 1], traj.f[n], params)
        R[n] = (E[n + 1] - E[n]) / dt + D - S
    return {
        "energy_series": E,
        "energy_residuals": R,
        "energy_residual_max": float(np.abs(R).max(initial=0.0)),
        "energy_residual_L1": float(np.sum(np.abs(R)) * dt),
    }


def observed_rate(coarse: float, fine: float, ratio: float) -> float:
    """Convergence order from errors on two levels whose step ratio is ``ratio``."""
    if fine == 0:
        return np.inf
    return float(np.log(coarse / fine) / np.log(ratio))


# ------------------------------------------------------------------- serrin


def serrin_report(traj: StateTrajectory, p: float, delta: float = 0.0) -> dict:
    """Space-time norms of ``u`` (negative undershoots clamped) and of the control."""
    g, tg = traj.grid, traj.timegrid
    u = np.maximum(traj.u, 0.0)
    return {
        "u_L5p2": gr.bochner_norm(g, tg, u, 2.5 * p, 2.5 * p),
        "u_L10_3": gr.bochner_norm(g, tg, u, 10.0 / 3.0, 10.0 / 3.0),
        "u_Linf_Lp": gr.bochner_norm(g, tg, u, np.inf, p),
        "u_L5p3": gr.bochner_norm(g, tg, u, 5.0 * p / 3.0, 5.0 * p / 3.0),
        "u_L2pm1": gr.bochner_norm(g, tg, u, 2.0 * p - 1.0, 2.0 * p - 1.0),
        "f_L5_2": gr.bochner_norm(g, tg, traj.f * g.mask_float, 2.5, 2.5 + delta),
    }


# ------------------------------------------------------------------- report


@dataclass
class DiagnosticsReport:
    mass_series: list
    mass_residual_max: float
    K0: float
    energy_series: list
    energy_residuals: list
    energy_residual_max: float
    serrin_norms: dict
    logistic_norm: float
    min_u: float
    min_v: float
    exponents: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def diagnose(traj: StateTrajectory, params: ModelParams, delta: float = 0.0) -> DiagnosticsReport:
    mass = mass_report(traj, params)
    en = energy_report(traj, params)
    serrin = serrin_report(traj, params.p, delta)
    return DiagnosticsReport(
        mass_series=mass["mass_series"].tolist(),
        mass_residual_max=mass["mass_residual_max"],
        K0=float(mass["K0"]),
        energy_series=en["energy_series"].tolist(),
        energy_residuals=en["energy_residuals"].tolist(),
        energy_residual_max=en["energy_residual_max"],
        serrin_norms=serrin,
        logistic_norm=serrin["u_L2pm1"],
        min_u=float(traj.u.min()),
        min_v=float(traj.v.min()),
        exponents=exponent_table(params.p),
    )
