"""
Discrete adjoint of the forward stepper.

The adjoint is the exact transpose of the tangent map, swept backward in
time.  With ``lam^n`` the (per unit cell volume) sensitivity of the cost to
``(u^n, v^n)``,

    lam^N = 0,     lam^n = dt * s^n + B_n^T lam^{n+1},

where ``s^n`` are the pointwise cost sources and ``B_n`` the tangent step.
Transposing step ``n`` produces the multipliers of its two implicit solves;
these are the discrete ``(sigma^n, eta^n)``, with ``sigma^N = eta^N = 0``.
The last step's multipliers vanish as well because the left-endpoint
cost rule gives node ``N`` zero weight.  The control gradient of step
``n`` is ``m * v^{n+1} * eta^n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forward as fw
from . import grid as gr
from .linearized import Linearization, tangent_step_transpose


def h_source(w: np.ndarray, p: float) -> np.ndarray:
    """``|w|^((5p-4)/2) w + |w|^(4/3) w`` (zero at w = 0)."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    w = np.asarray(w, dtype=float)
    a = np.abs(w)
    return a ** ((5.0 * p - 4.0) / 2.0) * w + a ** (4.0 / 3.0) * w


@dataclass
class AdjointSources:
    """Pointwise adjoint sources at every node, shape ``(N+1, size)``."""

    su: np.ndarray
    sv: np.ndarray


@dataclass
class AdjointPair:
    sigma: np.ndarray
    eta: np.ndarray

    def norms(self, grid, timegrid) -> dict:
        """Discrete norms of the multipliers (reported, never asserted)."""
        return {
            "sigma_Linf_L2": gr.bochner_norm(grid, timegrid, self.sigma, np.inf, 2),
            "sigma_L2_H1": float(
                np.sqrt(timegrid.dt * sum(gr.h1_norm_sq(grid, s) for s in self.sigma[:-1]))
            ),
            "eta_L2_L2": gr.bochner_norm(grid, timegrid, self.eta, 2, 2),
        }


def _lam_from_next(lin: Linearization, m: int, sigma, eta, sources: AdjointSources):
    """``lam^m`` rebuilt from the multipliers of step ``m`` (zero for m = N)."""
    size = lin.grid.size
    if m >= lin.N:
        return np.zeros(size), np.zeros(size)
    muu, muv = lin.operators(m)
    dt = lin.dt
    lam_u = muu.T @ sigma + dt * sources.su[m]
    lam_v = eta + muv.T @ sigma + dt * sources.sv[m]
    return lam_u, lam_v


def adjoint_step(lin: Linearization, n: int, sigma_next, eta_next, sources: AdjointSources):
    """``(sigma^{n+1}, eta^{n+1}) -> (sigma^n, eta^n)``.

    Uses the step ``n+1`` operators to rebuild the sensitivity at node
    ``n+1`` (including the source there) and transposes step ``n``.
    """
    lam_u, lam_v = _lam_from_next(lin, n + 1, sigma_next, eta_next, sources)
    _, _, _, z, y = tangent_step_transpose(lin, n, lam_u, lam_v)
    return z, y


def solve_adjoint(lin: Linearization, sources: AdjointSources) -> AdjointPair:
    """Backward sweep ``n = N-1, ..., 0``."""
    N, size, dt = lin.N, lin.grid.size, lin.dt
    sigma = np.zeros((N + 1, size))
    eta = np.zeros((N + 1, size))
    lam_u, lam_v = np.zeros(size), np.zeros(size)
    for n in range(N - 1, -1, -1):
        aU, aV, _, sigma[n], eta[n] = tangent_step_transpose(lin, n, lam_u, lam_v)
        lam_u = aU + dt * sources.su[n]
        lam_v = aV + dt * sources.sv[n]
    return AdjointPair(sigma, eta)


def pullback(lin: Linearization, su: np.ndarray, sv: np.ndarray) -> np.ndarray:
    """Control-space image of arbitrary sources.

    Returns ``G`` of shape ``(N, size)`` with
    ``<S, solve_tangent(F)>_Q = <G, F>_Q`` for every ``F`` (left-endpoint
    space-time pairings on both sides).
    """
    adj = solve_adjoint(lin, AdjointSources(np.asarray(su), np.asarray(sv)))
    return control_pairing(lin, adj)


def control_pairing(lin: Linearization, adj: AdjointPair) -> np.ndarray:
    """``m v^{n+1} eta^n`` for every step."""
    return lin.mask * lin.traj.v[1:] * adj.eta[:-1]


# ------------------------------------------------------------- diagnostics


def cell_gradient(grid: gr.Grid, w: np.ndarray) -> list[np.ndarray]:
    """Centered cell gradients with mirrored ghost cells."""
    out = []
    arr = w.reshape(grid.shape)
    for axis, h in enumerate(grid.spacing):
        padded = np.concatenate(
            [np.take(arr, [0], axis=axis), arr, np.take(arr, [-1], axis=axis)], axis=axis
        )
        hi = np.take(padded, range(2, arr.shape[axis] + 2), axis=axis)
        lo = np.take(padded, range(0, arr.shape[axis]), axis=axis)
        out.append(((hi - lo) / (2.0 * h)).ravel())
    return out


def adjoint_residual_check(adj: AdjointPair, lin: Linearization, sources: AdjointSources) -> dict:
    """Residuals of the continuous adjoint equations evaluated on ``adj``.

    Centered differences in space, backward differences in time, at the
    interior nodes ``1..N-2``.  A consistency indicator only.
    """
    g, t, p = lin.grid, lin.traj, lin.params
    dt, N = lin.dt, lin.N
    res_s, res_e = [], []
    for n in range(1, N - 1):
        s, e = adj.sigma[n], adj.eta[n]
        u, v = t.u[n], t.v[n]
        upm1 = fw.pos_power(u, p.p - 1.0)
        grad_s = cell_gradient(g, s)
        grad_v = cell_gradient(g, v)
        transport = sum(a * b for a, b in zip(grad_s, grad_v))
        rs = (
            -(adj.sigma[n + 1] - s) / dt
            - gr.laplacian(g, s)
            + transport
            - p.p * upm1 * e
            - p.r * s
            + p.p * p.mu * upm1 * s
            - sources.su[n]
        )
        flux = [(avg @ u) * (grad @ s) for avg, grad in zip(g.face_average, g.gradients)]
        re = (
            -(adj.eta[n + 1] - e) / dt
            - gr.laplacian(g, e)
            - g.divergence(flux)
            + e
            - t.f[n] * lin.mask * e
            - sources.sv[n]
        )
        res_s.append(np.sum(rs**2))
        res_e.append(np.sum(re**2))
    scale = dt * g.cell_volume
    sig = float(np.sqrt(scale * np.sum(res_s))) if res_s else 0.0
    et = float(np.sqrt(scale * np.sum(res_e))) if res_e else 0.0
    return {"sigma_residual": sig, "eta_residual": et, "max_residual": max(sig, et)}
