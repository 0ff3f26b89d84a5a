import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemorep import adjoint as ad
from chemorep import forward as fw
from chemorep import grid as gr
from chemorep import linearized as ln
from chemorep.checks import dense_maps, tracking_scenario
from chemorep.cost import CostParams, cost_state_derivative


def test_h_source_examples():
    for p in (1.5, 2.0, 3.0):
        assert ad.h_source(np.array([0.0, 1.0, -1.0]), p).tolist() == [0.0, 2.0, -2.0]
    assert ad.h_source(np.array([4.0]), 2.0)[0] == pytest.approx(256 + 4 ** (4 / 3) * 4, rel=1e-14)
    assert ad.h_source(np.array([4.0]), 2.0)[0] == pytest.approx(281.398, abs=1e-3)
    with pytest.raises(ValueError):
        ad.h_source(np.ones(2), 1.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 10, elements=st.floats(-50, 50)), st.floats(1.01, 4.0))
def test_h_source_is_odd(w, p):
    assert np.array_equal(ad.h_source(-w, p), -ad.h_source(w, p))


@pytest.fixture(scope="module")
def setting():
    rng = np.random.default_rng(5)
    scenario, f, cost = tracking_scenario(2.0, rng)
    traj = scenario.solve(f)
    lin = ln.linearize_at(traj, scenario.params)
    return scenario, f, cost, traj, lin


def test_zero_sources_zero_adjoint(setting):
    scenario, f, cost, traj, lin = setting
    zero = np.zeros_like(traj.u)
    adj = ad.solve_adjoint(lin, ad.AdjointSources(zero, zero))
    assert not adj.sigma.any() and not adj.eta.any()
    cost0 = CostParams(gamma_u=1e-300, gamma_v=0.0, gamma_f=0.1, u_d=traj.u, v_d=traj.v)
    src = cost_state_derivative(traj, cost0, 2.0)
    assert not src.su.any() and not src.sv.any()


def test_terminal_conditions(setting):
    scenario, f, cost, traj, lin = setting
    adj = ad.solve_adjoint(lin, cost_state_derivative(traj, cost, 2.0))
    assert not adj.sigma[-1].any() and not adj.eta[-1].any()
    # left-endpoint quadrature gives node N no weight, so the last step's multipliers vanish too
    assert not adj.sigma[-2].any() and not adj.eta[-2].any()
    assert np.abs(adj.eta[0]).max() > 0


def test_adjoint_step_matches_sweep(setting):
    scenario, f, cost, traj, lin = setting
    src = cost_state_derivative(traj, cost, 2.0)
    adj = ad.solve_adjoint(lin, src)
    for n in (0, 7, lin.N - 2):
        s, e = ad.adjoint_step(lin, n, adj.sigma[n + 1], adj.eta[n + 1], src)
        assert np.allclose(s, adj.sigma[n], rtol=1e-12, atol=1e-14)
        assert np.allclose(e, adj.eta[n], rtol=1e-12, atol=1e-14)


def test_dense_transpose():
    rng = np.random.default_rng(6)
    scenario, f, _ = tracking_scenario(2.0, rng, n=8, N=4, T=0.04)
    _, tangent, adjoint = dense_maps(scenario, f)
    assert np.linalg.norm(adjoint - tangent.T) <= 1e-10 * np.linalg.norm(tangent)


def test_step_transpose_on_random_pairs(setting):
    scenario, f, cost, traj, lin = setting
    rng = np.random.default_rng(7)
    size = lin.grid.size
    for n in (0, 5, lin.N - 1):
        U, V, F, a, b = rng.standard_normal((5, size))
        U1, V1 = ln.tangent_step(lin, n, U, V, F)
        aU, aV, aF, _, _ = ln.tangent_step_transpose(lin, n, a, b)
        lhs = a @ U1 + b @ V1
        rhs = aU @ U + aV @ V + aF @ F
        assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + 1)


def test_scalar_two_by_two_transpose():
    # uniform base fields on 3 cells: uniform perturbations evolve by a 2x2 matrix
    g, tg = gr.build_grid(1, 1.0, 3), gr.TimeGrid(0.1, 1)
    p, r, mu, fval, u0, v0 = 2.0, 0.5, 1.5, 0.4, 0.8, 1.3
    params = fw.ModelParams(p=p, r=r, mu=mu, logistic=True, solver="direct")
    traj = fw.solve_state(g, np.full(3, u0), np.full(3, v0), np.full((1, 3), fval), params, tg)
    lin = ln.linearize_at(traj, params)
    dt, u1, v1 = tg.dt, traj.u[1, 0], traj.v[1, 0]
    a_u = 1 + dt * mu * u0
    m_uu = 1 + dt * r - dt * mu * u1
    a_v = 1 + dt - dt * fval
    step = np.array([[m_uu / a_u, 0.0], [dt * 2 * u1 * m_uu / (a_u * a_v), 1 / a_v]])
    a, b = 0.7, -1.1
    aU, aV, aF, _, _ = ln.tangent_step_transpose(lin, 0, np.full(3, a), np.full(3, b))
    expected = step.T @ [a, b]
    assert np.allclose(aU, expected[0], rtol=1e-13) and np.allclose(aV, expected[1], rtol=1e-13)
    assert np.allclose(aF, dt * v1 * b / a_v, rtol=1e-13)


def test_pullback_identity(setting):
    scenario, f, cost, traj, lin = setting
    g, tg = scenario.grid, scenario.timegrid
    rng = np.random.default_rng(8)
    for _ in range(10):
        su, sv = rng.standard_normal((2,) + traj.u.shape)
        F = rng.standard_normal(f.shape) * g.mask_float
        U, V = ln.solve_tangent(lin, F)
        lhs = gr.spacetime_inner(g, tg, su, U) + gr.spacetime_inner(g, tg, sv, V)
        rhs = gr.spacetime_inner(g, tg, ad.pullback(lin, su, sv), F)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))


def test_norms_reported(setting):
    scenario, f, cost, traj, lin = setting
    adj = ad.solve_adjoint(lin, cost_state_derivative(traj, cost, 2.0))
    norms = adj.norms(scenario.grid, scenario.timegrid)
    assert set(norms) == {"sigma_Linf_L2", "sigma_L2_H1", "eta_L2_L2"}
    assert all(np.isfinite(v) and v > 0 for v in norms.values())


# ----------------------------------------------------------------- residual


def residual_at(n, N, scheme=gr.CENTRAL, T=0.2):
    g, tg = gr.build_grid(1, 1.0, n, "all"), gr.TimeGrid(T, N)
    x = g.centers()[0]
    params = fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True, drift_scheme=scheme)
    traj = fw.solve_state(g, 1 + 0.5 * np.cos(np.pi * x), 1 + 0.3 * np.cos(2 * np.pi * x),
                          np.full((N, n), 0.3), params, tg)
    ud = 0.8 + 0.2 * np.cos(np.pi * x)
    cost = CostParams(gamma_u=1.0, gamma_v=1.0, gamma_f=0.0, u_d=ud, v_d=1.0)
    src = cost_state_derivative(traj, cost, 2.0)
    lin = ln.linearize_at(traj, params)
    return ad.adjoint_residual_check(ad.solve_adjoint(lin, src), lin, src)["max_residual"]


def test_residual_zero_case(setting):
    scenario, f, cost, traj, lin = setting
    zero = np.zeros_like(traj.u)
    src = ad.AdjointSources(zero, zero)
    rep = ad.adjoint_residual_check(ad.solve_adjoint(lin, src), lin, src)
    assert rep["max_residual"] == 0.0


def test_residual_decreases_under_refinement():
    coarse, fine = residual_at(32, 160), residual_at(64, 640)
    assert coarse / fine >= 1.7


def test_residual_of_spatially_constant_trajectory_is_first_order_in_dt():
    def run(N):
        g, tg = gr.build_grid(1, 1.0, 4, "all"), gr.TimeGrid(0.5, N)
        params = fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)
        traj = fw.solve_state(g, np.full(4, 1.5), np.ones(4), np.full((N, 4), 0.3), params, tg)
        cost = CostParams(gamma_u=1.0, gamma_v=1.0, gamma_f=0.0, u_d=1.0, v_d=0.5)
        src = cost_state_derivative(traj, cost, 2.0)
        lin = ln.linearize_at(traj, params)
        return ad.adjoint_residual_check(ad.solve_adjoint(lin, src), lin, src)["max_residual"]

    errs = [run(N) for N in (40, 80, 160)]
    rates = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) > 0.8
