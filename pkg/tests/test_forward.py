from dataclasses import replace

import numpy as np
import pytest

from chemorep import forward as fw
from chemorep import grid as gr
from chemorep.cost import residual_check
from chemorep.errors import KappaViolation, NegativeInitialData, StabilityViolation


@pytest.fixture
def line():
    return gr.build_grid(1, 1.0, 16, "all")


def smooth_data(grid):
    x = grid.centers()[0]
    return 1.0 + 0.5 * np.cos(np.pi * x), 1.0 + 0.3 * np.cos(2 * np.pi * x)


def test_params_validation():
    with pytest.raises(ValueError):
        fw.ModelParams(p=1.0)
    with pytest.raises(ValueError):
        fw.ModelParams(p=2.0, r=1.0)  # logistic terms need logistic=True
    with pytest.raises(ValueError):
        fw.ModelParams(p=2.0, drift_scheme="donor")


def test_rest_state(line):
    u, v = fw.step_state(line, np.zeros(16), np.zeros(16), np.zeros(16), fw.ModelParams(p=2.0), 0.1)
    assert not u.any() and not v.any()


def test_constant_state_scalar_reduction(line):
    c, dt = 0.7, 0.1
    u, v = fw.step_state(line, np.full(16, c), np.zeros(16), None, fw.ModelParams(p=2.0), dt)
    assert np.allclose(u, c, rtol=1e-13)
    assert np.allclose(v, c**2 * dt / (1 + dt), rtol=1e-12)


def test_logistic_scalar_reduction(line):
    params = fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)
    u, _ = fw.step_state(line, np.full(16, 2.0), np.zeros(16), None, params, 0.1)
    assert np.allclose(u, 2.2 / 1.2, rtol=1e-13)


def test_control_acts_only_on_mask():
    g = gr.build_grid(1, 1.0, 8, [(0.0, 0.5)])
    params = fw.ModelParams(p=2.0, solver="direct")
    f = np.full(8, 3.0)
    _, v_ctrl = fw.step_state(g, np.zeros(8), np.ones(8), f, params, 0.01)
    _, v_none = fw.step_state(g, np.zeros(8), np.ones(8), f * ~g.control_mask, params, 0.01)
    assert not np.allclose(v_ctrl, v_none)
    traj = fw.solve_state(g, np.ones(8), np.ones(8), np.full((2, 8), 1.0), params, gr.TimeGrid(0.01, 2))
    assert np.all(traj.f[:, ~g.control_mask] == 0)


def test_zero_trajectory(line):
    traj = fw.solve_state(line, np.zeros(16), np.zeros(16), None, fw.ModelParams(p=1.5), gr.TimeGrid(1.0, 5))
    assert not traj.u.any() and not traj.v.any()


def test_initial_data_recorded_exactly(line):
    u0, v0 = smooth_data(line)
    traj = fw.solve_state(line, u0, v0, None, fw.ModelParams(p=2.0), gr.TimeGrid(0.1, 5))
    assert np.array_equal(traj.u[0], u0) and np.array_equal(traj.v[0], v0)


def test_mass_conserved_without_reactions(line):
    u0, v0 = smooth_data(line)
    traj = fw.solve_state(line, u0, v0, np.full((50, 16), 0.4), fw.ModelParams(p=2.0), gr.TimeGrid(0.5, 50))
    m = [gr.integrate(line, u) for u in traj.u]
    assert abs(m[-1] - m[0]) <= 1e-10 * m[0]


def test_determinism(line):
    u0, v0 = smooth_data(line)
    params = fw.ModelParams(p=2.5, r=1.0, mu=0.5, logistic=True)
    a = fw.solve_state(line, u0, v0, None, params, gr.TimeGrid(0.2, 20))
    b = fw.solve_state(line, u0, v0, None, params, gr.TimeGrid(0.2, 20))
    assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)


def test_negative_initial_data(line):
    with pytest.raises(NegativeInitialData):
        fw.solve_state(line, -np.ones(16), np.ones(16), None, fw.ModelParams(p=2.0), gr.TimeGrid(1.0, 2))


def test_stability_guards(line):
    params = fw.ModelParams(p=2.0)
    with pytest.raises(StabilityViolation):
        fw.step_state(line, np.ones(16), np.ones(16), np.full(16, 20.0), params, 0.1)
    x = line.centers()[0]
    with pytest.raises(StabilityViolation):
        fw.step_state(line, np.ones(16), 50 * np.cos(np.pi * x), None, params, 0.1)
    # the central scheme has no donor-cell bound
    fw.step_state(line, np.ones(16), 50 * np.cos(np.pi * x), None, replace(params, drift_scheme="central"), 0.1)


def test_solver_residual_meets_tolerance(line):
    u0, v0 = smooth_data(line)
    params = fw.ModelParams(p=1.5, r=1.0, mu=1.0, logistic=True)
    traj = fw.solve_state(line, u0, v0, 0.3 * np.ones((10, 16)), params, gr.TimeGrid(0.1, 10))
    assert residual_check(traj, params) <= 1e-10


def test_cg_and_direct_agree(line):
    u0, v0 = smooth_data(line)
    a = fw.solve_state(line, u0, v0, None, fw.ModelParams(p=2.0), gr.TimeGrid(0.1, 10))
    b = fw.solve_state(line, u0, v0, None, fw.ModelParams(p=2.0, solver="direct"), gr.TimeGrid(0.1, 10))
    assert np.allclose(a.u, b.u, rtol=1e-10, atol=1e-12)


# ---------------------------------------------------------------- regularized


def test_regularized_constant_w(line):
    params = fw.ModelParams(p=2.0, eps=0.3)
    assert np.allclose(fw.elliptic_solve(line, np.full(16, 2.0), params), 2.0, rtol=1e-12)


def test_eps_zero_is_bitwise_unregularized(line):
    u0, v0 = smooth_data(line)
    params = fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)
    f = np.full(16, 0.5)
    u1, v1 = fw.step_state(line, u0, v0, f, params, 0.002)
    u2, w2, v2 = fw.step_state_regularized(line, u0, v0, f, params, 0.002)
    assert np.array_equal(u1, u2) and np.array_equal(v1, v2) and np.array_equal(w2, v2)


def test_regularized_step_equations(line):
    u0, v0 = smooth_data(line)
    params = fw.ModelParams(p=2.0, eps=0.05, solver="direct")
    w0 = fw.initial_w(line, v0, params)
    dt = 0.002
    u1, w1, v1 = fw.step_state_regularized(line, u0, w0, np.full(16, 0.5), params, dt)
    lap = line.laplacian_matrix
    assert np.allclose(v1 - 0.05 * lap @ v1, w1, atol=1e-12)
    resid = (w1 - w0) / dt - (lap @ w1 - w1 + u1**2 + 0.5 * np.maximum(v1, 0))
    assert np.abs(resid).max() < 1e-9


def test_eps_sweep_monotone():
    g = gr.build_grid(1, 1.0, 32, [(0.0, 0.5)])
    tg = gr.TimeGrid(0.5, 200)
    u0, v0 = smooth_data(g)
    f = np.full((200, 32), 0.5)
    ref = fw.solve_state(g, u0, v0, f, fw.ModelParams(p=2.0), tg)
    devs = []
    for eps in (0.1, 0.05, 0.025, 0.0125):
        run = fw.solve_state(g, u0, v0, f, fw.ModelParams(p=2.0, eps=eps), tg)
        devs.append(gr.bochner_norm(g, tg, run.v - ref.v, np.inf, 2))
    assert all(b < a for a, b in zip(devs, devs[1:]))


# -------------------------------------------------------------------- seeding


def test_seed_zero_density(line):
    f, traj = fw.seed_admissible(line, np.zeros(16), np.ones(16), fw.ModelParams(p=2.0), gr.TimeGrid(0.1, 5))
    assert np.allclose(traj.u, 0) and np.allclose(traj.v, 1) and np.allclose(f, 1)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_seed_constant_data(line, p):
    c = 0.6
    f, traj = fw.seed_admissible(line, np.full(16, c), np.ones(16), fw.ModelParams(p=p), gr.TimeGrid(0.1, 5))
    assert np.allclose(f, 1 - c**p, atol=1e-13)
    assert np.allclose(traj.u, c, atol=1e-13) and np.allclose(traj.v, 1, atol=1e-13)


def test_seed_output_satisfies_state_equations(line):
    u0, v0 = smooth_data(line)
    params = fw.ModelParams(p=2.5, r=1.0, mu=1.0, logistic=True)
    f, traj = fw.seed_admissible(line, u0, v0, params, gr.TimeGrid(0.2, 20))
    assert residual_check(traj, params) <= 1e-10


def test_seed_preconditions():
    partial = gr.build_grid(1, 1.0, 8, [(0.0, 0.5)])
    with pytest.raises(ValueError):
        fw.seed_admissible(partial, np.ones(8), np.ones(8), fw.ModelParams(p=2.0), gr.TimeGrid(0.1, 2))
    full = gr.build_grid(1, 1.0, 8)
    with pytest.raises(KappaViolation):
        fw.seed_admissible(full, np.ones(8), np.zeros(8), fw.ModelParams(p=2.0), gr.TimeGrid(0.1, 2))
