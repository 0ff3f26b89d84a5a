import numpy as np
import pytest

from chemorep import diagnostics as dg
from chemorep import forward as fw
from chemorep import grid as gr

# frozen from the printed piecewise formulas
EXPONENTS = {
    1.5: {"gamma": 5 / 3, "alpha": 3.0, "beta": 5.0, "mu": 10 / 3},
    2.0: {"gamma": 2.0, "alpha": 3.0, "beta": 5.0, "mu": 2.5},
    2.2: {"gamma": 55 / 29, "alpha": 3.6, "beta": 6.0, "mu": 2.5},
    2.4: {"gamma": 2.0, "alpha": 4.2, "beta": 7.0, "mu": 2.5},
    3.0: {"gamma": 2.0, "alpha": 6.0, "beta": 10.0, "mu": 2.5},
}


@pytest.mark.parametrize("p", sorted(EXPONENTS))
def test_exponent_values(p):
    table = dg.exponent_table(p)
    for key, value in EXPONENTS[p].items():
        assert table[key] == pytest.approx(value, rel=1e-15, abs=1e-15)


def test_exponent_branch_points():
    below = dg.exponent_table(2.0 - 1e-12)
    at = dg.exponent_table(2.0)
    above = dg.exponent_table(2.0 + 1e-12)
    for key in ("alpha", "beta", "mu"):
        assert above[key] == pytest.approx(at[key], abs=1e-9)
        assert below[key] == pytest.approx(at[key], abs=1e-9)
    assert below["gamma"] == pytest.approx(at["gamma"], abs=1e-9)
    # the middle gamma branch starts at 50/28, not at 2
    assert above["gamma"] == pytest.approx(50 / 28, abs=1e-9)
    assert dg.exponent_table(2.4 - 1e-12)["gamma"] == pytest.approx(2.0, abs=1e-9)


def test_exponent_table_rejects_p_at_most_one():
    for p in (1.0, 0.5):
        with pytest.raises(ValueError):
            dg.exponent_table(p)


# --------------------------------------------------------------------- mass


def test_mass_bound_branches():
    g = gr.build_grid(1, 1.0, 8)
    u0 = np.full(8, 0.3)
    assert dg.mass_bound(g, u0, fw.ModelParams(p=2.0)) == pytest.approx(0.3)
    assert dg.mass_bound(g, u0, fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)) == pytest.approx(1.0)
    assert dg.mass_bound(g, 3 * u0 + 1, fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)) == pytest.approx(1.9)
    assert dg.mass_bound(g, u0, fw.ModelParams(p=3.0, r=4.0, mu=1.0, logistic=True)) == pytest.approx(2.0)
    assert dg.mass_bound(g, u0, fw.ModelParams(p=2.0, r=1.0, logistic=True)) == np.inf


def test_mass_report_without_reactions():
    g = gr.build_grid(1, 1.0, 16)
    x = g.centers()[0]
    u0 = 1 + 0.5 * np.cos(np.pi * x)
    traj = fw.solve_state(g, u0, np.ones(16), None, fw.ModelParams(p=2.0), gr.TimeGrid(0.5, 50))
    rep = dg.mass_report(traj, fw.ModelParams(p=2.0))
    assert rep["mass_residual_max"] <= 1e-10
    assert rep["K0"] == pytest.approx(gr.integrate(g, u0))


def test_logistic_mass_stays_below_bound():
    g = gr.build_grid(1, 1.0, 16)
    x = g.centers()[0]
    params = fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)
    for u0 in (0.2 + 0.1 * np.cos(np.pi * x), 3 + np.cos(np.pi * x)):
        traj = fw.solve_state(g, u0, np.ones(16), None, params, gr.TimeGrid(3.0, 300))
        rep = dg.mass_report(traj, params)
        assert rep["mass_residual_max"] <= 1e-10
        assert rep["max_mass"] <= rep["K0"] + 1e-8


# ------------------------------------------------------------------- energy


def test_zero_energy():
    g, tg = gr.build_grid(1, 1.0, 8), gr.TimeGrid(1.0, 4)
    traj = fw.solve_state(g, np.zeros(8), np.zeros(8), None, fw.ModelParams(p=1.5), tg)
    rep = dg.energy_report(traj, fw.ModelParams(p=1.5))
    assert not rep["energy_series"].any() and not rep["energy_residuals"].any()


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_constant_state_energy_closed_form(p):
    g, tg = gr.build_grid(2, (1.0, 2.0), (4, 4)), gr.TimeGrid(0.5, 5)
    c, dt = 0.8, 0.1
    traj = fw.solve_state(g, np.full(g.size, c), np.zeros(g.size), None, fw.ModelParams(p=p), tg)
    v = 0.0
    for n in range(tg.N + 1):
        # H1 norm squared is |grad v|^2 + (int v)^2; the domain area is 2
        expected = 2.0 * c**p / (p * (p - 1)) + (2.0 * v) ** 2 / (2 * p)
        assert dg.energy(g, traj.u[n], traj.v[n], p) == pytest.approx(expected, rel=1e-12, abs=1e-14)
        v = (v + dt * c**p) / (1 + dt)


def test_energy_clamps_negative_density():
    g = gr.build_grid(1, 1.0, 4)
    assert dg.energy(g, -np.ones(4), np.zeros(4), 2.0) == 0.0


def test_energy_residual_converges_without_control():
    # non-logistic, no control, smooth data: the balance residual is first order in dt
    def residual(n, N):
        g = gr.build_grid(1, 1.0, n)
        x = g.centers()[0]
        params = fw.ModelParams(p=1.5, drift_scheme=gr.CENTRAL)
        traj = fw.solve_state(g, 1 + 0.5 * np.cos(np.pi * x), 1 + 0.5 * np.cos(np.pi * x), None,
                              params, gr.TimeGrid(0.1, N))
        return dg.energy_report(traj, params)["energy_residual_max"]

    errs = [residual(n, N) for n, N in ((16, 40), (32, 160), (64, 640))]
    rates = [dg.observed_rate(a, b, 4.0) for a, b in zip(errs, errs[1:])]
    assert min(rates) >= 0.9


def test_observed_rate():
    assert dg.observed_rate(4.0, 1.0, 2.0) == pytest.approx(2.0)
    assert dg.observed_rate(1.0, 0.0, 2.0) == np.inf


# ------------------------------------------------------------------- serrin


def _const_traj(value, f=0.0):
    g, tg = gr.build_grid(2, 1.0, (4, 4)), gr.TimeGrid(1.0, 4)
    shape = (5, g.size)
    return fw.StateTrajectory(g, tg, np.full(shape, value), np.ones(shape), np.full((4, g.size), f))


def test_serrin_norms_of_one():
    rep = dg.serrin_report(_const_traj(1.0, 1.0), 2.0)
    assert all(v == pytest.approx(1.0, rel=1e-14) for v in rep.values())


def test_serrin_norms_of_two():
    rep = dg.serrin_report(_const_traj(2.0), 2.0)
    assert rep["u_L5p2"] == pytest.approx(2.0, rel=1e-14)
    assert rep["u_L10_3"] == pytest.approx(2.0, rel=1e-14)
    assert rep["f_L5_2"] == 0.0


def test_serrin_reproducible():
    traj = _const_traj(0.0)
    traj.u[:] = np.random.default_rng(0).random(traj.u.shape)
    a, b = dg.serrin_report(traj, 2.5, 0.1), dg.serrin_report(traj, 2.5, 0.1)
    assert a == b and all(np.isfinite(v) for v in a.values())


def test_diagnose_fields():
    g = gr.build_grid(1, 1.0, 8)
    params = fw.ModelParams(p=2.0, r=1.0, mu=1.0, logistic=True)
    traj = fw.solve_state(g, np.ones(8), np.ones(8), None, params, gr.TimeGrid(0.1, 3))
    d = dg.diagnose(traj, params).to_dict()
    assert d["exponents"] == dg.exponent_table(2.0)
    assert d["min_u"] == pytest.approx(1.0) and d["min_v"] >= 0
    assert len(d["mass_series"]) == 4 and len(d["energy_residuals"]) == 3
    assert d["logistic_norm"] == d["serrin_norms"]["u_L2pm1"]
