import numpy as np
import pytest
import sympy as sp

from chemorep import mms

X = sp.symbols("x0 x1")
T = sp.Symbol("t")


def _div(vec, dim):
    return sum(sp.diff(vec[i], X[i]) for i in range(dim))


def _grad(expr, dim):
    return [sp.diff(expr, X[i]) for i in range(dim)]


def _lap(expr, dim):
    return _div(_grad(expr, dim), dim)


def _mode(k, dim):
    return sp.Mul(*[sp.cos(k * sp.pi * X[i]) for i in range(dim)])


def symbolic_linear(target, dim):
    """Forcing ``(g0, gV)`` derived symbolically from the generic system."""
    U = sp.exp(-T) * _mode(1, dim)
    V = sp.exp(-T) * _mode(2, dim)
    g0 = sp.diff(U, T) - _lap(U, dim) + mms.A_COEF * U
    gV = None
    if target in ("a1", "a19"):
        c = [mms.C_AMP * sp.sin(sp.pi * X[i]) for i in range(dim)]
        g1 = [mms.G1_AMP * sp.exp(-T) * sp.sin(sp.pi * X[i]) for i in range(dim)]
        g0 += _div([U * ci for ci in c], dim) + _div(g1, dim)
    if target == "a19":
        g0 += _div([mms.D_COEF * gi for gi in _grad(V, dim)], dim)
        gV = sp.diff(V, T) - _lap(V, dim) + mms.BETA1 * V + mms.BETA2 * U
    return g0, gV


def symbolic_nonlinear(dim):
    u = 1 + sp.Rational(1, 2) * sp.exp(-T) * _mode(1, dim)
    v = 1 + sp.Rational(1, 2) * sp.exp(-T) * _mode(2, dim)
    p, r, mu, f = mms.P_EXP, mms.R_COEF, mms.MU_COEF, mms.F_CONST
    gu = sp.diff(u, T) - _lap(u, dim) - _div([u * gi for gi in _grad(v, dim)], dim) - r * u + mu * u**p
    gv = sp.diff(v, T) - _lap(v, dim) + v - u**p - f * v
    return gu, gv


def _points(dim, rng):
    return [rng.random(20) for _ in range(dim)], 0.37


def _evaluate(expr, dim, xs, t):
    fn = sp.lambdify(list(X[:dim]) + [T], expr, "numpy")
    return np.broadcast_to(fn(*xs, t), xs[0].shape)


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("target", ["a1", "a11", "a19"])
def test_linear_forcing_matches_symbolic(target, dim):
    xs, t = _points(dim, np.random.default_rng(0))
    g0, gV = mms.linear_forcing(target, xs, t)
    s0, sV = symbolic_linear(target, dim)
    assert np.allclose(g0, _evaluate(s0, dim, xs, t), rtol=1e-12, atol=1e-12)
    if target == "a19":
        assert np.allclose(gV, _evaluate(sV, dim, xs, t), rtol=1e-12, atol=1e-12)
    else:
        assert gV is None


@pytest.mark.parametrize("dim", [1, 2])
def test_nonlinear_forcing_matches_symbolic(dim):
    xs, t = _points(dim, np.random.default_rng(1))
    gu, gv = mms.nonlinear_forcing(xs, t)
    su, sv = symbolic_nonlinear(dim)
    assert np.allclose(gu, _evaluate(su, dim, xs, t), rtol=1e-12, atol=1e-12)
    assert np.allclose(gv, _evaluate(sv, dim, xs, t), rtol=1e-12, atol=1e-12)


def test_exact_fields_satisfy_neumann_condition():
    for dim in (1, 2):
        xs = [np.array([0.0, 1.0])] * dim
        for comp in mms.CosMode(1).grad(xs) + mms.CosMode(2).grad(xs):
            assert np.abs(comp).max() < 1e-12


def test_unknown_target_rejected():
    with pytest.raises(ValueError):
        mms.run_linear("a7", 1, 8, 4)


def test_joint_refinement_reaction_diffusion():
    # halving h and quartering dt cuts an O(dt + h^2) error by about 4
    coarse = mms.run_linear("a11", 1, 16, 16)
    fine = mms.run_linear("a11", 1, 32, 64)
    assert 3.5 < coarse / fine < 4.5


@pytest.mark.parametrize("target", mms.TARGETS)
def test_one_dimensional_orders(target):
    space = mms.space_study(target, 1)
    time = mms.time_study(target, 1)
    assert space[-1].rate >= 1.9
    assert time[-1].rate >= 0.9
    assert [r.level for r in space] == [0, 1, 2]


def test_write_table(tmp_path):
    rows = [mms.ConvergenceRow(0, 0.5, 0.1, 1.0, None), mms.ConvergenceRow(1, 0.25, 0.1, 0.25, 2.0)]
    mms.write_table(tmp_path / "t.csv", rows)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "level,h,dt,error,rate"
    assert lines[1].endswith(",") and lines[2].endswith(",2.0")
