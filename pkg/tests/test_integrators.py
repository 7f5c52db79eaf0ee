import numpy as np
import pytest

from dipspin.integrators import TABLEAUS, Integrator, StepSizeError, advance, rk_step


@pytest.mark.parametrize("name", list(Integrator))
def test_tableau_consistency(name):
    tab = TABLEAUS[name]
    for ci, row in zip(tab.c, tab.a):
        assert abs(sum(row) - ci) < 1e-14
    assert abs(sum(tab.b) - 1.0) < 1e-14
    if tab.b_err is not None:
        assert abs(sum(tab.b_err)) < 1e-14


def decay(t, y):
    return -y


@pytest.mark.parametrize("name,order", [(Integrator.RK4, 4), (Integrator.RKF45, 4), (Integrator.DP54, 5)])
def test_convergence_order(name, order):
    tab = TABLEAUS[name]
    errs = []
    for h in (0.1, 0.05):
        y, _ = advance(tab, decay, 0.0, np.array([1.0]), 1.0, h)
        errs.append(abs(y[0] - np.exp(-1.0)))
    observed = np.log2(errs[0] / errs[1])
    assert abs(observed - order) < 0.3


@pytest.mark.parametrize("name", [Integrator.RKF45, Integrator.DP54])
def test_adaptive_meets_tolerance(name):
    def osc(t, y):
        return np.array([y[1], -y[0]])

    y, _ = advance(TABLEAUS[name], osc, 0.0, np.array([1.0, 0.0]), 10.0, 0.1, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(y, [np.cos(10.0), -np.sin(10.0)], atol=1e-8)


def test_error_estimate_shrinks_with_step():
    tab = TABLEAUS[Integrator.DP54]
    _, e1 = rk_step(tab, decay, 0.0, np.array([1.0]), 0.2)
    _, e2 = rk_step(tab, decay, 0.0, np.array([1.0]), 0.1)
    assert abs(e2[0]) < abs(e1[0]) / 16


def test_fixed_step_lands_exactly_on_endpoint():
    calls = []

    def f(t, y):
        calls.append(t)
        return np.zeros_like(y)

    advance(TABLEAUS[Integrator.RK4], f, 0.0, np.zeros(1), 0.3, 0.25)
    # two equal steps of 0.15, four stages each
    assert len(calls) == 8
    assert max(calls) == pytest.approx(0.3)


def test_step_underflow_raises():
    def stiff(t, y):
        return np.array([1e12 * np.sin(1e12 * t)])

    with pytest.raises(StepSizeError):
        advance(TABLEAUS[Integrator.DP54], stiff, 0.0, np.zeros(1), 1.0, 0.1, rtol=1e-14, atol=0.0, h_min=1e-6)
