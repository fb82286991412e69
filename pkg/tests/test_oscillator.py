import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdho.errors import DomainError, ValidationError
from tdho.oscillator import (ClassicalState, ConstantK0, OscillatorModel, Tabulated, asymptotic_coefficients,
                             classical_flow, integrate_fundamental, lambda_exponent, matching_coefficients,
                             solve_fundamental)


def _tail_fit(value, deriv, lam):
    # a t^(1-lam) + b t^lam through (value, deriv) at t = 1
    a = (deriv - lam * value) / (1.0 - 2.0 * lam)
    return a, value - a


@pytest.mark.parametrize("ratio", [1e-12, 1e-6, 0.01, 0.1875, 0.2499])
def test_lambda_solves_quadratic(ratio):
    lam = lambda_exponent(1.0, ratio)
    assert 0 < lam < 0.5
    assert lam * (1 - lam) == pytest.approx(ratio, rel=1e-13)


def test_lambda_small_ratio_series():
    r = 1e-10
    assert lambda_exponent(2.0, 2.0 * r) == pytest.approx(r + r * r, rel=1e-14)


@pytest.mark.parametrize("k", [0.25, 0.3, 0.0, -0.1])
def test_model_rejects_k_outside_range(k):
    with pytest.raises(ValidationError):
        OscillatorModel(m=1.0, k=k, r0=1.0)


def test_model_rejects_bad_r0():
    with pytest.raises(ValidationError):
        OscillatorModel(m=1.0, k=0.1, r0=0.0)


def test_k_of_t_piecewise(free_inside_model):
    assert free_inside_model.k_of_t(0.5) == 0.0
    assert free_inside_model.k_of_t(4.0) == pytest.approx(0.1875 / 16)
    assert free_inside_model.k_of_t(-4.0) == pytest.approx(0.1875 / 16)


def test_matching_free_inside(free_inside_model):
    # inside zeta1 = 1, zeta2 = t, so at r0 = 1 the data are (1, 0) and (1, 1)
    expected = _tail_fit(1.0, 0.0, 0.25) + _tail_fit(1.0, 1.0, 0.25)
    assert matching_coefficients(free_inside_model) == pytest.approx(expected, abs=1e-14)
    assert expected == pytest.approx((-0.5, 1.5, 1.5, -0.5))


def test_matching_oscillating_inside(oscillating_model):
    w = math.pi / 2
    expected = _tail_fit(0.0, -w, 0.25) + _tail_fit(1.0 / w, 0.0, 0.25)
    assert matching_coefficients(oscillating_model) == pytest.approx(expected, abs=1e-13)


@pytest.mark.parametrize("fixture", ["free_inside_model", "oscillating_model"])
def test_ode_route_matches_closed_forms(fixture, request):
    model = request.getfixturevalue(fixture)
    w = model.omega0
    c = matching_coefficients(model)
    t = np.concatenate([np.linspace(0, 1, 50), np.geomspace(1, 1e3, 200)[1:]])
    brute = integrate_fundamental(model, t)
    inside = t <= 1
    sinc = np.sin(w * t) / w if w else t
    z1 = np.where(inside, np.cos(w * t), c[0] * t**0.75 + c[1] * t**0.25)
    z2 = np.where(inside, sinc, c[2] * t**0.75 + c[3] * t**0.25)
    assert np.max(np.abs(brute[0] - z1)) <= 1e-8
    assert np.max(np.abs(brute[2] - z2)) <= 1e-8


def test_ode_and_closed_methods_agree(oscillating_model):
    a = solve_fundamental(oscillating_model, 100.0, method="ode")
    b = solve_fundamental(oscillating_model, 100.0, method="closed")
    t = np.linspace(-100, 100, 1001)
    assert np.max(np.abs(a.zeta1(t)[0] - b.zeta1(t)[0])) < 1e-9
    assert np.max(np.abs(a.zeta2(t)[1] - b.zeta2(t)[1])) < 1e-9


def _tabulated_model():
    # C^1 join with k t^-2 at |t| = 1: value k, slope -2k
    k = 0.15
    return OscillatorModel(m=1.0, k=k, r0=1.0, inner=Tabulated(lambda t: k * (2.0 - t * t)))


@pytest.mark.parametrize("make", [
    lambda: OscillatorModel.from_exponent(),
    lambda: OscillatorModel.from_exponent(k0=(math.pi / 2) ** 2),
    lambda: OscillatorModel(m=0.125, k=0.0234375, r0=1.0),
    lambda: OscillatorModel(m=2.0, k=0.3, r0=0.5, inner=ConstantK0(3.0)),
    _tabulated_model,
])
def test_wronskian_is_one(make):
    fs = solve_fundamental(make(), 1e3)
    t = np.linspace(-1e3, 1e3, 20001)
    assert np.max(np.abs(fs.wronskian(t) - 1.0)) <= 1e-8


def test_time_reversal_parity(oscillating_model):
    # k even in t: zeta1 even, zeta2 odd
    fs = solve_fundamental(oscillating_model, 50.0)
    t = np.linspace(0.1, 50, 300)
    assert np.allclose(fs.zeta1(-t)[0], fs.zeta1(t)[0], atol=1e-12)
    assert np.allclose(fs.zeta2(-t)[0], -fs.zeta2(t)[0], atol=1e-12)


def test_outside_validity_interval(free_inside_model):
    fs = solve_fundamental(free_inside_model, 10.0)
    with pytest.raises(DomainError):
        fs.zeta1(11.0)


@given(t=st.floats(-200, 200), x=st.floats(-5, 5), p=st.floats(-5, 5))
def test_flow_is_symplectic_and_linear(t, x, p):
    model = OscillatorModel.from_exponent(k0=1.0)
    fs = _cached(model)
    M = fs.flow_matrix(t)
    assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-8)
    s = classical_flow(fs, model.m, ClassicalState(x, p), t)
    assert s.x0[0] == pytest.approx(M[0, 0] * x + M[0, 1] * p, abs=1e-9)
    assert s.p0[0] == pytest.approx(M[1, 0] * x + M[1, 1] * p, abs=1e-9)


_CACHE = {}


def _cached(model):
    if model not in _CACHE:
        _CACHE[model] = solve_fundamental(model, 200.0)
    return _CACHE[model]


def test_classical_flow_identity_at_zero(free_inside_model):
    fs = solve_fundamental(free_inside_model, 10.0)
    s = classical_flow(fs, 1.0, ClassicalState([1.5], [-0.5]), 0.0)
    assert s.x0[0] == pytest.approx(1.5) and s.p0[0] == pytest.approx(-0.5)


def test_asymptotic_coefficients(free_inside_model):
    fs = solve_fundamental(free_inside_model, 1e4)
    a1, a2 = asymptotic_coefficients(fs)
    assert a1 == pytest.approx(-0.5, abs=1e-9)
    assert a2 == pytest.approx(1.5, abs=1e-9)


def test_asymptotic_coefficients_need_long_range(free_inside_model):
    with pytest.raises(DomainError):
        asymptotic_coefficients(solve_fundamental(free_inside_model, 100.0))


def test_classical_state_shape_mismatch():
    with pytest.raises(ValidationError):
        ClassicalState([0.0, 1.0], [1.0])
