import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from tdho.cutoffs import CutoffSpec, cutoff_eval, rho_lambda, smooth_step, smooth_step_derivative
from tdho.errors import ValidationError


def _bump(u):
    return np.exp(-1.0 / (u * (1.0 - u))) if 0 < u < 1 else 0.0


def test_step_endpoints():
    assert smooth_step(0.0) == 0.0 and smooth_step(-3.0) == 0.0
    assert smooth_step(1.0) == 1.0 and smooth_step(7.0) == 1.0


@pytest.mark.parametrize("u", [0.05, 0.2, 0.5, 0.77, 0.95])
def test_step_against_quadrature(u):
    total = quad(_bump, 0, 1, epsabs=1e-15, epsrel=1e-14)[0]
    part = quad(_bump, 0, u, epsabs=1e-15, epsrel=1e-14)[0]
    assert smooth_step(u) == pytest.approx(part / total, abs=1e-12)


@given(st.floats(0, 1))
def test_step_symmetry(u):
    # the bump is symmetric about 1/2
    assert smooth_step(u) + smooth_step(1 - u) == pytest.approx(1.0, abs=1e-12)


def test_step_monotone_and_derivative():
    u = np.linspace(-0.5, 1.5, 4001)
    s = smooth_step(u)
    assert np.all(np.diff(s) >= -1e-15)
    h = 1e-6
    mid = np.linspace(0.01, 0.99, 50)
    fd = (smooth_step(mid + h) - smooth_step(mid - h)) / (2 * h)
    assert np.allclose(fd, smooth_step_derivative(mid), atol=1e-6)


def test_le_ge_supports():
    le = CutoffSpec.le(2.0, 0.5)
    ge = CutoffSpec.ge(2.0, 0.5)
    assert le(1.5) == 1.0 and le(2.0) == 0.0
    assert ge(2.0) == 0.0 and ge(2.5) == 1.0
    s = np.linspace(0, 4, 101)
    assert np.all((0 <= le(s)) & (le(s) <= 1))


def test_window_is_product():
    w = CutoffSpec.window(1.0, 3.0, 0.25)
    s = np.linspace(0, 4, 401)
    expect = cutoff_eval(CutoffSpec.ge(1.0, 0.25), s) * cutoff_eval(CutoffSpec.le(3.0, 0.25), s)
    assert np.array_equal(w(s), expect)
    assert w(2.0) == 1.0 and w(0.9) == 0.0 and w(3.1) == 0.0


def test_phi1_flat_region_and_support():
    f = CutoffSpec.phi1(0.05, 16.0)
    assert np.all(f(np.linspace(0.1, 8.0, 50)) == 1.0)
    assert f(0.05) == 0.0 and f(16.0) == 0.0 and f(20.0) == 0.0


def test_phi2_shape():
    f = CutoffSpec.phi2(0.1)
    s = np.linspace(0, 1, 1001)
    v = f(s)
    assert np.all(v[s <= 0.1] == 0.0) and np.all(v[s >= 0.2] == 1.0)
    assert np.all(np.diff(v) >= -1e-15)


@pytest.mark.parametrize("make", [
    lambda: CutoffSpec("nope"),
    lambda: CutoffSpec.le(1.0, 0.0),
    lambda: CutoffSpec.window(1.0, 1.2, 0.25),
    lambda: CutoffSpec.phi1(1.0, 3.0),
    lambda: CutoffSpec.phi2(0.0),
    lambda: CutoffSpec.ge(float("nan"), 1.0),
])
def test_invalid_cutoffs(make):
    with pytest.raises(ValidationError):
        make()


def test_rho_lambda():
    assert rho_lambda(0.25) == 0.125
    assert rho_lambda(0.0) == 0.0
