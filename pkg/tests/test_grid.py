import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdho.errors import DomainError, ValidationError
from tdho.grid import (Grid, WaveFunction, apply_fourier_multiplier, apply_position_multiplier, dilate, fftn,
                       from_function, load_snapshot, make_gaussian, momentum_bump, save_snapshot, theta_apply)
from tdho.oscillator import OscillatorModel


@pytest.mark.parametrize("kw", [dict(dim=3, N=64, L=1.0), dict(dim=1, N=100, L=1.0), dict(dim=1, N=64, L=0.0)])
def test_grid_validation(kw):
    with pytest.raises(ValidationError):
        Grid(**kw)


def test_grid_geometry():
    g = Grid(1, 256, 8.0)
    assert g.dx == pytest.approx(1 / 16)
    assert g.p_max == pytest.approx(16 * math.pi)
    assert g.axis[0] == -8.0 and g.axis[-1] == pytest.approx(8.0 - g.dx)
    vals, inv = g.r2_levels
    assert np.array_equal(vals[inv], g.r2)


def test_gaussian_moments(grid1d):
    psi = make_gaussian(grid1d, 1.5, -2.0, 1.2)
    assert psi.norm() == pytest.approx(1.0, abs=1e-13)
    assert psi.expect_x()[0] == pytest.approx(1.5, abs=1e-12)
    assert psi.expect_p()[0] == pytest.approx(-2.0, abs=1e-12)
    # |psi|^2 ~ exp(-x^2/sigma^2): variance sigma^2/2
    assert psi.variance_x()[0] == pytest.approx(1.2**2 / 2, rel=1e-12)
    assert psi.expect_p2() == pytest.approx(4.0 + 1 / (2 * 1.2**2), rel=1e-12)


def test_parseval(grid1d):
    psi = make_gaussian(grid1d, 0.3, 1.0, 0.7)
    assert psi.norm_momentum() == pytest.approx(psi.norm(), rel=1e-13)


def test_gaussian_domain_checks(grid1d):
    with pytest.raises(DomainError):
        make_gaussian(grid1d, 30.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        make_gaussian(grid1d, 0.0, 98.0, 1.0)
    with pytest.raises(DomainError):
        make_gaussian(grid1d, 0.0, 0.0, -1.0)


def test_wavefunction_is_immutable(grid1d):
    psi = make_gaussian(grid1d, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 1.0
    with pytest.raises(AttributeError):
        psi.time_tag = 3.0


def test_arithmetic_and_inner(grid1d):
    a = make_gaussian(grid1d, 0.0, 0.0, 1.0)
    b = make_gaussian(grid1d, 0.5, 1.0, 1.0)
    assert (a - a).norm() == 0.0
    assert (2 * a).norm() == pytest.approx(2.0)
    assert a.inner(b) == pytest.approx(np.conj(b.inner(a)))
    assert a.distance(b) == pytest.approx((a - b).norm())


@pytest.mark.parametrize("beta", [-0.5, -0.1, 0.1, 0.5])
def test_dilation_matches_rescaled_gaussian(beta):
    g = Grid(1, 2048, 64.0)
    psi = make_gaussian(g, 1.0, 0.5, 1.0)
    s = math.exp(2 * beta)
    expected = make_gaussian(g, s * 1.0, 0.5 / s, s * 1.0)
    assert dilate(psi, beta).distance(expected) < 1e-10


@pytest.mark.parametrize("beta", [-0.5, -0.1, 0.1, 0.5])
def test_dilation_quadratic_forms(beta):
    g = Grid(1, 2048, 64.0)
    psi = make_gaussian(g, 0.0, 0.0, 1.0)
    d = dilate(psi, -beta)
    assert d.expect_p2() / psi.expect_p2() == pytest.approx(math.exp(4 * beta), rel=1e-6)
    assert d.expect_x2() / psi.expect_x2() == pytest.approx(math.exp(-4 * beta), rel=1e-6)


def test_dilation_group_and_unitarity():
    g = Grid(2, 128, 16.0)
    psi = make_gaussian(g, (0.5, -0.5), (1.0, 0.0), 1.0)
    d = dilate(psi, 0.2)
    assert d.norm() == pytest.approx(1.0, abs=1e-10)
    assert dilate(d, -0.2).distance(psi) < 1e-9
    assert dilate(psi, 0.0) is psi


def test_dilation_margin_errors():
    g = Grid(1, 512, 16.0)
    with pytest.raises(DomainError):
        dilate(make_gaussian(g, 0.0, 0.0, 2.0), 1.0)
    with pytest.raises(DomainError):
        dilate(make_gaussian(g, 0.0, 0.0, 1.0), 3.0)


def test_multipliers(grid1d):
    psi = make_gaussian(grid1d, 0.0, 0.0, 1.0)
    shifted = apply_fourier_multiplier(psi, lambda p: np.exp(-1j * p * 2.0))
    assert shifted.expect_x()[0] == pytest.approx(2.0, abs=1e-10)
    phased = apply_position_multiplier(psi, lambda x: np.exp(1.5j * x))
    assert phased.expect_p()[0] == pytest.approx(1.5, abs=1e-10)


def test_momentum_bump_support():
    g = Grid(1, 4096, 512.0)
    psi = momentum_bump(g, 1.0, 0.25)
    spec = np.abs(fftn(psi.amplitudes)) ** 2
    p = g.p_axis
    # zero outside the support up to FFT roundoff
    assert np.max(spec[np.abs(p - 1.0) >= 0.25]) < 1e-25 * np.max(spec)
    assert psi.norm() == pytest.approx(1.0)
    assert psi.expect_x()[0] == pytest.approx(0.0, abs=1e-9)


def test_theta_is_symmetric():
    model = OscillatorModel(m=0.125, k=0.0234375, r0=1.0)
    g = Grid(1, 1024, 64.0)
    a = make_gaussian(g, 5.0, 1.0, 2.0)
    b = make_gaussian(g, -3.0, -0.5, 1.5)
    lhs = a.inner(theta_apply(b, model, 4.0))
    rhs = theta_apply(a, model, 4.0).inner(b)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_theta_needs_late_time(grid1d):
    with pytest.raises(DomainError):
        theta_apply(make_gaussian(grid1d, 0, 0, 1), OscillatorModel.from_exponent(), 0.5)


def test_snapshot_round_trip(tmp_path):
    g = Grid(2, 64, 8.0)
    psi = make_gaussian(g, (0.1, 0.2), (1.0, -1.0), 1.0, time_tag=2.5)
    path = tmp_path / "s.tdho"
    save_snapshot(psi, path)
    back = load_snapshot(path)
    assert back.grid == g and back.time_tag == 2.5
    assert np.array_equal(back.amplitudes, psi.amplitudes)


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tdho"
    path.write_bytes(b"nope")
    with pytest.raises(ValidationError):
        load_snapshot(path)


def test_from_function_zero_state(grid1d):
    with pytest.raises(DomainError):
        from_function(grid1d, lambda x: 0 * x)


@given(x0=st.floats(-10, 10), p0=st.floats(-15, 15))
def test_gaussian_means_property(x0, p0):
    g = Grid(1, 512, 32.0)
    psi = make_gaussian(g, x0, p0, 1.0)
    assert psi.expect_x()[0] == pytest.approx(x0, abs=1e-9)
    assert psi.expect_p()[0] == pytest.approx(p0, abs=1e-9)


def test_wavefunction_shape_check(grid1d):
    with pytest.raises(ValidationError):
        WaveFunction(grid1d, np.zeros(10, complex))
