import numpy as np
import pytest
from scipy.integrate import quad

from tdho.errors import ConvergenceError, DomainError, ValidationError
from tdho.grid import Grid, fftn, ifftn, make_gaussian
from tdho.oscillator import solve_fundamental
from tdho.potential import PotentialSpec
from tdho.propagator import (Schedule, StepPolicy, boundary_leak, dressing_apply, evolve_free_S, evolve_full,
                             evolve_gaussian_exact, evolve_S, factorization_residual, gaussian_params_from,
                             gaussian_variance, gaussian_wavefunction, kinetic_integral)


@pytest.fixture(scope="module")
def g():
    return Grid(1, 1024, 32.0)


def test_policy_validation():
    with pytest.raises(ValidationError):
        StepPolicy(dt_max=0.0)
    assert StepPolicy().fixed(0.1).adaptive is False


@pytest.mark.parametrize("ta,tb", [(1.0, 3.0), (2.0, 50.0), (-8.0, -1.5)])
def test_kinetic_integral_quadrature(ta, tb):
    ref = quad(lambda t: abs(t) ** -0.5, ta, tb, epsrel=1e-13)[0]
    assert kinetic_integral(0.25, ta, tb) == pytest.approx(ref, rel=1e-11)


def test_free_interval_matches_textbook_spreading(free_inside_model, g):
    # k = 0 on [0, r0]: |psi|^2 variance sigma^2/2 (1 + t^2 / (m^2 sigma^4))
    psi = make_gaussian(g, 0.0, 1.0, 1.0)
    out = evolve_full(free_inside_model, None, psi, 0.0, 1.0, StepPolicy(dt_max=0.05, error_target=1e-9))
    assert out.variance_x()[0] == pytest.approx(0.5 * 2.0, rel=1e-8)
    assert out.expect_x()[0] == pytest.approx(1.0, abs=1e-9)


def test_exact_gaussian_against_spectral_free_evolution(free_inside_model, g):
    psi = make_gaussian(g, 0.5, -1.0, 0.8)
    free = ifftn(np.exp(-0.5j * 0.7 * g.p2) * fftn(psi.amplitudes))
    fs = solve_fundamental(free_inside_model, 10.0)
    ex = gaussian_wavefunction(g, evolve_gaussian_exact(fs, 1.0, gaussian_params_from(0.5, -1.0, 0.8), 0.7))
    assert ex.distance(psi.replace(free)) < 1e-10


def test_gaussian_params_reproduce_make_gaussian(g):
    a = make_gaussian(g, 1.0, 2.0, 1.3)
    b = gaussian_wavefunction(g, gaussian_params_from(1.0, 2.0, 1.3))
    assert a.distance(b) < 1e-12


@pytest.mark.parametrize("fixture", ["free_inside_model", "oscillating_model"])
def test_split_step_matches_gaussian_oracle(fixture, request):
    model = request.getfixturevalue(fixture)
    grid = Grid(1, 2048, 64.0)
    psi = make_gaussian(grid, 0.0, 1.0, 1.0)
    out = evolve_full(model, None, psi, 0.0, 4.0, StepPolicy(dt_max=0.05, error_target=1e-8))
    fs = solve_fundamental(model, 10.0)
    ex = evolve_gaussian_exact(fs, model.m, gaussian_params_from(0.0, 1.0, 1.0), 4.0)
    assert out.distance(gaussian_wavefunction(grid, ex)) < 1e-6
    z1, z2 = fs.zeta1(4.0)[0], fs.zeta2(4.0)[0]
    assert gaussian_variance(ex)[0] == pytest.approx(z1**2 * 0.5 + z2**2 * 0.5, rel=1e-10)


def test_strang_second_order(oscillating_model, g):
    V = PotentialSpec.gaussian_bump(1.0, 1.0, oscillating_model.lam)
    psi = make_gaussian(g, -2.0, 1.5, 1.0)

    def run(dt):
        return evolve_full(oscillating_model, V, psi, 0.0, 2.0, StepPolicy().fixed(dt))

    ref = run(0.0025)
    errs = [run(dt).distance(ref) for dt in (0.04, 0.02, 0.01)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 < r < 4.6 for r in ratios), ratios


def test_unitarity_and_reversibility(oscillating_model, g):
    V = PotentialSpec.static_bump(0.5, 2.0, oscillating_model.lam)
    psi = make_gaussian(g, 1.0, -1.0, 1.0)
    sched = Schedule()
    pol = StepPolicy(dt_max=0.05, error_target=1e-8)
    fwd = evolve_full(oscillating_model, V, psi, 0.0, 3.0, pol, sched)
    assert fwd.norm() == pytest.approx(1.0, abs=1e-10)
    back = evolve_full(oscillating_model, V, fwd, 3.0, 0.0, pol, sched)
    assert back.distance(psi) < 1e-11
    assert sched.total_steps() > 0


def test_s_engine_free_delegation(scatter_model):
    grid = Grid(1, 2048, 256.0)
    psi = make_gaussian(grid, 0.0, 2.0, 4.0)
    a = evolve_S(scatter_model, None, psi, 1.0, 16.0)
    b = evolve_free_S(scatter_model, psi, 1.0, 16.0)
    assert a.distance(b) < 1e-13


def test_s_interval_must_avoid_inner_region(scatter_model, g):
    with pytest.raises(DomainError):
        evolve_S(scatter_model, None, make_gaussian(g, 0, 1, 1), 0.2, 0.8)


def test_dressing_inverse(free_inside_model):
    grid = Grid(1, 2048, 64.0)
    psi = make_gaussian(grid, 0.0, 1.0, 1.0)
    for t in (1.0, 2.0, 4.0):
        there = dressing_apply(free_inside_model, psi, t)
        assert there.norm() == pytest.approx(1.0, abs=1e-10)
        assert dressing_apply(free_inside_model, there, t, inverse=True).distance(psi) < 1e-9


def test_factorization_small(free_inside_model):
    grid = Grid(1, 2048, 64.0)
    psi = make_gaussian(grid, 0.0, 1.0, 1.0)
    pol = StepPolicy().fixed(0.01)
    assert factorization_residual(free_inside_model, None, psi, 1.0, pol) == 0.0
    coarse = factorization_residual(free_inside_model, None, psi, 2.0, StepPolicy().fixed(0.02))
    fine = factorization_residual(free_inside_model, None, psi, 2.0, pol)
    assert fine < 5e-6
    assert 3.5 < coarse / fine < 4.5


def test_convergence_error_carries_history(oscillating_model, g):
    pol = StepPolicy(dt_max=0.5, error_target=1e-14, max_halvings=1)
    with pytest.raises(ConvergenceError) as info:
        evolve_full(oscillating_model, None, make_gaussian(g, 0, 1, 1), 0.0, 1.0, pol)
    assert info.value.report


def test_edge_detection(free_inside_model):
    grid = Grid(1, 256, 16.0)
    psi = make_gaussian(grid, 8.0, 6.0, 1.0)
    with pytest.raises(DomainError):
        evolve_full(free_inside_model, None, psi, 0.0, 1.0, StepPolicy(dt_max=0.05, error_target=1e-6))
    assert boundary_leak(make_gaussian(grid, 0.0, 0.0, 1.0)) == pytest.approx((0.0, 0.0), abs=1e-30)


def test_variance_growth_law(free_inside_model):
    # outside r0 the variance is 0.5 ((c1 t^(1-lam) + c2 t^lam)^2 + (c3 t^(1-lam) + c4 t^lam)^2)
    fs = solve_fundamental(free_inside_model, 2e4)
    c1, c2, c3, c4 = fs.coefficients
    g0 = gaussian_params_from(2.0, 1.0, 1.0)
    for T in (1e3, 2e4):
        var = gaussian_variance(evolve_gaussian_exact(fs, 1.0, g0, T))[0]
        two_term = 0.5 * ((c1 * T**0.75 + c2 * T**0.25) ** 2 + (c3 * T**0.75 + c4 * T**0.25) ** 2)
        assert var == pytest.approx(two_term, rel=1e-9)
    leading = 0.5 * (c1**2 + c3**2)
    assert var / T**1.5 == pytest.approx(leading, rel=0.01)
