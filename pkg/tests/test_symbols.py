import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qlorentz.errors import DomainError
from qlorentz.rng import stream
from qlorentz.symbols import CutoffProfile, DampingProfile, SchwartzSymbol, smooth_step


def _pair_free_brute_d1(a, b, t):
    f = lambda y, x: float(a([x - t * y], [y]) * b([x], [y]))
    val, _ = integrate.dblquad(f, -8, 8, -6, 6, epsabs=1e-12, epsrel=1e-10)
    return val


@pytest.mark.parametrize("t", [0.0, 0.7, 2.0])
def test_free_pairing_matches_brute_force_in_d1(t):
    a = SchwartzSymbol.gaussian(1, 1.5, [0.2], 1.0, [0.3], 0.8) + SchwartzSymbol.gaussian(1, -0.4, [-0.5], 0.6, [0.0], 1.1)
    b = SchwartzSymbol.gaussian(1, 1.0, [0.5], 1.5, [0.0], 1.0)
    ref = _pair_free_brute_d1(a, b, t)
    assert abs(a.pair_free(b, t) - ref) < 1e-8 * abs(ref)


def test_marginal_pairing_matches_brute_force_in_d1():
    a = SchwartzSymbol.gaussian(1, 1.5, [0.2], 1.0, [0.3], 0.8)
    b = SchwartzSymbol.gaussian(1, 1.0, [0.5], 1.5, [-0.1], 1.2)
    ref, _ = integrate.quad(lambda y: float(a.x_marginal([y]) * b.x_marginal([y])), -10, 10, epsabs=1e-14)
    assert abs(a.pair_marginals(b) - ref) < 1e-10 * ref


def test_fourier_in_x_matches_quadrature():
    a = SchwartzSymbol.gaussian(1, 2.0, [0.4], 0.7, [0.1], 1.0)
    xi, y = 0.9, 0.3
    re, _ = integrate.quad(lambda x: float(a([x], [y])) * np.cos(2 * np.pi * x * xi), -10, 10, epsabs=1e-14)
    im, _ = integrate.quad(lambda x: -float(a([x], [y])) * np.sin(2 * np.pi * x * xi), -10, 10, epsabs=1e-14)
    assert abs(a.fourier_x([xi], [y]) - (re + 1j * im)) < 1e-12


def test_weighted_samples_are_unbiased_for_the_integral():
    a = SchwartzSymbol.gaussian(2, 2.0, [0, 0], 0.5, [1, 0], 0.8) + SchwartzSymbol.gaussian(2, -0.5, [1, 1], 1.0, [0, 0], 1.0)
    x, y, w = a.sample(200_000, stream(0, "boltzmann", 0))
    assert np.all(np.abs(w) == np.abs(w[0]))
    assert abs(np.sum(np.abs(w)) - np.sum(a.component_masses())) < 1e-9
    assert abs(np.sum(w) - a.integral()) < 4 * np.std(w) * np.sqrt(w.size)
    # E[w |y|^2] against the closed form per component: |y0|^2 + d sy^2 / (2 pi)
    moment = np.sum(a.amps * (a.sx * a.sy) ** 2 * (np.sum(a.y0**2, 1) + 2 * a.sy**2 / (2 * np.pi)))
    est = np.sum(w * np.sum(y**2, 1))
    err = np.std(w * np.sum(y**2, 1)) * np.sqrt(w.size)
    assert abs(est - moment) < 4 * err


@settings(max_examples=50)
@given(st.floats(-1, 2), st.floats(-1, 2))
def test_smooth_step_is_a_monotone_symmetric_step(u, v):
    su, sv = float(smooth_step(u)), float(smooth_step(v))
    assert 0.0 <= su <= 1.0
    if u <= v:
        assert su <= sv
    assert abs(su + float(smooth_step(1 - u)) - 1.0) < 1e-12


def test_damping_profile_plateau_and_support():
    g = DampingProfile(0.5)
    assert g.radial(0.5) == 1.0 and g.radial(0.2) == 1.0
    assert g.radial(1.0) == 0.0 and g.radial(3.0) == 0.0
    assert 0.0 < g.radial(0.75) < 1.0
    with pytest.raises(DomainError):
        DampingProfile(1.0)


def test_cutoff_profiles():
    lam = CutoffProfile.bump(0.3, 2.0)
    assert lam(np.zeros(3)) == 0.3
    assert lam(np.array([2.0, 0, 0])) == 0.0
    assert CutoffProfile.constant(0.2)(np.ones((4, 2))).tolist() == [0.2] * 4
    assert not CutoffProfile.zero()(np.ones(3)).any()
