import numpy as np
import pytest
from scipy.linalg import expm

from qlorentz.duhamel import (DuhamelTerm, a0_integrand_direct, a0_ladder, eval_a0, eval_a0_alpha_limit,
                              eval_gain_order2, first_born_collision, n1_terms, recursion_residual,
                              sphere_fourier)
from qlorentz.errors import DomainError
from qlorentz.kernel import build_kernel, collision_matrix
from qlorentz.potential import PotentialProfile
from qlorentz.quadrature import sphere_quadrature
from qlorentz.symbols import DampingProfile, SchwartzSymbol
from qlorentz.tmatrix import LSGrid, solve_lippmann_schwinger


@pytest.mark.parametrize("d", [1, 2, 3])
def test_sphere_fourier_matches_quadrature(d):
    q = sphere_quadrature(d, 24, 48)
    for u in (0.0, 0.7, 3.1):
        ref = q.integrate(np.cos(u * q.nodes[:, 0]))
        assert abs(sphere_fourier(d, u) - ref) < 1e-10


def test_a0_matches_brute_force_double_integral_in_d1():
    a = SchwartzSymbol.gaussian(1, 1.0, [0.1], 0.7, [0.3], 1.0)
    b = SchwartzSymbol.gaussian(1, 2.0, [-0.2], 1.2, [0.0], 0.8)
    g = DampingProfile(0.5)
    r, alpha, t = 0.3, 0.5, 0.8
    y = np.linspace(-7, 7, 1401)
    eta = np.linspace(-6, 6, 2401)
    yy, ee = np.meshgrid(y, eta, indexing="ij")
    vals = a0_integrand_direct(a, b, r, alpha, t, g, yy[..., None], ee[..., None])
    ref = np.trapezoid(np.trapezoid(vals, eta, axis=1), y).real
    assert abs(eval_a0(a, b, r, alpha, t, g) - ref) < 1e-10 * abs(ref)


def test_a0_at_time_zero_is_the_plain_pairing():
    a = SchwartzSymbol.gaussian(3, 1.0, None, 0.5, [0.2, 0, 0], 1.0)
    b = SchwartzSymbol.gaussian(3, 1.0, [0.1, 0, 0], 0.7, None, 1.2)
    v = eval_a0(a, b, 0.1, 0.3, 0.0, DampingProfile(0.5))
    assert abs(v - a.pair_free(b, 0.0)) <= 1e-8 * abs(a.pair_free(b, 0.0))


def test_small_r_approaches_the_fixed_alpha_limit():
    a = SchwartzSymbol.gaussian(3, 1.0, None, 0.5, [0, 0, 0.4], 1.0)
    b = SchwartzSymbol.gaussian(3, 1.0, [0.25, 0, 0], 0.5, None, 1.0)
    g = DampingProfile(0.5)
    limit = eval_a0_alpha_limit(a, b, 0.3, 1.0, g)
    assert abs(eval_a0(a, b, 1e-2, 0.3, 1.0, g) - limit) <= 1e-3 * abs(limit)


def test_ladder_rejects_unknown_order():
    a = SchwartzSymbol.gaussian(1)
    with pytest.raises(DomainError):
        a0_ladder(a, a, 1.0, DampingProfile(0.5), order="sideways")


def test_term_record_validates_order():
    with pytest.raises(DomainError):
        DuhamelTerm(3)
    with pytest.raises(DomainError):
        DuhamelTerm(0, gamma=(1,))


def _shifted_gaussian(width, shift, d):
    centre = np.zeros(d)
    centre[0] = shift
    return lambda ys: np.exp(-np.pi * np.sum((np.asarray(ys) - centre) ** 2, axis=-1) / width**2)


@pytest.mark.parametrize("k", [0.5, 2.0])
def test_gain_term_equals_first_born_collision(k):
    profile = PotentialProfile.gaussian(1.0, 1.0, 3)
    f = _shifted_gaussian(1.0, 0.4, 3)
    y = np.array([0.0, 0.0, k])
    dirs = sphere_quadrature(3, 16, 32)
    lam = 0.1
    gain = eval_gain_order2(profile, lam, f, y, directions=dirs)
    coll = lam**2 * first_born_collision(profile, f, y, dirs)
    assert abs(gain - coll) <= 1e-3 * abs(coll)
    assert eval_gain_order2(profile, 0.0, f, y) == 0.0


def test_n1_terms_cancel():
    profile = PotentialProfile.gaussian(1.0, 1.0, 2)
    f = lambda t, x, y: np.exp(-np.sum(x**2)) * (1 + t)
    g0, g1 = n1_terms(f, 0.3, profile, 0.7, np.zeros(2), np.array([0.5, 0.1]))
    assert g0 != 0 and g0 + g1 == 0


def test_free_solution_has_zero_residual_without_coupling():
    a = SchwartzSymbol.gaussian(2, 1.0, [0.2, 0], 0.8, [0.1, 0.3], 1.0)
    f = lambda t, x, ys: a(x - t * np.asarray(ys), ys)
    profile = PotentialProfile.gaussian(1.0, 1.0, 2)
    y = np.array([0.4, -0.3])
    assert recursion_residual(f, 0.0, profile, a, 1.2, np.array([0.1, 0.1]), y) == 0.0
    assert recursion_residual(f, 0.5, profile, a, 0.0, np.array([0.1, 0.1]), y) == 0.0


def test_recursion_residual_is_third_order_for_the_full_kernel_solution():
    # f solves the homogeneous equation with the full-T kernel; the recursion
    # truncated at lambda^2 must then be off by O(lambda^3) only.
    profile = PotentialProfile.gaussian(1.0, 1.0, 3)
    k, t = 1.0, 1.0
    quad = sphere_quadrature(3, 8, 24)
    a_nodes = np.exp(2 * quad.nodes[:, 2]) + 0.5 * quad.nodes[:, 0]

    def node_of(ys):
        ys = np.atleast_2d(ys)
        return quad.nearest(ys / np.linalg.norm(ys, axis=-1, keepdims=True))

    def a(x, y):
        return a_nodes[node_of(y)][0]

    lams = (1e-2, 3e-3, 1e-3)
    res = []
    for lam in lams:
        kern = build_kernel(solve_lippmann_schwinger(profile, lam, k, LSGrid(8, 24)))
        m = collision_matrix(kern.sigma, quad.weights)

        def f(tt, x, ys, m=m):
            vals = (expm(tt * m) @ a_nodes)[node_of(ys)]
            return vals.reshape(np.shape(ys)[:-1]) if np.ndim(ys) > 1 else vals[0]

        y = k * quad.nodes[5]
        res.append(abs(recursion_residual(f, lam, profile, a, t, np.zeros(3), y, directions=quad,
                                          on_nodes=True)))
    slope = np.polyfit(np.log(lams), np.log(res), 1)[0]
    assert slope >= 2.8
