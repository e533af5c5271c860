import numpy as np
import pytest

from qlorentz.duhamel import vn_partial_sums
from qlorentz.errors import ResolutionError, StepSizeError
from qlorentz.potential import PotentialProfile
from qlorentz.scatterers import ScattererSet
from qlorentz.symbols import CutoffProfile, DampingProfile, SchwartzSymbol
from qlorentz.vonneumann import (MomentumLattice, boundary_tail, evolve_vn, hermiticity_error, make_state,
                                 potential_kernel, step_damped_vn, trace_pair, weyl_quantize)


@pytest.mark.parametrize("h", [1.0, 0.5])
def test_trace_pairing_equals_phase_space_pairing_in_d1(h):
    lat = MomentumLattice(1, 0.05, 281)
    a = SchwartzSymbol.gaussian(1, 1.0, [0.1], 1.0, [0.3], 1.0)
    b = SchwartzSymbol.gaussian(1, 1.0, [0.0], 1.0, [0.0], 0.8)
    pa = weyl_quantize(a, lat, 1.0, h)
    pb = weyl_quantize(b, lat, 1.0, h)
    assert boundary_tail(pa, lat) < 1e-12
    assert abs(trace_pair(pa, pb, lat) - a.pair_free(b, 0.0)) < 1e-13


def test_real_symbols_quantize_to_hermitian_matrices():
    lat = MomentumLattice(2, 0.2, 15)
    a = SchwartzSymbol.gaussian(2, 1.0, [0.05, 0.0], 0.1, [0.2, 0.0], 1.0)
    mat = weyl_quantize(a, lat, 0.5, check=False)
    assert hermiticity_error(mat) <= 1e-14 * np.max(np.abs(mat))


def test_under_resolved_kernel_is_rejected():
    lat = MomentumLattice(2, 0.5, 9)
    with pytest.raises(ResolutionError):
        weyl_quantize(SchwartzSymbol.gaussian(2, sx=0.5, sy=1.0), lat, 0.5)


def test_free_off_diagonal_decay_is_exact():
    lat = MomentumLattice(2, 0.2, 15)
    a = SchwartzSymbol.gaussian(2, 1.0, None, 0.1, None, 1.0)
    r, alpha, t = 0.5, 0.4, 0.3
    gamma = DampingProfile(0.5)
    state = make_state(a, lat, r, alpha, gamma, check=False)
    out = evolve_vn(state, t, 0.01)
    y = lat.nodes
    decay = np.exp(-(alpha**2 / r) * (1 - gamma(alpha * r ** (1 - 2) * (y[:, None] - y[None]))) * t)
    scale = np.max(np.abs(state.rho))
    assert np.max(np.abs(np.abs(out.rho) - np.abs(state.rho) * decay)) <= 1e-12 * scale
    assert hermiticity_error(out.rho) <= 1e-14 * scale


def test_too_large_step_is_rejected():
    lat = MomentumLattice(2, 0.2, 15)
    state = make_state(SchwartzSymbol.gaussian(2, sx=0.1), lat, 0.5, 0.2, DampingProfile(0.5), check=False)
    with pytest.raises(StepSizeError):
        step_damped_vn(state, 1.0)


def test_potential_matrix_is_hermitian_and_respects_the_cutoff():
    lat = MomentumLattice(2, 0.4, 7)
    prof = PotentialProfile.gaussian(1.0, 1.0, 2)
    pts = ScattererSet(np.array([[0.0, 0.0], [0.3, -0.2], [10.0, 0.0]]), 0.3)
    lam = CutoffProfile.bump(0.1, 1.0)
    v = potential_kernel(prof, pts, lam, lat, 0.5)
    assert hermiticity_error(v) <= 1e-15 * np.max(np.abs(v))
    near = potential_kernel(prof, ScattererSet(pts.points[:2], 0.3), lam, lat, 0.5)
    assert np.array_equal(v, near)


def _weak_scatterer_run(lam_max):
    lat = MomentumLattice(2, 0.4, 11)
    a = SchwartzSymbol.gaussian(2, sx=0.3, sy=1.0)
    b = SchwartzSymbol.gaussian(2, sx=0.3, sy=1.0, y0=[0.3, 0.0])
    one = ScattererSet(np.zeros((1, 2)), 1.0)
    state = make_state(a, lat, 0.5, 0.2, DampingProfile(0.5), PotentialProfile.gaussian(1.0, 1.0, 2), one,
                       CutoffProfile.bump(lam_max, 1.0), check=False)
    pb = weyl_quantize(b, lat, 0.5, check=False)
    orders = vn_partial_sums(state, pb, [0.0, 1.0])
    full = trace_pair(evolve_vn(state, 1.0, 0.0125), pb)
    return orders[-1], full


def test_hierarchy_orders_scale_with_the_coupling_and_truncate_at_third_order():
    o1, full1 = _weak_scatterer_run(0.2)
    o2, full2 = _weak_scatterer_run(0.1)
    assert o2[0] == pytest.approx(o1[0], rel=1e-12)
    assert o2[1] == pytest.approx(o1[1] / 2, rel=1e-6)
    assert o2[2] == pytest.approx(o1[2] / 4, rel=1e-6)
    err1, err2 = abs(full1 - o1.sum()), abs(full2 - o2.sum())
    assert np.log2(err1 / err2) >= 2.5
