"""Fast property suite behind ``qlorentz validate``.

Each check returns (name, value, threshold, passed); every threshold is an
upper bound except the Riemann-sum order, which is a lower bound.
"""
from __future__ import annotations

import math

import numpy as np

from . import boltzmann, duhamel, kernel, scatterers, tmatrix, vonneumann
from .config import ExperimentConfig
from .potential import PotentialProfile
from .quadrature import sphere_quadrature
from .symbols import CutoffProfile, DampingProfile, SchwartzSymbol


def _config_round_trip():
    cfg = ExperimentConfig()
    again = ExperimentConfig.from_string(cfg.to_string())
    return 0.0 if again == cfg and again.to_string() == cfg.to_string() else 1.0


def _free_slab():
    a = SchwartzSymbol.gaussian(1, 1.0, [0.0], 1.0, [0.3], 1.0)
    b = SchwartzSymbol.gaussian(1, 1.0, [0.5], 1.5, [0.0], 1.0)
    quad = sphere_quadrature(1)
    speeds, w = boltzmann.speed_shells(1, 4.0, 12, 4)
    x = (np.arange(256) - 128) * (32.0 / 256)
    grid = boltzmann.PhaseSpaceGrid.from_symbol(a, quad, speeds, w, x, 32.0)
    grid = boltzmann.evolve_deterministic(grid, None, CutoffProfile.zero(), 1.0, 0.02)
    exact = a.pair_free(b, 1.0)
    return abs(boltzmann.pair_observable(grid, b) - exact) / abs(exact)


def _first_born_identity():
    profile = PotentialProfile.gaussian(1.0, 1.0, 3)
    grid = tmatrix.BornGrid(6, 12)
    t = tmatrix.born_series(profile, 0.01, 1.0, 0, grid=grid)
    built = kernel.build_kernel(t).sigma
    nodes = t.quadrature.nodes
    diff2 = np.sum((nodes[:, None, :] - nodes[None, :, :]) ** 2, axis=-1)
    ref = 8 * np.pi**2 * 0.01**2 * profile.w_hat_sq(diff2) ** 2 * 0.5
    return float(np.max(np.abs(built - ref)) / np.max(np.abs(ref)))


def _optical_d2():
    profile = PotentialProfile.gaussian(1.0, 1.0, 2)
    t = tmatrix.solve_lippmann_schwinger(profile, 0.1, 1.0, tmatrix.LSGrid(n_azimuth=32))
    _, loss = tmatrix.optical_sums(t)
    return tmatrix.optical_residual(t) / float(np.max(np.abs(loss)))


def _mc_weight(seed):
    quad = sphere_quadrature(3, 6, 12)
    ens = boltzmann.init_shell_ensemble(quad, np.ones(quad.size), 1.0, 4000, seed)
    table = kernel.first_born_table(PotentialProfile.gaussian(1.0, 1.0, 3), 1.0, quad, 0.5)
    out = boltzmann.evolve_mc(ens, table, CutoffProfile.constant(0.5), 2.0)
    speed = float(np.max(np.abs(out.speeds() - 1.0)))
    return abs(out.total_weight() - ens.total_weight()), speed, out


def _grid_mass():
    quad = sphere_quadrature(3, 6, 12)
    table = kernel.first_born_table(PotentialProfile.gaussian(1.0, 1.0, 3), 1.0, quad, 0.5)
    g = boltzmann.PhaseSpaceGrid.shell(quad, 1.0, np.exp(quad.nodes[:, 2]))
    m0 = g.mass()
    out = boltzmann.evolve_deterministic(g, table, CutoffProfile.constant(0.5), 1.0, 0.1)
    return abs(out.mass() - m0) / abs(m0) / 10


def _riemann_order():
    pset = scatterers.gen_lattice(2, 25.0)
    g = scatterers.BumpFunction(2, 1.0)
    errs = [scatterers.riemann_sum_error(pset, g, e) for e in (0.2, 0.1)]
    if errs[1] == 0.0:
        return math.inf
    return math.log2(errs[0] / errs[1])


def _vn_checks():
    lattice = vonneumann.MomentumLattice(2, 0.2, 15)
    a = SchwartzSymbol.gaussian(2, 1.0, None, 0.1, None, 1.0)
    damping = DampingProfile(0.5)
    state = vonneumann.make_state(a, lattice, 0.5, 0.4, damping, check=False)
    herm = vonneumann.hermiticity_error(state.rho)
    out = vonneumann.evolve_vn(state, 0.2, 0.01)
    y = lattice.nodes
    gamma = damping(0.4 * 0.5 ** (1 - 2) * (y[:, None, :] - y[None, :, :]))
    expected = np.abs(state.rho) * np.exp(-(0.4**2 / 0.5) * (1 - gamma) * 0.2)
    scale = float(np.max(np.abs(state.rho)))
    return herm / scale, float(np.max(np.abs(np.abs(out.rho) - expected))) / scale


def _a0_at_zero():
    a = SchwartzSymbol.gaussian(3, 1.0, None, 0.5, [0.2, 0, 0], 1.0)
    b = SchwartzSymbol.gaussian(3, 1.0, [0.1, 0, 0], 0.7, None, 1.2)
    v = duhamel.eval_a0(a, b, 0.1, 0.3, 0.0, DampingProfile(0.5))
    ref = a.pair_free(b, 0.0)
    return abs(v - ref) / abs(ref)


def run_checks(seed: int = 0):
    checks = []
    checks.append(("config_round_trip", _config_round_trip(), 0.0))
    checks.append(("free_transport_slab_d1", _free_slab(), 1e-6))
    checks.append(("first_born_kernel_identity", _first_born_identity(), 1e-10))
    checks.append(("optical_residual_d2", _optical_d2(), 1e-3))
    drift, speed, out1 = _mc_weight(seed)
    _, _, out2 = _mc_weight(seed)
    checks.append(("mc_weight_drift", drift, 0.0))
    checks.append(("mc_speed_drift", speed, 1e-12))
    checks.append(("mc_rerun_identical", 0.0 if np.array_equal(out1.y, out2.y) else 1.0, 0.0))
    checks.append(("grid_mass_drift_per_step", _grid_mass(), 1e-10))
    herm, decay = _vn_checks()
    checks.append(("weyl_hermiticity", herm, 1e-14))
    checks.append(("vn_free_decay", decay, 1e-12))
    checks.append(("a0_initial_value", _a0_at_zero(), 1e-8))
    order = _riemann_order()
    out = [(name, float(v), float(th), bool(v <= th)) for name, v, th in checks]
    out.append(("riemann_sum_order_z2", float(order), 2.0, bool(order >= 2.0)))
    return out
