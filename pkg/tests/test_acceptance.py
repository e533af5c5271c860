"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N [PASS|FAIL]`` line; the lines are
repeated in the pytest terminal summary.
"""
import math

import numpy as np
import pytest

from qlorentz import boltzmann, duhamel, kernel, scatterers, tmatrix, vonneumann
from qlorentz.cli import main
from qlorentz.potential import PotentialProfile
from qlorentz.quadrature import sphere_quadrature
from qlorentz.scatterers import ScattererSet
from qlorentz.symbols import CutoffProfile, DampingProfile, SchwartzSymbol


def test_free_transport_pairing_is_exact(criterion):
    # deterministic: periodic slab in d = 1
    a = SchwartzSymbol.gaussian(1, 1.0, [0.0], 1.0, [0.3], 1.0)
    b = SchwartzSymbol.gaussian(1, 1.0, [0.5], 1.5, [0.0], 1.0)
    quad = sphere_quadrature(1)
    speeds, w = boltzmann.speed_shells(1, 4.0, 12, 4)
    x = (np.arange(256) - 128) * (32.0 / 256)
    grid = boltzmann.PhaseSpaceGrid.from_symbol(a, quad, speeds, w, x, 32.0)
    grid = boltzmann.evolve_deterministic(grid, None, CutoffProfile.zero(), 1.0, 0.02)
    exact = a.pair_free(b, 1.0)
    slab_err = abs(boltzmann.pair_observable(grid, b) - exact) / abs(exact)
    # Monte Carlo in d = 3
    a3 = SchwartzSymbol.gaussian(3, 1.0, None, 1.0, [0.4, 0.0, 0.0], 1.0)
    b3 = SchwartzSymbol.gaussian(3, 1.0, [0.3, 0.0, 0.0], 1.5, None, 1.0)
    n = 100_000
    ens = boltzmann.evolve_mc(boltzmann.init_ensemble(a3, n, seed=7), None, CutoffProfile.zero(), 1.0)
    vals = ens.weight * b3(ens.x, ens.y)
    mc_dev = abs(math.fsum(vals) - a3.pair_free(b3, 1.0))
    sigma = np.std(vals) * math.sqrt(n)
    ok = slab_err <= 1e-6 and mc_dev <= 3 * sigma
    criterion(1, "free transport", ok,
              f"slab rel err {slab_err:.2e} (<= 1e-6); MC |dev| {mc_dev:.2e} vs 3 sigma {3 * sigma:.2e}")
    assert ok


def test_a0_ladder_converges_and_limits_do_not_commute(criterion):
    amp = 1.0 / (0.1 * 0.2) ** 3
    a = SchwartzSymbol.gaussian(3, amp, None, 0.1, [0.0, 0.0, 0.08], 0.2)
    b = SchwartzSymbol.gaussian(3, amp, [0.05, 0.0, 0.0], 0.1, None, 0.2)
    g = DampingProfile(0.5)
    forward = duhamel.a0_ladder(a, b, 1.0, g, order="r-first")
    reverse = duhamel.a0_ladder(a, b, 1.0, g, order="alpha-first")
    rel = [row[4] / abs(row[3]) for row in forward]
    monotone = all(x > y for x, y in zip(rel[:-1], rel[1:]))
    final = rel[-1]
    # after the first stage: (r = 1e-2, alpha = 0.3) against (r = 1e-1, alpha = 0.03)
    stage_fwd, stage_rev = forward[2][2], reverse[2][2]
    gap = abs(stage_fwd - stage_rev) / abs(a.pair_free(b, 1.0))
    ok = monotone and final <= 1e-3 and gap > 0.1
    criterion(2, "A0 ladder", ok,
              "rel errors " + ", ".join(f"{e:.2e}" for e in rel)
              + f"; intermediate values {stage_fwd:.4g} vs {stage_rev:.4g} (gap {gap:.2f} of free value)")
    assert ok


def test_first_born_kernel_identity(criterion):
    mu, k = 0.05, 1.3
    profile = PotentialProfile.gaussian(0.8, 1.7, 3)
    t = tmatrix.born_series(profile, mu, k, 0, grid=tmatrix.BornGrid(8, 16))
    sigma = kernel.build_kernel(t).sigma
    nodes = t.quadrature.nodes
    gap2 = k * k * np.sum((nodes[:, None] - nodes[None]) ** 2, axis=-1)
    w_hat = 1.7 * 0.8**3 * np.exp(-np.pi * 0.8**2 * gap2)
    ref = 8 * np.pi**2 * mu**2 * w_hat**2 * k ** (3 - 2) / 2
    err = float(np.max(np.abs(sigma - ref)) / np.max(ref))
    ok = err <= 1e-10
    criterion(3, "first-Born kernel identity", ok, f"max rel err {err:.2e} (<= 1e-10)")
    assert ok


def test_born_and_lippmann_schwinger_agree(criterion):
    profile = PotentialProfile.gaussian(1.0, 1.0, 3)
    ls_grid = tmatrix.LSGrid(12, 24)
    mus = (1e-2, 1e-3, 1e-4)
    dev = []
    for mu in mus:
        ls = tmatrix.solve_lippmann_schwinger(profile, mu, 1.0, ls_grid)
        scale = np.max(np.abs(ls.values))
        dev.append(np.max(np.abs(tmatrix.first_born_matrix(profile, mu, 1.0, ls.quadrature) - ls.values)) / scale)
        if mu == 1e-4:
            born = tmatrix.born_series(profile, mu, 1.0, 2, grid=tmatrix.BornGrid(12, 24))
            series_err = np.max(np.abs(born.values - ls.values)) / scale
    slope = np.polyfit(np.log(mus), np.log(dev), 1)[0]
    ok = series_err <= 1e-4 and abs(slope - 1) <= 0.1
    criterion(4, "Born vs Lippmann-Schwinger", ok,
              f"l<=2 rel diff {series_err:.2e} (<= 1e-4); first-Born deviation slope {slope:.4f} (1 +- 0.1)")
    assert ok


def test_optical_theorem_residual(criterion):
    profile = PotentialProfile.gaussian(1.0, 1.0, 3)
    grid = tmatrix.LSGrid(12, 24)
    t = tmatrix.solve_lippmann_schwinger(profile, 0.1, 1.0, grid)
    _, loss = tmatrix.optical_sums(t)
    resid = tmatrix.optical_residual(t) / np.max(loss)
    # weak-coupling oracle: Im T = -C int |mu W_hat|^2 fixes C = pi k^{d-2}
    weak = tmatrix.solve_lippmann_schwinger(profile, 1e-4, 1.0, grid)
    fb = tmatrix.first_born_matrix(profile, 1e-4, 1.0, weak.quadrature)
    c_fit = -np.diag(weak.values).imag / (weak.quadrature.weights @ fb**2)
    c_err = float(np.max(np.abs(c_fit / tmatrix.optical_constant(3, 1.0) - 1)))
    ok = resid <= 1e-3 and c_err <= 1e-3 and tmatrix.optical_constant(3, 1.0) == math.pi
    criterion(5, "optical theorem", ok,
              f"residual / total rate {resid:.2e} (<= 1e-3); weak-coupling C_d mismatch {c_err:.2e}")
    assert ok


def test_conservation_suite(criterion):
    quad = sphere_quadrature(3, 8, 16)
    table = kernel.first_born_table(PotentialProfile.gaussian(1.0, 1.0, 3), 1.0, quad, 0.5)
    ens = boltzmann.init_shell_ensemble(quad, np.exp(2 * quad.nodes[:, 2]), 1.0, 20_000, seed=3)
    out = boltzmann.evolve_mc(ens, table, CutoffProfile.bump(0.5, 2.0), 4.0)
    weight_drift = abs(out.total_weight() - ens.total_weight())
    speed_drift = float(np.max(np.abs(out.speeds() - 1.0)))
    grid = boltzmann.PhaseSpaceGrid.shell(quad, 1.0, np.exp(2 * quad.nodes[:, 2]))
    masses, ent = [grid.mass()], [boltzmann.quadratic_entropy(grid)]
    boltzmann.evolve_deterministic(grid, table, CutoffProfile.constant(0.5), 4.0, 0.1,
                                   record=lambda g: (masses.append(g.mass()),
                                                     ent.append(boltzmann.quadratic_entropy(g))))
    grid_drift = float(np.max(np.abs(np.diff(masses)))) / masses[0]
    ent_rise = float(np.max(np.diff(ent)))
    ok = weight_drift == 0.0 and speed_drift <= 1e-12 and grid_drift <= 1e-10 and ent_rise <= 0.0
    criterion(6, "conservation", ok,
              f"MC weight drift {weight_drift:.1e}; speed drift {speed_drift:.1e}; "
              f"grid mass drift/step {grid_drift:.1e}; max entropy increase {ent_rise:.1e}")
    assert ok


def test_monte_carlo_matches_deterministic_relaxation(criterion):
    quad = sphere_quadrature(3, 8, 16)
    lam = 0.05
    table = kernel.first_born_table(PotentialProfile.gaussian(1.0, 1.0, 3), 1.0, quad, lam)
    g0 = np.exp(2 * quad.nodes[:, 2])
    coupling = CutoffProfile.constant(lam)
    n = 100_000
    ens = boltzmann.init_shell_ensemble(quad, g0, 1.0, n, seed=7)
    grid = boltzmann.PhaseSpaceGrid.shell(quad, 1.0, g0)
    null_rng = np.random.default_rng(0)
    worst = []
    for t in (1.0, 2.0, 3.0, 4.0, 5.0):
        ens = boltzmann.evolve_mc(ens, table, coupling, t)
        grid = boltzmann.evolve_deterministic(grid, table, coupling, t, 0.1)
        p_det = boltzmann.direction_marginal(grid) * quad.weights / grid.mass()
        p_mc = boltzmann.direction_marginal(ens, quad) * quad.weights / ens.total_weight()
        l1 = float(np.sum(np.abs(p_det - p_mc)))
        null = [np.sum(np.abs(null_rng.multinomial(n, p_det) / n - p_det)) for _ in range(200)]
        bound = float(np.mean(null) + 3 * np.std(null))
        worst.append((l1 / bound, t, l1, bound))
    ratio, t, l1, bound = max(worst)
    ok = ratio <= 1.0
    criterion(7, "MC vs deterministic", ok, f"worst at t={t:g}: L1 {l1:.3e} vs 3-sigma bound {bound:.3e}")
    assert ok


def test_gain_term_equals_collision_operator(criterion):
    profile = PotentialProfile.gaussian(1.0, 1.0, 3)
    centre = np.array([0.4, 0.0, 0.0])
    f = lambda ys: np.exp(-np.pi * np.sum((np.asarray(ys) - centre) ** 2, axis=-1))
    dirs = sphere_quadrature(3, 24, 48)
    lam = 0.1
    diffs = []
    for k in (0.5, 1.0, 2.0):
        y = np.array([0.0, 0.0, k])
        gain = duhamel.eval_gain_order2(profile, lam, f, y, directions=dirs)
        coll = lam**2 * duhamel.first_born_collision(profile, f, y, dirs)
        diffs.append(abs(gain - coll) / abs(coll))
    ok = max(diffs) <= 1e-3
    criterion(8, "order-2 gain vs collision", ok, "rel diffs " + ", ".join(f"{d:.1e}" for d in diffs))
    assert ok


def _halving_orders(errs):
    return [math.log2(x / y) for x, y in zip(errs[:-1], errs[1:])]


def test_riemann_sums_converge_at_second_order(criterion):
    g = scatterers.BumpFunction(3, 1.0)
    eps = (0.2, 0.1, 0.05)
    base = scatterers.gen_lattice(3, 21.0)
    z3_errs = [scatterers.riemann_sum_error(base, g, e) for e in eps]
    # The displaced residual is random with a superpolynomially small mean,
    # so its order is read off the root-mean-square over realizations.
    errs = np.array([[scatterers.riemann_sum_error(scatterers.gen_displaced(base, 0.2, seed), g, e) for e in eps]
                     for seed in range(128)])
    rms = np.sqrt(np.mean(errs**2, axis=0))
    z3_orders, rms_orders = _halving_orders(z3_errs), _halving_orders(rms)
    single = _halving_orders(errs[1])
    ok = min(z3_orders) >= 2 and min(rms_orders) >= 2
    criterion(9, "Riemann-sum order", ok,
              "Z3 orders " + ", ".join(f"{o:.2f}" for o in z3_orders)
              + "; displaced rms orders (128 seeds) " + ", ".join(f"{o:.2f}" for o in rms_orders)
              + "; one realization " + ", ".join(f"{o:.2f}" for o in single))
    assert ok


def test_damped_von_neumann_flow(criterion):
    lat = vonneumann.MomentumLattice(2, 0.2, 29)
    r, alpha = 0.5, 0.2
    gamma = DampingProfile(0.5)
    a = SchwartzSymbol.gaussian(2, 1.0, None, 0.1, None, 1.0)
    b = SchwartzSymbol.gaussian(2, 1.0, None, 0.1, [0.3, 0.0], 1.0)
    # scatterer-free decay, entry by entry
    free = vonneumann.make_state(a, lat, r, alpha, gamma)
    out = vonneumann.evolve_vn(free, 1.0, 0.0125)
    y = lat.nodes
    decay = np.exp(-(alpha**2 / r) * (1 - gamma(alpha * r ** (1 - 2) * (y[:, None] - y[None]))) * 1.0)
    decay_err = float(np.max(np.abs(np.abs(out.rho) - np.abs(free.rho) * decay)) / np.max(np.abs(free.rho)))
    # one weak scatterer at the origin
    one = ScattererSet(np.zeros((1, 2)), 1.0)
    state = vonneumann.make_state(a, lat, r, alpha, gamma, PotentialProfile.gaussian(1.0, 1.0, 2), one,
                                  CutoffProfile.bump(0.02, 1.0))
    pb = vonneumann.weyl_quantize(b, lat, r)
    times = np.linspace(0.0, 1.0, 11)
    series, cur = [], state
    for t in times:
        cur = vonneumann.evolve_vn(cur, float(t), 0.0125)
        series.append(vonneumann.trace_pair(cur, pb))
    partial = duhamel.vn_partial_sums(state, pb, times, 2, rtol=1e-6, atol=1e-18).sum(axis=1)
    gap = float(np.max(np.abs(np.array(series) - partial) / np.abs(series)))
    ok = decay_err <= 1e-12 and gap <= 0.05
    criterion(10, "damped von Neumann", ok,
              f"free decay max err {decay_err:.1e}; single scatterer vs m<=2 partial sum {gap:.1e} (<= 5%)")
    assert ok


RERUNS = {
    "lbe-run": "[transport]\nsolver = mc\nn_particles = 20000\nt_final = 2\nn_times = 3\n[coupling]\nlam_max = 0.3\n",
    "scatterers": "[run]\ndim = 3\n[scatterers]\nkind = displaced\nwindow_radius = 12\neps_values = 0.2, 0.1\n",
    "kernel": "[run]\ndim = 2\n[scattering]\nn_azimuth = 32\nmu = 0.3\n",
    "validate": "",
}


def test_reruns_are_byte_identical(criterion, tmp_path):
    mismatched = []
    for command, text in RERUNS.items():
        cfg = tmp_path / f"{command}.ini"
        cfg.write_text(text)
        dirs = [tmp_path / command / "one", tmp_path / command / "two"]
        for d in dirs:
            assert main([command, "--config", str(cfg), "--out", str(d), "--seed", "11"]) == 0
        for path in sorted(dirs[0].glob("*.csv")):
            if path.read_bytes() != (dirs[1] / path.name).read_bytes():
                mismatched.append(f"{command}/{path.name}")
    ok = not mismatched
    criterion(11, "determinism", ok, "all CSVs identical" if ok else "differ: " + ", ".join(mismatched))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
