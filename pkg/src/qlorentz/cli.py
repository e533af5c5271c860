"""Command-line runner: ``qlorentz <subcommand> --config FILE``.

Every run writes its CSV tables plus ``manifest.json`` (inputs echoed, build
id, diagnostics) into the output directory. Configs are validated before
anything touches the disk; a module error mid-run writes only a manifest
flagged as failed.

CSV columns per subcommand

* tmatrix: out_node, in_node, cos_angle, re_t, im_t
* kernel: in_node, out_node, sigma (density for in -> out); kernel_rates.csv:
  node, total_rate
* lbe-run: time, pairing, mass, free_pairing (x-marginal pairing for the
  homogeneous grid, which free transport leaves unchanged)
* duhamel-check: a0.csv order, r, alpha, value, reference, error;
  gain.csv speed, gain, collision, rel_diff, for the momentum density
  f(y) = exp(-pi |y - gain_shift e_1|^2 / gain_width^2) at y = speed e_d
* vn-run: time, macro_time, trace_pairing [, order0, order1, order2, partial_sum]
* validate: check, value, threshold, passed
* scatterers: points.csv x0..x{d-1}; riemann.csv eps, error
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
from dataclasses import replace
from importlib import metadata

import numpy as np

from . import boltzmann, duhamel, kernel, scatterers, tmatrix, vonneumann
from .config import ExperimentConfig
from .errors import ConfigError, QLorentzError
from .potential import PotentialProfile
from .quadrature import sphere_quadrature
from .symbols import CutoffProfile, DampingProfile, SchwartzSymbol

COMMANDS = ("tmatrix", "kernel", "lbe-run", "duhamel-check", "vn-run", "validate", "scatterers")


def build_id() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return "v" + metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# config -> objects

def make_profile(cfg: ExperimentConfig) -> PotentialProfile:
    p = cfg.potential
    if p.family == "bump":
        return PotentialProfile.bump(p.width, p.amplitude, p.exponent, cfg.run.dim)
    return PotentialProfile.gaussian(p.width, p.amplitude, cfg.run.dim)


def make_symbol(section, d: int) -> SchwartzSymbol:
    x0 = section.x0 if section.x0 else None
    y0 = section.y0 if section.y0 else None
    return SchwartzSymbol.gaussian(d, section.amp, x0, section.sx, y0, section.sy)


def make_coupling(cfg: ExperimentConfig) -> CutoffProfile:
    c = cfg.coupling
    if c.kind == "zero" or c.lam_max == 0.0:
        return CutoffProfile.zero()
    if c.kind == "constant":
        return CutoffProfile.constant(c.lam_max)
    return CutoffProfile.bump(c.lam_max, c.radius)


def compute_tmatrix(cfg: ExperimentConfig) -> tmatrix.OnShellTMatrix:
    s = cfg.scattering
    if s.tmatrix_file:
        return tmatrix.read_tmatrix(cfg.resolve(s.tmatrix_file))
    profile = make_profile(cfg)
    if s.method == "born":
        reg = tmatrix.ResolventRegularization(s.epsilon, s.extrapolation_steps)
        grid = tmatrix.BornGrid(s.n_polar, s.n_azimuth, s.nodes_per_panel, s.n_outer)
        return tmatrix.born_series(profile, s.mu, s.speed, s.l_max, reg, grid, s.tolerance)
    grid = tmatrix.LSGrid(s.n_polar, s.n_azimuth, s.n_radial, s.n_tail)
    return tmatrix.solve_lippmann_schwinger(profile, s.mu, s.speed, grid)


# --------------------------------------------------------------------------
# subcommands; each returns ({file name: text}, diagnostics)

def run_tmatrix(cfg, threads):
    t = compute_tmatrix(cfg)
    cos = np.clip(t.quadrature.nodes @ t.quadrature.nodes.T, -1.0, 1.0)
    rows = [(i, j, float(cos[i, j]), float(t.values[i, j].real), float(t.values[i, j].imag))
            for i in range(t.quadrature.size) for j in range(t.quadrature.size)]
    total = float(np.max(np.abs(tmatrix.optical_sums(t)[1])))
    diag = {"optical_residual": tmatrix.optical_residual(t),
            "optical_residual_relative": tmatrix.optical_residual(t) / total if total > 0 else 0.0,
            "reciprocity_error": t.reciprocity_error(), "method": dict(t.method)}
    return {"tmatrix.csv": csv_text(["out_node", "in_node", "cos_angle", "re_t", "im_t"], rows),
            "tmatrix.txt": tmatrix.tmatrix_text(t)}, diag


def run_kernel(cfg, threads):
    t = compute_tmatrix(cfg)
    k = kernel.build_kernel(t)
    n = k.size
    rows = [(i, j, float(k.sigma[i, j])) for i in range(n) for j in range(n)]
    rates = [(i, float(r)) for i, r in enumerate(k.total_rate)]
    diag = {"mean_free_path": kernel.mean_free_path(k), "max_total_rate": float(np.max(k.total_rate))}
    return {"kernel.csv": csv_text(["in_node", "out_node", "sigma"], rows),
            "kernel_rates.csv": csv_text(["node", "total_rate"], rates),
            "kernel.txt": kernel.kernel_text(k)}, diag


def _kernel_bank(cfg, speeds, quad):
    tr = cfg.transport
    lam = cfg.coupling.lam_max
    if tr.kernel == "none" or lam == 0.0 or cfg.coupling.kind == "zero":
        return None
    profile = make_profile(cfg)
    if tr.kernel == "first_born":
        tables = [kernel.first_born_table(profile, s, quad, lam) for s in speeds]
    else:
        grid = tmatrix.LSGrid(tr.n_polar, tr.n_azimuth, cfg.scattering.n_radial, cfg.scattering.n_tail)
        tables = [kernel.build_kernel_table(profile, s, lam, tr.n_lam, grid) for s in speeds]
    return kernel.KernelBank(tuple(tables))


def run_lbe(cfg, threads):
    tr = cfg.transport
    d = cfg.run.dim
    a, b = make_symbol(cfg.a, d), make_symbol(cfg.b, d)
    lam = make_coupling(cfg)
    quad = sphere_quadrature(d, tr.n_polar, tr.n_azimuth)
    speeds, speed_w = boltzmann.speed_shells(d, tr.k_max, tr.n_speeds, tr.speed_panels)
    bank = _kernel_bank(cfg, speeds, quad)
    times = np.linspace(0.0, tr.t_final, tr.n_times)
    rows = []
    if tr.solver == "mc":
        state = boltzmann.init_ensemble(a, tr.n_particles, cfg.run.seed, signed=bool(a.amps[0] < 0))
        for t in times:
            state = boltzmann.evolve_mc(state, bank, lam, float(t), threads, tr.block_size)
            rows.append((float(t), boltzmann.pair_observable(state, b), state.total_weight(), a.pair_free(b, t)))
    else:
        if tr.geometry == "slab":
            x_nodes = (np.arange(tr.n_x) - tr.n_x // 2) * (tr.period / tr.n_x)
            state = boltzmann.PhaseSpaceGrid.from_symbol(a, quad, speeds, speed_w, x_nodes, tr.period)
        else:
            state = boltzmann.PhaseSpaceGrid.from_symbol(a, quad, speeds, speed_w)
        for t in times:
            state = boltzmann.evolve_deterministic(state, bank, lam, float(t), tr.dt)
            free = a.pair_marginals(b) if state.homogeneous else a.pair_free(b, t)
            rows.append((float(t), boltzmann.pair_observable(state, b), state.mass(), free))
    diag = {"final_pairing": rows[-1][1], "final_free_pairing": rows[-1][3]}
    if bank is not None:
        # first-Born tables are exact in lambda, so only ls tables interpolate
        diag["kernel_lambda_nodes"] = tr.n_lam if tr.kernel == "ls" else 0
    return {"lbe.csv": csv_text(["time", "pairing", "mass", "free_pairing"], rows)}, diag


def run_duhamel(cfg, threads):
    du = cfg.duhamel
    d = cfg.run.dim
    a, b = make_symbol(cfg.a, d), make_symbol(cfg.b, d)
    damping = DampingProfile(du.inner_radius)
    a0_rows = []
    for order in ("r-first", "alpha-first"):
        for r, alpha, v, ref, err in duhamel.a0_ladder(a, b, du.t, damping, du.r_values, du.alpha_values, order):
            a0_rows.append((order, r, alpha, v, ref, err))
    profile = make_profile(cfg)
    lam = cfg.coupling.lam_max
    directions = sphere_quadrature(d, du.gain_n_polar, du.gain_n_azimuth)
    center = np.zeros(d)
    center[0] = du.gain_shift
    f = SchwartzSymbol.gaussian(d, 1.0, None, 1.0, center, du.gain_width).x_marginal
    gain_rows = []
    for k in du.gain_speeds:
        # the shifted centre makes f anisotropic on the shell through y
        y = np.zeros(d)
        y[-1] = k
        g = duhamel.eval_gain_order2(profile, lam, f, y, directions=directions)
        c = lam**2 * duhamel.first_born_collision(profile, f, y, directions)
        rel = abs(g - c) / abs(c) if c != 0 else abs(g - c)
        gain_rows.append((float(k), g, c, rel))
    diag = {"a0_final_error_r_first": a0_rows[len(a0_rows) // 2 - 1][5],
            "max_gain_rel_diff": max(r[3] for r in gain_rows) if gain_rows else 0.0}
    return {"a0.csv": csv_text(["order", "r", "alpha", "value", "reference", "error"], a0_rows),
            "gain.csv": csv_text(["speed", "gain", "collision", "rel_diff"], gain_rows)}, diag


def run_vn(cfg, threads):
    v = cfg.vn
    d = cfg.run.dim
    lattice = vonneumann.MomentumLattice(d, v.spacing, v.n_side)
    a, b = make_symbol(cfg.a, d), make_symbol(cfg.b, d)
    if v.scatterer_file:
        pset = scatterers.read_points(cfg.resolve(v.scatterer_file))
    else:
        pset = scatterers.ScattererSet(np.zeros((1, d)), 1.0)
    lam = make_coupling(cfg)
    state = vonneumann.make_state(a, lattice, v.r, v.alpha, DampingProfile(v.inner_radius),
                                  make_profile(cfg), pset, lam)
    bmat = vonneumann.weyl_quantize(b, lattice, v.r)
    times = np.linspace(0.0, v.t_final, v.n_times)
    series = []
    cur = state
    for t in times:
        cur = vonneumann.evolve_vn(cur, float(t), v.dt)
        series.append(vonneumann.trace_pair(cur, bmat))
    scale = v.r ** (d - 1)
    header = ["time", "macro_time", "trace_pairing"]
    rows = [[float(t), float(t) * scale, p] for t, p in zip(times, series)]
    diag = {"max_macroscopic_time": float(times[-1]) * scale,
            "boundary_tail": vonneumann.boundary_tail(state.rho, lattice),
            "hermiticity_error": vonneumann.hermiticity_error(cur.rho)}
    if v.hierarchy:
        orders = duhamel.vn_partial_sums(state, bmat, times, 2, rtol=v.rtol, atol=1e-12 * v.rtol)
        header += ["order0", "order1", "order2", "partial_sum"]
        for row, o in zip(rows, orders):
            row.extend([float(o[0]), float(o[1]), float(o[2]), float(np.sum(o))])
        gaps = [abs(p - float(np.sum(o))) / abs(p) for p, o in zip(series, orders) if p != 0]
        diag["max_rel_diff_partial_sum"] = max(gaps) if gaps else 0.0
    return {"vn.csv": csv_text(header, rows)}, diag


def run_scatterers(cfg, threads):
    s = cfg.scatterers
    d = cfg.run.dim
    seed = cfg.run.seed
    if s.kind == "matern":
        pset = scatterers.gen_matern(d, s.window_radius, s.intensity, s.hard_core_radius, seed)
    else:
        pset = scatterers.gen_lattice(d, s.window_radius)
        if s.kind == "displaced":
            pset = scatterers.gen_displaced(pset, s.max_shift, seed)
    g = scatterers.BumpFunction(d, s.bump_radius)
    riemann = []
    for eps in s.eps_values:
        if g.support_radius / eps <= pset.window_radius:
            riemann.append((float(eps), scatterers.riemann_sum_error(pset, g, eps)))
    diag = {"count": len(pset), "min_gap": float(pset.min_gap)}
    return {"points.csv": csv_text([f"x{i}" for i in range(d)], pset.points.tolist()),
            "riemann.csv": csv_text(["eps", "error"], riemann),
            "points.txt": scatterers.points_text(pset)}, diag


def run_validate(cfg, threads):
    from .selfcheck import run_checks

    checks = run_checks(cfg.run.seed)
    rows = [(name, value, threshold, "pass" if ok else "fail") for name, value, threshold, ok in checks]
    diag = {"checks": len(checks), "failed": sum(1 for c in checks if not c[3])}
    return {"validate.csv": csv_text(["check", "value", "threshold", "passed"], rows)}, diag


RUNNERS = {
    "tmatrix": run_tmatrix,
    "kernel": run_kernel,
    "lbe-run": run_lbe,
    "duhamel-check": run_duhamel,
    "vn-run": run_vn,
    "validate": run_validate,
    "scatterers": run_scatterers,
}


# --------------------------------------------------------------------------
# entry point

def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    run = cfg.run
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.out is not None:
        run = replace(run, out=args.out)
    if args.threads is not None:
        run = replace(run, threads=args.threads)
    cfg = replace(cfg, run=run)
    cfg.validate(args.command)
    return cfg


def write_outputs(out_dir: str, files: dict, manifest: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qlorentz", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="INI experiment config (defaults used when omitted)")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out", help="override run.out (output directory)")
    parser.add_argument("--threads", type=int, help="override run.threads")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    manifest = {"command": args.command, "build_id": build_id(), "seed": cfg.run.seed,
                "threads": cfg.run.threads, "config": cfg.to_dict()}
    try:
        files, diag = RUNNERS[args.command](cfg, cfg.run.threads)
    except QLorentzError as exc:
        manifest.update(status="failed", partial=True, error=str(exc), module=exc.module, outputs=[])
        write_outputs(cfg.run.out, {}, manifest)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest.update(status="ok", partial=False, outputs=sorted(files), diagnostics=diag)
    write_outputs(cfg.run.out, files, manifest)
    if args.command == "validate" and diag["failed"]:
        print(f"{diag['failed']} of {diag['checks']} checks failed", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
