"""Single-scatterer T-matrix on the energy shell.

Two independent routes:

* ``born_series`` sums the Born expansion term by term. Each resolvent is
  regularized as 1/(eps - pi i (|y|^2 - |y_i|^2)) (the u-integral with an
  e^{-eps u} damping), evaluated on a geometric ladder of eps and
  Richardson-extrapolated to eps -> 0.
* ``solve_lippmann_schwinger`` discretizes T = mu W (1 + G0 T) by Nystrom
  quadrature with G0 = 1/(E - |y|^2/2 + i0) split into a principal value
  (handled by subtracting the shell value) and -i pi delta (handled by an
  on-shell sphere quadrature).

Both work on momentum grids of radial nodes x direction nodes. Kernels of
the form W_hat(y_i - y_j) depend on the azimuth only through the difference,
so all products and solves are carried out per azimuthal Fourier mode.

Energy is specified through the speed k, E = k^2 / 2. Under the package
conventions the optical theorem reads
Im T(k w, k w) = -pi k^{d-2} int |T(k w', k w)|^2 dw'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import AccuracyError, ConvergenceError, DomainError, NonContractionError, ResolutionError
from .potential import PotentialProfile
from .quadrature import SphereQuadrature, gauss_legendre_panels, sphere_quadrature

_CHUNK_ELEMENTS = 12_000_000


@dataclass(frozen=True)
class ResolventRegularization:
    """eps ladder epsilon * ratio**j, j < extrapolation_steps."""

    epsilon: float = 0.1
    extrapolation_steps: int = 4
    ratio: float = 0.5

    def __post_init__(self):
        if self.epsilon <= 0 or self.extrapolation_steps < 1 or not 0 < self.ratio < 1:
            raise DomainError("need epsilon > 0, extrapolation_steps >= 1, 0 < ratio < 1", "tmatrix")

    def ladder(self) -> np.ndarray:
        return self.epsilon * self.ratio ** np.arange(self.extrapolation_steps)


@dataclass(frozen=True)
class BornGrid:
    n_polar: int = 16
    n_azimuth: int = 32
    nodes_per_panel: int = 8
    n_outer: int = 12
    radial_cutoff: float | None = None


@dataclass(frozen=True)
class LSGrid:
    n_polar: int = 16
    n_azimuth: int = 32
    n_radial: int = 24
    n_tail: int = 16
    radial_cutoff: float | None = None
    tolerance: float = 1e-10


@dataclass(frozen=True, eq=False)
class OnShellTMatrix:
    """values[i, j] = T(k w_i, k w_j) on the nodes of ``quadrature``."""

    speed: float
    coupling: float
    quadrature: SphereQuadrature
    values: np.ndarray
    method: dict = field(default_factory=dict)
    order_norms: tuple = ()

    @property
    def energy(self) -> float:
        return 0.5 * self.speed**2

    @property
    def dim(self) -> int:
        return self.quadrature.dim

    def reciprocity_error(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))


# --------------------------------------------------------------------------
# shared grid machinery

def _cosines(quad: SphereQuadrature) -> np.ndarray:
    dphi = quad.azimuth
    return (quad.sin_polar[:, None, None] * quad.sin_polar[None, :, None] * np.cos(dphi)
            + quad.cos_polar[:, None, None] * quad.cos_polar[None, :, None])


def _modal_kernel(profile, rho_rows, rho_cols, quad, cosang=None) -> np.ndarray:
    """Azimuthal Fourier modes of W_hat(y_i - y_j).

    Returns real array (n_modes, nr * P, nc * P), n_modes = n_azimuth//2 + 1,
    with mode m holding sum_D W_hat(.., D) cos(2 pi m D / N).
    """
    cosang = _cosines(quad) if cosang is None else cosang
    rho_rows = np.asarray(rho_rows, float)
    rho_cols = np.asarray(rho_cols, float)
    nr, p, nc, n = len(rho_rows), quad.n_polar, len(rho_cols), quad.n_azimuth
    out = np.empty((n // 2 + 1, nr * p, nc * p))
    chunk = max(1, _CHUNK_ELEMENTS // (p * nc * p * n))
    rb = rho_cols[None, None, :, None, None]
    for s in range(0, nr, chunk):
        ra = rho_rows[s:s + chunk, None, None, None, None]
        q2 = ra**2 + rb**2 - 2.0 * ra * rb * cosang[None, :, None, :, :]
        modes = np.fft.rfft(profile.w_hat_sq(np.maximum(q2, 0.0)), axis=-1).real
        out[:, s * p:(s + len(ra)) * p] = np.moveaxis(modes, -1, 0).reshape(n // 2 + 1, -1, nc * p)
    return out


def _full_mode_index(n_azimuth):
    m = np.arange(n_azimuth)
    return np.minimum(m, n_azimuth - m)


def _apply_grid_kernel(profile, rho, quad, vec_modes) -> np.ndarray:
    """(K x) in mode space for x on the grid itself.

    ``vec_modes`` has shape (N, n_r * P, ncol) over all N azimuthal modes.
    The kernel block is assembled row chunk by row chunk.
    """
    n = quad.n_azimuth
    p = quad.n_polar
    nr = len(rho)
    cosang = _cosines(quad)
    full = _full_mode_index(n)
    out = np.empty_like(vec_modes)
    per_row = p * nr * p * n
    chunk = max(1, _CHUNK_ELEMENTS // per_row)
    for s in range(0, nr, chunk):
        rows = slice(s, min(nr, s + chunk))
        block = _modal_kernel(profile, rho[rows], rho, quad, cosang)
        for m in range(n):
            out[m, rows.start * p:rows.stop * p] = block[full[m]] @ vec_modes[m]
    return out


def _to_modes(x, quad, axis):
    """DFT over the azimuth index; x's ``axis`` is (.., P * N) polar-major."""
    x = np.moveaxis(np.asarray(x), axis, -1)
    shp = x.shape[:-1] + (quad.n_polar, quad.n_azimuth)
    return np.fft.fft(x.reshape(shp), axis=-1)


def _richardson(values: list, eps: np.ndarray):
    """Neville extrapolation to eps = 0. Returns (estimate, residual)."""
    tab = [np.asarray(v) for v in values]
    diag = [tab[0]]
    cur = tab
    for level in range(1, len(tab)):
        nxt = []
        for j in range(len(cur) - 1):
            e_lo, e_hi = eps[j + level], eps[j]
            nxt.append((e_hi * cur[j + 1] - e_lo * cur[j]) / (e_hi - e_lo))
        cur = nxt
        diag.append(cur[-1])
    best = diag[-1]
    resid = np.max(np.abs(diag[-1] - diag[-2])) if len(diag) > 1 else np.inf
    return best, float(resid)


# --------------------------------------------------------------------------
# Born route

def born_radial_grid(k: float, eps: float, cutoff: float, grid: BornGrid):
    """Radial nodes graded geometrically towards the shell so the
    regularized resolvent (half width eps / (2 pi k)) is resolved."""
    h0 = 0.25 * eps / (2.0 * np.pi * k)
    hmax = min(0.5 * k, 0.5 * (cutoff - k))
    levels = [h0]
    while levels[-1] * 2.0 < hmax:
        levels.append(levels[-1] * 2.0)
    near = np.array(levels)
    edges_in = k - near[::-1]
    edges_out = k + near
    outer = np.linspace(edges_out[-1], cutoff, max(2, int(math.ceil(cutoff - edges_out[-1])) + 1))
    edges = np.concatenate([[0.0], edges_in, edges_out, outer[1:]])
    counts = ([grid.n_outer] + [grid.nodes_per_panel] * (2 * len(near) - 1)
              + [grid.n_outer] * (len(outer) - 1))
    return gauss_legendre_panels(edges, counts)


def _born_diag(k, eps, rho, wr, quad):
    d = quad.dim
    res = (-2j * np.pi) / (eps - 1j * np.pi * (k * k - rho * rho))
    radial = wr * rho ** (d - 1) * res
    ang = quad.weights[:: quad.n_azimuth]
    return (radial[:, None] * ang[None, :]).ravel()


def _cutoff(profile, k, override):
    return override if override is not None else k + profile.momentum_scale + 1.0


@lru_cache(maxsize=32)
def _born_unit_terms(profile, k, l_max, reg, grid):
    """Coupling-free on-shell Born terms U_l (T = sum mu^{l+1} U_l), with the
    per-term extrapolation residuals."""
    quad = sphere_quadrature(profile.dim, grid.n_polar, grid.n_azimuth)
    n, p = quad.n_azimuth, quad.n_polar
    full = _full_mode_index(n)
    cutoff = _cutoff(profile, k, grid.radial_cutoff)
    cosang = _cosines(quad)
    ladder = reg.ladder()
    per_eps = [[] for _ in range(l_max)]
    for eps in ladder:
        rho, wr = born_radial_grid(k, eps, cutoff, grid)
        diag = _born_diag(k, eps, rho, wr, quad)
        k_gs = _modal_kernel(profile, rho, [k], quad, cosang)  # (modes, nr*P, P)
        vec = diag[None, :, None] * k_gs[full]                 # D K_gs, all modes
        for ell in range(1, l_max + 1):
            if ell > 1:
                vec = diag[None, :, None] * _apply_grid_kernel(profile, rho, quad, vec)
            # contract with K_sg = K_gs^T in mode space
            term_modes = np.einsum("mgi,mgj->mij", k_gs[full], vec)
            per_eps[ell - 1].append(term_modes)
    terms, residuals = [], []
    for ell in range(l_max):
        best, resid = _richardson(per_eps[ell], ladder)
        # back to azimuth offsets: U[(a, c), (b, 0)] then spread over c_b
        offsets = np.fft.ifft(best, axis=0)  # (N, P, P): offset c, polar a, polar b
        u = np.empty((p, n, p, n), complex)
        for cb in range(n):
            u[:, :, :, cb] = np.moveaxis(np.roll(offsets, cb, axis=0), 0, 1)
        terms.append(u.reshape(p * n, p * n))
        residuals.append(resid)
    return quad, tuple(terms), tuple(residuals)


def born_series(profile: PotentialProfile, mu: float, speed: float, l_max: int = 2,
                reg: ResolventRegularization | None = None, grid: BornGrid | None = None,
                tolerance: float = 1e-4, contraction: float = 0.9) -> OnShellTMatrix:
    """Born series through order ``l_max`` on the product direction grid.

    Raises NonContractionError when successive term norms do not shrink by
    ``contraction`` and AccuracyError when the eps extrapolation of any term
    is unstable beyond ``tolerance`` (relative to the first Born term).
    """
    if speed <= 0:
        raise DomainError("speed must be positive", "tmatrix")
    reg = reg or ResolventRegularization()
    grid = grid or BornGrid()
    quad = sphere_quadrature(profile.dim, grid.n_polar, grid.n_azimuth)
    first = profile.w_hat_sq(2.0 * speed**2 * (1.0 - np.clip(quad.nodes @ quad.nodes.T, -1, 1)))
    total = mu * first.astype(complex)
    norms = [abs(mu) * float(np.max(np.abs(first)))]
    if l_max >= 1 and mu != 0.0:
        _, terms, resid = _born_unit_terms(profile, float(speed), int(l_max), reg, grid)
        scale = float(np.max(np.abs(first)))
        for ell, (u, r) in enumerate(zip(terms, resid), start=1):
            if r > tolerance * scale:
                raise AccuracyError(f"order {ell} eps-extrapolation residual {r:.3e}", r, "tmatrix")
            term = mu ** (ell + 1) * u
            norms.append(float(np.max(np.abs(term))))
            total = total + term
        for a, b in zip(norms[:-1], norms[1:]):
            if a > 0 and b / a >= contraction:
                raise NonContractionError(f"Born term ratio {b / a:.3f} >= {contraction}", "tmatrix")
    elif l_max >= 1:
        norms += [0.0] * l_max
    return OnShellTMatrix(float(speed), float(mu), quad, total,
                          {"name": "born", "l_max": int(l_max), "epsilon": reg.epsilon,
                           "steps": reg.extrapolation_steps}, tuple(norms))


def born_term(profile: PotentialProfile, mu: float, y, y_prime, order: int,
              reg: ResolventRegularization | None = None, grid: BornGrid | None = None,
              tolerance: float = 1e-4) -> complex:
    """Order-``order`` Born term T^(l)(y, y') for a single on-shell pair.

    With ``reg.extrapolation_steps == 1`` the value at the fixed
    ``reg.epsilon`` is returned without extrapolation.
    """
    y = np.asarray(y, float)
    y_prime = np.asarray(y_prime, float)
    k = float(np.linalg.norm(y))
    if order < 0:
        raise DomainError("order must be >= 0", "tmatrix")
    if not math.isclose(k, float(np.linalg.norm(y_prime)), rel_tol=1e-10, abs_tol=1e-14):
        raise DomainError("born_term requires |y| = |y'|", "tmatrix")
    if order == 0 or mu == 0.0:
        return complex(mu ** (order + 1) * profile.w_hat_sq(np.sum((y - y_prime) ** 2)))
    reg = reg or ResolventRegularization()
    grid = grid or BornGrid()
    quad = sphere_quadrature(profile.dim, grid.n_polar, grid.n_azimuth)
    cutoff = _cutoff(profile, k, grid.radial_cutoff)
    ladder = reg.ladder()
    vals = []
    for eps in ladder:
        rho, wr = born_radial_grid(k, eps, cutoff, grid)
        pts = (rho[:, None, None] * quad.nodes[None, :, :]).reshape(-1, profile.dim)
        diag = np.repeat(_born_diag(k, eps, rho, wr, quad).reshape(len(rho), quad.n_polar),
                         quad.n_azimuth, axis=1).ravel()
        e_in = profile.w_hat_sq(np.sum((pts - y_prime) ** 2, axis=1))
        e_out = profile.w_hat_sq(np.sum((pts - y) ** 2, axis=1))
        v = diag * e_in
        for _ in range(order - 1):
            modes = _to_modes(v.reshape(len(rho) * quad.n_polar, quad.n_azimuth), quad, -1)
            modes = np.moveaxis(modes.reshape(-1, quad.n_azimuth), -1, 0)[:, :, None]
            kv = _apply_grid_kernel(profile, rho, quad, modes)[:, :, 0]
            v = diag * np.fft.ifft(kv.T, axis=-1).reshape(-1)
        vals.append(np.sum(e_out * v))
    if len(vals) == 1:
        best = vals[0]
    else:
        best, resid = _richardson(vals, ladder)
        if resid > tolerance * max(abs(best), 1e-300):
            raise AccuracyError(f"eps-extrapolation residual {resid:.3e}", resid, "tmatrix")
    return complex(mu ** (order + 1) * best)


# --------------------------------------------------------------------------
# Lippmann-Schwinger route

def ls_radial_grid(k: float, cutoff: float, grid: LSGrid):
    """Gauss-Legendre on [0, k], [k, 2k] (nodes cluster at the shell) and
    unit-length tail panels out to the cutoff."""
    tail = np.linspace(2.0 * k, cutoff, max(2, int(math.ceil(cutoff - 2.0 * k)) + 1))
    edges = np.concatenate([[0.0, k, 2.0 * k], tail[1:]])
    counts = [grid.n_radial, grid.n_radial] + [grid.n_tail] * (len(tail) - 1)
    return gauss_legendre_panels(edges, counts)


def _check_shell_resolution(profile, k, quad, tol=1e-4):
    """The azimuth rule is spectrally accurate only if W_hat along the
    equator of the shell has decayed at the Nyquist mode."""
    if quad.dim == 1:  # two exact directions, nothing to resolve
        return
    row = profile.w_hat_sq(2.0 * k * k * (1.0 - np.cos(quad.azimuth)))
    spec = np.abs(np.fft.rfft(row))
    if spec[-1] > tol * spec[0]:
        raise ResolutionError("direction grid too coarse to resolve W_hat on the shell", "tmatrix")


def solve_lippmann_schwinger(profile: PotentialProfile, mu: float, speed: float,
                             grid: LSGrid | None = None) -> OnShellTMatrix:
    """Nystrom solve of the momentum-space Lippmann-Schwinger equation,
    restricted to the shell |y| = speed."""
    if speed <= 0:
        raise DomainError("speed must be positive", "tmatrix")
    grid = grid or LSGrid()
    if grid.n_radial < 8:
        raise ResolutionError("need at least 8 radial nodes per shell panel", "tmatrix")
    d = profile.dim
    k = float(speed)
    quad = sphere_quadrature(d, grid.n_polar, grid.n_azimuth)
    _check_shell_resolution(profile, k, quad)
    n, p = quad.n_azimuth, quad.n_polar
    if mu == 0.0:
        return OnShellTMatrix(k, 0.0, quad, np.zeros((quad.size, quad.size), complex),
                              {"name": "lippmann_schwinger", "n_radial": grid.n_radial})
    cutoff = _cutoff(profile, k, grid.radial_cutoff)
    rho, wr = ls_radial_grid(k, cutoff, grid)
    g0 = 2.0 / (k * k - rho * rho)
    pv_total = math.log((cutoff + k) / (cutoff - k)) / k  # PV int_0^R 2/(k^2 - rho^2)
    shell_factor = k ** (d - 1) * (pv_total - np.sum(wr * g0)) - 1j * np.pi * k ** (d - 2)
    radial = np.append(wr * rho ** (d - 1) * g0, shell_factor)
    all_rho = np.append(rho, k)
    ang = quad.weights[::n]
    diag = (radial[:, None] * ang[None, :]).ravel()
    kmod = _modal_kernel(profile, all_rho, all_rho, quad)
    size = all_rho.size * p
    shell_cols = slice(size - p, size)
    eye = np.eye(size)
    sol = {}
    for m in range(n // 2 + 1):
        a = eye - mu * kmod[m] * diag[None, :]
        b = mu * kmod[m][:, shell_cols]
        x = np.linalg.solve(a, b)
        resid = np.linalg.norm(a @ x - b) / max(np.linalg.norm(b), 1e-300)
        if not np.isfinite(resid) or resid > grid.tolerance:
            raise ConvergenceError(f"mode {m}: linear residual {resid:.2e}", "tmatrix")
        sol[m] = x[shell_cols]
    full = _full_mode_index(n)
    modes = np.stack([sol[full[m]] for m in range(n)])  # (N, P_a, P_b)
    offsets = np.fft.ifft(modes, axis=0)
    u = np.empty((p, n, p, n), complex)
    for cb in range(n):
        u[:, :, :, cb] = np.moveaxis(np.roll(offsets, cb, axis=0), 0, 1)
    values = u.reshape(p * n, p * n)
    return OnShellTMatrix(k, float(mu), quad, values,
                          {"name": "lippmann_schwinger", "n_radial": grid.n_radial,
                           "n_tail": grid.n_tail, "cutoff": cutoff})


# --------------------------------------------------------------------------
# diagnostics

def optical_constant(d: int, speed: float) -> float:
    """C_d(k) = pi k^{d-2}."""
    return math.pi * speed ** (d - 2)


def optical_sums(t: OnShellTMatrix):
    """(Im T(kw, kw), C_d(k) int |T(kw', kw)|^2 dw') per node w."""
    c = optical_constant(t.dim, t.speed)
    loss = c * (t.quadrature.weights @ np.abs(t.values) ** 2)
    return np.diag(t.values).imag, loss


def optical_residual(t: OnShellTMatrix) -> float:
    """max_w |Im T(kw, kw) + C_d(k) int |T(kw', kw)|^2 dw'|."""
    im, loss = optical_sums(t)
    return float(np.max(np.abs(im + loss))) if im.size else 0.0


def first_born_matrix(profile: PotentialProfile, mu: float, speed: float,
                      quad: SphereQuadrature) -> np.ndarray:
    """mu W_hat(k(w_i - w_j)) on a direction quadrature."""
    diff = speed * (quad.nodes[:, None, :] - quad.nodes[None, :, :])
    return mu * profile.w_hat_sq(np.sum(diff**2, axis=-1))


# --------------------------------------------------------------------------
# text format

def tmatrix_text(t: OnShellTMatrix) -> str:
    q = t.quadrature
    method = " ".join(f"{k}={v!r}" if not isinstance(v, str) else f"{k}={v}" for k, v in t.method.items())
    lines = ["# onshell-tmatrix v1",
             f"dim {t.dim}", f"speed {t.speed!r}", f"coupling {t.coupling!r}",
             f"n_polar {q.n_polar}", f"n_azimuth {q.n_azimuth}",
             f"method {method}",
             "order_norms " + " ".join(repr(float(v)) for v in t.order_norms)]
    for node, w in zip(q.nodes, q.weights):
        lines.append("node " + " ".join(repr(float(v)) for v in node) + f" {float(w)!r}")
    for row in t.values:
        lines.append("row " + " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    return "\n".join(lines) + "\n"


def write_tmatrix(t: OnShellTMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(tmatrix_text(t))


def _parse_value(s):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_tmatrix(path) -> OnShellTMatrix:
    header, nodes, rows = {}, [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            key, _, rest = line.strip().partition(" ")
            if key == "node":
                nodes.append([float(v) for v in rest.split()])
            elif key == "row":
                vals = np.array([float(v) for v in rest.split()])
                rows.append(vals[0::2] + 1j * vals[1::2])
            else:
                header[key] = rest
    d = int(header["dim"])
    quad = sphere_quadrature(d, int(header["n_polar"]), int(header["n_azimuth"]))
    nodes = np.array(nodes)
    quad = SphereQuadrature(d, quad.n_polar, quad.n_azimuth, quad.cos_polar, quad.sin_polar,
                            quad.polar_weights, nodes[:, :d].copy(), nodes[:, d].copy())
    method = dict(item.split("=", 1) for item in header.get("method", "").split())
    method = {k: _parse_value(v) for k, v in method.items()}
    norms = tuple(float(v) for v in header.get("order_norms", "").split())
    return OnShellTMatrix(float(header["speed"]), float(header["coupling"]), quad,
                          np.array(rows), method, norms)
