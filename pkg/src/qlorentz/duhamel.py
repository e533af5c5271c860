"""Low-order terms of the Duhamel expansion and of the recursion obeyed by
its weak limit.

* ``eval_a0``: the m = 0 term after the r = h rescaling. For Gaussian
  mixture symbols the y-integral is done in closed form and the remaining
  eta-integral collapses to one radial integral, because the damping factor
  depends only on |eta|.
* ``eval_gain_order2``: the lambda^2 term of the transport identity, with
  the u-integrals regularized as in ``tmatrix`` and extrapolated in eps.
* ``recursion_residual``: the recursion truncated at n = 2, where the n = 2
  gamma-sum equals lambda^2 times the first-Born collision operator.
* ``vn_partial_sums``: the m <= 2 partial sums of the expansion of the
  discrete damped von Neumann flow, obtained from the hierarchy
  rho_m' = L0 rho_m + L1 rho_{m-1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad as adaptive_quad
from scipy.integrate import solve_ivp
from scipy.special import jv

from .errors import AccuracyError, DomainError
from .potential import PotentialProfile
from .quadrature import SphereQuadrature, sphere_quadrature
from .symbols import CutoffProfile, DampingProfile, SchwartzSymbol
from .tmatrix import BornGrid, ResolventRegularization, _richardson, born_radial_grid
from .vonneumann import DampedEvolutionState


@dataclass(frozen=True)
class DuhamelTerm:
    """One evaluated term: order m, sign vector gamma, parameters, value."""

    order: int
    gamma: tuple = ()
    r: float = float("nan")
    alpha: float = float("nan")
    t: float = 0.0
    value: complex = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.order <= 2:
            raise DomainError("orders above 2 are not evaluated", "duhamel")
        if self.order == 0 and self.gamma:
            raise DomainError("the m = 0 term carries no gamma", "duhamel")


# --------------------------------------------------------------------------
# m = 0

def sphere_fourier(d: int, u):
    """int_{S^{d-1}} exp(i u w_1) dw as a function of u >= 0."""
    u = np.asarray(u, dtype=float)
    if d == 1:
        return 2.0 * np.cos(u)
    if d == 3:
        return 4.0 * np.pi * np.sinc(u / np.pi)
    small = u < 1e-12
    us = np.where(small, 1.0, u)
    val = (2.0 * np.pi) ** (d / 2) * us ** (1 - d / 2) * jv(d / 2 - 1, us)
    s_d = 2.0 * np.pi ** (d / 2) / math.gamma(d / 2)
    return np.where(small, s_d, val)


def _a0_pairs(a: SchwartzSymbol, b: SchwartzSymbol, t: float):
    """Per component pair: prefactor C, Gaussian rate q and shift c with
    integrand C exp(-pi q |eta|^2) e(c.eta) after the y-integral."""
    d = a.dim
    ta = a.sy[:, None] ** 2
    tb = b.sy[None, :] ** 2
    big_q = 1.0 / ta + 1.0 / tb
    ya = a.y0[:, None, :]
    yb = b.y0[None, :, :]
    centre = (ya / ta[..., None] + yb / tb[..., None]) / big_q[..., None]
    expo = np.sum(ya**2, -1) / ta + np.sum(yb**2, -1) / tb - big_q * np.sum(centre**2, -1)
    pref = (a.amps[:, None] * b.amps[None, :] * a.sx[:, None] ** d * b.sx[None, :] ** d
            * big_q ** (-d / 2) * np.exp(-np.pi * expo))
    rate = a.sx[:, None] ** 2 + b.sx[None, :] ** 2 + t * t / big_q
    shift = a.x0[:, None, :] - b.x0[None, :, :] + t * centre
    return pref.ravel(), rate.ravel(), np.linalg.norm(shift, axis=-1).ravel()


def _radial_a0(a, b, t, damp_fn, breaks, tol):
    d = a.dim
    total = 0.0
    err_total = 0.0
    for pref, rate, c in zip(*_a0_pairs(a, b, t)):
        if pref == 0.0:
            continue
        upper = math.sqrt(40.0 / (math.pi * rate))

        def integrand(rho):
            return rho ** (d - 1) * math.exp(-math.pi * rate * rho * rho) \
                * float(sphere_fourier(d, 2.0 * math.pi * c * rho)) * damp_fn(rho)

        pts = sorted({p for p in breaks if 0.0 < p < upper})
        edges = [0.0] + pts + [upper]
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, err = adaptive_quad(integrand, lo, hi, epsabs=tol * 1e-3, epsrel=1e-12, limit=400)
            total += pref * val
            err_total += abs(pref) * err
    if err_total > tol:
        raise AccuracyError(f"A0 quadrature error estimate {err_total:.2e}", err_total, "duhamel")
    return total


def eval_a0(a: SchwartzSymbol, b: SchwartzSymbol, r: float, alpha: float, t: float,
            damping: DampingProfile, tol: float = 1e-9) -> float:
    """m = 0 Duhamel term with h = r at macroscopic time t.

    In the rescaled variables the integrand is
    e(y.eta t + r^d |eta|^2 t / 2) exp(-(alpha/r)^d (1 - Gamma(alpha eta)) t)
    a~(-eta, y + r^d eta / 2) b~(eta, y + r^d eta / 2); shifting y removes
    the r-dependence of the phase and of the symbol arguments.
    """
    if r <= 0 or alpha <= 0 or t < 0:
        raise DomainError("need r > 0, alpha > 0, t >= 0", "duhamel")
    d = a.dim
    strength = (alpha / r) ** d * t

    def damp(rho):
        return math.exp(-strength * (1.0 - float(damping.radial(alpha * rho))))

    breaks = [damping.inner_radius / alpha, 1.0 / alpha]
    return _radial_a0(a, b, t, damp, breaks, tol)


def eval_a0_alpha_limit(a: SchwartzSymbol, b: SchwartzSymbol, alpha: float, t: float,
                        damping: DampingProfile, tol: float = 1e-9) -> float:
    """r -> 0 limit at fixed alpha: the damping becomes 1[Gamma(alpha eta) = 1]."""
    plateau = damping.inner_radius / alpha
    return _radial_a0(a, b, t, lambda rho: 1.0 if rho <= plateau else 0.0, [plateau], tol)


def a0_integrand_direct(a: SchwartzSymbol, b: SchwartzSymbol, r, alpha, t, damping, y, eta):
    """The rescaled m = 0 integrand evaluated pointwise (for brute-force checks)."""
    d = a.dim
    y = np.asarray(y, float)
    eta = np.asarray(eta, float)
    shifted = y + 0.5 * r**d * eta
    phase = np.exp(2j * np.pi * (np.sum(y * eta, -1) * t + 0.5 * r**d * np.sum(eta**2, -1) * t))
    damp = np.exp(-(alpha / r) ** d * (1.0 - damping(alpha * eta)) * t)
    return phase * damp * a.fourier_x(-eta, shifted) * b.fourier_x(eta, shifted)


def a0_ladder(a, b, t, damping, r_values=(1e-1, 3e-2, 1e-2), alpha_values=(0.3, 0.1, 0.03),
              order="r-first"):
    """Rows (r, alpha, value, reference, error) along the two-stage ladder.

    ``r-first`` sends r down at the largest alpha (reference: the fixed-alpha
    limit), then alpha down at the smallest r (reference: free transport).
    ``alpha-first`` does the reverse with the free value as reference.
    """
    free = a.pair_free(b, t)
    rows = []
    if order == "r-first":
        alpha0 = alpha_values[0]
        limit = eval_a0_alpha_limit(a, b, alpha0, t, damping)
        for r in r_values:
            v = eval_a0(a, b, r, alpha0, t, damping)
            rows.append((r, alpha0, v, limit, abs(v - limit)))
        for alpha in alpha_values[1:]:
            v = eval_a0(a, b, r_values[-1], alpha, t, damping)
            rows.append((r_values[-1], alpha, v, free, abs(v - free)))
    elif order == "alpha-first":
        r0 = r_values[0]
        for alpha in alpha_values:
            v = eval_a0(a, b, r0, alpha, t, damping)
            rows.append((r0, alpha, v, free, abs(v - free)))
        for r in r_values[1:]:
            v = eval_a0(a, b, r, alpha_values[-1], t, damping)
            rows.append((r, alpha_values[-1], v, free, abs(v - free)))
    else:
        raise DomainError(f"unknown ladder order {order!r}", "duhamel")
    return rows


# --------------------------------------------------------------------------
# lambda^2 transport term

def _rotation_to(direction) -> np.ndarray:
    """Orthogonal matrix taking the last unit vector to ``direction``."""
    n = np.asarray(direction, float)
    n = n / np.linalg.norm(n)
    q, _ = np.linalg.qr(np.column_stack([n, np.eye(n.size)]))
    q = q[:, : n.size]
    if q[:, 0] @ n < 0:
        q = -q
    return np.column_stack([q[:, 1:], q[:, 0]])


def _shell_directions(y, quad: SphereQuadrature):
    """Quadrature directions rotated so that the pole (or first node) points along y."""
    d = quad.dim
    if d == 1:
        return quad.nodes * np.sign(y[0] if y[0] != 0 else 1.0), quad.weights
    if d == 2:
        ang = math.atan2(y[1], y[0])
        c, s = math.cos(ang), math.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        return quad.nodes @ rot.T, quad.weights
    return quad.nodes @ _rotation_to(y).T, quad.weights


def eval_gain_order2(profile: PotentialProfile, lam: float, f, y,
                     reg: ResolventRegularization | None = None,
                     grid: BornGrid | None = None, directions: SphereQuadrature | None = None,
                     tolerance: float = 1e-6) -> float:
    """n = 2 term of the transport identity at momentum y:

    2 Re{(-2 pi i lam)^2 sum_gamma (-1)^gamma int W_hat(-z) W_hat(z)
         [int_0^inf e((|y - gamma z|^2 - |y + (1-gamma) z|^2) u / 2) du] f(y - gamma z) dz}.

    ``f`` maps an array of momenta (..., d) to values. The u-integral is
    regularized with e^{-eps u} and extrapolated to eps = 0.
    """
    y = np.asarray(y, float)
    d = profile.dim
    if lam == 0.0:
        return 0.0
    k = float(np.linalg.norm(y))
    if k == 0.0:
        raise DomainError("y must be nonzero", "duhamel")
    reg = reg or ResolventRegularization(0.05, 5)
    grid = grid or BornGrid()
    directions = directions or sphere_quadrature(d, 24, 48)
    dirs, dw = _shell_directions(y, directions)
    cutoff = k + profile.momentum_scale + 1.0 if grid.radial_cutoff is None else grid.radial_cutoff
    fy = float(f(y))
    values = []
    for eps in reg.ladder():
        rho, wr = born_radial_grid(k, eps, cutoff, grid)
        pts = rho[:, None, None] * dirs[None, :, :]
        measure = (wr * rho ** (d - 1))[:, None] * dw[None, :]
        what2 = profile.w_hat_sq(np.sum((pts - y) ** 2, axis=-1)) ** 2
        res = 1.0 / (eps - 1j * np.pi * (k * k - rho * rho))[:, None]
        loss = fy * np.sum(measure * what2 * res)
        gain = np.sum(measure * what2 * np.conj(res) * f(pts))
        values.append(2.0 * np.real(-4.0 * np.pi**2 * lam**2 * (loss - gain)))
    best, resid = _richardson(values, reg.ladder())
    scale = max(abs(float(best)), 4.0 * np.pi**2 * lam**2 * abs(fy) * 1e-3, 1e-300)
    if resid > tolerance * scale:
        raise AccuracyError(f"eps-extrapolation residual {resid:.2e}", resid, "duhamel")
    return float(best)


def first_born_collision(profile: PotentialProfile, f, y, directions: SphereQuadrature | None = None,
                         rotate: bool = True) -> float:
    """C_1[f](y) = 8 pi^2 (k^{d-2}/2) int W_hat(k w' - y)^2 (f(k w') - f(y)) dw'
    with k = |y| (first-Born collision operator at unit coupling)."""
    y = np.asarray(y, float)
    d = profile.dim
    k = float(np.linalg.norm(y))
    directions = directions or sphere_quadrature(d, 24, 48)
    dirs, dw = _shell_directions(y, directions) if rotate else (directions.nodes, directions.weights)
    pts = k * dirs
    w2 = profile.w_hat_sq(np.sum((pts - y) ** 2, axis=-1)) ** 2
    return float(8.0 * np.pi**2 * 0.5 * k ** (d - 2) * np.sum(dw * w2 * (f(pts) - f(y))))


# --------------------------------------------------------------------------
# recursion

def _coupling(lam, x):
    if isinstance(lam, CutoffProfile):
        return float(lam(np.asarray(x, float)))
    return float(lam)


def n1_terms(f_candidate, lam, profile: PotentialProfile, t: float, x, y, n_nu: int = 16):
    """The gamma = 0 and gamma = 1 parts of the n = 1 recursion term,
    2 pi i (-1)^gamma int_0^t lambda(x - (t - nu) y) W_hat(0) f(nu, x - (t - nu) y, y) dnu."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if t == 0.0:
        return 0j, 0j
    nodes, weights = np.polynomial.legendre.leggauss(n_nu)
    nu = 0.5 * t * (nodes + 1.0)
    w = 0.5 * t * weights
    acc = 0.0
    for n_i, w_i in zip(nu, w):
        xs = x - (t - n_i) * y
        acc += w_i * _coupling(lam, xs) * profile.integral() * float(f_candidate(n_i, xs, y))
    term = 2j * np.pi * acc
    return term, -term


def recursion_residual(f_candidate, lam, profile: PotentialProfile, a, t: float, x, y,
                       n_nu: int = 16, directions: SphereQuadrature | None = None,
                       on_nodes: bool = False) -> float:
    """f(t, x, y) - [a(x - t y, y) + int_0^t lambda(x - (t - nu) y)^2
    C_1[f(nu, x - (t - nu) y, .)](y) dnu].

    ``f_candidate(t, x, ys)`` and ``a(x, y)`` accept momentum arrays. With
    ``on_nodes`` the collision quadrature uses ``directions`` unrotated, so
    y must be |y| times one of its nodes (used for grid solutions).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    lhs = float(f_candidate(t, x, y))
    rhs = float(a(x - t * y, y))
    if t > 0:
        nodes, weights = np.polynomial.legendre.leggauss(n_nu)
        nu = 0.5 * t * (nodes + 1.0)
        w = 0.5 * t * weights
        for n_i, w_i in zip(nu, w):
            xs = x - (t - n_i) * y
            c = _coupling(lam, xs)
            if c == 0.0:
                continue
            coll = first_born_collision(profile, lambda ys: f_candidate(n_i, xs, ys), y,
                                        directions, rotate=not on_nodes)
            rhs += w_i * c * c * coll
    return lhs - rhs


# --------------------------------------------------------------------------
# von Neumann partial sums

def vn_partial_sums(state: DampedEvolutionState, b_matrix: np.ndarray, times, m_max: int = 2,
                    rtol: float = 1e-10, atol: float = 1e-12):
    """Tr(rho_m(t) Op(b)) for m = 0..m_max from the order hierarchy.

    Returns an array (len(times), m_max + 1) of the individual orders; the
    partial sum is the row-wise cumulative sum.
    """
    lattice = state.lattice
    n = lattice.size
    l0 = state.free_exponent()
    gen = (2.0 * np.pi / state.h) * state.potential * lattice.cell
    rho0 = state.rho

    def l1(m):
        return -1j * (gen @ m - m @ gen)

    def rhs(_, z):
        blocks = z.view(complex).reshape(m_max + 1, n, n)
        out = np.empty_like(blocks)
        out[0] = l0 * blocks[0]
        for m in range(1, m_max + 1):
            out[m] = l0 * blocks[m] + l1(blocks[m - 1])
        return out.reshape(-1).view(float)

    z0 = np.zeros((m_max + 1, n, n), complex)
    z0[0] = rho0
    times = np.asarray(times, float)
    sol = solve_ivp(rhs, (state.time, float(times[-1])), z0.reshape(-1).view(float), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise AccuracyError(f"hierarchy integration failed: {sol.message}", module="duhamel")
    out = np.empty((times.size, m_max + 1))
    cell2 = lattice.cell**2
    for i in range(times.size):
        blocks = np.ascontiguousarray(sol.y[:, i]).view(complex).reshape(m_max + 1, n, n)
        for m in range(m_max + 1):
            out[i, m] = float(np.real(np.sum(blocks[m] * b_matrix.T))) * cell2
    return out
