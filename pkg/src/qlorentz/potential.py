"""Single-site potential profiles and their Fourier transforms.

Fourier convention (used by every module): e(x) = exp(2 pi i x) and
W_hat(y) = int W(x) e(-x.y) dx. Under it the unit Gaussian exp(-pi |x|^2)
is its own transform.

All built-in profiles are radial, real and even, so W_hat is real and even.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import j0, jv

from .errors import DomainError, ResolutionError
from .quadrature import gauss_legendre_panels, sphere_volume

FAMILIES = ("gaussian", "bump", "custom-tabulated")

_TABLE_POINTS = 6001
_HANKEL_NODES = 96


def hankel_radial(radial_fn, support: float, q, d: int, n_panels: int = 16) -> np.ndarray:
    """d-dimensional Fourier transform of a radial function supported in
    [0, support], evaluated at radii ``q`` (composite Gauss-Legendre in rho)."""
    q = np.asarray(q, dtype=float)
    rho, w = gauss_legendre_panels(np.linspace(0.0, support, n_panels + 1), _HANKEL_NODES // 4 + 8)
    vals = radial_fn(rho) * w
    out = np.empty(q.shape)
    qf = q.ravel()
    res = np.empty(qf.shape)
    for start in range(0, qf.size, 512):
        qq = qf[start:start + 512, None]
        arg = 2.0 * np.pi * qq * rho[None, :]
        if d == 1:
            kern = 2.0 * np.cos(arg)
        elif d == 2:
            kern = 2.0 * np.pi * rho[None, :] * j0(arg)
        elif d == 3:
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = np.where(qq > 0, 2.0 * rho[None, :] * np.sin(arg) / np.where(qq > 0, qq, 1.0),
                                4.0 * np.pi * rho[None, :] ** 2)
        else:
            nu = d / 2.0 - 1.0
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = np.where(
                    qq > 0,
                    2.0 * np.pi * np.where(qq > 0, qq, 1.0) ** (-nu) * jv(nu, arg) * rho[None, :] ** (nu + 1),
                    sphere_volume(d) * rho[None, :] ** (d - 1),
                )
        res[start:start + 512] = kern @ vals
    out[...] = res.reshape(q.shape)
    return out


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    """Radial single-site potential.

    ``params`` is (width, amplitude) for the built-in families; the bump
    family takes an optional third entry, the window exponent p in
    W = A (1 - |x|^2 / w^2)^p on |x| < w.
    """

    family: str
    params: tuple
    dim: int = 3
    table: tuple | None = None
    _w_spline: object = field(default=None, repr=False)
    _hat_spline: object = field(default=None, repr=False)
    _q_max: float = field(default=np.inf, repr=False)
    _q_tail: float = field(default=np.inf, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown potential family {self.family!r}", "potential")
        if self.dim < 1:
            raise DomainError("dimension must be >= 1", "potential")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.family == "custom-tabulated":
            if self.table is None:
                raise DomainError("custom-tabulated profile needs a (radii, values) table", "potential")
            self._build_custom()
        else:
            if len(self.params) < 2 or self.params[0] <= 0:
                raise DomainError("params must be (width > 0, amplitude[, exponent])", "potential")
            if self.family == "bump":
                self._build_table(lambda r: self.w_radial(r), self.width)

    # construction helpers -------------------------------------------------

    @classmethod
    def gaussian(cls, width=1.0, amplitude=1.0, dim=3):
        return cls("gaussian", (width, amplitude), dim)

    @classmethod
    def bump(cls, width=1.0, amplitude=1.0, exponent=6, dim=3):
        return cls("bump", (width, amplitude, exponent), dim)

    @classmethod
    def tabulated(cls, radii, values, dim=3):
        radii = np.asarray(radii, dtype=float)
        values = np.asarray(values, dtype=float)
        return cls("custom-tabulated", (radii[-1], 1.0), dim, table=(tuple(radii), tuple(values)))

    @property
    def width(self) -> float:
        return self.params[0]

    @property
    def amplitude(self) -> float:
        return self.params[1]

    @property
    def exponent(self) -> float:
        return self.params[2] if len(self.params) > 2 else 6.0

    @property
    def momentum_scale(self) -> float:
        """Radius beyond which |W_hat| stays below 1e-8 of its peak
        (about 1e-16 for the Gaussian)."""
        if self.family == "gaussian":
            return 3.5 / self.width
        return self._q_tail

    def _build_table(self, radial_fn, support):
        q_max = 60.0 / support
        q = np.linspace(0.0, q_max, _TABLE_POINTS)
        vals = hankel_radial(radial_fn, support, q, self.dim)
        object.__setattr__(self, "_hat_spline", CubicSpline(q, vals))
        object.__setattr__(self, "_q_max", q_max)
        big = np.nonzero(np.abs(vals) > 1e-8 * np.max(np.abs(vals)))[0]
        object.__setattr__(self, "_q_tail", float(q[min(big[-1] + 1, q.size - 1)]))
        return q, vals

    def _build_custom(self):
        radii = np.asarray(self.table[0], dtype=float)
        values = np.asarray(self.table[1], dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape or radii.size < 16:
            raise ResolutionError("tabulated profile needs >= 16 matching radial samples", "potential")
        if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
            raise DomainError("table radii must start at 0 and increase", "potential")
        spline = CubicSpline(radii, values, bc_type=((1, 0.0), "not-a-knot"))
        object.__setattr__(self, "_w_spline", spline)
        support = radii[-1]
        q, vals = self._build_table(self.w_radial, support)
        # Under-resolved tables change when decimated.
        coarse = CubicSpline(radii[::2], values[::2], bc_type=((1, 0.0), "not-a-knot"))
        probe = np.linspace(0.0, 4.0 / support, 9)
        fine_vals = hankel_radial(self.w_radial, support, probe, self.dim)
        coarse_vals = hankel_radial(lambda r: np.where(r <= radii[-1], coarse(r), 0.0), support, probe, self.dim)
        scale = np.max(np.abs(fine_vals))
        if scale == 0 or np.max(np.abs(fine_vals - coarse_vals)) > 1e-3 * scale:
            raise ResolutionError("tabulated profile too coarse for a stable Fourier transform", "potential")

    # evaluation -----------------------------------------------------------

    def w_radial(self, rho):
        rho = np.abs(np.asarray(rho, dtype=float))
        if self.family == "gaussian":
            return self.amplitude * np.exp(-np.pi * (rho / self.width) ** 2)
        if self.family == "bump":
            s = np.clip(1.0 - (rho / self.width) ** 2, 0.0, None)
            return self.amplitude * s**self.exponent
        inside = rho <= self.table[0][-1]
        return np.where(inside, self._w_spline(np.where(inside, rho, 0.0)), 0.0)

    def w_hat_radial(self, q):
        q = np.abs(np.asarray(q, dtype=float))
        if self.family == "gaussian":
            return self.amplitude * self.width**self.dim * np.exp(-np.pi * (self.width * q) ** 2)
        inside = q <= self._q_max
        return np.where(inside, self._hat_spline(np.where(inside, q, 0.0)), 0.0)

    def w_hat_sq(self, q2):
        """W_hat as a function of |y|^2 (avoids a sqrt in hot loops)."""
        if self.family == "gaussian":
            return self.amplitude * self.width**self.dim * np.exp(-np.pi * self.width**2 * q2)
        return self.w_hat_radial(np.sqrt(np.maximum(q2, 0.0)))

    def integral(self) -> float:
        return float(self.w_hat_radial(0.0))


def _as_points(v, d):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (d,):
        raise DomainError(f"expected trailing dimension {d}, got shape {v.shape}", "potential")
    if not np.all(np.isfinite(v)):
        raise DomainError("non-finite input", "potential")
    return v


def eval_w(profile: PotentialProfile, x):
    """W(x) for a point or an array of points with trailing dimension d."""
    x = _as_points(x, profile.dim)
    out = profile.w_radial(np.linalg.norm(x, axis=-1))
    return out[()] if out.ndim == 0 else out


def eval_w_hat(profile: PotentialProfile, y):
    """W_hat(y) under the e(x) = exp(2 pi i x) convention (real for radial W)."""
    y = _as_points(y, profile.dim)
    out = profile.w_hat_radial(np.linalg.norm(y, axis=-1))
    return out[()] if out.ndim == 0 else out
