"""Phase-space symbols a(x, y), the coupling cutoff lambda(x) and the damping
profile Gamma(y).

Symbols are finite signed sums of isotropic Gaussians

    amp * exp(-pi |x - x0|^2 / sx^2) * exp(-pi |y - y0|^2 / sy^2),

which keeps every x-Fourier transform and free-transport pairing in closed
form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyMeasureError


def _pts(v, d, name):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (d,):
        raise DomainError(f"{name}: expected trailing dimension {d}, got {v.shape}", "boltzmann")
    return v


@dataclass(frozen=True, eq=False)
class SchwartzSymbol:
    dim: int
    amps: np.ndarray
    x0: np.ndarray
    sx: np.ndarray
    y0: np.ndarray
    sy: np.ndarray

    def __post_init__(self):
        d = self.dim
        amps = np.atleast_1d(np.asarray(self.amps, float))
        m = amps.size
        x0 = np.asarray(self.x0, float).reshape(m, d)
        y0 = np.asarray(self.y0, float).reshape(m, d)
        sx = np.broadcast_to(np.asarray(self.sx, float), (m,)).copy()
        sy = np.broadcast_to(np.asarray(self.sy, float), (m,)).copy()
        if np.any(sx <= 0) or np.any(sy <= 0):
            raise DomainError("Gaussian widths must be positive", "boltzmann")
        for name, val in (("amps", amps), ("x0", x0), ("sx", sx), ("y0", y0), ("sy", sy)):
            object.__setattr__(self, name, val)

    # construction ---------------------------------------------------------

    @classmethod
    def gaussian(cls, dim, amp=1.0, x0=None, sx=1.0, y0=None, sy=1.0):
        x0 = np.zeros(dim) if x0 is None else x0
        y0 = np.zeros(dim) if y0 is None else y0
        return cls(dim, [amp], [x0], [sx], [y0], [sy])

    @classmethod
    def zero(cls, dim):
        return cls(dim, np.zeros(0), np.zeros((0, dim)), np.zeros(0), np.zeros((0, dim)), np.zeros(0))

    def __add__(self, other):
        if other.dim != self.dim:
            raise DomainError("dimension mismatch", "boltzmann")
        cat = np.concatenate
        return SchwartzSymbol(self.dim, cat([self.amps, other.amps]), cat([self.x0, other.x0]),
                              cat([self.sx, other.sx]), cat([self.y0, other.y0]), cat([self.sy, other.sy]))

    def scaled(self, c):
        return SchwartzSymbol(self.dim, c * self.amps, self.x0, self.sx, self.y0, self.sy)

    @property
    def n_components(self):
        return self.amps.size

    # evaluation -----------------------------------------------------------

    def _y_factor(self, y):
        y = _pts(y, self.dim, "y")
        dy = y[..., None, :] - self.y0
        return np.exp(-np.pi * np.sum(dy**2, axis=-1) / self.sy**2)

    def __call__(self, x, y):
        x = _pts(x, self.dim, "x")
        dx = x[..., None, :] - self.x0
        gx = np.exp(-np.pi * np.sum(dx**2, axis=-1) / self.sx**2)
        return np.sum(self.amps * gx * self._y_factor(y), axis=-1)

    def fourier_x(self, xi, y):
        """a~(xi, y) = int a(x, y) e(-x.xi) dx."""
        xi = _pts(xi, self.dim, "xi")
        xq = xi[..., None, :]
        gauss = self.sx**self.dim * np.exp(-np.pi * self.sx**2 * np.sum(xq**2, axis=-1))
        phase = np.exp(-2j * np.pi * np.sum(self.x0 * xq, axis=-1))
        return np.sum(self.amps * gauss * phase * self._y_factor(y), axis=-1)

    def x_marginal(self, y):
        """int a(x, y) dx."""
        return np.sum(self.amps * self.sx**self.dim * self._y_factor(y), axis=-1)

    def transverse_marginal(self, x1, y):
        """int a(x, y) dx_2 ... dx_d, as a function of the first coordinate."""
        x1 = np.asarray(x1, float)[..., None]
        g1 = np.exp(-np.pi * (x1 - self.x0[:, 0]) ** 2 / self.sx**2)
        return np.sum(self.amps * self.sx ** (self.dim - 1) * g1 * self._y_factor(y), axis=-1)

    def component_masses(self):
        """int of each unsigned component."""
        return np.abs(self.amps) * (self.sx * self.sy) ** self.dim

    def integral(self) -> float:
        return float(np.sum(self.amps * (self.sx * self.sy) ** self.dim))

    # sampling -------------------------------------------------------------

    def sample(self, n, rng):
        """Draw ``n`` phase-space points with signed weights.

        Components are chosen with probability proportional to their unsigned
        mass; each draw carries sign(amp) * sum(masses) / n, so the weighted
        empirical measure is unbiased for a.
        """
        masses = self.component_masses()
        total = float(np.sum(masses))
        if n < 1 or total == 0.0:
            raise EmptyMeasureError("symbol has zero mass", "boltzmann")
        comp = rng.choice(masses.size, size=n, p=masses / total)
        sd_x = self.sx[comp, None] / np.sqrt(2.0 * np.pi)
        sd_y = self.sy[comp, None] / np.sqrt(2.0 * np.pi)
        x = self.x0[comp] + sd_x * rng.standard_normal((n, self.dim))
        y = self.y0[comp] + sd_y * rng.standard_normal((n, self.dim))
        w = np.sign(self.amps[comp]) * total / n
        return x, y, w

    # closed-form pairings ---------------------------------------------------

    def pair_free(self, other: "SchwartzSymbol", t: float) -> float:
        """int a(x - t y, y) b(x, y) dx dy with a = self, b = other."""
        d = self.dim
        sa2 = self.sx[:, None] ** 2
        sb2 = other.sx[None, :] ** 2
        s2 = sa2 + sb2
        ta = self.sy[:, None] ** 2
        tb = other.sy[None, :] ** 2
        delta = other.x0[None, :, :] - self.x0[:, None, :]
        ya = self.y0[:, None, :]
        yb = other.y0[None, :, :]
        q = 1.0 / ta + 1.0 / tb + t * t / s2
        m = ya / ta[..., None] + yb / tb[..., None] + t * delta / s2[..., None]
        c = (np.sum(ya**2, -1) / ta + np.sum(yb**2, -1) / tb + np.sum(delta**2, -1) / s2)
        val = (sa2 * sb2 / s2) ** (d / 2) * q ** (-d / 2) * np.exp(-np.pi * (c - np.sum(m**2, -1) / q))
        return float(np.sum(self.amps[:, None] * other.amps[None, :] * val))

    def pair_marginals(self, other: "SchwartzSymbol") -> float:
        """int a_bar(y) b_bar(y) dy for the x-marginals a_bar, b_bar."""
        d = self.dim
        s2 = self.sy[:, None] ** 2 + other.sy[None, :] ** 2
        gap = np.sum((self.y0[:, None, :] - other.y0[None, :, :]) ** 2, axis=-1)
        mass = (self.amps * self.sx**d)[:, None] * (other.amps * other.sx**d)[None, :]
        val = (self.sy[:, None] ** 2 * other.sy[None, :] ** 2 / s2) ** (d / 2) * np.exp(-np.pi * gap / s2)
        return float(np.sum(mass * val))


@dataclass(frozen=True)
class CutoffProfile:
    """Coupling profile lambda(x).

    ``kind`` is "bump" (lam_max * exp(1 - 1/(1 - |x - c|^2 / R^2)) inside
    the ball of radius R), "constant" or "zero".
    """

    kind: str = "bump"
    lam_max: float = 0.0
    radius: float = 1.0
    center: tuple = ()

    def __post_init__(self):
        if self.kind not in ("bump", "constant", "zero"):
            raise DomainError(f"unknown cutoff kind {self.kind!r}", "boltzmann")
        if self.lam_max < 0 or self.radius <= 0:
            raise DomainError("need lam_max >= 0 and radius > 0", "boltzmann")

    @classmethod
    def constant(cls, lam):
        return cls("constant", float(lam))

    @classmethod
    def zero(cls):
        return cls("zero", 0.0)

    @classmethod
    def bump(cls, lam_max, radius, center=()):
        return cls("bump", float(lam_max), float(radius), tuple(float(c) for c in center))

    @property
    def support_radius(self) -> float:
        return np.inf if self.kind == "constant" else (self.radius if self.kind == "bump" else 0.0)

    @property
    def is_homogeneous(self) -> bool:
        return self.kind in ("constant", "zero")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        if self.kind == "zero" or self.lam_max == 0.0:
            return np.zeros(shape)
        if self.kind == "constant":
            return np.full(shape, self.lam_max)
        c = np.asarray(self.center, float) if self.center else np.zeros(x.shape[-1])
        s = np.sum((x - c) ** 2, axis=-1) / self.radius**2
        inside = s < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            val = np.exp(1.0 - 1.0 / np.where(inside, 1.0 - s, 1.0))
        return np.where(inside, self.lam_max * val, 0.0)


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class DampingProfile:
    """Gamma(y) = 1 on |y| <= inner_radius, 0 on |y| >= 1, smooth between."""

    inner_radius: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.inner_radius < 1.0:
            raise DomainError("inner_radius must lie in (0, 1)", "vonneumann")

    def radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        return smooth_step((1.0 - rho) / (1.0 - self.inner_radius))

    def __call__(self, y):
        return self.radial(np.linalg.norm(np.asarray(y, dtype=float), axis=-1))
