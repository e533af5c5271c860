"""Linear Boltzmann collision kernels built from on-shell T-matrices.

The energy-shell delta is resolved with dy' = rho^{d-1} d rho dw' and
delta(rho^2 - k^2) = delta(rho - k) / (2k), so

    Sigma(y, y') dy' = 8 pi^2 |T(k w', k w)|^2 (k^{d-2} / 2) dw'.

``sigma[i, j]`` is the density for the jump w_i -> w_j with respect to the
direction measure, so ``total_rate[i] = sum_j w_j sigma[i, j]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConsistencyError, DomainError, KernelError, NoScatteringError
from .potential import PotentialProfile
from .quadrature import SphereQuadrature, sphere_quadrature
from .tmatrix import LSGrid, OnShellTMatrix, first_born_matrix, solve_lippmann_schwinger


def shell_factor(d: int, speed: float) -> float:
    """k^{d-2}/2 from resolving delta(|y|^2 - |y'|^2) on the sphere of radius k."""
    return 0.5 * speed ** (d - 2)


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    speed: float
    coupling: float
    quadrature: SphereQuadrature
    sigma: np.ndarray
    total_rate: np.ndarray
    cdf: np.ndarray

    @classmethod
    def from_sigma(cls, speed, coupling, quad, sigma):
        sigma = np.asarray(sigma, float)
        if sigma.shape != (quad.size, quad.size) or not np.all(np.isfinite(sigma)):
            raise ConsistencyError("sigma must be a finite node-pair matrix", "kernel")
        scale = max(float(np.max(np.abs(sigma))), 1e-300)
        if np.min(sigma) < -1e-12 * scale:
            raise ConsistencyError("negative collision density", "kernel")
        sigma = np.maximum(sigma, 0.0)
        flux = sigma * quad.weights[None, :]
        rate = flux.sum(axis=1)
        cdf = np.cumsum(flux, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cdf = np.where(rate[:, None] > 0, cdf / rate[:, None], 0.0)
        cdf[:, -1] = np.where(rate > 0, 1.0, 0.0)
        return cls(float(speed), float(coupling), quad, sigma, rate, cdf)

    @property
    def size(self) -> int:
        return self.quadrature.size


def build_kernel(t: OnShellTMatrix) -> CollisionKernel:
    """Shell-resolved collision density from an on-shell T-matrix."""
    sigma = 8.0 * np.pi**2 * shell_factor(t.dim, t.speed) * np.abs(t.values.T) ** 2
    return CollisionKernel.from_sigma(t.speed, t.coupling, t.quadrature, sigma)


def first_born_kernel(profile: PotentialProfile, mu: float, speed: float,
                      quad: SphereQuadrature) -> CollisionKernel:
    sigma = 8.0 * np.pi**2 * shell_factor(profile.dim, speed) * first_born_matrix(profile, mu, speed, quad) ** 2
    return CollisionKernel.from_sigma(speed, mu, quad, sigma)


def isotropic_kernel(quad: SphereQuadrature, speed: float, rate: float) -> CollisionKernel:
    """sigma constant, chosen so every node has total rate ``rate``."""
    sigma = np.full((quad.size, quad.size), rate / np.sum(quad.weights))
    return CollisionKernel.from_sigma(speed, np.nan, quad, sigma)


def sample_outgoing(kernel: CollisionKernel, incoming, rng):
    """Draw outgoing node indices for each incoming node index.

    ``incoming`` may hold node indices (int array) or unit vectors, which
    are snapped to the nearest node. Returns (indices, unit vectors).
    """
    incoming = np.asarray(incoming)
    if incoming.dtype.kind == "f":
        idx = kernel.quadrature.nearest(incoming.reshape(-1, kernel.quadrature.dim))
    else:
        idx = np.atleast_1d(incoming).astype(int)
    if np.any(kernel.total_rate[idx] <= 0.0):
        raise NoScatteringError("zero total rate at an incoming direction", "kernel")
    u = rng.random(idx.size)
    out = _inverse_cdf(kernel.cdf[idx], u)
    return out, kernel.quadrature.nodes[out]


def _inverse_cdf(cdf_rows, u):
    out = np.sum(cdf_rows < u[:, None], axis=1)
    return np.minimum(out, cdf_rows.shape[1] - 1)


def mean_free_path(kernel: CollisionKernel) -> float:
    """k / max total rate; ``inf`` for a kernel that never scatters."""
    top = float(np.max(kernel.total_rate)) if kernel.total_rate.size else 0.0
    return np.inf if top <= 0.0 else kernel.speed / top


def apply_collision(kernel: CollisionKernel, f) -> np.ndarray:
    """C[f](w) = sum_w' q(w') [sigma(w' -> w) f(w') - sigma(w -> w') f(w)]."""
    f = np.asarray(f)
    gain = (kernel.sigma.T * kernel.quadrature.weights[None, :]) @ f
    return gain - kernel.total_rate * f


def collision_matrix(kernel_sigma, weights) -> np.ndarray:
    """M with (M f)(w) = C[f](w) for a density matrix sigma[w_in, w_out]."""
    rate = kernel_sigma @ weights
    return kernel_sigma.T * weights[None, :] - np.diag(rate)


# --------------------------------------------------------------------------
# coupling-indexed tables

@dataclass(frozen=True, eq=False)
class KernelTable:
    """sigma at coupling lambda on a grid of lambda values.

    Interpolation is monotone cubic (PCHIP) in lambda applied to
    sigma / lambda^2, whose lambda -> 0 limit is the first-Born density;
    multiplying back by lambda^2 keeps small couplings accurate.
    """

    speed: float
    quadrature: SphereQuadrature
    lam_grid: np.ndarray
    scaled: np.ndarray  # (n_lam, n, n)

    def __post_init__(self):
        lam = np.asarray(self.lam_grid, float)
        if lam.ndim != 1 or lam[0] != 0.0 or np.any(np.diff(lam) <= 0):
            raise DomainError("lambda grid must start at 0 and increase", "kernel")
        if not np.all(np.isfinite(self.scaled)):
            raise KernelError("nonfinite kernel table", "kernel")
        if lam.size >= 2:
            interp = PchipInterpolator(lam, self.scaled, axis=0)
            object.__setattr__(self, "_coef", interp.c)
        # PCHIP stays within the endpoint values on each interval, so
        # lam_{j+1}^2 max(s_j, s_{j+1}) bounds sigma on [lam_j, lam_{j+1}].
        if lam.size >= 2:
            pair_max = np.maximum(self.scaled[:-1], self.scaled[1:])
            bounds = np.stack([lam[j + 1] ** 2 * pair_max[j] @ self.quadrature.weights
                               for j in range(lam.size - 1)])
        else:
            bounds = (self.scaled[0] @ self.quadrature.weights)[None, :]
        object.__setattr__(self, "_interval_bound", np.max(bounds, axis=1))

    @property
    def lam_max(self) -> float:
        return float(self.lam_grid[-1])

    def _check(self, lam):
        lam = np.asarray(lam, float)
        if np.any(lam < 0) or np.any(lam > self.lam_max * (1 + 1e-12)):
            raise DomainError(f"coupling outside table range [0, {self.lam_max}]", "kernel")
        return np.clip(lam, 0.0, self.lam_max)

    def _scaled_rows(self, lam, nodes):
        lam = self._check(lam)
        if self.lam_grid.size == 1:
            return self.scaled[0][nodes]
        j = np.clip(np.searchsorted(self.lam_grid, lam, side="right") - 1, 0, self.lam_grid.size - 2)
        s = (lam - self.lam_grid[j])[:, None]
        c = self._coef
        return ((c[0, j, nodes] * s + c[1, j, nodes]) * s + c[2, j, nodes]) * s + c[3, j, nodes]

    def rows(self, lam, nodes) -> np.ndarray:
        """sigma_lambda(w_node -> .) for arrays of couplings and node indices."""
        lam = np.atleast_1d(np.asarray(lam, float))
        nodes = np.atleast_1d(np.asarray(nodes, int))
        return np.maximum(self._scaled_rows(lam, nodes), 0.0) * (lam**2)[:, None]

    def total_rate(self, lam, nodes) -> np.ndarray:
        return self.rows(lam, nodes) @ self.quadrature.weights

    def sigma_at(self, lam: float) -> np.ndarray:
        n = self.quadrature.size
        return self.rows(np.full(n, lam), np.arange(n))

    def kernel_at(self, lam: float) -> CollisionKernel:
        return CollisionKernel.from_sigma(self.speed, lam, self.quadrature, self.sigma_at(lam))

    def majorant(self, lam_max: float | None = None) -> float:
        """Upper bound on the total rate for every node and lambda <= lam_max."""
        lam_max = self.lam_max if lam_max is None else min(lam_max, self.lam_max)
        if self.lam_grid.size == 1:
            value = lam_max**2 * float(self._interval_bound[0])
        else:
            last = int(np.searchsorted(self.lam_grid, lam_max, side="left"))
            value = float(np.max(self._interval_bound[:max(last, 1)]))
        if not np.isfinite(value):
            raise KernelError("nonfinite majorant rate", "kernel")
        return value


def first_born_table(profile: PotentialProfile, speed: float, quad: SphereQuadrature,
                     lam_max: float) -> KernelTable:
    """Table whose sigma / lambda^2 is the first-Born density at all couplings."""
    unit = first_born_kernel(profile, 1.0, speed, quad).sigma
    return KernelTable(float(speed), quad, np.array([0.0, float(lam_max)]), np.stack([unit, unit]))


def build_kernel_table(profile: PotentialProfile, speed: float, lam_max: float, n_lam: int = 33,
                       grid: LSGrid | None = None) -> KernelTable:
    """Full-T kernels from Lippmann-Schwinger solves on an equispaced
    lambda grid over [0, lam_max]."""
    grid = grid or LSGrid()
    quad = sphere_quadrature(profile.dim, grid.n_polar, grid.n_azimuth)
    lam = np.linspace(0.0, lam_max, n_lam)
    layers = [first_born_kernel(profile, 1.0, speed, quad).sigma]
    for value in lam[1:]:
        k = build_kernel(solve_lippmann_schwinger(profile, value, speed, grid))
        layers.append(k.sigma / value**2)
    return KernelTable(float(speed), quad, lam, np.stack(layers))


@dataclass(frozen=True, eq=False)
class KernelBank:
    """One KernelTable per populated speed shell."""

    tables: tuple

    def __post_init__(self):
        tables = tuple(sorted(self.tables, key=lambda tb: tb.speed))
        if not tables:
            raise KernelError("empty kernel bank", "kernel")
        object.__setattr__(self, "tables", tables)

    @property
    def speeds(self) -> np.ndarray:
        return np.array([tb.speed for tb in self.tables])

    def bucket(self, speed) -> np.ndarray:
        """Index of the nearest tabulated speed."""
        return np.argmin(np.abs(np.asarray(speed, float)[..., None] - self.speeds), axis=-1)


# --------------------------------------------------------------------------
# text format

def kernel_text(kernel: CollisionKernel) -> str:
    q = kernel.quadrature
    lines = ["# collision-kernel v1", f"dim {q.dim}", f"speed {kernel.speed!r}",
             f"coupling {kernel.coupling!r}", f"n_polar {q.n_polar}", f"n_azimuth {q.n_azimuth}"]
    for node, w, r in zip(q.nodes, q.weights, kernel.total_rate):
        lines.append("node " + " ".join(repr(float(v)) for v in node) + f" {float(w)!r} {float(r)!r}")
    for row in kernel.sigma:
        lines.append("row " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_kernel(kernel: CollisionKernel, path) -> None:
    with open(path, "w") as fh:
        fh.write(kernel_text(kernel))


def read_kernel(path) -> CollisionKernel:
    header, rows = {}, []
    with open(path) as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            key, _, rest = line.strip().partition(" ")
            if key == "row":
                rows.append([float(v) for v in rest.split()])
            elif key != "node":
                header[key] = rest
    quad = sphere_quadrature(int(header["dim"]), int(header["n_polar"]), int(header["n_azimuth"]))
    return CollisionKernel.from_sigma(float(header["speed"]), float(header["coupling"]), quad, np.array(rows))
