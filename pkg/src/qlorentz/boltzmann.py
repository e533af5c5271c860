"""Linear Boltzmann equation with position-dependent coupling lambda(x).

Two solvers:

* ``evolve_mc``: weighted particles, free flight between collisions, events
  generated by null-collision thinning against a global majorant rate.
  Directions after a collision live on the kernel's direction nodes and the
  speed |y| is carried over unchanged.
* ``evolve_deterministic``: a phase-space grid (spatially homogeneous, or a
  periodic slab in x_1) evolved by Strang splitting of exact transport and
  the exact exponential of the per-cell collision matrix.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh, expm

from .errors import DomainError, EmptyMeasureError, KernelError, StepSizeError
from .kernel import KernelBank, KernelTable, collision_matrix
from .quadrature import SphereQuadrature, gauss_legendre_panels
from .rng import stream
from .symbols import CutoffProfile, SchwartzSymbol

BLOCK_SIZE = 8192


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted particles. ``node`` is the direction-node index after the
    first collision and -1 while the direction is still the initial one."""

    x: np.ndarray
    y: np.ndarray
    weight: np.ndarray
    node: np.ndarray
    time: float = 0.0
    seed: int = 0
    generation: int = 0

    @property
    def size(self) -> int:
        return self.weight.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def total_weight(self) -> float:
        return math.fsum(self.weight)

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.y, axis=1)


def init_ensemble(a: SchwartzSymbol, n: int, seed: int, signed: bool = False) -> ParticleEnsemble:
    """Sample ``n`` particles from |a| with weights sign(a) ||a||_1 / n."""
    if np.any(a.amps < 0) and not signed:
        raise DomainError("signed initial data needs signed=True", "boltzmann")
    x, y, w = a.sample(n, stream(seed, "boltzmann", 0))
    return ParticleEnsemble(x, y, w, np.full(n, -1), 0.0, int(seed), 0)


def init_shell_ensemble(quad: SphereQuadrature, density, speed: float, n: int, seed: int,
                        dim_x: int | None = None) -> ParticleEnsemble:
    """Particles on the shell |y| = speed at x = 0, directions drawn on the
    nodes with probability proportional to weight * density."""
    density = np.asarray(density, float)
    mass_per_node = quad.weights * density
    total = float(np.sum(mass_per_node))
    if total <= 0 or np.any(density < 0):
        raise EmptyMeasureError("shell density must be nonnegative with positive mass", "boltzmann")
    rng = stream(seed, "boltzmann", 0)
    node = rng.choice(quad.size, size=n, p=mass_per_node / total)
    d = quad.dim if dim_x is None else dim_x
    return ParticleEnsemble(np.zeros((n, d)), speed * quad.nodes[node], np.full(n, total / n),
                            node, 0.0, int(seed), 0)


def _as_bank(kernels) -> KernelBank:
    if isinstance(kernels, KernelBank):
        return kernels
    if isinstance(kernels, KernelTable):
        return KernelBank((kernels,))
    return KernelBank(tuple(kernels))


def _evolve_block(x, y, node, t0, t_final, bank, lam, majorants, rng):
    n = y.shape[0]
    speed = np.linalg.norm(y, axis=1)
    bucket = bank.bucket(speed)
    rate_max = majorants[bucket]
    t = np.full(n, t0)
    active = rate_max > 0
    x[~active] += y[~active] * (t_final - t0)
    n_events = 0
    while np.any(active):
        idx = np.nonzero(active)[0]
        tau = rng.exponential(1.0, idx.size) / rate_max[idx]
        t_new = t[idx] + tau
        done = t_new >= t_final
        fin = idx[done]
        x[fin] += y[fin] * (t_final - t[fin])[:, None]
        active[fin] = False
        ev = idx[~done]
        if ev.size == 0:
            break
        x[ev] += y[ev] * tau[~done][:, None]
        t[ev] = t_new[~done]
        lam_x = lam(x[ev])
        u_acc = rng.random(ev.size)
        u_dir = rng.random(ev.size)
        for b, table in enumerate(bank.tables):
            sel = np.nonzero(bucket[ev] == b)[0]
            if sel.size == 0:
                continue
            p = ev[sel]
            quad = table.quadrature
            cur = node[p]
            cont = cur < 0
            if np.any(cont):
                cur = cur.copy()
                cur[cont] = quad.nearest(y[p[cont]] / speed[p[cont], None])
            flux = table.rows(lam_x[sel], cur) * quad.weights[None, :]
            rate = flux.sum(axis=1)
            if np.any(rate > rate_max[p] * (1 + 1e-9)):
                raise KernelError("collision rate exceeds the majorant", "boltzmann")
            acc = u_acc[sel] * rate_max[p] < rate
            if not np.any(acc):
                continue
            cdf = np.cumsum(flux[acc], axis=1)
            target = u_dir[sel][acc] * rate[acc]
            new = np.minimum(np.sum(cdf < target[:, None], axis=1), quad.size - 1)
            q = p[acc]
            node[q] = new
            y[q] = speed[q, None] * quad.nodes[new]
            n_events += int(acc.sum())
    return n_events


def evolve_mc(ens: ParticleEnsemble, kernels, lam: CutoffProfile, t_final: float,
              threads: int = 1, block_size: int = BLOCK_SIZE) -> ParticleEnsemble:
    """Null-collision Monte Carlo from ``ens.time`` to ``t_final``.

    ``kernels`` is a KernelTable, a KernelBank or a sequence of tables (one
    per speed shell; particles use the nearest tabulated speed). Random
    numbers come from one counter-based stream per particle block, keyed by
    (seed, generation, block), so the result does not depend on ``threads``.
    """
    if t_final < ens.time:
        raise DomainError("t_final precedes the ensemble time", "boltzmann")
    x = ens.x.copy()
    y = ens.y.copy()
    node = ens.node.copy()
    if lam.kind == "zero" or lam.lam_max == 0.0 or kernels is None:
        x += y * (t_final - ens.time)
        return replace(ens, x=x, y=y, node=node, time=float(t_final), generation=ens.generation + 1)
    bank = _as_bank(kernels)
    for table in bank.tables:
        if lam.lam_max > table.lam_max * (1 + 1e-12):
            raise DomainError("kernel table does not cover the coupling range", "boltzmann")
    majorants = np.array([tb.majorant(lam.lam_max) for tb in bank.tables])
    if not np.all(np.isfinite(majorants)):
        raise KernelError("nonfinite majorant rate", "boltzmann")
    blocks = [slice(s, min(s + block_size, ens.size)) for s in range(0, ens.size, block_size)]

    def run(i):
        sl = blocks[i]
        rng = stream(ens.seed, "boltzmann", 1, ens.generation, i)
        xb, yb, nb = x[sl].copy(), y[sl].copy(), node[sl].copy()
        _evolve_block(xb, yb, nb, ens.time, t_final, bank, lam, majorants, rng)
        return xb, yb, nb

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(len(blocks))))
    else:
        results = [run(i) for i in range(len(blocks))]
    for sl, (xb, yb, nb) in zip(blocks, results):
        x[sl], y[sl], node[sl] = xb, yb, nb
    return replace(ens, x=x, y=y, node=node, time=float(t_final), generation=ens.generation + 1)


# --------------------------------------------------------------------------
# deterministic oracle

def speed_shells(d: int, k_max: float, n: int, panels: int = 4):
    """Radial nodes on [0, k_max] with weights for rho^{d-1} d rho."""
    rho, w = gauss_legendre_panels(np.linspace(0.0, k_max, panels + 1), n)
    return rho, w * rho ** (d - 1)


@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    """Density g(x_1, rho, w) on speed shells x direction nodes.

    ``values`` has shape (n_x, n_speeds, n_directions); n_x = 1 and
    ``x_nodes`` None for the spatially homogeneous case, where values are
    x-integrated densities. In the slab case the density is integrated over
    the transverse coordinates x_2..x_d and x_1 is periodic.
    """

    quadrature: SphereQuadrature
    speeds: np.ndarray
    speed_weights: np.ndarray
    values: np.ndarray
    x_nodes: np.ndarray | None = None
    period: float | None = None
    time: float = 0.0
    history: dict = field(default_factory=dict)

    @property
    def homogeneous(self) -> bool:
        return self.x_nodes is None

    @property
    def cell_width(self) -> float:
        return 1.0 if self.homogeneous else self.period / self.x_nodes.size

    @property
    def dim(self) -> int:
        return self.quadrature.dim

    def cell_weights(self) -> np.ndarray:
        """Quadrature weight of every value entry."""
        return (self.cell_width * self.speed_weights[None, :, None]
                * self.quadrature.weights[None, None, :]) * np.ones(self.values.shape)

    def mass(self) -> float:
        return float(np.sum(self.cell_weights() * self.values))

    def points(self):
        """Phase-space coordinates (x, y) of every entry, x transverse-zero."""
        d = self.dim
        y = self.speeds[:, None, None] * self.quadrature.nodes[None, :, :]
        nx = 1 if self.homogeneous else self.x_nodes.size
        x = np.zeros((nx, 1, 1, d))
        if not self.homogeneous:
            x[:, 0, 0, 0] = self.x_nodes
        y = np.broadcast_to(y[None], (nx,) + y.shape)
        return np.broadcast_to(x, y.shape), y

    @classmethod
    def shell(cls, quad, speed, density, x_nodes=None, period=None):
        """Single speed shell; ``density`` is (n_dir,) or (n_x, n_dir)."""
        density = np.asarray(density, float)
        if density.ndim == 1:
            density = density[None, :]
        return cls(quad, np.array([float(speed)]), np.array([1.0]), density[:, None, :].copy(),
                   None if x_nodes is None else np.asarray(x_nodes, float), period)

    @classmethod
    def from_symbol(cls, a: SchwartzSymbol, quad, speeds, speed_weights, x_nodes=None, period=None):
        grid = cls(quad, np.asarray(speeds, float), np.asarray(speed_weights, float),
                   np.zeros((1 if x_nodes is None else len(x_nodes), len(speeds), quad.size)),
                   None if x_nodes is None else np.asarray(x_nodes, float), period)
        x, y = grid.points()
        if grid.homogeneous:
            vals = a.x_marginal(y)
        else:
            vals = a.transverse_marginal(x[..., 0], y)
        return replace(grid, values=np.asarray(vals, float))


def _transport(grid: PhaseSpaceGrid, dt: float) -> np.ndarray:
    """Exact periodic shift g(x_1) -> g(x_1 - v_1 dt) via the discrete
    Fourier series (exact for band-limited periodic data)."""
    if grid.homogeneous or dt == 0.0:
        return grid.values
    n = grid.x_nodes.size
    kappa = np.fft.fftfreq(n, d=grid.cell_width)
    v1 = grid.speeds[:, None] * grid.quadrature.nodes[None, :, 0]
    phase = np.exp(-2j * np.pi * kappa[:, None, None] * v1[None] * dt)
    return np.fft.ifft(np.fft.fft(grid.values, axis=0) * phase, axis=0).real


class _CollisionPropagator:
    """exp(M dt) per (speed shell, coupling), cached."""

    def __init__(self, bank: KernelBank | None, grid: PhaseSpaceGrid):
        self.bank = bank
        self.grid = grid
        self.cache = {}
        if bank is not None:
            self.table_for_shell = [bank.tables[int(bank.bucket(s))] for s in grid.speeds]
            for s, tb in zip(grid.speeds, self.table_for_shell):
                if not math.isclose(s, tb.speed, rel_tol=1e-9):
                    raise DomainError(f"no kernel for speed shell {s}", "boltzmann")
                if tb.quadrature.size != grid.quadrature.size:
                    raise DomainError("kernel and grid direction nodes differ", "boltzmann")

    def matrix(self, shell: int, lam: float, dt: float) -> np.ndarray:
        key = (shell, float(lam), float(dt))
        if key not in self.cache:
            w = self.grid.quadrature.weights
            sigma = self.table_for_shell[shell].sigma_at(lam)
            m = collision_matrix(sigma, w)
            scale = max(float(np.max(np.abs(sigma))), 1e-300)
            if np.max(np.abs(sigma - sigma.T)) <= 1e-12 * scale:
                # W^{1/2} M W^{-1/2} is symmetric when sigma is.
                sq = np.sqrt(w)
                sym = sq[:, None] * m / sq[None, :]
                evals, vecs = eigh(0.5 * (sym + sym.T))
                prop = (vecs * np.exp(evals * dt)) @ vecs.T
                prop = prop / sq[:, None] * sq[None, :]
            else:
                prop = expm(m * dt)
            self.cache[key] = prop
        return self.cache[key]


def _cell_couplings(grid: PhaseSpaceGrid, lam: CutoffProfile) -> np.ndarray:
    if grid.homogeneous:
        if not lam.is_homogeneous:
            raise DomainError("homogeneous grid needs a constant coupling", "boltzmann")
        return np.array([lam.lam_max if lam.kind == "constant" else 0.0])
    x = np.zeros((grid.x_nodes.size, grid.dim))
    x[:, 0] = grid.x_nodes
    return lam(x)


def evolve_deterministic(grid: PhaseSpaceGrid, kernels, lam: CutoffProfile, t_final: float,
                         dt: float, record=None) -> PhaseSpaceGrid:
    """Strang splitting: half transport, full collision, half transport.

    ``record`` is an optional callable invoked as record(grid) after every
    step (used by conservation checks).
    """
    if dt <= 0:
        raise StepSizeError("dt must be positive", "boltzmann")
    if t_final < grid.time:
        raise DomainError("t_final precedes the grid time", "boltzmann")
    if not grid.homogeneous:
        vmax = float(np.max(grid.speeds))
        if dt * vmax > grid.cell_width * (1 + 1e-12):
            raise StepSizeError(f"CFL violated: dt * v_max = {dt * vmax:.3g} > dx = {grid.cell_width:.3g}",
                                "boltzmann")
    span = t_final - grid.time
    n_steps = int(math.ceil(span / dt - 1e-12)) if span > 0 else 0
    if n_steps == 0:
        return grid
    h = span / n_steps
    couplings = _cell_couplings(grid, lam)
    use_collisions = kernels is not None and np.any(couplings > 0)
    prop = _CollisionPropagator(_as_bank(kernels), grid) if use_collisions else None
    cur = grid
    for step in range(n_steps):
        vals = _transport(cur, 0.5 * h)
        if use_collisions:
            vals = vals.copy()
            for i, c in enumerate(couplings):
                if c <= 0:
                    continue
                for s in range(vals.shape[1]):
                    vals[i, s] = prop.matrix(s, c, h) @ vals[i, s]
        cur = replace(cur, values=vals)
        cur = replace(cur, values=_transport(cur, 0.5 * h), time=grid.time + (step + 1) * h)
        if record is not None:
            record(cur)
    return replace(cur, time=float(t_final))


# --------------------------------------------------------------------------
# observables

def _eval_observable(b, x, y):
    if b is None:
        return np.ones(y.shape[:-1])
    return np.asarray(b(x, y), float)


def pair_observable(f, b=None) -> float:
    """int f(t, x, y) b(x, y) dx dy; ``b=None`` means b = 1 (total mass).

    For grids a SchwartzSymbol is paired through its x-marginal
    (homogeneous) or transverse marginal (slab); other callables are
    evaluated at x = (x_1, 0, ..., 0).
    """
    if isinstance(f, ParticleEnsemble):
        vals = _eval_observable(b, f.x, f.y)
        return math.fsum(f.weight * vals)
    x, y = f.points()
    if isinstance(b, SchwartzSymbol):
        vals = b.x_marginal(y) if f.homogeneous else b.transverse_marginal(x[..., 0], y)
    else:
        vals = _eval_observable(b, x, y)
    return math.fsum((f.cell_weights() * f.values * vals).ravel())


def direction_marginal(f, quad: SphereQuadrature | None = None) -> np.ndarray:
    """Direction density per unit sphere measure on the direction nodes."""
    if isinstance(f, ParticleEnsemble):
        if quad is None:
            raise DomainError("ensemble marginal needs a direction quadrature", "boltzmann")
        node = f.node.copy()
        cont = node < 0
        if np.any(cont):
            node[cont] = quad.nearest(f.y[cont] / np.linalg.norm(f.y[cont], axis=1)[:, None])
        mass = np.bincount(node, weights=f.weight, minlength=quad.size)
        return mass / quad.weights
    w = f.cell_width * f.speed_weights[None, :, None]
    return np.sum(w * f.values, axis=(0, 1))


def quadratic_entropy(grid: PhaseSpaceGrid) -> float:
    """sum of weight * g^2 over the grid."""
    return float(np.sum(grid.cell_weights() * grid.values**2))
