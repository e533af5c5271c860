"""Scatterer configurations: lattices, Matern type-II hard-core processes and
randomly displaced sets, with uniform-discreteness and Riemann-sum checks."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .errors import CapacityError, CoverageError, DegenerateConfigurationWarning, DomainError
from .quadrature import ball_volume, sphere_volume
from .rng import stream

MAX_POINTS = 5_000_000


@dataclass(frozen=True, eq=False)
class ScattererSet:
    points: np.ndarray
    min_gap: float
    declared_density: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    @property
    def window_radius(self) -> float:
        return float(self.meta.get("window_radius", np.inf))

    def normalized(self) -> "ScattererSet":
        """Rescale coordinates so the declared density becomes one."""
        s = self.declared_density ** (1.0 / self.dim)
        meta = dict(self.meta, scale=s * self.meta.get("scale", 1.0),
                    window_radius=self.window_radius * s)
        return ScattererSet(self.points * s, self.min_gap * s, 1.0, meta)

    def count_in_ball(self, radius: float, center=None) -> int:
        c = np.zeros(self.dim) if center is None else np.asarray(center, float)
        return int(np.count_nonzero(np.sum((self.points - c) ** 2, axis=1) <= radius**2))

    def packing_bound(self, radius: float) -> float:
        """Upper bound on the count in B_R: disjoint b_P/2-balls fit in B_{R + b_P/2}."""
        half = self.min_gap / 2.0
        return ball_volume(self.dim, radius + half) / ball_volume(self.dim, half)


# --------------------------------------------------------------------------
# neighbour search

def _cell_table(points, cell):
    keys = np.floor(points / cell).astype(np.int64)
    lo = keys.min(axis=0)
    keys -= lo
    shape = keys.max(axis=0) + 3
    # pad by one cell on each side so neighbour offsets never wrap
    keys += 1
    flat = np.ravel_multi_index(keys.T, shape)
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    uniq, start, count = np.unique(sorted_flat, return_index=True, return_counts=True)
    occ = count.max()
    table = np.full((uniq.size, occ), -1, dtype=np.int64)
    slot = np.arange(sorted_flat.size) - np.repeat(start, count)
    table[np.repeat(np.arange(uniq.size), count), slot] = order
    return uniq, table, shape


def neighbor_pairs(points, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All pairs i < j with |p_i - p_j| < radius, via a cell list."""
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    if n < 2 or radius <= 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    uniq, table, shape = _cell_table(points, radius)
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(d)], dtype=np.int64)
    ii, jj = [], []
    for off in itertools.product((-1, 0, 1), repeat=d):
        shift = int(np.dot(off, strides))
        if shift < 0:
            continue  # each unordered cell pair visited once
        target = uniq + shift
        pos = np.searchsorted(uniq, target)
        pos = np.minimum(pos, uniq.size - 1)
        hit = uniq[pos] == target
        a = table[hit]
        b = table[pos[hit]]
        ia = np.repeat(a, b.shape[1], axis=1).ravel()
        ib = np.tile(b, (1, a.shape[1])).ravel()
        ok = (ia >= 0) & (ib >= 0)
        ia, ib = ia[ok], ib[ok]
        if shift == 0:
            keep = ia < ib
            ia, ib = ia[keep], ib[keep]
        dist2 = np.sum((points[ia] - points[ib]) ** 2, axis=1)
        close = dist2 < radius * radius
        lo = np.minimum(ia[close], ib[close])
        hi = np.maximum(ia[close], ib[close])
        ii.append(lo)
        jj.append(hi)
    return np.concatenate(ii), np.concatenate(jj)


def min_pairwise_distance(points) -> float:
    """Exact minimum pairwise distance (cell list, growing search radius)."""
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    if n < 2:
        return math.inf
    extent = np.ptp(points, axis=0)
    vol = float(np.prod(np.maximum(extent, 1e-12)))
    r = max((vol / n) ** (1.0 / d), 1e-12)
    while True:
        i, j = neighbor_pairs(points, r)
        if i.size:
            return float(np.sqrt(np.min(np.sum((points[i] - points[j]) ** 2, axis=1))))
        if r > np.max(extent) * 2 + 1:
            return math.inf
        r *= 2.0


# --------------------------------------------------------------------------
# generators

def gen_lattice(d: int, window_radius: float, max_points: int = MAX_POINTS) -> ScattererSet:
    """All points of Z^d in the closed ball of radius ``window_radius``."""
    if d < 1 or window_radius <= 0:
        raise DomainError("need d >= 1 and window_radius > 0", "scatterers")
    m = int(math.floor(window_radius))
    if (2 * m + 1) ** d > max_points:
        raise CapacityError(f"lattice window holds ~{(2 * m + 1) ** d} candidate points", "scatterers")
    axis = np.arange(-m, m + 1, dtype=float)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = grid[np.sum(grid**2, axis=1) <= window_radius**2 * (1 + 1e-14)]
    meta = {"kind": "lattice", "seed": None, "window_radius": float(window_radius), "scale": 1.0}
    return ScattererSet(pts, 1.0, 1.0, meta)


def _uniform_ball(rng, n, d, radius):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    u = rng.random(n) ** (1.0 / d)
    return g * (radius * u)[:, None]


def matern_retention(d: int, intensity: float, hard_core_radius: float) -> float:
    """Retention probability of Matern type-II thinning, (1 - e^{-lam V}) / (lam V)."""
    lv = intensity * ball_volume(d, hard_core_radius)
    return 1.0 if lv == 0 else -math.expm1(-lv) / lv


def gen_matern(d: int, window_radius: float, intensity: float, hard_core_radius: float,
               seed: int, max_points: int = MAX_POINTS) -> ScattererSet:
    """Matern type-II process: a Poisson sample with uniform marks, keeping a
    point only if no other point within the hard-core radius has a smaller
    mark. Sampling covers a guard band so the window is edge-effect free."""
    if hard_core_radius <= 0 or intensity < 0 or window_radius <= 0:
        raise DomainError("need hard_core_radius > 0, intensity >= 0, window_radius > 0", "scatterers")
    retention = matern_retention(d, intensity, hard_core_radius)
    if retention < 0.01:
        warnings.warn(f"expected Matern retention {retention:.2e} < 1%", DegenerateConfigurationWarning)
    outer = window_radius + hard_core_radius
    mean = intensity * ball_volume(d, outer)
    if mean > max_points:
        raise CapacityError(f"expected {mean:.3g} Poisson points", "scatterers")
    rng = stream(seed, "scatterers", 0)
    n = int(rng.poisson(mean))
    pts = _uniform_ball(rng, n, d, outer)
    marks = rng.random(n)
    keep = np.ones(n, bool)
    i, j = neighbor_pairs(pts, hard_core_radius)
    loser = np.where(marks[i] < marks[j], j, i)
    keep[loser] = False
    inside = np.sum(pts**2, axis=1) <= window_radius**2
    poisson_inside = int(np.count_nonzero(inside))
    pts = pts[keep & inside]
    meta = {
        "kind": "matern",
        "seed": int(seed),
        "window_radius": float(window_radius),
        "intensity": float(intensity),
        "hard_core_radius": float(hard_core_radius),
        "poisson_count": poisson_inside,
        "scale": 1.0,
    }
    gap = min_pairwise_distance(pts)
    return ScattererSet(pts, gap, intensity * retention, meta)


def gen_displaced(base: ScattererSet, max_shift: float, seed: int) -> ScattererSet:
    """Shift each point by an independent uniform vector in the ball of
    radius ``max_shift``; requires max_shift < b_P / 2."""
    if max_shift < 0 or max_shift >= base.min_gap / 2.0:
        raise DomainError("max_shift must lie in [0, b_P/2)", "scatterers")
    if max_shift == 0:
        meta = dict(base.meta, kind="displaced", seed=int(seed), max_shift=0.0, base_kind=base.meta.get("kind"))
        return ScattererSet(base.points.copy(), base.min_gap, base.declared_density, meta)
    rng = stream(seed, "scatterers", 1)
    pts = base.points + _uniform_ball(rng, len(base), base.dim, max_shift)
    gap = min_pairwise_distance(pts)
    meta = dict(base.meta, kind="displaced", seed=int(seed), max_shift=float(max_shift),
                base_kind=base.meta.get("kind"), window_radius=base.window_radius - max_shift)
    return ScattererSet(pts, gap, base.declared_density, meta)


# --------------------------------------------------------------------------
# Riemann sums

@dataclass(frozen=True)
class BumpFunction:
    """Smooth compactly supported test function
    g(x) = amplitude * exp(1 - 1/(1 - |x - c|^2/R^2)) on |x - c| < R."""

    dim: int
    radius: float = 1.0
    center: tuple = ()
    amplitude: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, float) if self.center else np.zeros(self.dim)
        s = np.sum((x - c) ** 2, axis=-1) / self.radius**2
        out = np.zeros(s.shape)
        m = s < 1.0
        out[m] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[m]))
        return out

    @property
    def support_radius(self) -> float:
        c = np.asarray(self.center, float) if self.center else np.zeros(self.dim)
        return float(np.linalg.norm(c) + self.radius)

    @property
    def integral(self) -> float:
        f = lambda r: np.exp(1.0 - 1.0 / (1.0 - r * r)) * r ** (self.dim - 1) if r < 1 else 0.0
        val, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
        return self.amplitude * sphere_volume(self.dim) * self.radius**self.dim * val


def riemann_sum_error(pset: ScattererSet, g, eps: float, integral: float | None = None,
                      support_radius: float | None = None) -> float:
    """|eps^d sum_q g(eps q) - int g|.

    ``g`` is a vectorized callable; ``integral`` and ``support_radius`` default
    to the attributes of the same name on ``g``.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)", "scatterers")
    integral = g.integral if integral is None else integral
    support_radius = getattr(g, "support_radius", None) if support_radius is None else support_radius
    if support_radius is None:
        raise DomainError("support radius of g required", "scatterers")
    if support_radius / eps > pset.window_radius:
        raise CoverageError(
            f"support of g(eps .) reaches {support_radius / eps:.3g} > window {pset.window_radius:.3g}",
            "scatterers")
    pts = pset.points[np.sum(pset.points**2, axis=1) <= (support_radius / eps) ** 2 * (1 + 1e-12)]
    total = math.fsum(g(eps * pts))
    return abs(eps**pset.dim * total - integral)


# --------------------------------------------------------------------------
# text format

def points_text(pset: ScattererSet) -> str:
    """Header ``d count b_P kind seed`` then one point per line (repr floats)."""
    seed = pset.meta.get("seed")
    lines = [f"{pset.dim} {len(pset)} {pset.min_gap!r} {pset.meta.get('kind', 'custom')} "
             f"{-1 if seed is None else int(seed)}"]
    lines += [" ".join(repr(float(v)) for v in p) for p in pset.points]
    return "\n".join(lines) + "\n"


def write_points(pset: ScattererSet, path) -> None:
    with open(path, "w") as fh:
        fh.write(points_text(pset))


def read_points(path) -> ScattererSet:
    with open(path) as fh:
        header = fh.readline().split()
        d, n = int(header[0]), int(header[1])
        gap = float(header[2])
        kind, seed = header[3], int(header[4])
        rows = [line.split() for line in fh if line.strip()]
    pts = np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(n, d)
    meta = {"kind": kind, "seed": None if seed < 0 else seed}
    if n:
        meta["window_radius"] = float(np.sqrt(np.max(np.sum(pts**2, axis=1))))
    return ScattererSet(pts, gap, 1.0, meta)


def with_meta(pset: ScattererSet, **kw) -> ScattererSet:
    return replace(pset, meta=dict(pset.meta, **kw))
