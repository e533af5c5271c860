"""Direction and radial quadrature rules.

Directions on S^{d-1} are laid out polar-major with a uniform azimuth grid
starting at phi = 0, so every node-pair function of the form
F(polar_i, polar_j, phi_i - phi_j) is block circulant in the azimuth index.
The T-matrix solvers rely on this layout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn


def sphere_volume(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d."""
    return 2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return np.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0) * radius**d


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    dim: int
    n_polar: int
    n_azimuth: int
    cos_polar: np.ndarray
    sin_polar: np.ndarray
    polar_weights: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.n_polar * self.n_azimuth

    @property
    def azimuth(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_azimuth) / self.n_azimuth

    def index(self, i_polar, i_azimuth):
        return np.asarray(i_polar) * self.n_azimuth + np.asarray(i_azimuth) % self.n_azimuth

    def split_index(self, idx):
        idx = np.asarray(idx)
        return idx // self.n_azimuth, idx % self.n_azimuth

    def integrate(self, values) -> np.ndarray:
        """Quadrature of node values along the last axis."""
        return np.asarray(values) @ self.weights

    def nearest(self, directions) -> np.ndarray:
        """Index of the node closest to each unit vector in ``directions``."""
        directions = np.atleast_2d(directions)
        return np.argmax(directions @ self.nodes.T, axis=1)


def sphere_quadrature(d: int, n_polar: int = 16, n_azimuth: int = 32) -> SphereQuadrature:
    """Product Gauss-Legendre (cos polar) x trapezoid (azimuth) for d = 3,
    the equispaced circle rule for d = 2, and the two-point sphere for d = 1.

    For d <= 2 ``n_polar`` is ignored.
    """
    if d == 1:
        n_polar, n_azimuth = 1, 2
    elif d == 2:
        n_polar = 1
    elif d != 3:
        raise ValueError("direction quadrature implemented for d in {1, 2, 3}")
    if n_azimuth < 1 or n_polar < 1:
        raise ValueError("node counts must be positive")

    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    if d == 3:
        c, wp = np.polynomial.legendre.leggauss(n_polar)
        s = np.sqrt(1.0 - c * c)
        nodes = np.stack(
            [
                np.outer(s, np.cos(phi)).ravel(),
                np.outer(s, np.sin(phi)).ravel(),
                np.repeat(c, n_azimuth),
            ],
            axis=1,
        )
        weights = np.repeat(wp, n_azimuth) * (2.0 * np.pi / n_azimuth)
    else:
        c = np.zeros(1)
        s = np.ones(1)
        wp = np.ones(1)
        if d == 2:
            nodes = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        else:
            nodes = np.array([[1.0], [-1.0]])
        weights = np.full(n_azimuth, sphere_volume(d) / n_azimuth)
    return SphereQuadrature(d, n_polar, n_azimuth, c, s, wp, nodes, weights)


def pair_cosines(quad: SphereQuadrature) -> np.ndarray:
    """cos of the angle between polar rings (i, j) at azimuth offset m.

    Shape (n_polar, n_polar, n_azimuth).
    """
    dphi = quad.azimuth
    return (
        quad.sin_polar[:, None, None] * quad.sin_polar[None, :, None] * np.cos(dphi)[None, None, :]
        + quad.cos_polar[:, None, None] * quad.cos_polar[None, :, None]
    )


def gauss_legendre_panels(edges, n_per_panel) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on consecutive panels.

    ``n_per_panel`` is an int or one count per panel.
    """
    edges = np.asarray(edges, dtype=float)
    counts = np.broadcast_to(np.asarray(n_per_panel), (len(edges) - 1,))
    xs, ws = [], []
    for a, b, n in zip(edges[:-1], edges[1:], counts):
        if b <= a:
            continue
        x, w = np.polynomial.legendre.leggauss(int(n))
        xs.append(0.5 * (b - a) * x + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)
