"""Alpha-damped von Neumann evolution on a truncated momentum lattice.

The density matrix is stored through its momentum kernel rho(y, y') on a
square lattice of spacing dy, so an operator product is a matrix product
times dy^d and Tr(AB) = sum_jk A_jk B_kj dy^{2d}. The equation of motion is

    d/dt rho = L0 rho - (2 pi i / h) (V rho - rho V) dy^d,

with L0 the diagonal multiplier -(pi i h (|y|^2 - |y'|^2)
+ (alpha^d / h)(1 - Gamma(alpha h^{1-d} (y - y')))) and
V(y, y') = r^d sum_q lambda(r^{d-1} q) e(q.(y' - y)) W_hat(r (y - y')).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ResolutionError, StepSizeError
from .potential import PotentialProfile
from .scatterers import ScattererSet
from .symbols import CutoffProfile, DampingProfile, SchwartzSymbol

PHASE_LIMIT = 0.1
COMMUTATOR_LIMIT = 0.5


@dataclass(frozen=True, eq=False)
class MomentumLattice:
    """n_side^d nodes with spacing ``spacing`` centred at the origin."""

    dim: int
    spacing: float
    n_side: int

    def __post_init__(self):
        if self.dim < 1 or self.spacing <= 0 or self.n_side < 1:
            raise DomainError("lattice needs dim >= 1, spacing > 0, n_side >= 1", "vonneumann")
        axis = (np.arange(self.n_side) - 0.5 * (self.n_side - 1)) * self.spacing
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        object.__setattr__(self, "nodes", np.stack([m.ravel() for m in mesh], axis=1))

    @property
    def size(self) -> int:
        return self.n_side**self.dim

    @property
    def cell(self) -> float:
        return self.spacing**self.dim

    @property
    def extent(self) -> float:
        return 0.5 * (self.n_side - 1) * self.spacing

    def boundary_mask(self) -> np.ndarray:
        edge = np.isclose(np.abs(self.nodes), self.extent).any(axis=1)
        return edge


def weyl_kernel(a: SchwartzSymbol, lattice: MomentumLattice, r: float, h: float | None = None) -> np.ndarray:
    """Matrix r^{-d(d-1)/2} h^{d/2} a~(r^{1-d}(y - y'), (h/2)(y + y'))."""
    h = r if h is None else h
    d = lattice.dim
    y = lattice.nodes
    diff = r ** (1 - d) * (y[:, None, :] - y[None, :, :])
    mean = 0.5 * h * (y[:, None, :] + y[None, :, :])
    return r ** (-d * (d - 1) / 2) * h ** (d / 2) * a.fourier_x(diff, mean)


def check_resolution(kernel: np.ndarray, lattice: MomentumLattice, tol: float = 0.1) -> None:
    """Reject kernels that jump by more than ``tol`` of their peak between
    neighbouring nodes along any of the 2d lattice axes."""
    peak = float(np.max(np.abs(kernel)))
    if peak == 0.0:
        return
    shape = (lattice.n_side,) * lattice.dim
    full = kernel.reshape(shape + shape)
    for axis in range(2 * lattice.dim):
        jump = np.max(np.abs(np.diff(full, axis=axis))) if full.shape[axis] > 1 else 0.0
        if jump > tol * peak:
            raise ResolutionError(f"kernel varies by {jump / peak:.2f} of its peak between nodes",
                                  "vonneumann")


def boundary_tail(kernel: np.ndarray, lattice: MomentumLattice) -> float:
    """Largest |entry| on a boundary row or column, relative to the peak.

    This measures truncation by the finite lattice; it is reported, not
    enforced, since trace pairings converge much faster than the tail."""
    peak = float(np.max(np.abs(kernel)))
    if peak == 0.0:
        return 0.0
    edge = lattice.boundary_mask()
    return max(float(np.max(np.abs(kernel[edge]))), float(np.max(np.abs(kernel[:, edge])))) / peak


def weyl_quantize(a: SchwartzSymbol, lattice: MomentumLattice, r: float, h: float | None = None,
                  check: bool = True) -> np.ndarray:
    """Momentum kernel of the rescaled Weyl quantization Op_{r,h}(a)."""
    if r <= 0:
        raise DomainError("r must be positive", "vonneumann")
    mat = weyl_kernel(a, lattice, r, h)
    if check:
        check_resolution(mat, lattice)
    return mat


def potential_kernel(profile: PotentialProfile, scatterers: ScattererSet, lam: CutoffProfile,
                     lattice: MomentumLattice, r: float) -> np.ndarray:
    """V(y, y') on the lattice; scatterers outside supp lambda(r^{d-1} .) drop out."""
    d = lattice.dim
    if scatterers is None or len(scatterers) == 0:
        return np.zeros((lattice.size, lattice.size), complex)
    q = scatterers.points
    coupling = lam(r ** (d - 1) * q)
    keep = coupling != 0.0
    q, coupling = q[keep], coupling[keep]
    y = lattice.nodes
    diff = y[:, None, :] - y[None, :, :]
    what = profile.w_hat_sq(r * r * np.sum(diff**2, axis=-1))
    # sum_q lambda_q e(q.(y' - y)) = sum_q lambda_q conj(e(q.y)) e(q.y')
    phase = np.exp(2j * np.pi * (y @ q.T))
    structure = (phase.conj() * coupling[None, :]) @ phase.T
    return r**d * structure * what


@dataclass(frozen=True, eq=False)
class DampedEvolutionState:
    lattice: MomentumLattice
    rho: np.ndarray
    r: float
    alpha: float
    damping: DampingProfile
    potential: np.ndarray
    h: float | None = None
    time: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.h is None:
            object.__setattr__(self, "h", self.r)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def free_exponent(self) -> np.ndarray:
        """L0 as an entrywise multiplier."""
        if "L0" not in self._cache:
            y = self.lattice.nodes
            e = np.sum(y**2, axis=1)
            h, d = self.h, self.dim
            phase = -1j * np.pi * h * (e[:, None] - e[None, :])
            diff = y[:, None, :] - y[None, :, :]
            gamma = self.damping(self.alpha * h ** (1 - d) * diff)
            decay = -(self.alpha**d / h) * (1.0 - gamma)
            self._cache["L0"] = phase + decay
        return self._cache["L0"]

    def generator_eig(self):
        """Eigendecomposition of the Hermitian matrix (2 pi / h) V dy^d."""
        if "eig" not in self._cache:
            mat = (2.0 * np.pi / self.h) * self.potential * self.lattice.cell
            mat = 0.5 * (mat + mat.conj().T)
            self._cache["eig"] = np.linalg.eigh(mat)
        return self._cache["eig"]


def make_state(a: SchwartzSymbol, lattice: MomentumLattice, r: float, alpha: float,
               damping: DampingProfile, profile: PotentialProfile | None = None,
               scatterers: ScattererSet | None = None, lam: CutoffProfile | None = None,
               h: float | None = None, check: bool = True) -> DampedEvolutionState:
    rho = weyl_quantize(a, lattice, r, h, check)
    if profile is None or scatterers is None or lam is None:
        pot = np.zeros_like(rho)
    else:
        pot = potential_kernel(profile, scatterers, lam, lattice, r)
    return DampedEvolutionState(lattice, rho, float(r), float(alpha), damping, pot, h)


def step_damped_vn(state: DampedEvolutionState, dt: float) -> DampedEvolutionState:
    """One Strang step: half free+damping, exact commutator flow, half
    free+damping. Both sub-flows are exact, so the only error is the
    splitting error."""
    if dt <= 0:
        raise StepSizeError("dt must be positive", "vonneumann")
    e = np.sum(state.lattice.nodes**2, axis=1)
    max_phase = dt * 0.5 * state.h * float(np.max(np.abs(e[:, None] - e[None, :])))
    if max_phase > PHASE_LIMIT:
        raise StepSizeError(f"free phase per step {max_phase:.3g} exceeds {PHASE_LIMIT}", "vonneumann")
    evals, vecs = state.generator_eig()
    comm_norm = 2.0 * float(np.max(np.abs(evals))) if evals.size else 0.0
    if comm_norm * dt > COMMUTATOR_LIMIT:
        raise StepSizeError(f"commutator norm * dt = {comm_norm * dt:.3g} exceeds {COMMUTATOR_LIMIT}",
                            "vonneumann")
    half = np.exp(0.5 * dt * state.free_exponent())
    rho = half * state.rho
    if np.any(evals != 0):
        u = (vecs * np.exp(-1j * evals * dt)) @ vecs.conj().T
        rho = u @ rho @ u.conj().T
    rho = half * rho
    return replace(state, rho=rho, time=state.time + dt)


def evolve_vn(state: DampedEvolutionState, t_final: float, dt: float) -> DampedEvolutionState:
    n = int(math.ceil((t_final - state.time) / dt - 1e-12))
    if n <= 0:
        return state
    h = (t_final - state.time) / n
    for _ in range(n):
        state = step_damped_vn(state, h)
    return replace(state, time=float(t_final))


def trace_pair(state_or_rho, b_matrix: np.ndarray, lattice: MomentumLattice | None = None) -> float:
    """Re Tr(rho Op(b)) = Re sum_jk rho_jk B_kj dy^{2d}."""
    if isinstance(state_or_rho, DampedEvolutionState):
        rho, lattice = state_or_rho.rho, state_or_rho.lattice
    else:
        rho = state_or_rho
    return float(np.real(np.sum(rho * b_matrix.T))) * lattice.cell**2


def hermiticity_error(rho: np.ndarray) -> float:
    return float(np.max(np.abs(rho - rho.conj().T)))
