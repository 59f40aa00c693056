"""Target Hamiltonians, piecewise-constant time evolution and the exact correlation oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    HERMITIAN_TOL,
    HilbertSpace,
    Operator,
    StateVector,
    as_spin,
    embed_many,
    propagate,
    spin_operator,
)


@dataclass(frozen=True)
class HamiltonianTerm:
    coefficient: float
    factors: tuple  # ((site, local Operator), ...)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if isinstance(self.coefficient, complex) or not np.isreal(self.coefficient):
            raise ValueError("term coefficient must be real")
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"term acts twice on a site: {sites}")
        for site, op in self.factors:
            if not op.is_hermitian():
                raise ValueError(f"local factor on site {site} is not Hermitian")


def build_hamiltonian(terms: Sequence[HamiltonianTerm], space: HilbertSpace) -> Operator:
    H = Operator.zero(space)
    for term in terms:
        for site, _ in term.factors:
            if not 0 <= site < space.n_factors:
                raise ValueError(f"site {site} out of range for {space.n_factors} sites")
        H = H + float(term.coefficient) * embed_many(term.factors, space)
    # exact symmetrization removes rounding asymmetry from products of embeddings
    mat = 0.5 * (H.matrix + H.matrix.conj().T)
    return Operator(space, mat, H.support)


def _bonds(n_sites: int, periodic: bool):
    bonds = [(i, i + 1) for i in range(n_sites - 1)]
    if periodic and n_sites > 2:
        bonds.append((n_sites - 1, 0))
    return bonds


def tfim_terms(n_sites: int, J: float = 1.0, g: float = 1.0, s=0.5, periodic: bool = False) -> list[HamiltonianTerm]:
    """Terms of H = -J sum S^z_i S^z_{i+1} - g sum S^x_i on an open (or periodic) chain."""
    sz, sx = spin_operator(s, "z"), spin_operator(s, "x")
    terms = [HamiltonianTerm(-J, ((i, sz), (j, sz))) for i, j in _bonds(n_sites, periodic)]
    terms += [HamiltonianTerm(-g, ((i, sx),)) for i in range(n_sites)]
    return terms


def xxz_terms(n_sites: int, J: float = 1.0, delta: float = 1.0, h: float = 0.0, s=0.5, periodic: bool = False):
    """H = J sum (S^x S^x + S^y S^y + delta S^z S^z) - h sum S^z."""
    ops = {a: spin_operator(s, a) for a in "xyz"}
    terms = []
    for i, j in _bonds(n_sites, periodic):
        terms.append(HamiltonianTerm(J, ((i, ops["x"]), (j, ops["x"]))))
        terms.append(HamiltonianTerm(J, ((i, ops["y"]), (j, ops["y"]))))
        terms.append(HamiltonianTerm(J * delta, ((i, ops["z"]), (j, ops["z"]))))
    if h:
        terms += [HamiltonianTerm(-h, ((i, ops["z"]),)) for i in range(n_sites)]
    return terms


MODEL_PRESETS: dict[str, Callable[..., list[HamiltonianTerm]]] = {
    "tfim": tfim_terms,
    "xxz": xxz_terms,
}


def model_hamiltonian(name: str, N: int, s=0.5, **params) -> Operator:
    """Preset Hamiltonian by name, e.g. ``model_hamiltonian("tfim", 4, J=1, g=1)``."""
    try:
        factory = MODEL_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model preset {name!r}; known: {sorted(MODEL_PRESETS)}") from None
    return build_hamiltonian(factory(N, s=s, **params), HilbertSpace.spins(N, s))


def tfim_hamiltonian(n_sites: int, J: float = 1.0, g: float = 1.0, s=0.5, periodic: bool = False) -> Operator:
    return model_hamiltonian("tfim", n_sites, s=s, J=J, g=g, periodic=periodic)


# Observables -------------------------------------------------------------


def site_spin(space: HilbertSpace, site: int, axis: str) -> Operator:
    s = (space.factors[site] - 1) / 2
    return embed_many([(site, spin_operator(s, axis))], space)


def spin_product(space: HilbertSpace, factors: Sequence[tuple[int, str]]) -> Operator:
    """Tensor product of single-site spin components, e.g. ``[(0, "x"), (1, "x")]``."""
    return embed_many([(site, spin_operator((space.factors[site] - 1) / 2, a)) for site, a in factors], space)


def magnetization(space: HilbertSpace, axis: str, sites: Sequence[int] | None = None, normalize: bool = False) -> Operator:
    sites = range(space.n_factors) if sites is None else list(sites)
    total = Operator.zero(space)
    for site in sites:
        total = total + site_spin(space, site, axis)
    if normalize:
        total = total * (1.0 / len(sites))
    return total


# Time evolution ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Schedule:
    """Piecewise-constant Hamiltonian; the last segment extends indefinitely."""

    segments: tuple  # ((duration, Operator), ...)

    def __post_init__(self):
        segs = tuple((float(d), H) for d, H in self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        for d, H in segs:
            if d < 0:
                raise ValueError(f"negative segment duration {d}")
            if not H.is_hermitian():
                raise ValueError("segment Hamiltonian is not Hermitian")
        if len({H.dim for _, H in segs}) != 1:
            raise ValueError("segment Hamiltonians act on different spaces")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, H: Operator) -> "Schedule":
        return cls(((math.inf, H),))

    @property
    def space(self) -> HilbertSpace:
        return self.segments[0][1].space

    @property
    def total_duration(self) -> float:
        return sum(d for d, _ in self.segments)

    def pieces(self, t0: float, t1: float):
        """(Hamiltonian, duration) pieces covering [t0, t1] with t0 <= t1, in time order."""
        start = 0.0
        last = len(self.segments) - 1
        for k, (d, H) in enumerate(self.segments):
            end = math.inf if k == last else start + d
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                yield H, hi - lo
            if end >= t1:
                break
            start = end


def _evolve_vec(vec: np.ndarray, schedule: Schedule, t: float, t0: float) -> np.ndarray:
    if t >= t0:
        for H, dt in schedule.pieces(t0, t):
            vec = propagate(H, dt, vec)
    else:
        for H, dt in reversed(list(schedule.pieces(t, t0))):
            vec = propagate(H, -dt, vec)
    return vec


def evolve(psi: StateVector, schedule: Schedule, t: float, t0: float = 0.0) -> StateVector:
    """Propagate ``psi`` from time ``t0`` to ``t`` under ``schedule``.

    Backward propagation (``t < t0``) applies the inverse propagator.
    """
    if t < 0 or t0 < 0:
        raise ValueError("times must be non-negative")
    if psi.space.total_dim != schedule.space.total_dim:
        raise ValueError("state and schedule dimensions differ")
    return StateVector(psi.space, _evolve_vec(psi.amplitudes, schedule, t, t0), psi.normalized)


def evolve_target(vec: np.ndarray, schedule: Schedule, t: float, t0: float = 0.0) -> np.ndarray:
    """Evolve the trailing (target) axis of an array of shape (..., d_target)."""
    d = schedule.space.total_dim
    if vec.shape[-1] != d:
        raise ValueError("trailing axis does not match the target dimension")
    lead = vec.shape[:-1]
    flat = vec.reshape(-1, d).T
    out = _evolve_vec(flat, schedule, t, t0)
    return out.T.reshape(lead + (d,))


def heisenberg_observable(O: Operator, t: float, schedule: Schedule) -> Operator:
    """U^dag(t) O U(t)."""
    if O.dim != schedule.space.total_dim:
        raise ValueError("observable and schedule dimensions differ")
    # columns of U are U|k>; U^dag O U = (U^dag (O U))
    U = _evolve_vec(np.eye(O.dim, dtype=complex), schedule, t, 0.0)
    mat = U.conj().T @ O.matrix @ U
    return Operator(O.space, 0.5 * (mat + mat.conj().T), O.support)


# Oracle ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CorrelationTask:
    """Initial state, observables and times defining C = <psi|O1(t1) O2(t2)|psi>."""

    psi0: StateVector
    O1: Operator
    t1: float
    O2: Operator
    t2: float
    schedule: Schedule

    def __post_init__(self):
        d = self.schedule.space.total_dim
        for name, op in (("O1", self.O1), ("O2", self.O2)):
            if op.dim != d:
                raise ValueError(f"{name} dimension {op.dim} does not match target dimension {d}")
            if not op.is_hermitian(HERMITIAN_TOL):
                raise ValueError(f"{name} is not Hermitian")
        if self.psi0.space.total_dim != d:
            raise ValueError("initial state dimension does not match target dimension")
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("times must be non-negative")

    @property
    def space(self) -> HilbertSpace:
        return self.schedule.space

    def require_ordered(self):
        if not self.t1 <= self.t2:
            raise ValueError(f"protocol needs t1 <= t2, got t1={self.t1}, t2={self.t2}")

    def state_at(self, t: float) -> np.ndarray:
        return _evolve_vec(self.psi0.amplitudes, self.schedule, t, 0.0)

    def swapped(self) -> "CorrelationTask":
        return CorrelationTask(self.psi0, self.O2, self.t2, self.O1, self.t1, self.schedule)


def exact_correlation(task: CorrelationTask) -> complex:
    """<psi| U^dag(t1) O1 U(t1) U^dag(t2) O2 U(t2) |psi> by state-side evaluation.

    With U(t2) = U(t2, t1) U(t1) this is <U(t2, t1) O1 psi(t1) | O2 psi(t2)>.
    """
    psi1 = task.state_at(task.t1)
    psi2 = _evolve_vec(psi1, task.schedule, task.t2, task.t1)
    left = _evolve_vec(task.O1.matrix @ psi1, task.schedule, task.t2, task.t1)
    return complex(np.vdot(left, task.O2.matrix @ psi2))


def product_state(space: HilbertSpace, local_states: Sequence[np.ndarray]) -> StateVector:
    vecs = [np.asarray(v, dtype=complex) / np.linalg.norm(v) for v in local_states]
    if tuple(v.size for v in vecs) != space.factors:
        raise ValueError("local states do not match the site dimensions")
    return StateVector(space, StateVector.product(vecs).amplitudes)


def all_up(space: HilbertSpace) -> StateVector:
    return StateVector.basis(space, 0)


def spin_coherent_site(s, theta: float, phi: float) -> np.ndarray:
    """Spin-s coherent state pointing along (theta, phi), components m = s..-s."""
    spin = as_spin(s)
    two_s = spin.twice_value
    ms = spin.m_values()
    k = (spin.value - ms).astype(int)  # number of lowering steps
    binom = np.array([math.comb(two_s, int(j)) for j in k], dtype=float)
    amps = np.sqrt(binom) * np.cos(theta / 2) ** (two_s - k) * np.sin(theta / 2) ** k * np.exp(1j * phi * k)
    return amps / np.linalg.norm(amps)
