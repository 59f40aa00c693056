"""
Single-ancilla noninvasive measurement protocol.

An ancilla spin is weakly coupled to the target at t1 through
exp(-i lam B (x) O1), measured in the eigenbasis of S^alpha, and the target is
measured in the eigenbasis of O2 at t2. Correlating the two outcomes gives a
quantity proportional to Im C (B = S^alpha) or Re C (B = (i/2)(S^- - S^+)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    HalfInteger,
    HilbertSpace,
    Operator,
    SpectralDecomposition,
    StateVector,
    as_spin,
    axis_basis,
    expectation,
    ladder_coefficient,
    spectral_decompose,
    spin_operator,
)
from .lattice import CorrelationTask, evolve_target

EXACT = "exact"
LINEARIZED = "linearized"
IMMEDIATE = "immediate"
DEFERRED = "deferred"

NORM_TOL = 1e-10
BALANCE_TOL = 1e-12
CLIP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AncillaSpec:
    """Ancilla spin ``zeta``, readout axis, and initial amplitudes r_m exp(i theta_m), m = zeta..-zeta."""

    zeta: HalfInteger
    axis: str = "z"
    r: tuple = None
    theta: tuple = None

    def __post_init__(self):
        zeta = as_spin(self.zeta)
        object.__setattr__(self, "zeta", zeta)
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"unknown ancilla axis {self.axis!r}")
        d = zeta.dim
        r = np.full(d, d ** -0.5) if self.r is None else np.asarray(self.r, dtype=float)
        theta = np.zeros(d) if self.theta is None else np.asarray(self.theta, dtype=float)
        if r.shape != (d,) or theta.shape != (d,):
            raise ValueError(f"spin-{zeta} ancilla needs {d} coefficients")
        if np.any(r < 0):
            raise ValueError("moduli r_m must be non-negative")
        if abs(np.sum(r**2) - 1) > NORM_TOL:
            raise ValueError(f"ancilla coefficients not normalized (sum r^2 = {np.sum(r**2):.12g})")
        object.__setattr__(self, "r", tuple(r))
        object.__setattr__(self, "theta", tuple(theta))

    @classmethod
    def equal_superposition(cls, zeta=0.5, axis: str = "z") -> "AncillaSpec":
        return cls(zeta, axis)

    @classmethod
    def from_amplitudes(cls, amplitudes, zeta=None, axis: str = "z") -> "AncillaSpec":
        amps = np.asarray(amplitudes, dtype=complex)
        zeta = HalfInteger(amps.size - 1) if zeta is None else zeta
        return cls(zeta, axis, tuple(np.abs(amps)), tuple(np.angle(amps)))

    @property
    def dim(self) -> int:
        return self.zeta.dim

    @property
    def coefficients(self) -> np.ndarray:
        """Amplitudes in the S^alpha eigenbasis."""
        return np.asarray(self.r) * np.exp(1j * np.asarray(self.theta))

    @property
    def balanced(self) -> bool:
        r = np.asarray(self.r)
        return bool(np.max(np.abs(r - r[::-1])) <= BALANCE_TOL)

    @property
    def basis(self) -> np.ndarray:
        return axis_basis(self.zeta, self.axis)


def ancilla_state(spec: AncillaSpec) -> StateVector:
    """Ancilla initial state expressed in the S^z computational basis."""
    return StateVector(HilbertSpace((spec.dim,)), spec.basis @ spec.coefficients)


@dataclass(frozen=True)
class CouplingSpec:
    variant: int
    lam: float
    mode: str = EXACT

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ValueError(f"coupling variant must be 1 or 2, got {self.variant!r}")
        if self.mode not in (EXACT, LINEARIZED):
            raise ValueError(f"unknown coupling mode {self.mode!r}")


def coupling_generator(spec: CouplingSpec | int, zeta, axis: str = "z") -> Operator:
    """Ancilla factor B of the coupling: S^alpha (variant 1) or (i/2)(S_alpha^- - S_alpha^+) (variant 2)."""
    variant = spec.variant if isinstance(spec, CouplingSpec) else int(spec)
    zeta = as_spin(zeta)
    if variant == 1:
        local = spin_operator(zeta, "z").matrix
    elif variant == 2:
        local = 0.5j * (spin_operator(zeta, "minus").matrix - spin_operator(zeta, "plus").matrix)
    else:
        raise ValueError(f"coupling variant must be 1 or 2, got {variant!r}")
    R = axis_basis(zeta, axis)
    # ladder operators are defined with respect to the S^alpha eigenbasis
    return Operator.local(R @ local @ R.conj().T)


def coupling_strength(B: Operator, O1: Operator, lam: float) -> float:
    """|lam| * ||B (x) O1||, the quantity that must be small for weak coupling."""
    return abs(lam) * np.linalg.norm(B.matrix, 2) * np.linalg.norm(O1.matrix, 2)


def _couple_array(X: np.ndarray, B: np.ndarray, axis: int, O1: Operator, lam: float, mode: str) -> np.ndarray:
    """Apply the coupling to ancilla ``axis`` of a (ancillas..., target) array."""
    X = np.moveaxis(X, axis, 0)
    if mode == LINEARIZED:
        BX = np.tensordot(B, X, axes=(1, 0))
        out = X - 1j * lam * (BX @ O1.matrix.T)
    elif mode == EXACT:
        b, W = np.linalg.eigh(0.5 * (B + B.conj().T))
        o, V = O1.eigh
        Y = np.tensordot(W.conj().T, X, axes=(1, 0))
        Y = Y @ V.conj()
        phases = np.exp(-1j * lam * np.outer(b, o))
        Y = Y * phases.reshape((len(b),) + (1,) * (Y.ndim - 2) + (len(o),))
        Y = Y @ V.T
        out = np.tensordot(W, Y, axes=(1, 0))
    else:
        raise ValueError(f"unknown coupling mode {mode!r}")
    return np.moveaxis(out, 0, axis)


def couple(Psi: StateVector, B: Operator, O1: Operator, lam: float, mode: str = EXACT, ancilla: int = 0) -> StateVector:
    """Apply exp(-i lam B (x) O1) (exact) or 1 - i lam B (x) O1 (linearized).

    ``B`` acts on ancilla factor ``ancilla``; ``O1`` acts on the target, which
    comprises all factors after the ancillas. Linearized output is flagged as
    un-normalized.
    """
    n_anc = Psi.space.n_factors - O1.space.n_factors
    if n_anc < 1 or Psi.space.factors[n_anc:] != O1.space.factors:
        raise ValueError("state space must be ancilla(s) (x) target space of O1")
    if not 0 <= ancilla < n_anc or B.dim != Psi.space.factors[ancilla]:
        raise ValueError("B does not match the selected ancilla factor")
    X = Psi.amplitudes.reshape(Psi.space.factors[:n_anc] + (O1.dim,))
    out = _couple_array(X, B.matrix, ancilla, O1, lam, mode)
    return StateVector(Psi.space, out.reshape(-1), Psi.normalized and mode == EXACT)


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Joint outcome probabilities on a grid of measured eigenvalues.

    ``axes[k]`` holds the eigenvalues of the k-th measured quantity; ``table``
    has one dimension per axis. The last axis is the target readout.
    """

    axes: tuple
    table: np.ndarray
    exact: bool = True

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        table = np.asarray(self.table, dtype=float)
        if table.shape != tuple(len(a) for a in axes):
            raise ValueError("table shape does not match outcome axes")
        if self.exact:
            if np.any(table < -CLIP_TOL):
                raise ValueError(f"negative probability {table.min():.3e} in exact mode")
            table = np.clip(table, 0.0, None)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "table", table)

    @property
    def labels(self) -> list[tuple]:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return [tuple(float(g.flat[k]) for g in grids) for k in range(self.table.size)]

    @property
    def probabilities(self) -> np.ndarray:
        return self.table.reshape(-1)

    def total(self) -> float:
        return float(self.table.sum())

    def weights(self) -> np.ndarray:
        """Product of measured eigenvalues per outcome, flattened like ``probabilities``."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.prod(grids, axis=0).reshape(-1)


class ThreeWayDistribution(OutcomeDistribution):
    """Distribution over (m1, m2, e_o) for the two-ancilla protocol."""


@dataclass(frozen=True, eq=False)
class NimpRun:
    task: CorrelationTask
    ancilla: AncillaSpec
    coupling: CouplingSpec
    readout: str = DEFERRED

    def __post_init__(self):
        self.task.require_ordered()
        if self.readout not in (IMMEDIATE, DEFERRED):
            raise ValueError(f"unknown readout timing {self.readout!r}")

    @property
    def B(self) -> Operator:
        return coupling_generator(self.coupling, self.ancilla.zeta, self.ancilla.axis)


def target_readout(O2: Operator) -> SpectralDecomposition:
    return spectral_decompose(O2)


def _projected_norms(vecs: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """||Pi^o v||^2 for each row v of ``vecs``, shape (rows, n_eigenvalues)."""
    return np.stack([np.sum(np.abs(vecs @ b.conj()) ** 2, axis=-1) for b in spec.bases], axis=-1)


def ancilla_branches(run: NimpRun) -> np.ndarray:
    """Un-normalized target states right after the ancilla readout at t1.

    Row k is (<m_k| (x) 1) U_c |phi, psi(t1)>, with m_k in descending order.
    """
    task = run.task
    phi = ancilla_state(run.ancilla).amplitudes
    X = np.outer(phi, task.state_at(task.t1))
    X = _couple_array(X, run.B.matrix, 0, task.O1, run.coupling.lam, run.coupling.mode)
    return run.ancilla.basis.conj().T @ X


def outcome_distribution(run: NimpRun) -> OutcomeDistribution:
    """Exact probabilities P(m_alpha, e_o) at t2."""
    task = run.task
    readout = target_readout(task.O2)
    if run.readout == IMMEDIATE:
        branches = ancilla_branches(run)
        final = evolve_target(branches, task.schedule, task.t2, task.t1)
    else:
        phi = ancilla_state(run.ancilla).amplitudes
        X = np.outer(phi, task.state_at(task.t1))
        X = _couple_array(X, run.B.matrix, 0, task.O1, run.coupling.lam, run.coupling.mode)
        X = evolve_target(X, task.schedule, task.t2, task.t1)
        final = run.ancilla.basis.conj().T @ X
    table = _projected_norms(final, readout)
    return OutcomeDistribution(
        (run.ancilla.zeta.m_values(), readout.eigenvalues), table, exact=run.coupling.mode == EXACT
    )


def weighted_correlation(dist: OutcomeDistribution) -> float:
    """Sum over outcomes of (product of measured eigenvalues) * probability."""
    return float(np.dot(dist.weights(), dist.probabilities))


def f_prefactor(variant: int, zeta) -> float:
    """Closed-form prefactor converting the weighted correlation into Im C (1) or Re C (2)."""
    s = as_spin(zeta).value
    if variant == 1:
        return (2 * s**3 + 3 * s**2 + s) / (3 * (2 * s + 1))
    if variant == 2:
        ms = as_spin(zeta).m_values()[1:]  # m = s-1, ..., -s
        return sum(ladder_coefficient(s, m, +1) for m in ms) / (2 * (2 * s + 1))
    raise ValueError(f"variant must be 1 or 2, got {variant!r}")


def readout_operator(ancilla: AncillaSpec) -> Operator:
    """S^alpha of the ancilla, in the computational basis."""
    R = ancilla.basis
    return Operator.local(R @ np.diag(ancilla.zeta.m_values()) @ R.conj().T)


def ancilla_moment(ancilla: AncillaSpec, B: Operator) -> complex:
    """<B S^alpha>_phi, whose real/imaginary part scales Im C / Re C."""
    return expectation(ancilla_state(ancilla), B @ readout_operator(ancilla))


def reconstruct(c1: float, c2: float, lam: float, zeta=0.5) -> complex:
    """C^lam = -(1/2 lam) (c2 / f2 + i c1 / f1) from variant-1 and variant-2 weighted correlations."""
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    return -(c2 / f_prefactor(2, zeta) + 1j * c1 / f_prefactor(1, zeta)) / (2 * lam)


def part_estimate(c: float, variant: int, lam: float, zeta=0.5) -> float:
    """Im C (variant 1) or Re C (variant 2) implied by one weighted correlation."""
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    return -c / (2 * lam * f_prefactor(variant, zeta))


def run_protocol(run: NimpRun) -> tuple[float, OutcomeDistribution]:
    dist = outcome_distribution(run)
    return weighted_correlation(dist), dist


def offset_term(run: NimpRun) -> float:
    """<S^alpha>_phi <O2(t2)>_psi, the lambda-independent part of the weighted correlation."""
    spec = run.ancilla
    phi = ancilla_state(spec)
    S = readout_operator(spec)
    psi2 = run.task.state_at(run.task.t2)
    o2 = np.vdot(psi2, run.task.O2.matrix @ psi2).real
    return float(expectation(phi, S).real * o2)


def estimate_pair(task: CorrelationTask, lam: float, zeta=0.5, axis: str = "z", mode: str = EXACT) -> tuple[complex, float, float]:
    """Run both coupling variants with the equal-superposition ancilla; returns (C^lam, c1, c2)."""
    anc = AncillaSpec.equal_superposition(zeta, axis)
    c1, _ = run_protocol(NimpRun(task, anc, CouplingSpec(1, lam, mode)))
    c2, _ = run_protocol(NimpRun(task, anc, CouplingSpec(2, lam, mode)))
    return reconstruct(c1, c2, lam, zeta), c1, c2
