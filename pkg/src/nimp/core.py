"""
Dense linear algebra for finite spin systems.

Local bases are ordered by descending magnetic quantum number (m = s first).
Tensor factors are ordered [ancilla(s)..., target sites...]. Units with hbar = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
_AXES = ("x", "y", "z")


@dataclass(frozen=True, order=True)
class HalfInteger:
    """Non-negative multiple of 1/2, stored as twice its value."""

    twice_value: int

    def __post_init__(self):
        if int(self.twice_value) != self.twice_value or self.twice_value < 0:
            raise ValueError(f"twice_value must be a non-negative integer, got {self.twice_value!r}")

    @classmethod
    def of(cls, value) -> "HalfInteger":
        if isinstance(value, HalfInteger):
            return value
        exact = Fraction(value) if isinstance(value, str) else Fraction(float(value))
        twice = 2 * exact.limit_denominator(2)
        if twice.denominator != 1 or abs(float(twice) - 2 * float(exact)) > 1e-12:
            raise ValueError(f"{value!r} is not a multiple of 1/2")
        return cls(int(twice))

    @property
    def value(self) -> float:
        return self.twice_value / 2

    @property
    def dim(self) -> int:
        return self.twice_value + 1

    def m_values(self) -> np.ndarray:
        """Magnetic quantum numbers s, s-1, ..., -s."""
        return self.value - np.arange(self.dim, dtype=float)

    def __float__(self):
        return self.value

    def __str__(self):
        return str(Fraction(self.twice_value, 2))


def as_spin(s) -> HalfInteger:
    spin = HalfInteger.of(s)
    if spin.twice_value < 1:
        raise ValueError("spin quantum number must be at least 1/2")
    return spin


@dataclass(frozen=True)
class HilbertSpace:
    factors: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(d) for d in self.factors))
        if not self.factors or any(d < 1 for d in self.factors):
            raise ValueError(f"invalid factor dimensions {self.factors}")

    @classmethod
    def spins(cls, n_sites: int, s=0.5) -> "HilbertSpace":
        return cls((as_spin(s).dim,) * n_sites)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factors))

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    def __mul__(self, other: "HilbertSpace") -> "HilbertSpace":
        return HilbertSpace(self.factors + other.factors)


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.space.total_dim:
            raise ValueError(f"state has {amps.size} amplitudes, space has dimension {self.space.total_dim}")
        if self.normalized and abs(np.linalg.norm(amps) - 1) > NORM_TOL:
            raise ValueError(f"state flagged normalized has norm {np.linalg.norm(amps):.15g}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, space: HilbertSpace, index: int) -> "StateVector":
        amps = np.zeros(space.total_dim, dtype=complex)
        amps[index] = 1.0
        return cls(space, amps)

    @classmethod
    def product(cls, locals_: Sequence[np.ndarray]) -> "StateVector":
        vecs = [np.asarray(v, dtype=complex) for v in locals_]
        return cls(HilbertSpace(tuple(v.size for v in vecs)), reduce(np.kron, vecs))

    @classmethod
    def random(cls, space: HilbertSpace, rng: np.random.Generator) -> "StateVector":
        amps = rng.normal(size=space.total_dim) + 1j * rng.normal(size=space.total_dim)
        return cls(space, amps / np.linalg.norm(amps))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes / self.norm())

    def kron(self, other: "StateVector") -> "StateVector":
        return StateVector(
            self.space * other.space,
            np.kron(self.amplitudes, other.amplitudes),
            self.normalized and other.normalized,
        )

    def vdot(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray
    support: frozenset = field(default=None)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.space.total_dim
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} does not match space dimension {d}")
        object.__setattr__(self, "matrix", mat)
        support = frozenset(range(self.space.n_factors)) if self.support is None else frozenset(self.support)
        if any(not 0 <= i < self.space.n_factors for i in support):
            raise ValueError(f"support {sorted(support)} outside {self.space.n_factors} factors")
        object.__setattr__(self, "support", support)

    @classmethod
    def local(cls, matrix) -> "Operator":
        mat = np.asarray(matrix, dtype=complex)
        return cls(HilbertSpace((mat.shape[0],)), mat)

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Operator":
        return cls(space, np.eye(space.total_dim), frozenset())

    @classmethod
    def zero(cls, space: HilbertSpace) -> "Operator":
        return cls(space, np.zeros((space.total_dim,) * 2), frozenset())

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, self.support)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() < tol

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvectors of the Hermitian part, cached per instance."""
        return np.linalg.eigh(0.5 * (self.matrix + self.matrix.conj().T))

    def apply(self, state: StateVector) -> StateVector:
        if state.space.total_dim != self.dim:
            raise ValueError("operator and state dimensions differ")
        return StateVector(state.space, self.matrix @ state.amplitudes, normalized=False)

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return self.apply(other)
        _check_same_space(self, other)
        return Operator(self.space, self.matrix @ other.matrix, self.support | other.support)

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_space(self, other)
        return Operator(self.space, self.matrix + other.matrix, self.support | other.support)

    def __sub__(self, other: "Operator") -> "Operator":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, scalar * self.matrix, self.support)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return (-1.0) * self


def _check_same_space(a: Operator, b: Operator):
    if a.space.total_dim != b.space.total_dim:
        raise ValueError(f"operator dimensions differ: {a.dim} vs {b.dim}")


def ladder_coefficient(s, m, sign: int) -> float:
    """sqrt(s(s+1) - m(m +/- 1)), the matrix element of S^+/- acting on |m>."""
    s = float(s)
    val = s * (s + 1) - m * (m + sign)
    return float(np.sqrt(max(val, 0.0)))


def spin_operator(s, kind: str) -> Operator:
    """Spin-s operator in the S^z eigenbasis ordered m = s, ..., -s.

    ``kind`` is one of ``x``, ``y``, ``z``, ``plus``, ``minus``.
    """
    spin = as_spin(s)
    ms = spin.m_values()
    d = spin.dim
    if kind == "z":
        return Operator.local(np.diag(ms))
    plus = np.zeros((d, d))
    # |m+1> sits one row above |m> in descending order
    for j in range(1, d):
        plus[j - 1, j] = ladder_coefficient(spin.value, ms[j], +1)
    if kind == "plus":
        return Operator.local(plus)
    minus = plus.T
    if kind == "minus":
        return Operator.local(minus)
    if kind == "x":
        return Operator.local(0.5 * (plus + minus))
    if kind == "y":
        return Operator.local(-0.5j * (plus - minus))
    raise ValueError(f"unknown spin operator kind {kind!r}")


def axis_basis(s, axis: str) -> np.ndarray:
    """Unitary whose columns are the S^axis eigenvectors |m_axis>, m descending.

    The vectors are rotations of the S^z basis (not independently phased
    eigenvectors), so the ladder operators in that basis have the standard
    real matrix elements.
    """
    spin = as_spin(s)
    if axis == "z":
        return np.eye(spin.dim, dtype=complex)
    if axis == "x":
        # exp(-i pi/2 S^y) rotates z onto x
        gen, angle = spin_operator(spin, "y"), np.pi / 2
    elif axis == "y":
        # exp(+i pi/2 S^x) rotates z onto y
        gen, angle = spin_operator(spin, "x"), -np.pi / 2
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return hermitian_propagator(gen, angle).matrix


def embed(local: Operator, site: int, space: HilbertSpace) -> Operator:
    """Lift a single-factor operator to ``space``, acting as identity elsewhere."""
    if not 0 <= site < space.n_factors:
        raise ValueError(f"site {site} outside space with {space.n_factors} factors")
    if local.dim != space.factors[site]:
        raise ValueError(f"local dimension {local.dim} does not match factor {site} of dimension {space.factors[site]}")
    left = int(np.prod(space.factors[:site], dtype=int))
    right = int(np.prod(space.factors[site + 1 :], dtype=int))
    mat = np.kron(np.kron(np.eye(left), local.matrix), np.eye(right))
    return Operator(space, mat, frozenset({site}))


def embed_many(locals_: Iterable[tuple[int, Operator]], space: HilbertSpace) -> Operator:
    """Tensor product of local operators on distinct sites."""
    mats = [np.eye(d, dtype=complex) for d in space.factors]
    sites = set()
    for site, op in locals_:
        if site in sites:
            raise ValueError(f"site {site} repeated")
        if not 0 <= site < space.n_factors:
            raise ValueError(f"site {site} outside space with {space.n_factors} factors")
        if op.dim != space.factors[site]:
            raise ValueError(f"local dimension {op.dim} does not match factor {site}")
        sites.add(site)
        mats[site] = op.matrix
    return Operator(space, reduce(np.kron, mats), frozenset(sites))


def hermitian_propagator(H: Operator, t: float) -> Operator:
    """exp(-i H t) through the eigendecomposition of ``H``."""
    if not H.is_hermitian():
        raise ValueError(f"generator is not Hermitian (error {H.hermiticity_error():.3e})")
    w, v = H.eigh
    return Operator(H.space, (v * np.exp(-1j * w * t)) @ v.conj().T, H.support)


def propagate(H: Operator, t: float, vec: np.ndarray) -> np.ndarray:
    """exp(-i H t) applied to a vector (or to the columns of a matrix)."""
    w, v = H.eigh
    phase = np.exp(-1j * w * t)
    if vec.ndim == 1:
        return v @ (phase * (v.conj().T @ vec))
    return v @ (phase[:, None] * (v.conj().T @ vec))


def default_grouping_tol(eigenvalues: np.ndarray) -> float:
    scale = float(np.max(np.abs(eigenvalues), initial=0.0))
    return max(1e-9 * scale, 1e-12)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    projectors: list
    grouping_tol: float
    bases: list = field(default=None, repr=False)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def degeneracies(self) -> list[int]:
        return [b.shape[1] for b in self.bases]

    def reconstruct(self) -> np.ndarray:
        return sum(e * p.matrix for e, p in zip(self.eigenvalues, self.projectors))


def spectral_decompose(O: Operator, grouping_tol: float | None = None) -> SpectralDecomposition:
    """Distinct eigenvalues of a Hermitian operator with their eigenspace projectors.

    Eigenvalues closer than ``grouping_tol`` to the running group are merged
    into one degenerate eigenspace.
    """
    if not O.is_hermitian():
        raise ValueError(f"operator is not Hermitian (error {O.hermiticity_error():.3e})")
    w, v = O.eigh
    tol = default_grouping_tol(w) if grouping_tol is None else float(grouping_tol)
    groups: list[list[int]] = []
    for k in range(len(w)):
        if groups and w[k] - w[groups[-1][0]] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    eigenvalues = np.array([w[g].mean() for g in groups])
    bases = [v[:, g] for g in groups]
    projectors = [Operator(O.space, b @ b.conj().T, O.support) for b in bases]
    return SpectralDecomposition(eigenvalues, projectors, tol, bases)


def expectation(psi: StateVector, O: Operator) -> complex:
    if psi.space.total_dim != O.dim:
        raise ValueError(f"state dimension {psi.space.total_dim} does not match operator dimension {O.dim}")
    amps = psi.amplitudes
    return complex(np.vdot(amps, O.matrix @ amps))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a
