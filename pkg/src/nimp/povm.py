"""
Kraus-operator description of the ancilla-based measurement, and the two
ancilla-free protocols it motivates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Operator, SpectralDecomposition, StateVector, hermitian_propagator, spectral_decompose
from .lattice import CorrelationTask, _evolve_vec
from .protocol import OutcomeDistribution, _projected_norms, target_readout, weighted_correlation

COMPLETENESS_TOL = 1e-11
DERIVED = "derived-from-coupling"
CLOSED_FORM = "closed-form"


@dataclass(frozen=True, eq=False)
class KrausSet:
    labels: tuple
    operators: tuple  # target-space Operators
    source: str = DERIVED

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "operators", tuple(self.operators))
        if len(self.labels) != len(self.operators):
            raise ValueError("one label per Kraus operator required")

    def __len__(self):
        return len(self.operators)

    def __getitem__(self, label) -> Operator:
        return self.operators[self.labels.index(label)]

    def effects(self) -> list[np.ndarray]:
        return [M.matrix.conj().T @ M.matrix for M in self.operators]

    def completeness_residual(self) -> float:
        """max |sum M^dag M - 1|, the ordering forced by M_m = <m|U|phi>."""
        total = sum(self.effects())
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))

    def outer_completeness_residual(self) -> float:
        """max |sum M M^dag - 1|; equals the above only for normal M."""
        total = sum(M.matrix @ M.matrix.conj().T for M in self.operators)
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))

    def max_norm(self) -> float:
        return max(float(np.linalg.norm(M.matrix, 2)) for M in self.operators)

    def to_json(self) -> dict:
        return {
            "source": self.source,
            "operators": [
                {"label": float(lab), "re": M.matrix.real.tolist(), "im": M.matrix.imag.tolist()}
                for lab, M in zip(self.labels, self.operators)
            ],
        }


def kraus_set(
    B: Operator,
    phi: StateVector | np.ndarray,
    lam: float,
    O1: Operator,
    ancilla_basis: np.ndarray | None = None,
    labels: Sequence[float] | None = None,
) -> KrausSet:
    """M_m = <m| exp(-i lam B (x) O1) |phi> on the target space.

    Evaluated exactly as sum_w <m| exp(-i lam e_w B) |phi> Pi^w over the
    eigenspaces of O1. ``ancilla_basis`` has the readout states |m> as
    columns (S^z basis by default); ``labels`` defaults to m = zeta..-zeta.
    """
    phi = np.asarray(phi.amplitudes if isinstance(phi, StateVector) else phi, dtype=complex)
    if not B.is_hermitian():
        raise ValueError("B must be Hermitian")
    if B.dim != phi.size:
        raise ValueError("B and phi dimensions differ")
    if abs(np.linalg.norm(phi) - 1) > 1e-10:
        raise ValueError("phi must be normalized")
    d = phi.size
    basis = np.eye(d, dtype=complex) if ancilla_basis is None else np.asarray(ancilla_basis, dtype=complex)
    if basis.shape != (d, d):
        raise ValueError("ancilla basis does not match B")
    if labels is None:
        labels = (d - 1) / 2 - np.arange(d)
    spec = spectral_decompose(O1)
    amps = np.empty((len(spec), d), dtype=complex)
    for w, e in enumerate(spec.eigenvalues):
        amps[w] = basis.conj().T @ (hermitian_propagator(B, lam * e).matrix @ phi)
    ops = []
    for m in range(d):
        mat = sum(amps[w, m] * P.matrix for w, P in enumerate(spec.projectors))
        ops.append(Operator(O1.space, mat, O1.support))
    return KrausSet(tuple(float(x) for x in labels), tuple(ops), DERIVED)


def kraus_im_closed_form(phi: np.ndarray, lam: float, O1: Operator) -> KrausSet:
    """Spin-1/2 ancilla, B = S^z: M_+- = <+-|phi> exp(-+ i lam O1 / 2)."""
    phi = np.asarray(phi, dtype=complex)
    if phi.size != 2:
        raise ValueError("closed form holds for a spin-1/2 ancilla")
    ops = (
        phi[0] * hermitian_propagator(O1, lam / 2),
        phi[1] * hermitian_propagator(O1, -lam / 2),
    )
    return KrausSet((0.5, -0.5), ops, CLOSED_FORM)


def _spectral_function(spec: SpectralDecomposition, O1: Operator, fn) -> Operator:
    return Operator(O1.space, sum(fn(e) * P.matrix for e, P in zip(spec.eigenvalues, spec.projectors)), O1.support)


def kraus_re_closed_form(lam: float, O1: Operator) -> KrausSet:
    """Spin-1/2 ancilla in (|+>+|->)/sqrt2, B = S^y: M_+- = [cos(lam O1/2) -+ sin(lam O1/2)] / sqrt2."""
    spec = spectral_decompose(O1)
    plus = _spectral_function(spec, O1, lambda e: (np.cos(lam * e / 2) - np.sin(lam * e / 2)) / np.sqrt(2))
    minus = _spectral_function(spec, O1, lambda e: (np.cos(lam * e / 2) + np.sin(lam * e / 2)) / np.sqrt(2))
    return KrausSet((0.5, -0.5), (plus, minus), CLOSED_FORM)


def two_point_spectrum(O1: Operator, tol: float = 1e-10) -> tuple[float, Operator, Operator]:
    """Return (e, Pi^1, Pi^2) with O1 = e (Pi^1 - Pi^2), e > 0, or raise."""
    spec = spectral_decompose(O1)
    if len(spec) != 2:
        raise ValueError(f"O1 must have exactly two distinct eigenvalues, found {len(spec)}")
    low, high = spec.eigenvalues
    if abs(low + high) > tol * max(1.0, abs(high)) or high <= 0:
        raise ValueError(f"O1 spectrum {{{low:.6g}, {high:.6g}}} is not of the form +-e")
    e = 0.5 * (high - low)
    return e, spec.projectors[1], spec.projectors[0]


def kraus_re_special(lam: float, O1: Operator) -> KrausSet:
    """Re-part Kraus operators for O1 = e (Pi^1 - Pi^2), valid for any lam."""
    e, P1, P2 = two_point_spectrum(O1)
    c, s = np.cos(lam * e / 2), np.sin(lam * e / 2)
    plus = ((c - s) / np.sqrt(2)) * P1 + ((c + s) / np.sqrt(2)) * P2
    minus = ((c + s) / np.sqrt(2)) * P1 + ((c - s) / np.sqrt(2)) * P2
    return KrausSet((0.5, -0.5), (plus, minus), CLOSED_FORM)


def kraus_re_projective_point(O1: Operator) -> KrausSet:
    """Re-part Kraus operators at lam = pi / 2e, where M_+ = Pi^2 and M_- = Pi^1."""
    e, _, _ = two_point_spectrum(O1)
    return kraus_re_special(np.pi / (2 * e), O1)


def apply_measurement(psi, ks: KrausSet, tol: float = COMPLETENESS_TOL):
    """Outcome probabilities and renormalized post-measurement states.

    ``psi`` is a target StateVector, or an ensemble ``[(weight, StateVector), ...]``.
    For a pure input returns ``[(p_m, post_m), ...]``; for an ensemble the
    post-state is itself an ensemble. Outcomes with zero probability get ``None``.
    """
    residual = ks.completeness_residual()
    if residual > tol:
        raise ValueError(f"Kraus set is incomplete (residual {residual:.3e})")
    if isinstance(psi, StateVector):
        out = []
        for M in ks.operators:
            v = M.matrix @ psi.amplitudes
            p = float(np.vdot(v, v).real)
            post = StateVector(psi.space, v / np.sqrt(p)) if p > 0 else None
            out.append((p, post))
        return out
    ensemble = [(float(w), s) for w, s in psi]
    total = sum(w for w, _ in ensemble)
    if abs(total - 1) > 1e-10:
        raise ValueError("ensemble weights must sum to one")
    out = []
    for M in ks.operators:
        parts = []
        for w, s in ensemble:
            v = M.matrix @ s.amplitudes
            q = float(np.vdot(v, v).real)
            if q > 0:
                parts.append((w * q, StateVector(s.space, v / np.sqrt(q))))
        p = sum(q for q, _ in parts)
        out.append((p, [(q / p, s) for q, s in parts] if p > 0 else None))
    return out


# Ancilla-free protocols ----------------------------------------------------


def rotated_expectations(task: CorrelationTask, theta: float) -> tuple[float, float]:
    """<O2> at t2 after rotating psi(t1) by exp(-i theta O1) and exp(+i theta O1)."""
    task.require_ordered()
    psi1 = task.state_at(task.t1)
    vals = []
    for angle in (theta, -theta):
        v = hermitian_propagator(task.O1, angle).matrix @ psi1
        v = _evolve_vec(v, task.schedule, task.t2, task.t1)
        vals.append(float(np.vdot(v, task.O2.matrix @ v).real))
    return vals[0], vals[1]


def ancilla_free_im(task: CorrelationTask, theta: float) -> float:
    """[<O2>_{-theta} - <O2>_{+theta}] / (4 sin theta).

    Exact for all theta when O1 has eigenvalues +-1/2; otherwise accurate to
    O(theta^2).
    """
    if theta == 0 or np.sin(theta) == 0:
        raise ValueError("rotation angle must be nonzero (and not a multiple of pi)")
    plus, minus = rotated_expectations(task, theta)
    return (minus - plus) / (4 * np.sin(theta))


def projective_joint_distribution(task: CorrelationTask):
    """P(e_w, e_o): projective O1 readout at t1 with collapse, then O2 readout at t2."""
    task.require_ordered()
    e, P1, P2 = two_point_spectrum(task.O1)
    psi1 = task.state_at(task.t1)
    branches = np.stack([P1.matrix @ psi1, P2.matrix @ psi1])
    branches = _evolve_vec(branches.T, task.schedule, task.t2, task.t1).T
    readout = target_readout(task.O2)
    table = _projected_norms(branches, readout)
    return OutcomeDistribution((np.array([e, -e]), readout.eigenvalues), table)


def ancilla_free_re(task: CorrelationTask) -> float:
    """Correlated eigenvalues of two projective measurements; equals Re C for two-point-spectrum O1."""
    return weighted_correlation(projective_joint_distribution(task))
