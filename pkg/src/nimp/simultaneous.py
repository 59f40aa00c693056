"""Two ancillas coupled simultaneously at t1, giving Im C and Re C from one distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Operator, as_spin, expectation, spin_operator
from .lattice import CorrelationTask, evolve_target
from .protocol import (
    EXACT,
    AncillaSpec,
    OutcomeDistribution,
    ThreeWayDistribution,
    _couple_array,
    _projected_norms,
    ancilla_state,
    target_readout,
    weighted_correlation,
)

VALID_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TwoAncillaRun:
    task: CorrelationTask
    phi1: AncillaSpec
    phi2: AncillaSpec
    lam1: float
    lam2: float
    B1: Operator = None
    B2: Operator = None
    order: tuple = (1, 2)

    def __post_init__(self):
        self.task.require_ordered()
        for k, phi in ((1, self.phi1), (2, self.phi2)):
            if phi.axis != "z":
                raise ValueError(f"ancilla {k} must be read out in the S^z eigenbasis")
        if self.B1 is None:
            object.__setattr__(self, "B1", spin_operator(self.phi1.zeta, "z"))
        if self.B2 is None:
            object.__setattr__(self, "B2", spin_operator(self.phi2.zeta, "y"))
        if self.B1.dim != self.phi1.dim or self.B2.dim != self.phi2.dim:
            raise ValueError("coupling operators do not match the ancilla dimensions")
        if sorted(self.order) != [1, 2]:
            raise ValueError(f"coupling order must be a permutation of (1, 2), got {self.order}")

    @classmethod
    def standard(cls, task: CorrelationTask, lam1: float, lam2: float | None = None, zeta=0.5) -> "TwoAncillaRun":
        """Equal-superposition ancillas with B1 = S^z and B2 = S^y."""
        phi = AncillaSpec.equal_superposition(zeta)
        return cls(task, phi, phi, lam1, lam1 if lam2 is None else lam2)

    def _coupled(self, order=None) -> np.ndarray:
        task = self.task
        X = np.einsum(
            "a,b,s->abs",
            ancilla_state(self.phi1).amplitudes,
            ancilla_state(self.phi2).amplitudes,
            task.state_at(task.t1),
        )
        couplings = {1: (self.B1.matrix, 0, self.lam1), 2: (self.B2.matrix, 1, self.lam2)}
        for k in order or self.order:
            B, axis, lam = couplings[k]
            X = _couple_array(X, B, axis, task.O1, lam, EXACT)
        return X

    def commutation_residual(self, rng: np.random.Generator | None = None) -> float:
        """Max difference between the two coupling orders applied to a random joint state."""
        rng = np.random.default_rng(0) if rng is None else rng
        shape = (self.phi1.dim, self.phi2.dim, self.task.O1.dim)
        X = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        X /= np.linalg.norm(X)
        c1 = (self.B1.matrix, 0, self.lam1)
        c2 = (self.B2.matrix, 1, self.lam2)
        a = _couple_array(_couple_array(X, *c1[:2], self.task.O1, c1[2], EXACT), *c2[:2], self.task.O1, c2[2], EXACT)
        b = _couple_array(_couple_array(X, *c2[:2], self.task.O1, c2[2], EXACT), *c1[:2], self.task.O1, c1[2], EXACT)
        return float(np.max(np.abs(a - b)))


def final_state(run: TwoAncillaRun, order=None) -> np.ndarray:
    """Joint state at t2 as an array of shape (d1, d2, d_target)."""
    task = run.task
    return evolve_target(run._coupled(order), task.schedule, task.t2, task.t1)


def two_ancilla_distribution(run: TwoAncillaRun, order=None) -> ThreeWayDistribution:
    """P(m1, m2, e_o) with both ancillas and the target read out at t2."""
    X = final_state(run, order)
    readout = target_readout(run.task.O2)
    d1, d2, dS = X.shape
    table = _projected_norms(X.reshape(d1 * d2, dS), readout).reshape(d1, d2, -1)
    return ThreeWayDistribution((run.phi1.zeta.m_values(), run.phi2.zeta.m_values(), readout.eigenvalues), table)


def marginalize(dist: ThreeWayDistribution, keep: int) -> OutcomeDistribution:
    """Sum out the other ancilla; ``keep`` is 1 or 2."""
    if keep not in (1, 2):
        raise ValueError(f"keep must be 1 or 2, got {keep!r}")
    drop = 1 if keep == 1 else 0
    axes = (dist.axes[keep - 1], dist.axes[2])
    return OutcomeDistribution(axes, dist.table.sum(axis=drop), exact=dist.exact)


@dataclass(frozen=True)
class SimAncillaReport:
    balanced_z: bool
    zero_y: bool
    phase_condition: bool
    sz: float
    sy: float

    @property
    def valid(self) -> bool:
        return self.balanced_z and self.zero_y


def validate_sim_ancilla(phi: AncillaSpec, tol: float = VALID_TOL) -> SimAncillaReport:
    """Check <S^z> = 0 and <S^y> = 0, and the sufficient symmetric-weights/real-relative-phase condition."""
    state = ancilla_state(phi)
    sz = expectation(state, spin_operator(phi.zeta, "z")).real
    sy = expectation(state, spin_operator(phi.zeta, "y")).real
    r = np.asarray(phi.r)
    dtheta = np.diff(np.asarray(phi.theta))
    # only adjacent pairs with nonzero weight constrain the relative phase
    active = (r[:-1] > tol) & (r[1:] > tol)
    k = dtheta / np.pi
    phases_ok = bool(np.all(np.abs(k[active] - np.round(k[active])) < 1e-9))
    return SimAncillaReport(
        balanced_z=abs(sz) < tol,
        zero_y=abs(sy) < tol,
        phase_condition=phi.balanced and phases_ok,
        sz=float(sz),
        sy=float(sy),
    )


def spin_coherent_weights(zeta) -> np.ndarray:
    """Moduli of the equatorial spin-coherent state, sqrt(binom(2 zeta, zeta - m)) / 2^zeta."""
    from math import comb

    zeta = as_spin(zeta)
    n = zeta.twice_value
    return np.array([np.sqrt(comb(n, k)) for k in range(n + 1)]) / 2 ** (n / 2)


def generate_valid_ancilla_states(zeta, r, k) -> AncillaSpec:
    """State sum_m (-1)^{k_m} r_m |m> with symmetric weights r_m = r_{-m}."""
    zeta = as_spin(zeta)
    r = np.asarray(r, dtype=float)
    k = np.asarray(k, dtype=int)
    if r.shape != (zeta.dim,) or k.shape != (zeta.dim,):
        raise ValueError(f"need {zeta.dim} weights and signs for spin {zeta}")
    if np.max(np.abs(r - r[::-1])) > VALID_TOL:
        raise ValueError("weights must satisfy r_m = r_{-m}")
    return AncillaSpec(zeta, "z", tuple(r), tuple(np.pi * (k % 2)))


@dataclass(frozen=True)
class SimultaneousEstimate:
    im_est: float
    re_est: float
    c1: float
    c2: float
    im_prefactor: float
    re_prefactor: float

    @property
    def value(self) -> complex:
        return complex(self.re_est, self.im_est)


def simultaneous_prefactors(run: TwoAncillaRun) -> tuple[float, float]:
    """Divisors turning C_1 into Im C and C_2 into Re C.

    With g_k = <B_k S^z>_{phi_k}, C_1 ~ -2 lam1 Re(g1) Im C needs g1 real and
    C_2 ~ -2 lam2 Im(g2) Re C needs g2 imaginary. Equal superpositions give
    -lam/2 for both.
    """
    g = []
    for phi, B in ((run.phi1, run.B1), (run.phi2, run.B2)):
        state = ancilla_state(phi)
        g.append(expectation(state, B @ spin_operator(phi.zeta, "z")))
    g1, g2 = g
    if abs(g1.imag) > VALID_TOL or abs(g1.real) <= VALID_TOL:
        raise ValueError(f"<B1 S^z> = {g1:.3g} must be real and nonzero to isolate Im C")
    if abs(g2.real) > VALID_TOL or abs(g2.imag) <= VALID_TOL:
        raise ValueError(f"<B2 S^z> = {g2:.3g} must be imaginary and nonzero to isolate Re C")
    return -2 * run.lam1 * g1.real, -2 * run.lam2 * g2.imag


def check_estimator_preconditions(run: TwoAncillaRun):
    if run.lam1 == 0 or run.lam2 == 0:
        raise ValueError("lambda must be nonzero for both ancillas")
    for k, phi in ((1, run.phi1), (2, run.phi2)):
        sz = expectation(ancilla_state(phi), spin_operator(phi.zeta, "z")).real
        if abs(sz) > VALID_TOL:
            raise ValueError(f"ancilla {k} has <S^z> = {sz:.3g}; it must vanish")
    b2 = expectation(ancilla_state(run.phi2), run.B2).real
    if abs(b2) > VALID_TOL:
        raise ValueError(f"ancilla 2 has <B2> = {b2:.3g}; the cross term only cancels when it vanishes")


def estimate_from_distribution(run: TwoAncillaRun, dist: ThreeWayDistribution) -> SimultaneousEstimate:
    check_estimator_preconditions(run)
    im_pref, re_pref = simultaneous_prefactors(run)
    c1 = weighted_correlation(marginalize(dist, 1))
    c2 = weighted_correlation(marginalize(dist, 2))
    return SimultaneousEstimate(c1 / im_pref, c2 / re_pref, c1, c2, im_pref, re_pref)


def simultaneous_estimate(run: TwoAncillaRun) -> tuple[float, float]:
    """(im_est, re_est) from the exact three-way distribution."""
    check_estimator_preconditions(run)
    est = estimate_from_distribution(run, two_ancilla_distribution(run))
    return est.im_est, est.re_est
