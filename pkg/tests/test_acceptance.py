"""Acceptance criteria 1-8 at their stated tolerances.

Each test records a one-line summary; the terminal summary prints one
PASS/FAIL line per criterion. Run directly with ``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest
from conftest import tfim_task

from nimp.core import HilbertSpace, Operator, StateVector, spin_operator
from nimp.lattice import CorrelationTask, Schedule, exact_correlation, site_spin, spin_product, tfim_hamiltonian
from nimp.povm import (
    ancilla_free_im,
    ancilla_free_re,
    apply_measurement,
    kraus_im_closed_form,
    kraus_re_closed_form,
    kraus_re_projective_point,
    kraus_set,
    two_point_spectrum,
)
from nimp.protocol import (
    DEFERRED,
    IMMEDIATE,
    AncillaSpec,
    CouplingSpec,
    NimpRun,
    ancilla_moment,
    couple,
    coupling_generator,
    estimate_pair,
    f_prefactor,
    outcome_distribution,
    part_estimate,
    target_readout,
    weighted_correlation,
)
from nimp.sampler import Estimator, estimate_from_shots, lambda_scan, sample
from nimp.simultaneous import (
    TwoAncillaRun,
    final_state,
    generate_valid_ancilla_states,
    marginalize,
    simultaneous_estimate,
    spin_coherent_weights,
    two_ancilla_distribution,
    validate_sim_ancilla,
)

RATIO_WINDOW = (0.3, 0.7)


def record(request, k, ok, detail):
    request.node.user_properties.append(("criterion", k))
    request.node.user_properties.append(("detail", detail))
    assert ok, detail


def random_hermitian(rng, d, space=None):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A = A + A.conj().T
    return Operator(space, A) if space is not None else Operator.local(A)


def random_task(rng):
    space = HilbertSpace.spins(3)
    H = tfim_hamiltonian(3, J=rng.uniform(-2, 2), g=rng.uniform(-2, 2))
    H = H + 0.3 * random_hermitian(rng, 8, space)
    t1, t2 = np.sort(rng.uniform(0, 2, size=2))
    return CorrelationTask(
        StateVector.random(space, rng),
        random_hermitian(rng, 8, space),
        t1,
        random_hermitian(rng, 8, space),
        t2,
        Schedule.constant(H),
    )


def in_window(r):
    return RATIO_WINDOW[0] <= r <= RATIO_WINDOW[1]


@pytest.mark.criterion(1)
def test_criterion_1_hermitian_swap(request):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = max(abs(exact_correlation(t) - np.conj(exact_correlation(t.swapped()))) for t in (random_task(rng) for _ in range(50)))
    elapsed = time.perf_counter() - start
    record(request, 1, worst < 1e-12 and elapsed < 10, f"max swap residual {worst:.2e} (tol 1e-12), {elapsed:.2f}s")


@pytest.mark.criterion(2)
def test_criterion_2_first_order_convergence(request):
    start = time.perf_counter()
    ratios = {}
    for O1 in ("s1z", "mz"):
        task = tfim_task(O1)
        C = exact_correlation(task)
        for zeta in (0.5, 1):
            e1, e2 = (abs(estimate_pair(task, lam, zeta)[0] - C) for lam in (1e-2, 5e-3))
            ratios[(O1, zeta)] = e2 / e1
    elapsed = time.perf_counter() - start
    ok = all(in_window(r) for r in ratios.values()) and elapsed < 30
    detail = ", ".join(f"{o}/zeta={z}: {r:.4f}" for (o, z), r in ratios.items())
    record(request, 2, ok, f"err(5e-3)/err(1e-2) in {list(RATIO_WINDOW)}? {detail}; {elapsed:.2f}s")


@pytest.mark.criterion(3)
def test_criterion_3_prefactors(request):
    start = time.perf_counter()
    worst = 0.0
    for zeta in (0.5, 1, 1.5, 2, 2.5):
        anc = AncillaSpec.equal_superposition(zeta)
        worst = max(
            worst,
            abs(f_prefactor(1, zeta) - ancilla_moment(anc, coupling_generator(1, zeta)).real),
            abs(f_prefactor(2, zeta) - ancilla_moment(anc, coupling_generator(2, zeta)).imag),
        )
    half = max(abs(f_prefactor(1, 0.5) - 0.25), abs(f_prefactor(2, 0.5) - 0.25))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and half < 1e-12 and elapsed < 1
    record(request, 3, ok, f"max |f - direct| {worst:.2e}, zeta=1/2 deviation from 1/4 {half:.1e}, {elapsed:.3f}s")


@pytest.mark.criterion(4)
def test_criterion_4_deferred_equals_immediate(request):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(20):
        task = random_task(rng)
        anc = AncillaSpec.equal_superposition([0.5, 1, 1.5][k % 3], "xyz"[k % 3])
        coupling = CouplingSpec(1 + k % 2, rng.uniform(1e-3, 1.0))
        a = outcome_distribution(NimpRun(task, anc, coupling, IMMEDIATE)).table
        b = outcome_distribution(NimpRun(task, anc, coupling, DEFERRED)).table
        worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - start
    record(request, 4, worst < 1e-11 and elapsed < 20, f"max |P_imm - P_def| {worst:.2e} over 20 runs, {elapsed:.2f}s")


@pytest.mark.criterion(5)
def test_criterion_5_simultaneous(request):
    start = time.perf_counter()
    lam = 1e-3
    parts = []
    agree_ok = True
    ratio_ok = True
    for O1 in ("s1z", "mz"):
        task = tfim_task(O1)
        C = exact_correlation(task)
        im_est, re_est = simultaneous_estimate(TwoAncillaRun.standard(task, lam))
        _, c1, c2 = estimate_pair(task, lam)
        im_sep, re_sep = part_estimate(c1, 1, lam), part_estimate(c2, 2, lam)
        d_im, b_im = abs(im_est - im_sep), abs(im_sep - C.imag)
        d_re, b_re = abs(re_est - re_sep), abs(re_sep - C.real)
        agree = d_im <= 2 * b_im and d_re <= 2 * b_re
        agree_ok &= agree
        errs = {lam_: simultaneous_estimate(TwoAncillaRun.standard(task, lam_)) for lam_ in (1e-2, 5e-3)}
        r_im = abs(errs[5e-3][0] - C.imag) / abs(errs[1e-2][0] - C.imag)
        r_re = abs(errs[5e-3][1] - C.real) / abs(errs[1e-2][1] - C.real)
        ratio_ok &= in_window(r_im) and in_window(r_re)
        parts.append(
            f"{O1}: |im-sep| {d_im:.1e} vs 2*bias {2 * b_im:.1e}, |re-sep| {d_re:.1e} vs 2*bias {2 * b_re:.1e},"
            f" ratios im {r_im:.3f} re {r_re:.3f}"
        )

    task = tfim_task("mz")
    run = TwoAncillaRun.standard(task, 0.2)
    dist = two_ancilla_distribution(run)
    X = final_state(run)
    proj = [P.matrix for P in target_readout(task.O2).projectors]
    marg_res = 0.0
    for keep in (1, 2):
        marg = marginalize(dist, keep).table
        for m in range(2):
            rows = X[m] if keep == 1 else X[:, m]
            direct = [sum(np.vdot(v, P @ v).real for v in rows) for P in proj]
            marg_res = max(marg_res, float(np.max(np.abs(marg[m] - direct))))

    rng = np.random.default_rng(5)
    states = [generate_valid_ancilla_states(1, spin_coherent_weights(1), [0, 0, 0])]
    for zeta in (0.5, 1, 1.5, 2, 2.5):
        d = int(2 * zeta + 1)
        for _ in range(5):
            r = rng.uniform(0.1, 1, d)
            r = (r + r[::-1]) / np.linalg.norm(r + r[::-1])
            states.append(generate_valid_ancilla_states(zeta, r, rng.integers(-4, 5, d)))
    gen_ok = all(validate_sim_ancilla(s, 1e-12).valid for s in states)

    elapsed = time.perf_counter() - start
    ok = agree_ok and ratio_ok and marg_res < 1e-12 and gen_ok and elapsed < 60
    detail = (
        f"agreement {'ok' if agree_ok else 'violated'}; ratio in {list(RATIO_WINDOW)} {'ok' if ratio_ok else 'violated'};"
        f" marginal residual {marg_res:.1e}; {len(states)} generated states valid: {gen_ok}; {elapsed:.2f}s | "
        + " | ".join(parts)
    )
    record(request, 5, ok, detail)


@pytest.mark.criterion(6)
def test_criterion_6_povm_equivalence(request):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    space = HilbertSpace.spins(2)
    equiv, complete = 0.0, 0.0
    for _ in range(20):
        d = int(rng.integers(2, 5))
        B = random_hermitian(rng, d)
        phi = rng.normal(size=d) + 1j * rng.normal(size=d)
        phi /= np.linalg.norm(phi)
        lam = rng.uniform(0.01, 2.0)
        O1 = random_hermitian(rng, 4, space)
        psi = StateVector.random(space, rng)
        ks = kraus_set(B, phi, lam, O1)
        complete = max(complete, ks.completeness_residual())
        joint = StateVector(HilbertSpace((d,)) * space, np.kron(phi, psi.amplitudes))
        rows = couple(joint, B, O1, lam).amplitudes.reshape(d, -1)
        for (p, post), row in zip(apply_measurement(psi, ks), rows):
            q = float(np.vdot(row, row).real)
            equiv = max(equiv, abs(p - q), float(np.max(np.abs(post.amplitudes - row / np.sqrt(q)))))

    closed = 0.0
    phi_im = np.array([np.sqrt(0.4), np.sqrt(0.6) * np.exp(0.7j)])
    eq = np.array([1.0, 1.0]) / np.sqrt(2)
    for O1 in (site_spin(HilbertSpace.spins(3), 0, "z"), random_hermitian(rng, 4, space)):
        for lam in (0.05, 0.8):
            pairs = zip(kraus_set(spin_operator(0.5, "z"), phi_im, lam, O1).operators, kraus_im_closed_form(phi_im, lam, O1).operators)
            pairs = list(pairs) + list(zip(kraus_set(spin_operator(0.5, "y"), eq, lam, O1).operators, kraus_re_closed_form(lam, O1).operators))
            closed = max(closed, max(float(np.max(np.abs(a.matrix - b.matrix))) for a, b in pairs))

    point = 0.0
    for O1 in (site_spin(space, 0, "z"), spin_product(space, [(0, "z"), (1, "z")]), spin_product(space, [(0, "x"), (1, "y")])):
        e, P1, P2 = two_point_spectrum(O1)
        derived = kraus_set(spin_operator(0.5, "y"), eq, np.pi / (2 * e), O1)
        special = kraus_re_projective_point(O1)
        for ks in (derived, special):
            point = max(point, float(np.max(np.abs(ks[0.5].matrix - P2.matrix))), float(np.max(np.abs(ks[-0.5].matrix - P1.matrix))))

    elapsed = time.perf_counter() - start
    ok = equiv < 1e-11 and complete < 1e-11 and closed < 1e-12 and point < 1e-12 and elapsed < 30
    record(
        request,
        6,
        ok,
        f"equivalence {equiv:.1e}, completeness {complete:.1e}, closed forms {closed:.1e}, projective point {point:.1e}, {elapsed:.2f}s",
    )


@pytest.mark.criterion(7)
def test_criterion_7_ancilla_free(request):
    start = time.perf_counter()
    space = HilbertSpace.spins(3)
    im_res = max(abs(ancilla_free_im(t, 1.0) - exact_correlation(t).imag) for t in (tfim_task(), tfim_task(t2=2.0), tfim_task(psi="up")))
    re_res = 0.0
    for O1 in (site_spin(space, 0, "z"), spin_product(space, [(0, "x"), (1, "x")])):
        for psi in ("coherent", "up"):
            t = tfim_task(O1, psi)
            re_res = max(re_res, abs(ancilla_free_re(t) - exact_correlation(t).real))
    elapsed = time.perf_counter() - start
    ok = im_res < 1e-11 and re_res < 1e-11 and elapsed < 20
    record(request, 7, ok, f"Im residual at theta=1.0 {im_res:.1e}, Re residual {re_res:.1e}, {elapsed:.2f}s")


@pytest.mark.criterion(8)
def test_criterion_8_sampling(request):
    start = time.perf_counter()
    task = tfim_task("mz")
    lam = 0.1
    dist = outcome_distribution(NimpRun(task, AncillaSpec.equal_superposition(), CouplingSpec(1, lam)))
    est_def = Estimator.nimp(1, lam)
    exact = weighted_correlation(dist) / est_def.scale
    est = estimate_from_shots(sample(dist, 10**5, 8), est_def)
    z = abs(est.value - exact) / est.std_error
    scan = lambda_scan(task, np.logspace(-3, 0, 8), 10**4, 0)
    elapsed = time.perf_counter() - start
    ok = z < 5 and scan.has_interior_minimum() and elapsed < 300
    record(
        request,
        8,
        ok,
        f"Im estimate {z:.2f} std errors from exact; scan argmin index {scan.argmin} of 8"
        f" (lambda*={scan.best_lambda:.3g}); {elapsed:.2f}s",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
