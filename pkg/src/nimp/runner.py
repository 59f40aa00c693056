"""Execute an ExperimentConfig and write its result document and CSV tables."""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_task
from .core import StateVector
from .lattice import CorrelationTask, exact_correlation
from .povm import (
    ancilla_free_im,
    ancilla_free_re,
    apply_measurement,
    kraus_im_closed_form,
    kraus_re_closed_form,
    kraus_re_projective_point,
    kraus_set,
    projective_joint_distribution,
    two_point_spectrum,
)
from .protocol import (
    IMMEDIATE,
    AncillaSpec,
    CouplingSpec,
    NimpRun,
    OutcomeDistribution,
    ancilla_branches,
    ancilla_state,
    coupling_strength,
    part_estimate,
    reconstruct,
    run_protocol,
)
from .sampler import (
    Estimator,
    derive_seed,
    estimate_from_shots,
    lambda_scan,
    sample,
    sample_projective_trajectories,
)
from .simultaneous import TwoAncillaRun, estimate_from_distribution, two_ancilla_distribution

SCAN_HEADER = ["lambda", "abs_error", "std_error", "n", "seed"]


def cjson(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def write_distribution_csv(path: Path, dist: OutcomeDistribution, names: list[str]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["probability"])
        for label, p in zip(dist.labels, dist.probabilities):
            writer.writerow([repr(float(x)) for x in label] + [repr(float(p))])


def write_scan_csv(path: Path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCAN_HEADER)
        for r in rows:
            writer.writerow([repr(r.lam), repr(float(r.abs_error)), repr(float(r.std_error)), "" if r.n is None else r.n, r.seed])


class Context:
    def __init__(self, cfg: ExperimentConfig, out_dir: Path, threads: int):
        self.cfg = cfg
        self.out_dir = out_dir
        self.threads = threads
        self.files: list[str] = []

    def table(self, name: str, dist: OutcomeDistribution, columns: list[str]):
        if self.cfg.output.distributions:
            path = self.out_dir / f"distribution_{name}.csv"
            write_distribution_csv(path, dist, columns)
            self.files.append(path.name)


def _run_oracle(ctx: Context, task: CorrelationTask) -> dict:
    return {"C": cjson(exact_correlation(task))}


def _run_nimp(ctx: Context, task: CorrelationTask) -> dict:
    p = ctx.cfg.protocol
    anc = AncillaSpec.equal_superposition(p.zeta, p.axis)
    variants = (1, 2) if p.variant == "both" else (int(p.variant),)
    out: dict = {"variants": {}}
    sampled_raw = {}
    for v in variants:
        run = NimpRun(task, anc, CouplingSpec(v, p.lam, p.mode), p.readout)
        c, dist = run_protocol(run)
        entry = {
            "weighted_correlation": c,
            "estimate": part_estimate(c, v, p.lam, p.zeta),
            "part": "im" if v == 1 else "re",
            "total_probability": dist.total(),
            "coupling_strength": coupling_strength(run.B, task.O1, p.lam),
        }
        ctx.table(f"variant{v}", dist, ["m_ancilla", "e_target"])
        if p.n is not None:
            rec = sample(dist, p.n, derive_seed(p.seed, v), {"protocol": "nimp", "variant": v}, ctx.threads)
            est = estimate_from_shots(rec, Estimator.nimp(v, p.lam, p.zeta), p.error_method, boot_seed=p.seed)
            entry["sampled"] = {"estimate": est.value, "std_error": est.std_error, "weighted_correlation": est.raw}
            sampled_raw[v] = est.raw
        out["variants"][str(v)] = entry
    if len(variants) == 2:
        exact_c = reconstruct(out["variants"]["1"]["weighted_correlation"], out["variants"]["2"]["weighted_correlation"], p.lam, p.zeta)
        out["C_lambda"] = cjson(exact_c)
        if p.n is not None:
            out["C_lambda_sampled"] = cjson(reconstruct(sampled_raw[1], sampled_raw[2], p.lam, p.zeta))
    return out


def _run_simul(ctx: Context, task: CorrelationTask) -> dict:
    p = ctx.cfg.protocol
    lam2 = p.lam if p.lambda2 is None else p.lambda2
    run = TwoAncillaRun.standard(task, p.lam, lam2, p.zeta)
    dist = two_ancilla_distribution(run)
    est = estimate_from_distribution(run, dist)
    ctx.table("three_way", dist, ["m1", "m2", "e_target"])
    out = {
        "im_est": est.im_est,
        "re_est": est.re_est,
        "C_lambda": cjson(est.value),
        "c1": est.c1,
        "c2": est.c2,
        "total_probability": dist.total(),
        "commutation_residual": run.commutation_residual(),
    }
    if p.n is not None:
        rec = sample(dist, p.n, p.seed, {"protocol": "simul"}, ctx.threads)
        im = estimate_from_shots(rec, Estimator(est.im_prefactor, p.lam, keep=1), p.error_method, boot_seed=p.seed)
        re = estimate_from_shots(rec, Estimator(est.re_prefactor, lam2, keep=2), p.error_method, boot_seed=p.seed)
        out["sampled"] = {
            "im_est": im.value,
            "im_std_error": im.std_error,
            "re_est": re.value,
            "re_std_error": re.std_error,
        }
    return out


def _run_af_im(ctx: Context, task: CorrelationTask) -> dict:
    p = ctx.cfg.protocol
    return {"im_est": ancilla_free_im(task, p.theta), "theta": p.theta}


def _run_af_re(ctx: Context, task: CorrelationTask) -> dict:
    p = ctx.cfg.protocol
    out = {"re_est": ancilla_free_re(task)}
    if p.n is not None:
        if p.trajectory:
            rec = sample_projective_trajectories(task, p.n, p.seed, ctx.threads)
        else:
            rec = sample(projective_joint_distribution(task), p.n, p.seed, {"protocol": "ancilla-free-re"}, ctx.threads)
        est = estimate_from_shots(rec, Estimator.raw(), p.error_method, boot_seed=p.seed)
        out["sampled"] = {"re_est": est.value, "std_error": est.std_error, "mode": "trajectory" if p.trajectory else "distribution"}
    return out


def povm_check(task: CorrelationTask, lam: float, zeta, variant: int, axis: str = "z") -> dict:
    """Residuals of the Kraus description against the full ancilla simulation."""
    anc = AncillaSpec.equal_superposition(zeta, axis)
    run = NimpRun(task, anc, CouplingSpec(variant, lam), IMMEDIATE)
    ks = kraus_set(run.B, ancilla_state(anc), lam, task.O1, anc.basis, tuple(anc.zeta.m_values()))
    psi1 = StateVector(task.space, task.state_at(task.t1))
    measured = apply_measurement(psi1, ks, tol=np.inf)
    branches = ancilla_branches(run)
    prob_res, state_res = 0.0, 0.0
    for (p, post), chi in zip(measured, branches):
        q = float(np.vdot(chi, chi).real)
        prob_res = max(prob_res, abs(p - q))
        if q > 1e-14 and post is not None:
            state_res = max(state_res, float(np.max(np.abs(post.amplitudes - chi / np.sqrt(q)))))
    out = {
        "completeness_residual": ks.completeness_residual(),
        "outer_completeness_residual": ks.outer_completeness_residual(),
        "equivalence_residual": max(prob_res, state_res),
        "probability_residual": prob_res,
        "post_state_residual": state_res,
        "kraus": ks.to_json(),
    }
    if anc.zeta.twice_value == 1 and axis == "z":
        closed = kraus_im_closed_form(anc.coefficients, lam, task.O1) if variant == 1 else kraus_re_closed_form(lam, task.O1)
        out["closed_form_residual"] = max(
            float(np.max(np.abs(a.matrix - b.matrix))) for a, b in zip(ks.operators, closed.operators)
        )
    try:
        e, P1, P2 = two_point_spectrum(task.O1)
    except ValueError:
        pass
    else:
        point = kraus_re_projective_point(task.O1)
        out["projective_point"] = {
            "e": e,
            "lambda": float(np.pi / (2 * e)),
            "residual": max(
                float(np.max(np.abs(point[0.5].matrix - P2.matrix))),
                float(np.max(np.abs(point[-0.5].matrix - P1.matrix))),
            ),
        }
    return out


def _run_povm(ctx: Context, task: CorrelationTask) -> dict:
    p = ctx.cfg.protocol
    variants = (1, 2) if p.variant == "both" else (int(p.variant),)
    checks = {str(v): povm_check(task, p.lam, p.zeta, v, p.axis) for v in variants}
    tol = ctx.cfg.tolerances
    passed = all(
        c["completeness_residual"] < tol.completeness
        and c["equivalence_residual"] < tol.equivalence
        and c.get("closed_form_residual", 0.0) < tol.closed_form
        for c in checks.values()
    )
    return {
        "variants": checks,
        "completeness_residual": max(c["completeness_residual"] for c in checks.values()),
        "equivalence_residual": max(c["equivalence_residual"] for c in checks.values()),
        "passed": passed,
    }


def _run_scan(ctx: Context, task: CorrelationTask) -> dict:
    p = ctx.cfg.protocol
    result = lambda_scan(task, p.grid, p.n, p.seed, p.zeta, ctx.threads)
    path = ctx.out_dir / ctx.cfg.output.scan_csv
    write_scan_csv(path, result.rows)
    ctx.files.append(path.name)
    return {
        "rows": [
            {"lambda": r.lam, "abs_error": r.abs_error, "std_error": r.std_error, "estimate": cjson(r.estimate)}
            for r in result.rows
        ],
        "best_lambda": result.best_lambda,
        "interior_minimum": result.has_interior_minimum(),
    }


RUNNERS = {
    "oracle": _run_oracle,
    "nimp": _run_nimp,
    "simul": _run_simul,
    "ancilla-free-im": _run_af_im,
    "ancilla-free-re": _run_af_re,
    "povm-check": _run_povm,
    "lambda-scan": _run_scan,
}


def execute(cfg: ExperimentConfig, output_dir: str | Path = ".", threads: int = 1) -> dict:
    """Run the configured protocol; writes the result JSON and returns the document."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    task = build_task(cfg)
    ctx = Context(cfg, out_dir, threads)
    result = RUNNERS[cfg.protocol.name](ctx, task)
    p = cfg.protocol
    doc = {
        "schema_version": cfg.schema_version,
        "protocol": p.name,
        "result": result,
        "metadata": {
            "seed": p.seed,
            "lambda": p.lam,
            "n": p.n,
            "version": __version__,
            "files": sorted(ctx.files),
        },
        "config": cfg.to_dict(),
    }
    if p.compare_oracle and p.name != "oracle":
        doc["oracle"] = cjson(exact_correlation(task))
    doc["timing"] = {"wall_time_s": time.perf_counter() - start}
    with open(out_dir / cfg.output.result, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc
