"""
Finite-shot sampling of protocol outcome distributions.

Randomness is counter-based: shot ``i`` draws its uniform from Philox keyed by
the seed, at a counter fixed by ``i`` alone. Shots are processed in
fixed-size blocks that may run on any number of threads; the counts do not
depend on how the blocks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lattice import CorrelationTask, exact_correlation
from .povm import projective_joint_distribution
from .protocol import (
    AncillaSpec,
    CouplingSpec,
    NimpRun,
    OutcomeDistribution,
    f_prefactor,
    outcome_distribution,
    reconstruct,
    weighted_correlation,
)

BLOCK = 1 << 16
NORM_TOL = 1e-10


def _block_uniforms(seed: int, block: int, size: int, stream: int = 0) -> np.ndarray:
    # counter words: [draw index, 0, stream, block]
    bitgen = np.random.Philox(key=seed & (2**64 - 1), counter=[0, 0, stream, block])
    return np.random.Generator(bitgen).random(size)


def shot_uniforms(seed: int, n: int, stream: int = 0, threads: int = 1) -> np.ndarray:
    """n uniforms in [0, 1), one per shot, reproducible for (seed, stream)."""
    n_blocks = -(-n // BLOCK)
    sizes = [min(BLOCK, n - b * BLOCK) for b in range(n_blocks)]
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: _block_uniforms(seed, b, sizes[b], stream), range(n_blocks)))
    else:
        parts = [_block_uniforms(seed, b, sizes[b], stream) for b in range(n_blocks)]
    return np.concatenate(parts) if parts else np.empty(0)


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(probs) - 1)


@dataclass(frozen=True, eq=False)
class ShotRecord:
    descriptor: dict
    seed: int
    n: int
    axes: tuple
    counts: np.ndarray  # same shape as the distribution table

    @property
    def labels(self) -> list[tuple]:
        return OutcomeDistribution(self.axes, np.zeros_like(self.counts, dtype=float)).labels

    def count_map(self) -> dict[tuple, int]:
        return {lab: int(c) for lab, c in zip(self.labels, self.counts.reshape(-1))}

    def frequencies(self) -> OutcomeDistribution:
        return OutcomeDistribution(self.axes, self.counts / self.n)


def sample(dist: OutcomeDistribution, n: int, seed: int, descriptor: dict | None = None, threads: int = 1) -> ShotRecord:
    """Multinomial draw of ``n`` outcomes from ``dist``."""
    if n < 1:
        raise ValueError("shot count must be at least 1")
    probs = dist.probabilities
    if np.any(probs < 0) or abs(probs.sum() - 1) > NORM_TOL:
        raise ValueError(f"distribution is not normalized (total {probs.sum():.12g})")
    idx = _inverse_cdf(probs, shot_uniforms(seed, n, threads=threads))
    counts = np.bincount(idx, minlength=probs.size).reshape(dist.table.shape)
    return ShotRecord(dict(descriptor or {}), int(seed), int(n), dist.axes, counts)


def sample_projective_trajectories(task: CorrelationTask, n: int, seed: int, threads: int = 1) -> ShotRecord:
    """Ancilla-free Re-part protocol shot by shot: draw the O1 outcome, collapse, then draw the O2 outcome."""
    if n < 1:
        raise ValueError("shot count must be at least 1")
    joint = projective_joint_distribution(task)
    first = joint.table.sum(axis=1)
    u1 = shot_uniforms(seed, n, stream=0, threads=threads)
    u2 = shot_uniforms(seed, n, stream=1, threads=threads)
    w = _inverse_cdf(first, u1)
    o = np.empty(n, dtype=int)
    for k in range(len(first)):
        mask = w == k
        if mask.any():
            o[mask] = _inverse_cdf(joint.table[k] / first[k], u2[mask])
    counts = np.zeros(joint.table.shape, dtype=int)
    np.add.at(counts, (w, o), 1)
    return ShotRecord({"protocol": "ancilla-free-re", "mode": "trajectory"}, int(seed), int(n), joint.axes, counts)


@dataclass(frozen=True)
class EstimateWithError:
    value: float | complex
    std_error: float
    n: int
    lam: float | None = None
    raw: float | None = None  # plug-in weighted correlation before scaling


@dataclass(frozen=True)
class Estimator:
    """How a weighted correlation maps onto a correlation part.

    ``scale`` divides the weighted correlation, e.g. -2 lam f for the
    single-ancilla protocol or -lam/2 for the simultaneous one. ``keep``
    marginalizes a three-way record onto ancilla 1 or 2 first.
    """

    scale: float
    lam: float | None = None
    keep: int | None = None

    @classmethod
    def nimp(cls, variant: int, lam: float, zeta=0.5) -> "Estimator":
        if lam == 0:
            raise ValueError("lambda must be nonzero")
        return cls(-2 * lam * f_prefactor(variant, zeta), lam)

    @classmethod
    def simultaneous(cls, part: str, lam: float) -> "Estimator":
        if lam == 0:
            raise ValueError("lambda must be nonzero")
        return cls(-lam / 2, lam, keep=1 if part == "im" else 2)

    @classmethod
    def raw(cls) -> "Estimator":
        return cls(1.0)


def _weights_and_counts(record: ShotRecord, keep: int | None):
    counts = record.counts
    axes = record.axes
    if keep is not None:
        counts = counts.sum(axis=1 if keep == 1 else 0)
        axes = (axes[keep - 1], axes[2])
    grids = np.meshgrid(*axes, indexing="ij")
    return np.prod(grids, axis=0).reshape(-1), counts.reshape(-1)


def estimate_from_shots(
    record: ShotRecord,
    estimator: Estimator,
    method: str = "delta",
    n_boot: int = 200,
    boot_seed: int = 0,
) -> EstimateWithError:
    """Plug-in estimate of the weighted correlation, scaled into a correlation part.

    The standard error is the delta-method (multinomial) error by default, or a
    parametric bootstrap over the empirical frequencies with ``method="bootstrap"``.
    """
    if record.n == 0:
        raise ValueError("no shots recorded")
    w, counts = _weights_and_counts(record, estimator.keep)
    p_hat = counts / record.n
    mean = float(np.dot(w, p_hat))
    if method == "delta":
        var = max(float(np.dot(w**2, p_hat)) - mean**2, 0.0) / record.n
        se = math.sqrt(var)
    elif method == "bootstrap":
        rng = np.random.Generator(np.random.Philox(key=boot_seed))
        boots = rng.multinomial(record.n, p_hat, size=n_boot) @ w / record.n
        se = float(np.std(boots, ddof=1))
    else:
        raise ValueError(f"unknown error method {method!r}")
    return EstimateWithError(mean / estimator.scale, se / abs(estimator.scale), record.n, estimator.lam, mean)


def derive_seed(seed: int, *path: int) -> int:
    """Independent 64-bit child seed for a position in a grid of runs."""
    return int(np.random.SeedSequence([seed & (2**64 - 1), *path]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ScanRow:
    lam: float
    abs_error: float
    std_error: float
    n: int | None
    seed: int
    estimate: complex = field(default=0j)


@dataclass(frozen=True)
class ScanResult:
    rows: tuple
    oracle: complex

    @property
    def argmin(self) -> int:
        return int(np.argmin([r.abs_error for r in self.rows]))

    @property
    def best_lambda(self) -> float:
        return self.rows[self.argmin].lam

    def has_interior_minimum(self) -> bool:
        return 0 < self.argmin < len(self.rows) - 1


def reconstruct_from_runs(task: CorrelationTask, lam: float, n: int | None, seed: int, zeta=0.5, threads: int = 1):
    """C^lam and its standard error from the two coupling variants.

    ``n=None`` uses exact probabilities (the infinite-shot limit).
    """
    anc = AncillaSpec.equal_superposition(zeta)
    parts = {}
    for variant in (1, 2):
        dist = outcome_distribution(NimpRun(task, anc, CouplingSpec(variant, lam)))
        est = Estimator.nimp(variant, lam, zeta)
        if n is None:
            c = weighted_correlation(dist)
            parts[variant] = EstimateWithError(c / est.scale, 0.0, 0, lam, c)
        else:
            rec = sample(dist, n, derive_seed(seed, variant), {"variant": variant, "lam": lam}, threads)
            parts[variant] = estimate_from_shots(rec, est)
    value = reconstruct(parts[1].raw, parts[2].raw, lam, zeta)
    se = math.hypot(parts[1].std_error, parts[2].std_error)
    return value, se


def lambda_scan(
    task: CorrelationTask,
    grid,
    n: int | None,
    seed: int,
    zeta=0.5,
    threads: int = 1,
    oracle: complex | None = None,
) -> ScanResult:
    """|C^lam - C| and its standard error across coupling times."""
    grid = [float(x) for x in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(x <= 0 for x in grid) or grid != sorted(grid):
        raise ValueError("lambda grid must be positive and sorted")
    oracle = exact_correlation(task) if oracle is None else oracle
    rows = []
    for i, lam in enumerate(grid):
        point_seed = derive_seed(seed, i)
        value, se = reconstruct_from_runs(task, lam, n, point_seed, zeta, threads)
        rows.append(ScanRow(lam, abs(value - oracle), se, n, seed, value))
    return ScanResult(tuple(rows), oracle)
