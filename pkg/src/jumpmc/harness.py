"""Batch execution, streaming statistics, references, sweeps.

Trials run in deterministic chunks: chunk ``c`` of a batch with root seed
``s`` always uses the generator ``Philox(SeedSequence([s, c]))``, so results
are identical for any worker count.  Statistics accumulate in mergeable
Welford form.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericalError
from .models import ModelSpec, Payoff
from .parametrix import EstimatorParams

__all__ = [
    "EstimateStats",
    "BatchResult",
    "Reference",
    "SweepResult",
    "chunk_rng",
    "run_batch",
    "parametrix_batch",
    "euler_batch",
    "compute_reference",
    "sweep",
    "efficiency_curve",
    "second_moment_drift",
]

Z99 = 2.576  # normal 99% two-sided multiplier
DEFAULT_CHUNK = 1 << 14


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """Counter-based stream for one chunk; independent of all other chunks."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk_index])))


@dataclass
class EstimateStats:
    """Streaming count/mean/variance for a batch of trials."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    wall: float = 0.0
    jumps_sum: float = 0.0

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.var / self.n) if self.n > 1 else 0.0

    @property
    def ci99(self) -> float:
        return Z99 * self.stderr

    @property
    def jumps_mean(self) -> float:
        return self.jumps_sum / self.n if self.n else 0.0

    def merge(self, other: "EstimateStats") -> "EstimateStats":
        if other.n == 0:
            return EstimateStats(self.n, self.mean, self.m2, self.wall + other.wall, self.jumps_sum)
        if self.n == 0:
            return EstimateStats(other.n, other.mean, other.m2, self.wall + other.wall, other.jumps_sum)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return EstimateStats(
            n=n,
            mean=mean,
            m2=m2,
            wall=self.wall + other.wall,
            jumps_sum=self.jumps_sum + other.jumps_sum,
        )

    @classmethod
    def from_values(cls, values, wall: float = 0.0, jumps=None) -> "EstimateStats":
        values = np.asarray(values, dtype=np.float64)
        n = len(values)
        if n == 0:
            return cls(wall=wall)
        mean = float(values.mean())
        m2 = float(np.sum((values - mean) ** 2))
        jumps_sum = float(np.sum(jumps)) if jumps is not None else 0.0
        return cls(n=n, mean=mean, m2=m2, wall=wall, jumps_sum=jumps_sum)


@dataclass
class BatchResult:
    stats: EstimateStats
    values: np.ndarray | None = None
    jumps: np.ndarray | None = None
    grid_points: np.ndarray | None = None


def _chunk_ranges(total: int, chunk_size: int):
    start = 0
    idx = 0
    while start < total:
        n = min(chunk_size, total - start)
        yield idx, start, n
        idx += 1
        start += n


def _check_finite(values: np.ndarray, start: int) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalError(f"non-finite trial value at trial index {start + int(bad[0])}")


def run_batch(
    trial,
    M: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> EstimateStats:
    """Run ``M`` trials of an arbitrary per-trial procedure ``trial(rng)``.

    ``trial`` returns a float (or an object with a ``value`` attribute).
    Results are deterministic in ``seed`` regardless of ``workers``.
    """
    if M < 2:
        raise ValueError("M must be >= 2")

    def do_chunk(args):
        idx, start, n = args
        rng = chunk_rng(seed, idx)
        vals = np.empty(n)
        jumps = np.zeros(n)
        t0 = time.perf_counter()
        for i in range(n):
            out = trial(rng)
            if hasattr(out, "value"):
                vals[i] = out.value
                jumps[i] = getattr(out, "n_jumps", 0)
            else:
                vals[i] = out
        wall = time.perf_counter() - t0
        try:
            _check_finite(vals, start)
        except NumericalError:
            raise
        return EstimateStats.from_values(vals, wall=wall, jumps=jumps)

    chunks = list(_chunk_ranges(M, chunk_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(do_chunk, chunks))
    else:
        parts = [do_chunk(c) for c in chunks]
    stats = EstimateStats()
    for p in parts:
        stats = stats.merge(p)
    return stats


def parametrix_batch(
    model: ModelSpec,
    f: Payoff,
    x0,
    params: EstimatorParams,
    M: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    keep_values: bool = False,
) -> BatchResult:
    """Batch of unbiased-estimator trials via the compiled kernel."""
    if M < 2:
        raise ValueError("M must be >= 2")
    x0 = np.asarray(x0, dtype=np.float64)
    vals = np.empty(M) if keep_values else None
    jumps_all = np.empty(M, dtype=np.int64) if keep_values else None
    grid_all = np.empty(M, dtype=np.int64) if keep_values else None

    def do_chunk(args):
        idx, start, n = args
        rng = chunk_rng(seed, idx)
        v = np.empty(n)
        nj = np.empty(n, dtype=np.int64)
        ng = np.empty(n, dtype=np.int64)
        t0 = time.perf_counter()
        try:
            _kernels.parametrix_chunk(
                rng, n, x0, params.horizon, params.sigma_a, params.gamma,
                params.eps, params.t_min, model.m,
                model.drift, model.drift_jacobian, model.euler_step,
                model.covariance, model.covariance_grad, model.covariance_hess_diag,
                model.intensity, model.mark_sampler, model.jump_map, f.fn,
                v, nj, ng,
            )
        except Exception as exc:  # numba-raised numerical failures
            raise NumericalError(
                f"trial failure in chunk starting at trial {start}: {exc}"
            ) from exc
        wall = time.perf_counter() - t0
        _check_finite(v, start)
        if keep_values:
            vals[start : start + n] = v
            jumps_all[start : start + n] = nj
            grid_all[start : start + n] = ng
        return EstimateStats.from_values(v, wall=wall, jumps=nj)

    chunks = list(_chunk_ranges(M, chunk_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(do_chunk, chunks))
    else:
        parts = [do_chunk(c) for c in chunks]
    stats = EstimateStats()
    for p in parts:
        stats = stats.merge(p)
    return BatchResult(stats=stats, values=vals, jumps=jumps_all, grid_points=grid_all)


def euler_batch(
    model: ModelSpec,
    f: Payoff,
    x0,
    T: float,
    p_steps: int,
    M: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    keep_values: bool = False,
) -> BatchResult:
    """Batch of fixed-grid Euler baseline trials via the compiled kernel."""
    if M < 2:
        raise ValueError("M must be >= 2")
    if p_steps < 1:
        raise ValueError("p_steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    vals = np.empty(M) if keep_values else None
    jumps_all = np.empty(M, dtype=np.int64) if keep_values else None

    def do_chunk(args):
        idx, start, n = args
        rng = chunk_rng(seed, idx)
        v = np.empty(n)
        nj = np.empty(n, dtype=np.int64)
        t0 = time.perf_counter()
        try:
            _kernels.euler_chunk(
                rng, n, x0, T, p_steps, model.intensity_hi, model.m,
                model.euler_step, model.intensity,
                model.mark_sampler, model.jump_map, f.fn,
                v, nj,
            )
        except Exception as exc:
            raise NumericalError(
                f"trial failure in chunk starting at trial {start}: {exc}"
            ) from exc
        wall = time.perf_counter() - t0
        _check_finite(v, start)
        if keep_values:
            vals[start : start + n] = v
            jumps_all[start : start + n] = nj
        return EstimateStats.from_values(v, wall=wall, jumps=nj)

    chunks = list(_chunk_ranges(M, chunk_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(do_chunk, chunks))
    else:
        parts = [do_chunk(c) for c in chunks]
    stats = EstimateStats()
    for p in parts:
        stats = stats.merge(p)
    return BatchResult(stats=stats, values=vals, jumps=jumps_all)


@dataclass
class Reference:
    """A (nearly) exact value with its own uncertainty and provenance."""

    mean: float
    stderr: float
    trials: int
    p_steps: int
    seed: int
    source: str = "euler"


def compute_reference(
    model: ModelSpec,
    f: Payoff,
    x0,
    T: float,
    trials: int = 10_000_000,
    p_steps: int = 4096,
    seed: int = 1,
    workers: int = 1,
) -> Reference:
    """Fine-grid large-batch Euler estimate used as the comparison value."""
    res = euler_batch(model, f, x0, T, p_steps, trials, seed, workers=workers)
    return Reference(
        mean=res.stats.mean,
        stderr=res.stats.stderr,
        trials=trials,
        p_steps=p_steps,
        seed=seed,
    )


@dataclass
class SweepResult:
    parameter: str
    values: list
    stats: list  # EstimateStats per value
    mean_grid_points: list
    reference: Reference | None = None


_SWEEPABLE = {"sigma_a", "gamma", "eps"}


def sweep(
    model: ModelSpec,
    f: Payoff,
    x0,
    base: EstimatorParams,
    parameter: str,
    values,
    M: int = 2_000_000,
    seed: int = 0,
    workers: int = 1,
    reference: Reference | None = None,
) -> SweepResult:
    """Re-run the estimator across a grid of one design parameter."""
    if parameter not in _SWEEPABLE:
        raise ValueError(f"parameter must be one of {sorted(_SWEEPABLE)}")
    values = list(values)
    if not values:
        raise ValueError("sweep grid must be nonempty")
    stats = []
    grid_means = []
    for v in values:
        kwargs = dict(
            sigma_a=base.sigma_a, gamma=base.gamma, eps=base.eps,
            horizon=base.horizon, t_min=base.t_min,
        )
        kwargs[parameter] = v
        params = EstimatorParams(**kwargs)
        res = parametrix_batch(
            model, f, x0, params, M, seed, workers=workers, keep_values=True
        )
        stats.append(res.stats)
        grid_means.append(float(res.grid_points.mean()))
    return SweepResult(
        parameter=parameter,
        values=values,
        stats=stats,
        mean_grid_points=grid_means,
        reference=reference,
    )


def efficiency_curve(
    model: ModelSpec,
    f: Payoff,
    x0,
    params: EstimatorParams,
    schedules,
    seed: int = 0,
    repeats: int = 3,
    workers: int = 1,
):
    """(wall time, ci99) pairs for a list of run schedules.

    Each schedule is a mapping with keys ``estimator`` ("parametrix" or
    "euler"), ``M`` and, for Euler, ``p``.  Wall time per point is the median
    of ``repeats`` runs with distinct seeds.
    """
    rows = []
    for sched in schedules:
        kind = sched["estimator"]
        M = int(sched["M"])
        walls = []
        stats = None
        for r in range(repeats):
            if kind == "parametrix":
                res = parametrix_batch(model, f, x0, params, M, seed + r, workers=workers)
            elif kind == "euler":
                res = euler_batch(
                    model, f, x0, params.horizon, int(sched["p"]), M, seed + r, workers=workers
                )
            else:
                raise ValueError(f"unknown estimator {kind!r}")
            walls.append(res.stats.wall)
            if r == 0:
                stats = res.stats
        rows.append(
            {
                "estimator": kind,
                "M": M,
                "p": int(sched.get("p", 0) or 0),
                "wall": float(np.median(walls)),
                "mean": stats.mean,
                "ci99": stats.ci99,
                "var": stats.var,
            }
        )
    return rows


def second_moment_drift(values: np.ndarray, decade: float = 10.0) -> float:
    """Relative drift of the running second moment over the last decade.

    Compares the mean of squares at n and n/decade trials.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    k = int(n / decade)
    if k < 1:
        raise ValueError("too few values")
    sq = values**2
    m_full = sq.mean()
    m_early = sq[:k].mean()
    return abs(m_full - m_early) / abs(m_full)
