"""Single-trial estimators.

``estimate_once`` runs the unbiased jump-diffusion estimator: jump times are
drawn from exponentials with the rate frozen at the last post-jump state, each
inter-jump segment is handled by the random-grid diffusion estimator, and the
per-segment multipliers accumulate into one signed trial value.

``estimate_once_euler_baseline`` is the biased fixed-grid reference scheme
with thinning for the state-dependent jumps.

Both functions are plain-Python references; :mod:`jumpmc.harness` drives
compiled equivalents for large batches.  Draw order from the randomness
source is identical between the two implementations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .models import ModelSpec, Payoff
from .parametrix import (
    EstimatorParams,
    l1_theta,
    l2_theta,
    sample_beta_grid,
    simulate_augmented_path,
)

__all__ = ["TrialResult", "sample_jump_time", "estimate_once", "estimate_once_euler_baseline"]


@dataclass
class TrialResult:
    """One realization of the estimator."""

    value: float
    n_jumps: int
    n_grid_points_total: int
    wall_ns: int


def sample_jump_time(rate: float, rng) -> float:
    """Exponential variate via the inverse CDF."""
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    u = rng.random()
    return -math.log1p(-u) / rate


def estimate_once(
    model: ModelSpec,
    f: Payoff,
    x0: np.ndarray,
    params: EstimatorParams,
    rng,
) -> TrialResult:
    """One trial of the unbiased estimator over horizon ``params.horizon``.

    Loop: draw the next exponential arrival at the rate frozen at the current
    post-jump state; while it lands before the horizon, run the random-grid
    segment estimator over the interarrival, fold its jump-branch weight into
    the running multiplier, and apply a fresh jump at the segment's terminal
    point.  The final partial segment uses the payoff-branch weight.  The
    single global factor exp(-sigma_a^2 T / 2) compensates the auxiliary
    noise.
    """
    t_start = time.perf_counter_ns()
    x0 = np.asarray(x0, dtype=np.float64)
    T = params.horizon

    mult = 1.0
    x = x0
    n_jumps = 0
    n_grid = 0
    xi = sample_jump_time(model.intensity(x), rng)
    t_arr = xi
    while t_arr < T:
        grid = sample_beta_grid(xi, params.gamma, params.eps, rng, params.t_min)
        path = simulate_augmented_path(model, params, x, grid, xi, rng)
        out = l1_theta(model, params, path)
        mark = model.mark_sampler(rng)
        x = out.terminal_y + np.asarray(model.jump_map(out.terminal_y, mark))
        mult *= out.weight
        n_jumps += 1
        n_grid += len(grid) + 1
        xi = sample_jump_time(model.intensity(x), rng)
        t_arr += xi

    t_last = T - (t_arr - xi)
    grid = sample_beta_grid(t_last, params.gamma, params.eps, rng, params.t_min)
    path = simulate_augmented_path(model, params, x, grid, t_last, rng)
    out = l2_theta(model, params, path, f)
    n_grid += len(grid) + 1
    value = math.exp(-params.sigma_a**2 * T / 2.0) * mult * out.weight
    return TrialResult(
        value=float(value),
        n_jumps=n_jumps,
        n_grid_points_total=n_grid,
        wall_ns=time.perf_counter_ns() - t_start,
    )


def estimate_once_euler_baseline(
    model: ModelSpec,
    f: Payoff,
    x0: np.ndarray,
    T: float,
    p_steps: int,
    rng,
) -> TrialResult:
    """One fixed-grid Euler trial with thinned jumps.

    Candidate arrivals come from a homogeneous Poisson process at the
    dominating rate ``model.intensity_hi``; each candidate is accepted with
    probability intensity(state)/intensity_hi.  The diffusion grid has
    ``p_steps`` uniform steps with extra points inserted at accepted jumps.
    """
    if p_steps < 1:
        raise ValueError("p_steps must be >= 1")
    t_start = time.perf_counter_ns()
    x = np.asarray(x0, dtype=np.float64).copy()
    lam_hi = model.intensity_hi
    dt_grid = T / p_steps

    t = 0.0
    next_grid_idx = 1
    cand = sample_jump_time(lam_hi, rng)
    n_jumps = 0
    n_grid = p_steps
    while t < T:
        t_next = min(next_grid_idx * dt_grid, T)
        jump_here = cand < t_next
        if jump_here:
            t_next = cand
        dt = t_next - t
        if dt > 0.0:
            xi = np.array([rng.standard_normal() for _ in range(model.m)])
            if model.euler_step is not None:
                xn = np.empty_like(x)
                model.euler_step(x, xi, dt, math.sqrt(dt), xn)
                x = xn
            else:
                x = (
                    x
                    + np.asarray(model.drift(x)) * dt
                    + np.asarray(model.diffusion(x)) @ xi * math.sqrt(dt)
                )
        t = t_next
        if jump_here:
            n_grid += 1
            if rng.random() * lam_hi < model.intensity(x):
                mark = model.mark_sampler(rng)
                x = x + np.asarray(model.jump_map(x, mark))
                n_jumps += 1
            cand = t + sample_jump_time(lam_hi, rng)
        else:
            next_grid_idx += 1
    return TrialResult(
        value=float(f.fn(x)),
        n_jumps=n_jumps,
        n_grid_points_total=n_grid,
        wall_ns=time.perf_counter_ns() - t_start,
    )
