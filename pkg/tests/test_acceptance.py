"""Acceptance criteria for the unbiased jump-diffusion estimator.

Each test covers one criterion and records a single PASS/FAIL line that is
printed in the terminal summary.  Tests are ordered cheap-first; the
fine-grid reference of criterion 1 dominates the total runtime.
"""

import math
import warnings

import numpy as np
import pytest
from scipy.stats import norm, poisson

from conftest import record_acceptance
from jumpmc.harness import (
    EstimateStats,
    chunk_rng,
    compute_reference,
    efficiency_curve,
    euler_batch,
    parametrix_batch,
    second_moment_drift,
    sweep,
)
from jumpmc.models import build_model_const1d, payoff_call, payoff_indicator
from jumpmc.parametrix import (
    EstimatorParams,
    beta_psi,
    beta_survival,
    correction_theta2,
    correction_theta2_pn,
    herm1,
    herm2,
    sample_beta_grid,
    simulate_augmented_path,
)

X0 = np.array([1.0, 1.0])


def _report(num: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    record_acceptance(f"{status} criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# 2. closed-form jump oracle: 1-d Brownian motion plus Poisson(0.3) jumps of
#    fixed size 0.5, call payoff at strike 0, against truncated-mixture value
def test_criterion_2_closed_form_jump_oracle():
    lam, delta, T = 0.3, 0.5, 1.0
    oracle = sum(
        poisson.pmf(n, lam * T)
        * ((a := delta * n) * norm.cdf(a / math.sqrt(T)) + math.sqrt(T) * norm.pdf(a / math.sqrt(T)))
        for n in range(80)
    )
    model = build_model_const1d(mu=0.0, sigma=1.0, lam=lam, delta=delta)
    res = parametrix_batch(
        model, payoff_call(0.0), np.array([0.0]), EstimatorParams(), M=1_000_000, seed=23
    )
    z = abs(res.stats.mean - oracle) / res.stats.stderr
    _report(
        2, z <= 3.0,
        f"engine {res.stats.mean:.5f} vs mixture oracle {oracle:.5f} "
        f"(|z|={z:.2f}, need <=3)",
    )


# ---------------------------------------------------------------------------
# 8. deterministic unit suite: closed forms, weight-form equality, exact
#    factor identities, statistics merge, worker-count reproducibility
def test_criterion_8_deterministic_unit_suite(trig_model, f_indicator):
    ok = True
    notes = []

    if not (
        herm1(np.eye(2), np.array([1.0, 0.0]), 0) == pytest.approx(-1.0)
        and herm2(np.eye(2), np.zeros(2), 0, 0) == pytest.approx(-1.0)
        and herm2(np.diag([2.0, 4.0]), np.array([2.0, 4.0]), 0, 1) == pytest.approx(1.0)
    ):
        ok = False
        notes.append("hermite identities")

    if not (
        beta_psi(1.0, 1.0, 0.25, 1.0) == pytest.approx(0.75 / 2**0.75, rel=1e-12)
        and beta_survival(1.0, 1.0, 0.25, 1.0) == pytest.approx(1 - 2**-0.75, rel=1e-12)
    ):
        ok = False
        notes.append("grid density closed forms")

    params = EstimatorParams()
    rng = np.random.default_rng(80)
    for _ in range(20):
        t_seg = rng.uniform(0.3, 1.2)
        grid = sample_beta_grid(t_seg, params.gamma, params.eps, rng)
        path = simulate_augmented_path(trig_model, params, X0, grid, t_seg, rng)
        a = correction_theta2(trig_model, params, path)
        b = correction_theta2_pn(trig_model, params, path)
        if not a == pytest.approx(b, rel=1e-12, abs=1e-12):
            ok = False
            notes.append("weight form equality")
            break

    for _ in range(20):
        sa = rng.uniform(0.1, 2.0)
        segs = np.diff(np.sort(np.concatenate(([0.0, 1.0], rng.uniform(0, 1, 3)))))
        prod = math.prod(math.exp(-(sa**2) * s / 2.0) for s in segs)
        if not prod == pytest.approx(math.exp(-(sa**2) / 2.0), rel=1e-12):
            ok = False
            notes.append("telescoping factor")
            break

    chunks = [EstimateStats.from_values(rng.normal(size=64)) for _ in range(9)]
    seq = EstimateStats()
    for c in chunks:
        seq = seq.merge(c)
    rev = EstimateStats()
    for c in reversed(chunks):
        rev = rev.merge(c)
    if not (
        rev.mean == pytest.approx(seq.mean, rel=1e-9)
        and rev.m2 == pytest.approx(seq.m2, rel=1e-9)
    ):
        ok = False
        notes.append("merge associativity")

    a = parametrix_batch(trig_model, f_indicator, X0, params, M=2048, seed=81,
                         workers=1, chunk_size=256)
    b = parametrix_batch(trig_model, f_indicator, X0, params, M=2048, seed=81,
                         workers=8, chunk_size=256)
    if not a.stats.mean == pytest.approx(b.stats.mean, rel=1e-12):
        ok = False
        notes.append("worker-count reproducibility")

    _report(8, ok, "deterministic unit suite" + (f" broken: {notes}" if notes else ""))


# ---------------------------------------------------------------------------
# 3. cross-estimator consistency on both benchmark models and payoffs, plus
#    the confidence-interval magnitude check at M=5e4
def test_criterion_3_cross_estimator_consistency(trig_model, affine_model, f_indicator, f_call):
    details = []
    ok = True
    ci_trig_ind = None
    for model in (trig_model, affine_model):
        for f in (f_indicator, f_call):
            rp = parametrix_batch(model, f, X0, EstimatorParams(), M=50_000, seed=24)
            re = euler_batch(model, f, X0, 1.0, 200, 4_000, seed=25)
            gap = abs(rp.stats.mean - re.stats.mean)
            tol = rp.stats.ci99 + re.stats.ci99
            if gap > tol:
                ok = False
            details.append(
                f"{model.name}/{f.name.split('(')[0]} gap {gap:.4f} vs CI sum {tol:.4f}"
            )
            if model.name == "trig" and "indicator" in f.name:
                ci_trig_ind = rp.stats.ci99
    band_ok = 0.018 / 3 <= ci_trig_ind <= 0.018 * 3
    ok = ok and band_ok
    _report(
        3, ok,
        "; ".join(details) + f"; ci99@5e4 {ci_trig_ind:.4f} in [0.006, 0.054]: {band_ok}",
    )


# ---------------------------------------------------------------------------
# 7. efficiency crossover: for target ci99 <= 5e-3 the random-grid estimator
#    reaches the target in less wall time than the matched Euler schedule
def test_criterion_7_efficiency_crossover(trig_model, f_indicator):
    rows = efficiency_curve(
        trig_model, f_indicator, X0, EstimatorParams(),
        schedules=[
            {"estimator": "parametrix", "M": 1_100_000},
            {"estimator": "euler", "M": 64_000, "p": 800},
        ],
        seed=26, repeats=3,
    )
    par, eul = rows
    target_ok = par["ci99"] <= 5e-3 and eul["ci99"] <= 5e-3
    faster = par["wall"] < eul["wall"]
    _report(
        7, target_ok and faster,
        f"parametrix ci99 {par['ci99']:.2e} in {par['wall']:.2f}s vs "
        f"euler ci99 {eul['ci99']:.2e} in {eul['wall']:.2f}s",
    )


# ---------------------------------------------------------------------------
# 4. variance-regime property: running second moment stable at gamma=0.25,
#    divergent at gamma=0.75.
#
# KNOWN RED: the second half does not hold for this estimator.  The weight's
# second moment is finite for every gamma in (0,1) on the benchmark model
# (the gamma < 1/2 design rule bites at higher moments, e.g. the fourth), so
# the running second moment at gamma=0.75 stabilizes as well; measured
# last-decade drift over 10^6 trials stays near 5%, nowhere near the
# stipulated 50% divergence.  The criterion is asserted as stated.
def test_criterion_4_variance_regime(trig_model, f_indicator):
    res_lo = parametrix_batch(
        trig_model, f_indicator, X0, EstimatorParams(gamma=0.25),
        M=1_000_000, seed=13, keep_values=True,
    )
    drift_lo = second_moment_drift(res_lo.values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params_hi = EstimatorParams(gamma=0.75)
    res_hi = parametrix_batch(
        trig_model, f_indicator, X0, params_hi, M=1_000_000, seed=13, keep_values=True
    )
    drift_hi = second_moment_drift(res_hi.values)
    ok = drift_lo < 0.05 and drift_hi > 0.50
    _report(
        4, ok,
        f"drift gamma=0.25: {drift_lo:.3f} (need <0.05), "
        f"gamma=0.75: {drift_hi:.3f} (need >0.50; unattainable - second "
        f"moment is finite for all gamma in (0,1) on this model)",
    )


# ---------------------------------------------------------------------------
# 5. auxiliary-noise-scale sensitivity: moderate sigma_a beats both extremes
def test_criterion_5_sigma_a_sensitivity(trig_model, f_indicator):
    variances = {}
    for sa in (0.01, 0.1, 0.5, 1.0, 5.0):
        res = parametrix_batch(
            trig_model, f_indicator, X0, EstimatorParams(sigma_a=sa),
            M=2_000_000, seed=27,
        )
        variances[sa] = res.stats.var
    ok = all(
        variances[sa] < variances[0.01] and variances[sa] < variances[5.0]
        for sa in (0.1, 0.5, 1.0)
    )
    _report(
        5, ok,
        "var " + ", ".join(f"{sa}: {v:.3g}" for sa, v in variances.items()),
    )


# ---------------------------------------------------------------------------
# 6. grid-extension sensitivity: bigger eps means fewer grid points and less
#    time; estimates away from the smallest eps stay consistent
def test_criterion_6_eps_sensitivity(trig_model, f_indicator):
    ref = compute_reference(
        trig_model, f_indicator, X0, 1.0, trials=4_000_000, p_steps=1024, seed=28
    )
    # wall time per point is ~1s, so a single run is vulnerable to scheduler
    # noise; take the elementwise median over three identical repetitions
    # (same seed: estimates are bit-identical, only the timings vary)
    runs = [
        sweep(
            trig_model, f_indicator, X0, EstimatorParams(),
            "eps", [0.1, 0.5, 1.0, 5.0], M=500_000, seed=29,
        )
        for _ in range(3)
    ]
    res = runs[0]
    g = res.mean_grid_points
    walls = [float(w) for w in np.median([[s.wall for s in r.stats] for r in runs], axis=0)]
    mono_ok = g[0] > g[1] > g[2] > g[3] and walls[0] > walls[1] > walls[2] > walls[3]
    agree_ok = True
    zs = []
    for eps_val, stats in zip(res.values, res.stats):
        if eps_val < 0.5:
            continue
        z = abs(stats.mean - ref.mean) / math.hypot(stats.stderr, ref.stderr)
        zs.append(f"eps={eps_val:g}: |z|={z:.2f}")
        if z > 3.0:
            agree_ok = False
    _report(
        6, mono_ok and agree_ok,
        f"grid points {[round(v, 2) for v in g]}, wall {[round(w, 2) for w in walls]}s; "
        + "; ".join(zs),
    )


# ---------------------------------------------------------------------------
# 1. diffusion-only unbiasedness: constant intensity with zero-size jumps is
#    a pure diffusion; estimator mean vs a fine-grid Euler reference
def test_criterion_1_diffusion_only_unbiasedness(trig_const_lam, f_indicator):
    res = parametrix_batch(
        trig_const_lam, f_indicator, X0, EstimatorParams(), M=1_000_000, seed=21
    )
    ref = compute_reference(
        trig_const_lam, f_indicator, X0, 1.0, trials=10_000_000, p_steps=4096, seed=22
    )
    z = abs(res.stats.mean - ref.mean) / math.hypot(res.stats.stderr, ref.stderr)
    _report(
        1, z <= 3.0,
        f"parametrix {res.stats.mean:.5f}+-{res.stats.stderr:.5f} vs fine-grid "
        f"euler {ref.mean:.5f}+-{ref.stderr:.5f} (|z|={z:.2f}, need <=3)",
    )
