"""Trial-level estimators: jump loop, exponential arrivals, Euler baseline."""

import math

import numpy as np
import pytest

from conftest import ScriptedRng
from jumpmc.engine import (
    estimate_once,
    estimate_once_euler_baseline,
    sample_jump_time,
)
from jumpmc.harness import chunk_rng, euler_batch, parametrix_batch
from jumpmc.models import build_model_const1d, build_model_trig, payoff_indicator
from jumpmc.parametrix import (
    EstimatorParams,
    l2_theta,
    sample_beta_grid,
    simulate_augmented_path,
)

# ------------------------------------------------------------ jump times


def test_sample_jump_time_inverse_cdf():
    u = 0.37
    got = sample_jump_time(0.3, ScriptedRng(uniforms=[u]))
    assert got == pytest.approx(-math.log1p(-u) / 0.3, rel=1e-15)


def test_sample_jump_time_mean():
    rng = np.random.default_rng(0)
    n = 1_000_000
    total = 0.0
    for _ in range(n):
        total += sample_jump_time(0.3, rng)
    assert total / n == pytest.approx(1.0 / 0.3, rel=0.01)


def test_sample_jump_time_stochastic_dominance_common_randomness():
    # inverse CDF is monotone in the rate: same u, larger rate, smaller time
    rng = np.random.default_rng(1)
    for _ in range(200):
        u = rng.random()
        t_slow = sample_jump_time(0.2, ScriptedRng(uniforms=[u]))
        t_fast = sample_jump_time(0.7, ScriptedRng(uniforms=[u]))
        assert t_fast < t_slow


def test_sample_jump_time_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        sample_jump_time(0.0, ScriptedRng())


# --------------------------------------------------------------- jump loop


def test_engine_matches_single_segment_estimator_for_phantom_jumps(trig_const_lam, f_indicator):
    # constant intensity and zero jump size: the jump loop only re-segments
    # the horizon, so the engine mean must match the single-segment estimator
    params = EstimatorParams()
    x0 = np.array([1.0, 1.0])
    res = parametrix_batch(trig_const_lam, f_indicator, x0, params, M=120_000, seed=12)

    rng = np.random.default_rng(34)
    n = 120_000
    vals = np.empty(n)
    scale = math.exp(-params.sigma_a**2 / 2.0)
    for k in range(n):
        grid = sample_beta_grid(1.0, params.gamma, params.eps, rng)
        path = simulate_augmented_path(trig_const_lam, params, x0, grid, 1.0, rng)
        vals[k] = scale * l2_theta(trig_const_lam, params, path, f_indicator).weight
    se = math.hypot(res.stats.stderr, vals.std() / math.sqrt(n))
    assert abs(res.stats.mean - vals.mean()) < 3 * se


def test_engine_no_jump_branch_via_forced_long_first_arrival(trig_model, f_indicator):
    # first uniform makes the first arrival exceed the horizon, so the trial
    # must reduce to the final-segment estimator alone
    params = EstimatorParams()
    x0 = np.array([1.0, 1.0])
    uniforms = [0.9999, 0.7, 0.4, 0.95]  # arrival draw, then grid draws
    normals = [0.3, -0.2, 0.1, 0.5, -0.4, 0.2, 0.9, -0.1, 0.6, 0.05, -0.3, 0.7]

    got = estimate_once(
        trig_model, f_indicator, x0, params,
        ScriptedRng(uniforms=list(uniforms), normals=list(normals), u_default=0.95),
    )
    assert got.n_jumps == 0

    replay = ScriptedRng(uniforms=list(uniforms), normals=list(normals), u_default=0.95)
    xi1 = sample_jump_time(trig_model.intensity(x0), replay)
    assert xi1 >= params.horizon
    grid = sample_beta_grid(params.horizon, params.gamma, params.eps, replay)
    path = simulate_augmented_path(trig_model, params, x0, grid, params.horizon, replay)
    want = math.exp(-params.sigma_a**2 * params.horizon / 2.0) * l2_theta(
        trig_model, params, path, f_indicator
    ).weight
    assert got.value == pytest.approx(want, rel=1e-14)


def test_engine_jump_count_dominated_by_poisson_at_max_rate(trig_model, f_indicator):
    # under the sampling measure arrivals are exponential at rates <= the
    # intensity upper bound, so the count is dominated by Poisson(lam_hi * T)
    res = parametrix_batch(
        trig_model, f_indicator, np.array([1.0, 1.0]), EstimatorParams(),
        M=200_000, seed=77, keep_values=True,
    )
    jumps = res.jumps
    lam_hi_t = trig_model.intensity_hi * 1.0
    from scipy.stats import poisson

    n = len(jumps)
    for k in range(1, 7):
        frac = np.mean(jumps >= k)
        bound = poisson.sf(k - 1, lam_hi_t)
        se = math.sqrt(max(bound * (1 - bound), 1e-12) / n)
        assert frac <= bound + 3 * se


def test_engine_trial_result_fields(trig_model, f_indicator):
    rng = np.random.default_rng(5)
    out = estimate_once(trig_model, f_indicator, np.array([1.0, 1.0]), EstimatorParams(), rng)
    assert math.isfinite(out.value)
    assert out.n_jumps >= 0
    assert out.n_grid_points_total >= 1
    assert out.wall_ns >= 0


# ------------------------------------------------------------ Euler baseline


def test_euler_zero_intensity_gaussian_moments():
    # negligible intensity: plain Euler diffusion of the constant model
    model = build_model_const1d(mu=0.2, sigma=1.3, lam=1e-9)
    f = payoff_indicator(0.0)
    res = euler_batch(model, f, np.array([0.5]), T=1.0, p_steps=64,
                      M=100_000, seed=3, keep_values=True)
    # reconstruct terminal states is not possible from the payoff, so moment
    # test the indicator probability instead: P(X_T > 0), X_T ~ N(0.7, 1.69)
    from scipy.stats import norm

    p_want = norm.sf(0.0, loc=0.7, scale=1.3)
    se = math.sqrt(p_want * (1 - p_want) / 100_000)
    assert abs(res.stats.mean - p_want) < 4 * se
    assert res.jumps.max() == 0


def test_euler_constant_intensity_jump_counts_poisson():
    model = build_model_const1d(lam=0.3)
    f = payoff_indicator(0.0)
    res = euler_batch(model, f, np.array([0.0]), T=1.0, p_steps=4,
                      M=1_000_000, seed=4, keep_values=True)
    jumps = res.jumps
    assert jumps.mean() == pytest.approx(0.3, rel=0.01)
    assert jumps.var() == pytest.approx(0.3, rel=0.01)


def test_euler_thinning_acceptance_rate_at_frozen_state():
    # almost-frozen state: drift 0 and nearly-zero diffusion keep x at x0, so
    # the accepted-arrival rate must equal intensity(x0)
    model = build_model_trig(mu1=0.0, mu2=0.0, sigma1=1e-8, sigma2=0.0, v_jump=0.0)
    x0 = np.array([1.0, 1.0])
    lam_x0 = model.intensity(x0)
    f = payoff_indicator(1.8)
    res = euler_batch(model, f, x0, T=1.0, p_steps=8, M=200_000, seed=5, keep_values=True)
    want = lam_x0 * 1.0
    se = res.jumps.std() / math.sqrt(len(res.jumps))
    assert abs(res.jumps.mean() - want) < 3 * se


def test_euler_rejects_bad_steps(trig_model, f_indicator):
    with pytest.raises(ValueError):
        estimate_once_euler_baseline(
            trig_model, f_indicator, np.array([1.0, 1.0]), 1.0, 0, np.random.default_rng(0)
        )


def test_euler_trial_runs(trig_model, f_indicator):
    out = estimate_once_euler_baseline(
        trig_model, f_indicator, np.array([1.0, 1.0]), 1.0, 16, chunk_rng(9, 0)
    )
    assert out.value in (0.0, 1.0)
    assert out.n_grid_points_total >= 16
