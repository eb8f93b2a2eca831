"""Jump-diffusion model definitions.

A model bundles the SDE coefficients (drift, diffusion, jump intensity, jump
map, mark law) together with the analytic derivatives that the correction
weights need.  Derivatives are supplied in closed form rather than by finite
differences: the weights are evaluated millions of times per run.

All coefficient functions are numba-compiled so the same objects drive both
the plain-Python reference path and the compiled batch kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .errors import ConfigError

__all__ = [
    "ModelSpec",
    "Payoff",
    "AssumptionReport",
    "build_model_trig",
    "build_model_affine",
    "build_model_const1d",
    "payoff_indicator",
    "payoff_call",
    "check_assumptions",
    "generic_euler_step",
]


@dataclass(frozen=True)
class ModelSpec:
    """One jump-diffusion: coefficients, analytic derivatives, bounds.

    Indexing conventions:
      drift_jacobian(x)[i, j]       = d mu^i / d x_j
      covariance_grad(x)[k, i, j]   = d a^{ij} / d x_k
      covariance_hess_diag(x)[i, j] = d^2 a^{ij} / (d x_i d x_j)

    ``jump_map(x, r)`` returns the jump displacement; the post-jump state is
    ``x + jump_map(x, r)`` with ``r = mark_sampler(rng)``.
    """

    name: str
    d: int
    m: int
    drift: Callable
    drift_jacobian: Callable
    diffusion: Callable
    covariance: Callable
    covariance_grad: Callable
    covariance_hess_diag: Callable
    intensity: Callable
    intensity_grad: Callable
    intensity_lo: float
    intensity_hi: float
    jump_map: Callable
    mark_sampler: Callable
    jump_sup: float
    ellipticity_lo: float
    ellipticity_hi: float
    # fused Euler update out <- x + mu(x) dt + diffusion(x) @ z * sqdt,
    # written without temporaries; this is the per-step hot path
    euler_step: Callable = None
    assumption_violating: bool = False


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff with an exponential growth certificate.

    |f(x)| <= exp(c1 * ||x||_1 + c2) must hold everywhere.
    """

    fn: Callable
    c1: float
    c2: float
    name: str = "payoff"

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=np.float64))


def payoff_indicator(k: float) -> Payoff:
    """f(x) = 1 iff sum_i x_i > k (strict)."""

    @njit(cache=False)
    def fn(x):
        return 1.0 if np.sum(x) > k else 0.0

    return Payoff(fn=fn, c1=0.0, c2=0.0, name=f"indicator(k={k})")


def payoff_call(k: float) -> Payoff:
    """f(x) = (sum_i x_i - k)_+ ."""

    @njit(cache=False)
    def fn(x):
        s = np.sum(x) - k
        return s if s > 0.0 else 0.0

    return Payoff(fn=fn, c1=1.0, c2=max(0.0, -k), name=f"call(k={k})")


def generic_euler_step(drift, diffusion):
    """Fused Euler update built from coefficient functions (custom models)."""

    @njit(cache=False)
    def step(x, z, dt, sq, out):
        mu = drift(x)
        sig = diffusion(x)
        for i in range(x.shape[0]):
            acc = x[i] + mu[i] * dt
            for j in range(sig.shape[1]):
                acc += sig[i, j] * z[j] * sq
            out[i] = acc

    return step


def _uniform_box_marks(d: int, scale: float):
    @njit(cache=False)
    def mark(rng):
        r = np.empty(d)
        for i in range(d):
            r[i] = rng.random() * scale
        return r

    return mark


def _additive_jump():
    @njit(cache=False)
    def jmp(x, r):
        return r

    return jmp


def build_model_trig(
    mu1: float = 0.4,
    mu2: float = 0.2,
    sigma1: float = 1.0,
    sigma2: float = 0.2,
    lam: tuple = (0.3, 0.2, 0.2, 0.2),
    v_jump: float = 0.1,
) -> ModelSpec:
    """Two-dimensional model with sinusoidal drift, diffusion and intensity.

    dX1 = (mu1 - mu2 sin X1) dt + sqrt(sigma1 + sigma2 sin X1) dW1
    dX2 = (mu1 - mu2 cos X2) dt + sqrt(sigma1 + sigma2 sin X2) dW2
    intensity(x) = l1 + l2 sin(l3 x1 + l4 x2)

    Jumps displace the state by a mark drawn uniformly from [0, v_jump]^2.
    The jump law is not part of the model family definition and is a
    configurable default here.
    """
    l1, l2, l3, l4 = (float(v) for v in lam)
    if sigma1 - abs(sigma2) <= 0.0:
        raise ConfigError(
            f"need sigma1 > |sigma2| for an elliptic diffusion, got {sigma1}, {sigma2}"
        )
    if l1 - abs(l2) <= 0.0:
        raise ConfigError(
            f"need lam[0] > |lam[1]| for a positive intensity, got {l1}, {l2}"
        )
    if v_jump < 0.0:
        raise ConfigError("v_jump must be >= 0")

    @njit(cache=False)
    def drift(x):
        out = np.empty(2)
        out[0] = mu1 - mu2 * np.sin(x[0])
        out[1] = mu1 - mu2 * np.cos(x[1])
        return out

    @njit(cache=False)
    def drift_jac(x):
        out = np.zeros((2, 2))
        out[0, 0] = -mu2 * np.cos(x[0])
        out[1, 1] = mu2 * np.sin(x[1])
        return out

    @njit(cache=False)
    def diffusion(x):
        out = np.zeros((2, 2))
        out[0, 0] = np.sqrt(sigma1 + sigma2 * np.sin(x[0]))
        out[1, 1] = np.sqrt(sigma1 + sigma2 * np.sin(x[1]))
        return out

    @njit(cache=False)
    def cov(x):
        out = np.zeros((2, 2))
        out[0, 0] = sigma1 + sigma2 * np.sin(x[0])
        out[1, 1] = sigma1 + sigma2 * np.sin(x[1])
        return out

    @njit(cache=False)
    def cov_grad(x):
        out = np.zeros((2, 2, 2))
        out[0, 0, 0] = sigma2 * np.cos(x[0])
        out[1, 1, 1] = sigma2 * np.cos(x[1])
        return out

    @njit(cache=False)
    def cov_hess_diag(x):
        out = np.zeros((2, 2))
        out[0, 0] = -sigma2 * np.sin(x[0])
        out[1, 1] = -sigma2 * np.sin(x[1])
        return out

    @njit(cache=False)
    def intensity(x):
        return l1 + l2 * np.sin(l3 * x[0] + l4 * x[1])

    @njit(cache=False)
    def intensity_grad(x):
        c = l2 * np.cos(l3 * x[0] + l4 * x[1])
        out = np.empty(2)
        out[0] = c * l3
        out[1] = c * l4
        return out

    @njit(cache=False)
    def euler_step(x, z, dt, sq, out):
        out[0] = (
            x[0]
            + (mu1 - mu2 * np.sin(x[0])) * dt
            + np.sqrt(sigma1 + sigma2 * np.sin(x[0])) * z[0] * sq
        )
        out[1] = (
            x[1]
            + (mu1 - mu2 * np.cos(x[1])) * dt
            + np.sqrt(sigma1 + sigma2 * np.sin(x[1])) * z[1] * sq
        )

    return ModelSpec(
        name="trig",
        d=2,
        m=2,
        drift=drift,
        drift_jacobian=drift_jac,
        diffusion=diffusion,
        covariance=cov,
        covariance_grad=cov_grad,
        covariance_hess_diag=cov_hess_diag,
        intensity=intensity,
        intensity_grad=intensity_grad,
        intensity_lo=l1 - abs(l2),
        intensity_hi=l1 + abs(l2),
        jump_map=_additive_jump(),
        mark_sampler=_uniform_box_marks(2, v_jump),
        jump_sup=v_jump,
        ellipticity_lo=sigma1 - abs(sigma2),
        ellipticity_hi=sigma1 + abs(sigma2),
        euler_step=euler_step,
    )


def build_model_affine(
    mu1: float = 0.6,
    mu2: float = 0.1,
    mu3: float = 0.5,
    mu4: float = 0.2,
    sigma1: float = 1.0,
    sigma2: float = 0.2,
    lam: tuple = (0.3, 0.04, 0.04),
    v_jump: float = 0.1,
    lam_floor: float = 1e-6,
    a_floor: float = 1e-8,
    bound_box: float = 25.0,
) -> ModelSpec:
    """Two-dimensional affine (square-root diffusion) model.

    dX1 = (mu1 - mu2 X1) dt + sqrt(sigma1 + sigma2 X1) dW1
    dX2 = (mu3 - mu4 X2) dt + sqrt(sigma1 + sigma2 X2) dW2
    intensity(x) = l1 + l2 x1 + l3 x2

    Coefficients are unbounded, so the model carries
    ``assumption_violating=True``.  The intensity and covariance are clamped
    below at ``lam_floor`` / ``a_floor`` so simulation never takes the square
    root of a negative number.  ``bound_box`` sets the nominal state range
    used to derive a finite dominating intensity for thinning.
    """
    l1, l2, l3 = (float(v) for v in lam)
    if sigma1 <= 0.0:
        raise ConfigError("sigma1 must be positive")
    if l1 <= 0.0:
        raise ConfigError("lam[0] must be positive")
    if v_jump < 0.0:
        raise ConfigError("v_jump must be >= 0")

    @njit(cache=False)
    def drift(x):
        out = np.empty(2)
        out[0] = mu1 - mu2 * x[0]
        out[1] = mu3 - mu4 * x[1]
        return out

    @njit(cache=False)
    def drift_jac(x):
        out = np.zeros((2, 2))
        out[0, 0] = -mu2
        out[1, 1] = -mu4
        return out

    @njit(cache=False)
    def cov(x):
        out = np.zeros((2, 2))
        out[0, 0] = max(sigma1 + sigma2 * x[0], a_floor)
        out[1, 1] = max(sigma1 + sigma2 * x[1], a_floor)
        return out

    @njit(cache=False)
    def diffusion(x):
        out = np.zeros((2, 2))
        out[0, 0] = np.sqrt(max(sigma1 + sigma2 * x[0], a_floor))
        out[1, 1] = np.sqrt(max(sigma1 + sigma2 * x[1], a_floor))
        return out

    @njit(cache=False)
    def cov_grad(x):
        out = np.zeros((2, 2, 2))
        if sigma1 + sigma2 * x[0] > a_floor:
            out[0, 0, 0] = sigma2
        if sigma1 + sigma2 * x[1] > a_floor:
            out[1, 1, 1] = sigma2
        return out

    @njit(cache=False)
    def cov_hess_diag(x):
        return np.zeros((2, 2))

    @njit(cache=False)
    def intensity(x):
        return max(l1 + l2 * x[0] + l3 * x[1], lam_floor)

    @njit(cache=False)
    def intensity_grad(x):
        out = np.zeros(2)
        if l1 + l2 * x[0] + l3 * x[1] > lam_floor:
            out[0] = l2
            out[1] = l3
        return out

    @njit(cache=False)
    def euler_step(x, z, dt, sq, out):
        out[0] = (
            x[0]
            + (mu1 - mu2 * x[0]) * dt
            + np.sqrt(max(sigma1 + sigma2 * x[0], a_floor)) * z[0] * sq
        )
        out[1] = (
            x[1]
            + (mu3 - mu4 * x[1]) * dt
            + np.sqrt(max(sigma1 + sigma2 * x[1], a_floor)) * z[1] * sq
        )

    lam_hi = l1 + (abs(l2) + abs(l3)) * bound_box

    return ModelSpec(
        name="affine",
        d=2,
        m=2,
        drift=drift,
        drift_jacobian=drift_jac,
        diffusion=diffusion,
        covariance=cov,
        covariance_grad=cov_grad,
        covariance_hess_diag=cov_hess_diag,
        intensity=intensity,
        intensity_grad=intensity_grad,
        intensity_lo=lam_floor,
        intensity_hi=lam_hi,
        jump_map=_additive_jump(),
        mark_sampler=_uniform_box_marks(2, v_jump),
        jump_sup=v_jump,
        # nominal diagnostic floor; probes where the clamp engages fall below
        ellipticity_lo=1e-3,
        ellipticity_hi=math.inf,
        euler_step=euler_step,
        assumption_violating=True,
    )


def build_model_const1d(
    mu: float = 0.0,
    sigma: float = 1.0,
    lam: float = 0.3,
    delta: float = 0.5,
) -> ModelSpec:
    """One-dimensional constant-coefficient model with deterministic jump size.

    X_T = x0 + mu*T + sigma*W_T + delta*N_T with N a Poisson(lam) process, so
    expectations have closed-form Poisson-Gaussian mixture values.  Useful as
    an exactly solvable cross-check.
    """
    if sigma <= 0.0:
        raise ConfigError("sigma must be positive")
    if lam <= 0.0:
        raise ConfigError("lam must be positive")

    @njit(cache=False)
    def drift(x):
        out = np.empty(1)
        out[0] = mu
        return out

    @njit(cache=False)
    def drift_jac(x):
        return np.zeros((1, 1))

    @njit(cache=False)
    def diffusion(x):
        out = np.empty((1, 1))
        out[0, 0] = sigma
        return out

    @njit(cache=False)
    def cov(x):
        out = np.empty((1, 1))
        out[0, 0] = sigma * sigma
        return out

    @njit(cache=False)
    def cov_grad(x):
        return np.zeros((1, 1, 1))

    @njit(cache=False)
    def cov_hess_diag(x):
        return np.zeros((1, 1))

    @njit(cache=False)
    def intensity(x):
        return lam

    @njit(cache=False)
    def intensity_grad(x):
        return np.zeros(1)

    @njit(cache=False)
    def mark(rng):
        return np.zeros(1)

    @njit(cache=False)
    def jmp(x, r):
        out = np.empty(1)
        out[0] = delta
        return out

    @njit(cache=False)
    def euler_step(x, z, dt, sq, out):
        out[0] = x[0] + mu * dt + sigma * z[0] * sq

    return ModelSpec(
        name="const1d",
        d=1,
        m=1,
        drift=drift,
        drift_jacobian=drift_jac,
        diffusion=diffusion,
        covariance=cov,
        covariance_grad=cov_grad,
        covariance_hess_diag=cov_hess_diag,
        intensity=intensity,
        intensity_grad=intensity_grad,
        intensity_lo=lam,
        intensity_hi=lam,
        jump_map=jmp,
        mark_sampler=mark,
        jump_sup=abs(delta),
        ellipticity_lo=sigma * sigma,
        ellipticity_hi=sigma * sigma,
        euler_step=euler_step,
    )


@dataclass
class AssumptionReport:
    """Empirical check of the model regularity assumptions on a probe cloud."""

    n_probes: int
    intensity_min: float
    intensity_max: float
    intensity_ok: bool
    ellipticity_min: float
    ellipticity_max: float
    ellipticity_ok: bool
    symmetry_ok: bool
    cholesky_ok: bool
    jump_sup_observed: float
    jump_ok: bool
    deriv_max_rel_err: float
    deriv_ok: bool

    @property
    def all_ok(self) -> bool:
        return (
            self.intensity_ok
            and self.ellipticity_ok
            and self.symmetry_ok
            and self.cholesky_ok
            and self.jump_ok
            and self.deriv_ok
        )


_DERIV_TOL = 1e-6
_FD_STEP1 = 1e-5
# larger step for second differences: with h=1e-5 the cancellation floor of
# double precision (~eps/h^2 = 1e-6) would sit at the tolerance itself
_FD_STEP2 = 1e-4


def _fd_grad(fn, x, h=_FD_STEP1):
    x = np.asarray(x, dtype=np.float64)
    out = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(out, axis=0)


def _fd_cross_second(fn_entry, x, i, j, h=_FD_STEP2):
    x = np.asarray(x, dtype=np.float64)
    ei = np.zeros_like(x)
    ej = np.zeros_like(x)
    ei[i] = h
    ej[j] = h
    if i == j:
        return (fn_entry(x + ei) - 2 * fn_entry(x) + fn_entry(x - ei)) / (h * h)
    return (
        fn_entry(x + ei + ej)
        - fn_entry(x + ei - ej)
        - fn_entry(x - ei + ej)
        + fn_entry(x - ei - ej)
    ) / (4 * h * h)


def derivative_max_rel_err(model: ModelSpec, points: np.ndarray) -> float:
    """Max mismatch between analytic derivatives and central differences.

    Errors are measured relative to max(1, |analytic value|).
    """
    worst = 0.0

    def rel(analytic, numeric):
        analytic = np.asarray(analytic, dtype=np.float64)
        numeric = np.asarray(numeric, dtype=np.float64)
        scale = np.maximum(1.0, np.abs(analytic))
        return float(np.max(np.abs(analytic - numeric) / scale))

    for x in points:
        # drift jacobian: _fd_grad stacks d/dx_k along axis 0 -> transpose
        worst = max(worst, rel(model.drift_jacobian(x), _fd_grad(model.drift, x).T))
        worst = max(worst, rel(model.covariance_grad(x), _fd_grad(model.covariance, x)))
        worst = max(worst, rel(model.intensity_grad(x), _fd_grad(model.intensity, x).ravel()))
        hess = model.covariance_hess_diag(x)
        num = np.empty_like(hess)
        for i in range(model.d):
            for j in range(model.d):
                num[i, j] = _fd_cross_second(
                    lambda y, i=i, j=j: model.covariance(y)[i, j], x, i, j
                )
        worst = max(worst, rel(hess, num))
    return worst


def check_assumptions(
    model: ModelSpec,
    probe_cloud_size: int = 10_000,
    box: float = 3.0,
    seed: int = 0,
    deriv_points: int = 100,
) -> AssumptionReport:
    """Spot-check the model invariants on a uniform probe cloud in [-box, box]^d."""
    if probe_cloud_size < 1:
        raise ConfigError("probe_cloud_size must be >= 1")
    rng = np.random.default_rng(seed)
    probes = rng.uniform(-box, box, size=(probe_cloud_size, model.d))
    tol = 1e-9

    lam_vals = np.array([model.intensity(x) for x in probes])
    intensity_ok = bool(
        lam_vals.min() >= model.intensity_lo - tol
        and lam_vals.max() <= model.intensity_hi + tol
    )

    ell_min = math.inf
    ell_max = -math.inf
    symmetry_ok = True
    cholesky_ok = True
    for x in probes:
        a = np.asarray(model.covariance(x))
        if not np.allclose(a, a.T, atol=1e-12):
            symmetry_ok = False
        w = np.linalg.eigvalsh(0.5 * (a + a.T))
        ell_min = min(ell_min, float(w[0]))
        ell_max = max(ell_max, float(w[-1]))
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            cholesky_ok = False
    ellipticity_ok = bool(
        ell_min >= model.ellipticity_lo - tol and ell_max <= model.ellipticity_hi + tol
    )

    jump_sup_observed = 0.0
    for x in probes[: min(probe_cloud_size, 1000)]:
        r = model.mark_sampler(rng)
        jump_sup_observed = max(
            jump_sup_observed, float(np.max(np.abs(model.jump_map(x, r))))
        )
    jump_ok = jump_sup_observed <= model.jump_sup + tol

    n_deriv = min(deriv_points, probe_cloud_size)
    deriv_err = derivative_max_rel_err(model, probes[:n_deriv])
    deriv_ok = deriv_err <= _DERIV_TOL

    return AssumptionReport(
        n_probes=probe_cloud_size,
        intensity_min=float(lam_vals.min()),
        intensity_max=float(lam_vals.max()),
        intensity_ok=intensity_ok,
        ellipticity_min=ell_min,
        ellipticity_max=ell_max,
        ellipticity_ok=ellipticity_ok,
        symmetry_ok=symmetry_ok,
        cholesky_ok=cholesky_ok,
        jump_sup_observed=jump_sup_observed,
        jump_ok=jump_ok,
        deriv_max_rel_err=deriv_err,
        deriv_ok=deriv_ok,
    )
