"""Unbiased diffusion estimation on random Beta time grids.

The estimator simulates an Euler path of the augmented process
z = (y, abar) on a random grid whose i.i.d. interarrivals have density
psi(t) = (1-gamma) / (t^gamma (T+eps)^(1-gamma)) on [0, T+eps], then
multiplies the payoff by a signed correction weight built from first- and
second-order Hermite polynomials of the Gaussian transition kernel.  In
expectation the weight removes the Euler discretization bias.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import NumericalError
from .models import ModelSpec, Payoff

__all__ = [
    "EstimatorParams",
    "AugmentedState",
    "GridPath",
    "SegmentOutcome",
    "herm1",
    "herm2",
    "vartheta",
    "theta_aug",
    "beta_psi",
    "beta_survival",
    "sample_beta_grid",
    "simulate_augmented_path",
    "correction_theta2",
    "correction_theta2_pn",
    "l1_theta",
    "l2_theta",
]


@dataclass(frozen=True)
class EstimatorParams:
    """Design knobs of the estimator.

    sigma_a : noise scale of the auxiliary integrated-intensity coordinate
    gamma   : Beta tail exponent of the grid interarrival density, in (0, 1)
    eps     : extension of the interarrival support beyond the segment length
    horizon : global time horizon T
    t_min   : grid points closer than this to their predecessor or to the
              segment end are dropped (the weight blows up as the step -> 0)
    """

    sigma_a: float = 0.5
    gamma: float = 0.25
    eps: float = 1.0
    horizon: float = 1.0
    t_min: float = 1e-12

    def __post_init__(self):
        if self.sigma_a <= 0.0:
            raise ValueError("sigma_a must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if not self.gamma < 0.5:
            warnings.warn(
                f"gamma={self.gamma} is outside the finite-variance regime (0, 0.5)",
                stacklevel=2,
            )


@dataclass
class AugmentedState:
    """A point z = (y, abar) of the augmented process."""

    y: np.ndarray
    abar: float


@dataclass
class GridPath:
    """One Euler path of the augmented process over a single segment.

    ``times`` holds the full grid [0, tau_1, ..., tau_N, t_seg]; ``ys`` and
    ``abars`` hold the states at those times.  All increments are retained
    because the correction weight needs every transition.
    """

    t_seg: float
    times: np.ndarray
    ys: np.ndarray
    abars: np.ndarray

    @property
    def n_interior(self) -> int:
        return len(self.times) - 2

    @property
    def interarrivals(self) -> np.ndarray:
        return np.diff(self.times)

    def state(self, k: int) -> AugmentedState:
        return AugmentedState(y=self.ys[k], abar=float(self.abars[k]))


@dataclass
class SegmentOutcome:
    """Signed weight and terminal state of one segment estimator."""

    weight: float
    terminal_y: np.ndarray
    terminal_abar: float


def beta_psi(t: float, t_seg: float, gamma: float, eps: float) -> float:
    """Interarrival density (1-gamma) / (t^gamma (t_seg+eps)^(1-gamma))."""
    s = t_seg + eps
    if not 0.0 < t <= s:
        raise ValueError(f"t={t} outside the density support (0, {s}]")
    return (1.0 - gamma) / (t**gamma * s ** (1.0 - gamma))


def beta_survival(t: float, t_seg: float, gamma: float, eps: float) -> float:
    """Survival function 1 - (t / (t_seg+eps))^(1-gamma)."""
    s = t_seg + eps
    if not 0.0 <= t <= s:
        raise ValueError(f"t={t} outside [0, {s}]")
    return 1.0 - (t / s) ** (1.0 - gamma)


def sample_beta_grid(
    t_seg: float,
    gamma: float,
    eps: float,
    rng,
    t_min: float = 1e-12,
) -> np.ndarray:
    """Draw the interior grid times for one segment.

    Interarrivals come from the inverse CDF u -> (t_seg+eps) * u^(1/(1-gamma));
    partial sums strictly below t_seg form the grid.  Points within ``t_min``
    of their predecessor or of ``t_seg`` are dropped.
    """
    if t_seg <= 0.0:
        raise ValueError("t_seg must be positive")
    s = t_seg + eps
    p = 1.0 / (1.0 - gamma)
    times = []
    acc = 0.0
    last = 0.0
    while True:
        u = rng.random()
        acc += s * u**p
        if acc >= t_seg:
            break
        if acc - last >= t_min and t_seg - acc >= t_min:
            times.append(acc)
            last = acc
    return np.array(times)


def simulate_augmented_path(
    model: ModelSpec,
    params: EstimatorParams,
    x0: np.ndarray,
    interior_times: np.ndarray,
    t_seg: float,
    rng,
) -> GridPath:
    """Euler step of z = (y, abar) on [0, t_seg] along the given grid.

    Per step of length dt from (y, abar):
      y'    = y + mu(y) dt + diffusion(y) @ (sqrt(dt) * xi),  xi ~ N(0, I_m)
      abar' = abar + intensity(y) dt + sigma_a sqrt(dt) * xibar
    Noise draws happen component-wise, y first, then abar.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    times = np.concatenate(([0.0], np.asarray(interior_times, dtype=np.float64), [t_seg]))
    n = len(times)
    ys = np.empty((n, model.d))
    abars = np.empty(n)
    ys[0] = x0
    abars[0] = 0.0
    sqrt_dt = np.sqrt(np.diff(times))
    step = model.euler_step
    for k in range(1, n):
        dt = times[k] - times[k - 1]
        y = ys[k - 1]
        xi = np.array([rng.standard_normal() for _ in range(model.m)])
        if step is not None:
            step(y, xi, dt, sqrt_dt[k - 1], ys[k])
        else:
            sig = np.asarray(model.diffusion(y))
            ys[k] = y + np.asarray(model.drift(y)) * dt + sig @ xi * sqrt_dt[k - 1]
        xibar = rng.standard_normal()
        abars[k] = (
            abars[k - 1] + model.intensity(y) * dt + params.sigma_a * sqrt_dt[k - 1] * xibar
        )
    return GridPath(t_seg=t_seg, times=times, ys=ys, abars=abars)


def _chol(mat: np.ndarray):
    try:
        return cho_factor(mat, lower=True)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"matrix not SPD: {mat!r}") from exc


def herm1(mat: np.ndarray, x: np.ndarray, i: int) -> float:
    """First-order Hermite polynomial -(M^-1 x)_i."""
    return float(-cho_solve(_chol(mat), x)[i])


def herm2(mat: np.ndarray, x: np.ndarray, i: int, j: int) -> float:
    """Second-order Hermite polynomial (M^-1 x)_i (M^-1 x)_j - (M^-1)_ij."""
    c = _chol(mat)
    w = cho_solve(c, x)
    inv = cho_solve(c, np.eye(len(x)))
    return float(w[i] * w[j] - inv[i, j])


def vartheta(model: ModelSpec, t: float, y1: np.ndarray, y2: np.ndarray) -> float:
    """Per-step correction weight of the base diffusion.

    All Hermite terms are evaluated at M = t * a(y1) with argument
    y2 - y1 - t * mu(y1); derivative terms are taken at y2.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    a1 = np.asarray(model.covariance(y1))
    a2 = np.asarray(model.covariance(y2))
    ga2 = np.asarray(model.covariance_grad(y2))
    hess = np.asarray(model.covariance_hess_diag(y2))
    mu1 = np.asarray(model.drift(y1))
    mu2 = np.asarray(model.drift(y2))
    jac2 = np.asarray(model.drift_jacobian(y2))

    c = _chol(t * a1)
    w = y2 - y1 - t * mu1
    minv_w = cho_solve(c, w)
    minv = cho_solve(c, np.eye(model.d))
    h1 = -minv_w

    total = 0.0
    for i in range(model.d):
        for j in range(model.d):
            h2 = minv_w[i] * minv_w[j] - minv[i, j]
            total += 0.5 * (
                hess[i, j]
                + ga2[j, i, j] * h1[i]
                + ga2[i, i, j] * h1[j]
                + (a2[i, j] - a1[i, j]) * h2
            )
    for i in range(model.d):
        total -= jac2[i, i] + (mu2[i] - mu1[i]) * h1[i]
    return float(total)


def theta_aug(
    model: ModelSpec,
    params: EstimatorParams,
    t: float,
    z1: AugmentedState,
    z2: AugmentedState,
) -> float:
    """Per-step weight of the augmented process.

    Adds to ``vartheta`` the contribution of the auxiliary coordinate, whose
    drift is the intensity and whose noise scale is sigma_a.
    """
    lam1 = model.intensity(np.asarray(z1.y, dtype=np.float64))
    lam2 = model.intensity(np.asarray(z2.y, dtype=np.float64))
    base = vartheta(model, t, z1.y, z2.y)
    extra = (lam2 - lam1) * (z2.abar - z1.abar - lam1 * t) / (t * params.sigma_a**2)
    return base + extra


def correction_theta2(model: ModelSpec, params: EstimatorParams, path: GridPath) -> float:
    """Correction weight: survival factor times the product of step weights.

    Theta_2 = [1 / Psi(t_seg - tau_N)] * prod_{k=1..N} theta / psi; the final
    step to the segment end carries no weight factor.
    """
    gamma, eps = params.gamma, params.eps
    n = path.n_interior
    last_interior = path.times[n]  # 0.0 when the grid is empty
    w = 1.0 / beta_survival(path.t_seg - last_interior, path.t_seg, gamma, eps)
    for k in range(1, n + 1):
        dt = path.times[k] - path.times[k - 1]
        w *= theta_aug(model, params, dt, path.state(k - 1), path.state(k)) / beta_psi(
            dt, path.t_seg, gamma, eps
        )
    return w


def correction_theta2_pn(model: ModelSpec, params: EstimatorParams, path: GridPath) -> float:
    """Same weight via the closed-form joint density of the grid times.

    Algebraically identical to :func:`correction_theta2`; kept as an
    independent route for cross-checking.
    """
    gamma, eps = params.gamma, params.eps
    s = path.t_seg + eps
    n = path.n_interior
    last_interior = path.times[n]
    p_n = 1.0 - ((path.t_seg - last_interior) / s) ** (1.0 - gamma)
    num = 1.0
    for k in range(1, n + 1):
        dt = path.times[k] - path.times[k - 1]
        p_n *= (1.0 - gamma) / s ** (1.0 - gamma) / dt**gamma
        num *= theta_aug(model, params, dt, path.state(k - 1), path.state(k))
    return num / p_n


def _exp_tilt(model: ModelSpec, path: GridPath, t_seg: float) -> float:
    lam0 = model.intensity(path.ys[0])
    return float(np.exp(-path.abars[-1] + t_seg * lam0))


def l1_theta(model: ModelSpec, params: EstimatorParams, path: GridPath) -> SegmentOutcome:
    """Segment estimator used when the segment ends with a jump."""
    lam0 = model.intensity(path.ys[0])
    lam_t = model.intensity(path.ys[-1])
    w = (
        _exp_tilt(model, path, path.t_seg)
        * (lam_t / lam0)
        * correction_theta2(model, params, path)
    )
    return SegmentOutcome(weight=float(w), terminal_y=path.ys[-1], terminal_abar=float(path.abars[-1]))


def l2_theta(
    model: ModelSpec, params: EstimatorParams, path: GridPath, f: Payoff
) -> SegmentOutcome:
    """Segment estimator for the final (no further jump) segment."""
    w = (
        _exp_tilt(model, path, path.t_seg)
        * f.fn(path.ys[-1])
        * correction_theta2(model, params, path)
    )
    return SegmentOutcome(weight=float(w), terminal_y=path.ys[-1], terminal_abar=float(path.abars[-1]))
