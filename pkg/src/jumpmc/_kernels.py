"""Compiled batch kernels.

These replay exactly the same randomness stream as the reference trial
functions in :mod:`jumpmc.engine` (same draws, same order), so a batch run is
bit-for-bit reproducible against the reference given the same generator
state.  Model coefficient functions arrive as numba dispatchers and the
kernels specialize per model/payoff combination on first use.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_JIT = dict(nogil=True, fastmath=False)


@njit(**_JIT)
def _cho_factor_inplace(a, dt, L):
    # lower Cholesky factor of dt * a, written into L
    n = a.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = dt * a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                L[i, j] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L


@njit(**_JIT)
def _cho_solve_inplace(L, b, x):
    # solve L L^T x = b; b and x may alias
    n = b.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]


@njit(**_JIT)
def _cho_inverse_inplace(L, col, inv):
    n = L.shape[0]
    for j in range(n):
        for i in range(n):
            col[i] = 1.0 if i == j else 0.0
        _cho_solve_inplace(L, col, col)
        for i in range(n):
            inv[i, j] = col[i]


@njit(**_JIT)
def _theta_aug(
    dt, y1, y2, abar1, abar2, sigma_a, mu, jac, cov, covg, covh, lam,
    sL, sw, scol, sinv,
):
    d = y1.shape[0]
    a1 = cov(y1)
    a2 = cov(y2)
    g2 = covg(y2)
    hess = covh(y2)
    m1 = mu(y1)
    m2 = mu(y2)
    j2 = jac(y2)

    L = _cho_factor_inplace(a1, dt, sL)
    for i in range(d):
        sw[i] = y2[i] - y1[i] - dt * m1[i]
    _cho_solve_inplace(L, sw, sw)
    minv_w = sw
    _cho_inverse_inplace(L, scol, sinv)
    minv = sinv

    total = 0.0
    for i in range(d):
        for j in range(d):
            h2 = minv_w[i] * minv_w[j] - minv[i, j]
            total += 0.5 * (
                hess[i, j]
                - g2[j, i, j] * minv_w[i]
                - g2[i, i, j] * minv_w[j]
                + (a2[i, j] - a1[i, j]) * h2
            )
    for i in range(d):
        total -= j2[i, i] - (m2[i] - m1[i]) * minv_w[i]

    lam1 = lam(y1)
    lam2 = lam(y2)
    total += (lam2 - lam1) * (abar2 - abar1 - lam1 * dt) / (dt * sigma_a * sigma_a)
    return total


@njit(**_JIT)
def _segment(
    rng, x0, t_seg, final, sigma_a, gamma, eps, t_min, m,
    mu, jac, step, cov, covg, covh, lam, fpay,
    tbuf, ya, yb, z, sL, sw, scol, sinv,
):
    """Run one segment: grid draw, path simulation, weight.

    Returns (weight, terminal_y, n_grid_steps, tbuf).  ``final`` selects the
    payoff branch instead of the intensity-ratio branch.  ``tbuf``/``ya``/
    ``yb``/``z`` are caller-owned scratch buffers reused across trials;
    ``tbuf`` is returned because it may be reallocated on growth.  The path
    is consumed in streaming fashion: only the previous and current states
    are retained while the weight product accumulates.
    """
    d = x0.shape[0]
    s = t_seg + eps
    pexp = 1.0 / (1.0 - gamma)

    n = 0
    acc = 0.0
    last = 0.0
    while True:
        u = rng.random()
        acc += s * u**pexp
        if acc >= t_seg:
            break
        if acc - last >= t_min and t_seg - acc >= t_min:
            if n == tbuf.shape[0]:
                nb = np.empty(2 * tbuf.shape[0])
                nb[:n] = tbuf[:n]
                tbuf = nb
            tbuf[n] = acc
            n += 1
            last = acc

    last_interior = tbuf[n - 1] if n > 0 else 0.0
    wgt = 1.0 / (1.0 - ((t_seg - last_interior) / s) ** (1.0 - gamma))
    lam0 = lam(x0)
    psi_scale = (1.0 - gamma) / s ** (1.0 - gamma)

    for i in range(d):
        ya[i] = x0[i]
    abar_prev = 0.0
    t_prev = 0.0
    for k in range(n + 1):
        t_cur = tbuf[k] if k < n else t_seg
        dt = t_cur - t_prev
        sq = np.sqrt(dt)
        for i in range(m):
            z[i] = rng.standard_normal()
        step(ya, z, dt, sq, yb)
        abar_cur = abar_prev + lam(ya) * dt + sigma_a * sq * rng.standard_normal()
        if k < n:
            th = _theta_aug(
                dt, ya, yb, abar_prev, abar_cur,
                sigma_a, mu, jac, cov, covg, covh, lam,
                sL, sw, scol, sinv,
            )
            wgt *= th / (psi_scale / dt**gamma)
        ya, yb = yb, ya
        abar_prev = abar_cur
        t_prev = t_cur

    base = np.exp(-abar_prev + t_seg * lam0)
    if final:
        wgt *= base * fpay(ya)
    else:
        wgt *= base * lam(ya) / lam0
    return wgt, ya, n + 1, tbuf


@njit(**_JIT)
def _parametrix_trial(
    rng, x0, T, sigma_a, gamma, eps, t_min, m,
    mu, jac, step, cov, covg, covh, lam, mark, jmp, fpay,
    x, tbuf, ya, yb, z, sL, sw, scol, sinv,
):
    d = x0.shape[0]
    mult = 1.0
    for i in range(d):
        x[i] = x0[i]
    n_jumps = 0
    n_grid = 0
    u = rng.random()
    xi = -np.log1p(-u) / lam(x)
    t_arr = xi
    while t_arr < T:
        w, y_end, ng, tbuf = _segment(
            rng, x, xi, False, sigma_a, gamma, eps, t_min, m,
            mu, jac, step, cov, covg, covh, lam, fpay,
            tbuf, ya, yb, z, sL, sw, scol, sinv,
        )
        r = mark(rng)
        h = jmp(y_end, r)
        for i in range(d):
            x[i] = y_end[i] + h[i]
        mult *= w
        n_jumps += 1
        n_grid += ng
        u = rng.random()
        xi = -np.log1p(-u) / lam(x)
        t_arr += xi

    t_last = T - (t_arr - xi)
    w, y_end, ng, tbuf = _segment(
        rng, x, t_last, True, sigma_a, gamma, eps, t_min, m,
        mu, jac, step, cov, covg, covh, lam, fpay,
        tbuf, ya, yb, z, sL, sw, scol, sinv,
    )
    n_grid += ng
    value = np.exp(-sigma_a * sigma_a * T / 2.0) * mult * w
    return value, n_jumps, n_grid, tbuf


@njit(**_JIT)
def parametrix_chunk(
    rng, n_trials, x0, T, sigma_a, gamma, eps, t_min, m,
    mu, jac, step, cov, covg, covh, lam, mark, jmp, fpay,
    out_vals, out_jumps, out_grid,
):
    d = x0.shape[0]
    x = np.empty(d)
    ya = np.empty(d)
    yb = np.empty(d)
    z = np.empty(m)
    tbuf = np.empty(64)
    sL = np.empty((d, d))
    sw = np.empty(d)
    scol = np.empty(d)
    sinv = np.empty((d, d))
    for i in range(n_trials):
        v, nj, ng, tbuf = _parametrix_trial(
            rng, x0, T, sigma_a, gamma, eps, t_min, m,
            mu, jac, step, cov, covg, covh, lam, mark, jmp, fpay,
            x, tbuf, ya, yb, z, sL, sw, scol, sinv,
        )
        out_vals[i] = v
        out_jumps[i] = nj
        out_grid[i] = ng


@njit(**_JIT)
def _euler_trial(rng, x0, T, p_steps, lam_hi, m, step, lam, mark, jmp, fpay, x, xn, z):
    d = x0.shape[0]
    for i in range(d):
        x[i] = x0[i]
    dt_grid = T / p_steps

    t = 0.0
    next_grid_idx = 1
    u = rng.random()
    cand = -np.log1p(-u) / lam_hi
    n_jumps = 0
    while t < T:
        t_next = min(next_grid_idx * dt_grid, T)
        jump_here = cand < t_next
        if jump_here:
            t_next = cand
        dt = t_next - t
        if dt > 0.0:
            for i in range(m):
                z[i] = rng.standard_normal()
            step(x, z, dt, np.sqrt(dt), xn)
            for i in range(d):
                x[i] = xn[i]
        t = t_next
        if jump_here:
            if rng.random() * lam_hi < lam(x):
                r = mark(rng)
                h = jmp(x, r)
                for i in range(d):
                    x[i] += h[i]
                n_jumps += 1
            u = rng.random()
            cand = t - np.log1p(-u) / lam_hi
        else:
            next_grid_idx += 1
    return fpay(x), n_jumps


@njit(**_JIT)
def euler_chunk(
    rng, n_trials, x0, T, p_steps, lam_hi, m,
    step, lam, mark, jmp, fpay,
    out_vals, out_jumps,
):
    d = x0.shape[0]
    x = np.empty(d)
    xn = np.empty(d)
    z = np.empty(m)
    for i in range(n_trials):
        v, nj = _euler_trial(
            rng, x0, T, p_steps, lam_hi, m, step, lam, mark, jmp, fpay, x, xn, z
        )
        out_vals[i] = v
        out_jumps[i] = nj
