"""Compiled inner loops.

All state vectors are kept as (mantissa pair, binary exponent).  Rescaling by
powers of two is exact, so the accumulated log-magnitude carries no rounding
error and the result does not depend on how often we rescale.
"""

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)


@njit(cache=True, nogil=True)
def _rescale(x, y):
    m = max(abs(x), abs(y))
    if m == 0.0 or not np.isfinite(m):
        return x, y, 0
    ex = math.frexp(m)[1]
    return math.ldexp(x, -ex), math.ldexp(y, -ex), ex


@njit(cache=True, nogil=True)
def sweep_grid(b, a2, zs, stop, period):
    """Scaled recursion phi_k for every z in zs, up to step `stop`.

    Returns mantissas (phi_stop, phi_{stop-1}) and the shared binary exponent
    per point, so that phi = mant * 2**exp.
    """
    n = b.shape[0]
    m = zs.shape[0]
    x = np.empty(m)
    y = np.empty(m)
    e = np.zeros(m, dtype=np.int64)
    sn = math.sqrt(n)
    for j in range(m):
        x[j] = zs[j] * sn - b[0]
        y[j] = 1.0
    for j in range(m):
        x[j], y[j], d = _rescale(x[j], y[j])
        e[j] += d
    since = 0
    for k in range(2, stop + 1):
        sk = math.sqrt(n / k)
        c1 = b[k - 1] / math.sqrt(k)
        c2 = a2[k - 2] / math.sqrt(k * (k - 1.0))
        for j in range(m):
            xn = (zs[j] * sk - c1) * x[j] - c2 * y[j]
            y[j] = x[j]
            x[j] = xn
        since += 1
        if since >= period or k == stop:
            since = 0
            for j in range(m):
                x[j], y[j], d = _rescale(x[j], y[j])
                e[j] += d
    return x, y, e


@njit(cache=True, nogil=True)
def raw_recursion(b, a2, x, stop):
    """Unscaled minor recursion q_k at shift x (no rescaling)."""
    qm = 0.0
    q = 1.0
    for k in range(1, stop + 1):
        a2prev = a2[k - 2] if k >= 2 else 0.0
        qn = (x - b[k - 1]) * q - a2prev * qm
        qm = q
        q = qn
    return q


@njit(cache=True, nogil=True)
def conjugated_sweep(b, a2, z, start, x0, y0, e0, pinv, mu, elliptic, ks,
                     m0, period):
    """Run X from step `start` (state X_start = (x0, y0) * 2**e0) and record
    the conjugated vector Y_k = P_k^{-1} X_k at the sorted steps in `ks`.

    pinv has shape (n, 4) holding row-major P_k^{-1}; mu[k-1] is the mean
    increment of step k; M is accumulated from m0 with compensation.
    Returns (log_norm_Y, W, zeta, M, ok).
    """
    n = b.shape[0]
    nk = ks.shape[0]
    out_log = np.full(nk, np.nan)
    out_w = np.full(nk, np.nan)
    out_zeta = np.full(nk, np.nan)
    out_m = np.full(nk, np.nan)
    x = x0
    y = y0
    e = e0
    msum = m0
    comp = 0.0
    idx = 0
    while idx < nk and ks[idx] < start:
        idx += 1
    since = 0
    ok = True
    for k in range(start, n + 1):
        if k > start:
            sk = math.sqrt(n / k)
            c1 = b[k - 1] / math.sqrt(k)
            c2 = a2[k - 2] / math.sqrt(k * (k - 1.0))
            xn = (z * sk - c1) * x - c2 * y
            y = x
            x = xn
            since += 1
            if since >= period:
                since = 0
                x, y, d = _rescale(x, y)
                e += d
            # compensated M += mu_k
            t = mu[k - 1] - comp
            s = msum + t
            comp = (s - msum) - t
            msum = s
        if idx < nk and ks[idx] == k:
            p = pinv[k - 1]
            u1 = p[0] * x + p[1] * y
            u2 = p[2] * x + p[3] * y
            nrm = math.hypot(u1, u2)
            if nrm == 0.0 or not np.isfinite(nrm):
                ok = False
                break
            out_log[idx] = math.log(nrm) + e * LN2
            out_w[idx] = (u2 / nrm) ** 2
            if elliptic[k - 1]:
                ang = math.atan2(u2, u1)
                if ang < 0.0:
                    ang += 2.0 * math.pi
                if ang >= 2.0 * math.pi:
                    ang = 0.0
                out_zeta[idx] = ang
            out_m[idx] = msum
            idx += 1
            if idx >= nk:
                break
    return out_log, out_w, out_zeta, out_m, ok


@njit(cache=True, nogil=True)
def tail_product(z, n, k):
    """A_n ... A_{k+1} with A_j = [[z_j, -1], [1, 0]], z_j = z sqrt(n/j)."""
    m00 = 1.0
    m01 = 0.0
    m10 = 0.0
    m11 = 1.0
    for j in range(k + 1, n + 1):
        zj = z * math.sqrt(n / j)
        # left-multiply by A_j
        t00 = zj * m00 - m10
        t01 = zj * m01 - m11
        m10 = m00
        m11 = m01
        m00 = t00
        m01 = t01
    return m00, m01, m10, m11


@njit(cache=True, nogil=True)
def sturm_count(b, a2, x):
    """Number of eigenvalues of the Jacobi matrix strictly below x."""
    n = b.shape[0]
    count = 0
    d = b[0] - x
    if d < 0.0:
        count += 1
    for i in range(1, n):
        if d == 0.0:
            d = 1e-300
        d = (b[i] - x) - a2[i - 1] / d
        if d < 0.0:
            count += 1
    return count


@njit(cache=True, nogil=True)
def sturm_counts(b, a2, xs):
    """sturm_count for many shifts at once; the shifts form the inner loop."""
    n = b.shape[0]
    m = xs.shape[0]
    d = np.empty(m)
    cnt = np.zeros(m, dtype=np.int64)
    for j in range(m):
        d[j] = b[0] - xs[j]
        cnt[j] += d[j] < 0.0
    for i in range(1, n):
        bi = b[i]
        ai = a2[i - 1]
        for j in range(m):
            dj = d[j]
            dj = dj if dj != 0.0 else 1e-300
            dj = (bi - xs[j]) - ai / dj
            cnt[j] += dj < 0.0
            d[j] = dj
    return cnt


@njit(cache=True, nogil=True)
def bisect_all(b, a2, lo, hi, tol, max_steps):
    """Sturm bisection for every eigenvalue index simultaneously.

    Returns (values, steps used); steps = max_steps + 1 signals that some
    interval did not shrink below tol.
    """
    n = b.shape[0]
    left = np.full(n, lo)
    right = np.full(n, hi)
    idx = np.arange(n)
    steps = 0
    while steps < max_steps:
        active = np.flatnonzero(right - left > tol)
        if active.size == 0:
            break
        mids = 0.5 * (left[active] + right[active])
        cnt = sturm_counts(b, a2, mids)
        for t in range(active.size):
            i = active[t]
            mid = mids[t]
            if mid <= left[i] or mid >= right[i]:
                # interval at floating-point resolution
                left[i] = mid
                right[i] = mid
            elif cnt[t] > idx[i]:
                right[i] = mid
            else:
                left[i] = mid
        steps += 1
    if np.any(right - left > tol):
        steps = max_steps + 1
    return 0.5 * (left + right), steps


@njit(cache=True, nogil=True)
def kahan_cumsum(x):
    out = np.empty_like(x)
    s = 0.0
    c = 0.0
    for i in range(x.shape[0]):
        t = x[i] - c
        u = s + t
        c = (u - s) - t
        s = u
        out[i] = s
    return out
