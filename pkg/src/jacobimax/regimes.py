"""Change of basis along the recursion and the three regimes.

For evaluation point z the deterministic part of the transfer matrix,
A_k = [[z_k, -1], [1, 0]] with z_k = z sqrt(n/k), is hyperbolic while
|z_k| > 2 (k <= k0), parabolic around k0 and elliptic afterwards.  We
conjugate by P_k so that A_k becomes diag(alpha, 1/alpha) (up to the sign
of z) or a rotation by theta_k, and follow Y_k = P_k^{-1} X_k.

Schedule boundaries are floors of irrational quantities such as
i^(2/3) k0^(1/3); they are computed with exact integer cube roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .ensemble import JacobiCoefficients, ParameterError

__all__ = [
    "HYPERBOLIC",
    "PARABOLIC",
    "ELLIPTIC",
    "RegimeSchedule",
    "BasisAtStep",
    "BasisArrays",
    "Trajectory",
    "BlockFlags",
    "icbrt",
    "build_schedule",
    "default_delta",
    "alpha_theta",
    "change_of_basis",
    "basis_arrays",
    "conjugated_trajectory",
    "restarted_log_norm",
    "eta_curve",
    "good_block_flags",
    "hyperbolic_noise",
    "hyperbolic_residual",
    "deterministic_tail_product",
]

HYPERBOLIC = "hyperbolic"
PARABOLIC = "parabolic"
ELLIPTIC = "elliptic"

DEFAULT_KAPPA = 4.0


def icbrt(m: int) -> int:
    """floor(m ** (1/3)) for a nonnegative integer m, exactly."""
    if m < 0:
        raise ValueError("negative argument")
    r = int(round(math.exp(math.log(m) / 3.0))) if m > 0 else 0
    while r**3 > m:
        r -= 1
    while (r + 1) ** 3 <= m:
        r += 1
    return r


def default_delta(eta: float) -> float:
    return eta * eta / 8.0


@dataclass(frozen=True)
class RegimeSchedule:
    z: float
    n: int
    kappa: float
    delta: float
    k0: int
    ell0: int
    k_delta: int
    i_o: int
    i_1: int
    j_o: int
    j_1: int
    # hyperbolic boundaries m_i, descending, with their indices i
    hyper_index: tuple = field(repr=False)
    hyper_bounds: tuple = field(repr=False)
    # elliptic boundaries k_i, ascending, with their indices i
    ell_index: tuple = field(repr=False)
    ell_bounds: tuple = field(repr=False)

    def regime(self, k: int) -> str:
        if k <= self.k0 - self.ell0:
            return HYPERBOLIC
        if k >= self.k0 + self.ell0:
            return ELLIPTIC
        return PARABOLIC


def build_schedule(z: float, n: int, kappa: float = DEFAULT_KAPPA,
                   delta: float | None = None, eta: float = 0.1) -> RegimeSchedule:
    """Critical time, parabolic window and block boundaries for (z, n)."""
    if not 0 < eta < 1 or not eta <= abs(z) <= 2 - eta:
        raise ParameterError(f"z={z} outside the bulk [eta, 2 - eta] with eta={eta}")
    if not kappa >= 1:
        raise ParameterError("kappa must be >= 1")
    delta = default_delta(eta) if delta is None else delta
    if not delta > 0:
        raise ParameterError("delta must be positive")
    zq, kq, dq = Fraction(z), Fraction(kappa), Fraction(delta)
    k0 = math.floor(zq * zq * n / 4)
    ell0 = icbrt(math.floor(kq**3 * n))
    dn = math.floor(dq * n)
    k_delta = k0 - dn
    if not dq * n <= k_delta:
        raise ParameterError(
            f"delta={delta} too large for z={z}: need delta*n <= k0 - floor(delta*n) "
            "(hyperbolic cutoff constraint)")
    if not (k0 - ell0 >= 1 and k0 + ell0 < n):
        raise ParameterError(
            f"n={n} too small for z={z}, kappa={kappa}: need "
            "1 <= k0 - ell0 and k0 + ell0 < n")

    def hyper_gap(i):  # floor(i^(2/3) k0^(1/3))
        return icbrt(i * i * k0)

    def ell_gap(i):  # floor(i^4 k0^(1/3))
        return icbrt(i**12 * k0)

    i_o = 1
    while hyper_gap(i_o) < ell0:
        i_o += 1
    i_1 = i_o
    while k0 - hyper_gap(i_1) > k_delta:
        i_1 += 1
    h_idx, h_b = [i_o], [k0 - ell0]
    for i in range(i_o + 1, i_1):
        m = k0 - hyper_gap(i)
        if m < h_b[-1]:
            h_idx.append(i)
            h_b.append(m)
    if k_delta < h_b[-1]:
        h_idx.append(i_1)
        h_b.append(k_delta)

    j_o = 1
    while ell_gap(j_o + 1) <= ell0:
        j_o += 1
    j_1 = j_o + 1
    while k0 + ell_gap(j_1) < n:
        j_1 += 1
    e_idx, e_b = [j_o], [k0 + ell0]
    for i in range(j_o + 1, j_1):
        k = k0 + ell_gap(i)
        if k > e_b[-1]:
            e_idx.append(i)
            e_b.append(k)
    if n > e_b[-1]:
        e_idx.append(j_1)
        e_b.append(n)
    return RegimeSchedule(float(z), int(n), float(kappa), float(delta), k0, ell0,
                          k_delta, i_o, i_1, j_o, j_1, tuple(h_idx), tuple(h_b),
                          tuple(e_idx), tuple(e_b))


def _zk(z, n, k):
    return z * np.sqrt(n / np.asarray(k, dtype=float))


def alpha_theta(k: int, z: float, n: int):
    """("hyperbolic", alpha) for k <= k0, ("elliptic", theta) afterwards."""
    if not 1 <= k <= n:
        raise ParameterError("need 1 <= k <= n")
    k0 = math.floor(Fraction(z) ** 2 * n / 4)
    zk = abs(z) * math.sqrt(n / k)
    disc = (z * z * n - 4.0 * k) / k  # z_k^2 - 4 without cancellation
    if k <= k0:
        return HYPERBOLIC, (zk + math.sqrt(max(disc, 0.0))) / 2.0
    return ELLIPTIC, math.atan2(math.sqrt(max(-disc, 0.0)), math.copysign(zk, z))


@dataclass(frozen=True)
class BasisAtStep:
    regime: str
    alpha: float
    theta: float
    P: np.ndarray
    P_inv: np.ndarray


def _hyper_P(alpha, sg):
    ia = 1.0 / alpha
    P = np.array([[1.0, sg * ia], [sg * ia, 1.0]])
    det = 1.0 - ia * ia
    P_inv = np.array([[1.0, -sg * ia], [-sg * ia, 1.0]]) / det
    return P, P_inv


def _ell_P(zk, s):
    P = np.array([[s / 2.0, zk / 2.0], [0.0, 1.0]])
    P_inv = np.array([[2.0 / s, -zk / s], [0.0, 1.0]])
    return P, P_inv


def change_of_basis(k: int, schedule: RegimeSchedule) -> BasisAtStep:
    z, n = schedule.z, schedule.n
    regime = schedule.regime(k)
    sg = 1.0 if z > 0 else -1.0
    if regime == ELLIPTIC:
        _, theta = alpha_theta(k, z, n)
        zk = z * math.sqrt(n / k)
        s = math.sqrt((4.0 * k - z * z * n) / k)
        P, P_inv = _ell_P(zk, s)
        return BasisAtStep(regime, float("nan"), theta, P, P_inv)
    kk = k if regime == HYPERBOLIC else schedule.k0 - schedule.ell0
    _, alpha = alpha_theta(kk, z, n)
    P, P_inv = _hyper_P(alpha, sg)
    return BasisAtStep(regime, alpha if regime == HYPERBOLIC else float("nan"),
                       float("nan"), P, P_inv)


@dataclass(frozen=True, eq=False)
class BasisArrays:
    """Per-step P_k, P_k^{-1} (rows of 4, row-major), mean increments mu_k,
    rotation angles theta_k (elliptic steps, else 0) and log alpha_k."""

    schedule: RegimeSchedule
    v: float
    P: np.ndarray
    P_inv: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    log_alpha: np.ndarray
    elliptic: np.ndarray


def basis_arrays(schedule: RegimeSchedule, v: float) -> BasisArrays:
    z, n, k0, l0 = schedule.z, schedule.n, schedule.k0, schedule.ell0
    k = np.arange(1, n + 1, dtype=float)
    zk = _zk(z, n, k)
    sg = 1.0 if z > 0 else -1.0
    hyp = k <= k0 - l0
    ell = k >= k0 + l0
    par = ~(hyp | ell)
    disc = (z * z * n - 4.0 * k) / k
    P = np.zeros((n, 4))
    Pi = np.zeros((n, 4))
    log_alpha = np.zeros(n)
    alpha = (np.abs(zk[hyp]) + np.sqrt(disc[hyp])) / 2.0
    ia = 1.0 / alpha
    det = 1.0 - ia * ia
    P[hyp] = np.stack([np.ones_like(ia), sg * ia, sg * ia, np.ones_like(ia)], axis=1)
    Pi[hyp] = np.stack([1.0 / det, -sg * ia / det, -sg * ia / det, 1.0 / det], axis=1)
    log_alpha[hyp] = np.log(alpha)
    frozen = change_of_basis(k0 - l0, schedule)
    P[par] = frozen.P.ravel()
    Pi[par] = frozen.P_inv.ravel()
    s = np.sqrt(-disc[ell])
    ze = zk[ell]
    P[ell] = np.stack([s / 2.0, ze / 2.0, np.zeros_like(s), np.ones_like(s)], axis=1)
    Pi[ell] = np.stack([2.0 / s, -ze / s, np.zeros_like(s), np.ones_like(s)], axis=1)
    theta = np.zeros(n)
    theta[ell] = np.arctan2(s, ze)
    mu = np.zeros(n)
    mu[hyp] = log_alpha[hyp] - (v - 1.0) / (4.0 * (k0 - k[hyp]))
    mu[ell] = (v - 1.0) / (4.0 * (k[ell] - k0))
    for arr in (P, Pi, mu, theta, log_alpha):
        arr.setflags(write=False)
    return BasisArrays(schedule, float(v), P, Pi, mu, theta, log_alpha, ell)


@dataclass(frozen=True, eq=False)
class Trajectory:
    z: float
    k: np.ndarray
    psi: np.ndarray
    W: np.ndarray
    zeta: np.ndarray
    log_norm_Y: np.ndarray
    M: np.ndarray
    flagged: bool = False

    def at(self, k: int) -> int:
        """Index of checkpoint k."""
        i = int(np.searchsorted(self.k, k))
        if i >= self.k.size or self.k[i] != k:
            raise ParameterError(f"no checkpoint at k={k}")
        return i


def _checkpoints(n, stride, ks):
    if ks is not None:
        ks = np.unique(np.asarray(ks, dtype=np.int64))
        if ks.size and (ks[0] < 1 or ks[-1] > n):
            raise ParameterError("checkpoints must lie in [1, n]")
        return ks
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    ks = np.arange(1, n + 1, stride, dtype=np.int64)
    if ks[-1] != n:
        ks = np.append(ks, n)
    return ks


def conjugated_trajectory(coeffs: JacobiCoefficients, z: float,
                          schedule: RegimeSchedule, stride: int = 1, ks=None,
                          basis: BasisArrays | None = None,
                          period: int = 8) -> Trajectory:
    """psi_k = log|Y_k| - M_k, W_k and zeta_k at the requested checkpoints."""
    if coeffs.n != schedule.n or schedule.z != z:
        raise ParameterError("schedule does not match (coeffs.n, z)")
    basis = basis_arrays(schedule, coeffs.v) if basis is None else basis
    ks = _checkpoints(coeffs.n, stride, ks)
    x0 = z * math.sqrt(coeffs.n) - coeffs.b[0]
    x0, y0, e0 = _kernels._rescale(x0, 1.0)
    lg, w, zeta, M, ok = _kernels.conjugated_sweep(
        coeffs.b, coeffs.a2, float(z), 1, x0, y0, e0, basis.P_inv, basis.mu,
        basis.elliptic, ks, float(basis.mu[0]), int(period))
    return Trajectory(float(z), ks, lg - M, w, zeta, lg, M, not ok)


def restarted_log_norm(coeffs: JacobiCoefficients, basis: BasisArrays,
                       start: int, stop: int) -> float:
    """log|Xi_hat_stop ... Xi_hat_{start+1} e_1|, each Xi_hat = Xi / exp(mu)."""
    if not 1 <= start < stop <= coeffs.n:
        raise ParameterError("need 1 <= start < stop <= n")
    p = basis.P[start - 1]
    x0, y0, e0 = _kernels._rescale(p[0], p[2])
    lg, _, _, M, ok = _kernels.conjugated_sweep(
        coeffs.b, coeffs.a2, basis.schedule.z, start, x0, y0, e0, basis.P_inv,
        basis.mu, basis.elliptic, np.array([stop], dtype=np.int64), 0.0, 8)
    if not ok:
        return -math.inf
    return float(lg[0] - M[0])


def eta_curve(schedule: RegimeSchedule, k: int) -> float:
    """Boundary curve i^(-2/3) on the hyperbolic block (m_{i+1}, m_i] holding k."""
    hb, hi = schedule.hyper_bounds, schedule.hyper_index
    if not schedule.k_delta <= k <= schedule.k0 - schedule.ell0:
        raise ParameterError("k outside the contributing hyperbolic range")
    if k == schedule.k_delta:
        return hi[-1] ** (-2.0 / 3.0)
    # hb is descending; find the block with hb[j+1] < k <= hb[j]
    for j in range(len(hb) - 1):
        if hb[j + 1] < k <= hb[j]:
            return hi[j] ** (-2.0 / 3.0)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class BlockFlags:
    hyper_index: np.ndarray
    hyper_good: np.ndarray
    ell_index: np.ndarray
    ell_good: np.ndarray
    ell_deviation: np.ndarray


def _slice(traj, lo, hi):
    """Checkpoint indices for steps lo..hi inclusive; requires stride one."""
    a = int(np.searchsorted(traj.k, lo))
    b = int(np.searchsorted(traj.k, hi, side="right"))
    if b - a != hi - lo + 1:
        raise ParameterError(f"trajectory lacks dense checkpoints on [{lo}, {hi}]")
    return a, b


def good_block_flags(traj: Trajectory, schedule: RegimeSchedule, r: float = 1.0,
                     delta_exponent: float = 0.25, basis: BasisArrays | None = None,
                     hyperbolic: bool = True, elliptic: bool = True) -> BlockFlags:
    """Per-block goodness.

    Hyperbolic block (m_{i+1}, m_i] is good if W <= 2 r i^(-2/3) on it.
    Elliptic block [k_i, k_{i+1}] is good if zeta_k - zeta_{k_i} minus the
    accumulated rotation stays within i^(-delta_exponent) modulo 2 pi.
    """
    h_idx, h_good = np.empty(0, dtype=int), np.empty(0, dtype=bool)
    hb, hi = schedule.hyper_bounds, schedule.hyper_index
    if hyperbolic and len(hb) > 1:
        a, b = _slice(traj, hb[-1] + 1, hb[0])
        W = traj.W[a:b]
        # block j covers steps hb[j+1]+1 .. hb[j]; offsets relative to hb[-1]+1
        starts = np.array(hb[1:][::-1]) - hb[-1]
        worst = np.maximum.reduceat(W, starts)[::-1]
        h_idx = np.array(hi[:-1], dtype=int)
        h_good = worst <= 2.0 * r * h_idx.astype(float) ** (-2.0 / 3.0)
    e_idx, e_good, e_dev = [], [], []
    if elliptic:
        theta = (basis.theta if basis is not None
                 else basis_arrays(schedule, 1.0).theta)
        eb, ei = schedule.ell_bounds, schedule.ell_index
        for j in range(len(eb) - 1):
            lo, hi_ = eb[j], eb[j + 1]
            a, b = _slice(traj, lo, hi_)
            rot = np.cumsum(theta[lo:hi_])  # theta_{lo+1} .. theta_{hi}
            dev = traj.zeta[a + 1:b] - traj.zeta[a] - rot
            dev = np.remainder(dev + math.pi, 2.0 * math.pi) - math.pi
            worst = float(np.max(np.abs(dev))) if dev.size else 0.0
            e_idx.append(ei[j])
            e_dev.append(worst)
            e_good.append(worst <= ei[j] ** (-delta_exponent))
    return BlockFlags(h_idx, h_good,
                      np.array(e_idx, dtype=int), np.array(e_good, dtype=bool),
                      np.array(e_dev))


def hyperbolic_noise(coeffs: JacobiCoefficients, schedule: RegimeSchedule,
                     lo: int, hi: int) -> np.ndarray:
    """Leading noise of the psi increment for steps lo..hi (hyperbolic).

    This is the displayed g_k with its sign fixed by the dynamics: a positive
    b_k lowers |X_k|, so it enters with a minus sign (times sg(z)).
    """
    z, n = schedule.z, schedule.n
    k = np.arange(lo, hi + 1, dtype=float)
    zk = np.abs(_zk(z, n, k))
    alpha = (zk + np.sqrt((z * z * n - 4.0 * k) / k)) / 2.0
    ia = 1.0 / alpha
    sg = 1.0 if z > 0 else -1.0
    if lo < 2:
        raise ParameterError("noise is defined from step 2 on")
    b = coeffs.b[lo - 1:hi]
    da2 = coeffs.a2[lo - 2:hi - 1] - (k - 1.0)  # a_{k-1}^2 - E a_{k-1}^2
    term_a = da2 / np.sqrt(k * (k - 1.0))
    return -(ia * sg * b / np.sqrt(k) + ia * ia * term_a) / (1.0 - ia * ia)


def hyperbolic_residual(coeffs: JacobiCoefficients, traj: Trajectory,
                        schedule: RegimeSchedule) -> float:
    """Mean over the contributing hyperbolic range of |dpsi - g - dW/2|."""
    lo, hi = schedule.k_delta + 1, schedule.k0 - schedule.ell0
    a, b = _slice(traj, lo - 1, hi)
    dpsi = np.diff(traj.psi[a:b])
    dW = np.diff(traj.W[a:b])
    g = hyperbolic_noise(coeffs, schedule, lo, hi)
    return float(np.mean(np.abs(dpsi - g - 0.5 * dW)))


def deterministic_tail_product(z: float, n: int, delta: float):
    """(||A_{k,n}||, entry error) for the product A_n ... A_{k+1},
    k = ceil((1 - delta) n), against (2/sqrt(4-z^2)) sin(sum theta_j + theta_n)."""
    k = math.ceil((1 - Fraction(delta)) * n)
    k0 = math.floor(Fraction(z) ** 2 * n / 4)
    if k <= k0 or not 0 < k <= n:
        raise ParameterError("tail range is not fully elliptic")
    m00, m01, m10, m11 = _kernels.tail_product(float(z), int(n), int(k))
    M = np.array([[m00, m01], [m10, m11]])
    j = np.arange(k + 1, n + 1, dtype=float)
    zj = z * np.sqrt(n / j)
    th = np.arctan2(np.sqrt((4.0 * j - z * z * n) / j), zj)
    theta_n = math.atan2(math.sqrt(4.0 - z * z), z)
    pred = 2.0 / math.sqrt(4.0 - z * z) * math.sin(math.fsum(th) + theta_n)
    return float(np.linalg.norm(M, 2)), abs(m00 - pred)
