"""Noise variances along the recursion and the variance time change.

In the hyperbolic regime the psi increment is driven by g_k, a linear
combination of b_k and a_{k-1}^2 with variance sigma_k^2 ~ v / (2 (k0 - k)).

In the elliptic regime the increment is w_k = cos(theta_k + zeta) (d_k cos zeta
+ c_k sin zeta) where zeta is the current phase.  Two closed forms are kept:

* ``"averaged"``: E[w_k^2] averaged over a uniform phase,
      E c^2 (1 + 2 sin^2 theta)/8 + E d^2 (1 + 2 cos^2 theta)/8 - E cd sin(2 theta)/4,
  which is ~ v / (4 (k - k0)) next to k0.  Used for the time change.
* ``"displayed"``: (E c^2 + E d^2)(1 + sin^2(theta)/2) + E cd (sin 2 theta - cos^2(theta)/2),
  kept for comparison; it is about 8 times larger near k0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import kahan_cumsum
from .ensemble import EnsembleSpec, ParameterError
from .regimes import RegimeSchedule, build_schedule

__all__ = [
    "NoiseFunctionals",
    "VarianceProfile",
    "sigma2_hyperbolic",
    "elliptic_moments",
    "sigma2_elliptic",
    "noise_functionals",
    "build_profile",
    "time_change_index",
    "ELLIPTIC_FORMS",
]

ELLIPTIC_FORMS = ("averaged", "displayed")


def _f(k):
    return np.asarray(k, dtype=float)


def sigma2_hyperbolic(k, z, n, var_b, var_a2_prev, schedule=None):
    """E[g_k^2] = (1-a^-2)^-2 (a^-2 Var b_k / k + a^-4 Var a_{k-1}^2 / (k(k-1)))."""
    k = _f(k)
    sch = schedule
    if sch is not None and np.any(k > sch.k0 - sch.ell0):
        raise ParameterError("sigma2_hyperbolic needs k <= k0 - ell0")
    disc = (z * z * n - 4.0 * k) / k
    if np.any(disc <= 0):
        raise ParameterError("sigma2_hyperbolic needs a hyperbolic step")
    alpha = (abs(z) * np.sqrt(n / k) + np.sqrt(disc)) / 2.0
    ia2 = alpha**-2
    with np.errstate(divide="ignore", invalid="ignore"):
        term_a = np.where(k > 1, ia2 * ia2 * _f(var_a2_prev) / (k * (k - 1.0)), 0.0)
    return (ia2 * _f(var_b) / k + term_a) / (1.0 - ia2) ** 2


def elliptic_moments(k, z, n, var_b, var_a2_prev):
    """(E c_k^2, E d_k^2, E c_k d_k) from independent b_k and a_{k-1}^2."""
    k = _f(k)
    zk = z * np.sqrt(n / k)
    q = (4.0 * k - z * z * n) / k  # 4 - z_k^2
    if np.any(q <= 0):
        raise ParameterError("elliptic moments need an elliptic step")
    vb = _f(var_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        va = np.where(k > 1, _f(var_a2_prev) / (k * (k - 1.0)), 0.0)
    ec2 = (4.0 / q) * (zk * zk * vb / (4.0 * k) + va)
    ed2 = vb / k
    ecd = zk * vb / (k * np.sqrt(q))
    return ec2, ed2, ecd


def _combine(ec2, ed2, ecd, theta, form):
    s, c = np.sin(theta), np.cos(theta)
    if form == "averaged":
        return (ec2 * (1.0 + 2.0 * s * s) + ed2 * (1.0 + 2.0 * c * c)) / 8.0 \
            - ecd * np.sin(2.0 * theta) / 4.0
    if form == "displayed":
        return (ec2 + ed2) * (1.0 + 0.5 * s * s) + ecd * (np.sin(2.0 * theta) - 0.5 * c * c)
    raise ParameterError(f"unknown elliptic form {form!r}")


def sigma2_elliptic(k, z, n, var_b, var_a2_prev, form="averaged", schedule=None):
    k = _f(k)
    sch = schedule
    if sch is not None and np.any(k < sch.k0 + sch.ell0):
        raise ParameterError("sigma2_elliptic needs k >= k0 + ell0")
    ec2, ed2, ecd = elliptic_moments(k, z, n, var_b, var_a2_prev)
    zk = z * np.sqrt(n / k)
    theta = np.arctan2(np.sqrt((4.0 * k - z * z * n) / k), zk)
    return _combine(ec2, ed2, ecd, theta, form)


@dataclass(frozen=True, eq=False)
class NoiseFunctionals:
    k: np.ndarray
    var_g: np.ndarray
    var_c: np.ndarray
    var_d: np.ndarray
    cov_cd: np.ndarray
    sigma2: np.ndarray
    sigma2_displayed: np.ndarray


def noise_functionals(schedule: RegimeSchedule, spec: EnsembleSpec) -> NoiseFunctionals:
    """Per-step noise moments; NaN outside the regime where each is defined."""
    z, n, k0, l0 = schedule.z, schedule.n, schedule.k0, schedule.ell0
    k = np.arange(1, n + 1, dtype=float)
    vb = spec.var_b(k)
    va = spec.var_a2(k - 1.0)
    hyp = k <= k0 - l0
    ell = k >= k0 + l0
    nan = np.full(n, np.nan)
    var_g, var_c, var_d, cov_cd = nan.copy(), nan.copy(), nan.copy(), nan.copy()
    sig, sig_d = np.zeros(n), np.zeros(n)
    var_g[hyp] = sigma2_hyperbolic(k[hyp], z, n, vb[hyp], va[hyp])
    sig[hyp] = var_g[hyp]
    sig_d[hyp] = var_g[hyp]
    ec2, ed2, ecd = elliptic_moments(k[ell], z, n, vb[ell], va[ell])
    var_c[ell], var_d[ell], cov_cd[ell] = ec2, ed2, ecd
    theta = np.arctan2(np.sqrt((4.0 * k[ell] - z * z * n) / k[ell]), z * np.sqrt(n / k[ell]))
    sig[ell] = _combine(ec2, ed2, ecd, theta, "averaged")
    sig_d[ell] = _combine(ec2, ed2, ecd, theta, "displayed")
    return NoiseFunctionals(k.astype(np.int64), var_g, var_c, var_d, cov_cd, sig, sig_d)


@dataclass(frozen=True, eq=False)
class VarianceProfile:
    schedule: RegimeSchedule
    v: float
    sigma2: np.ndarray
    Sigma2: np.ndarray
    hat_sigma2: np.ndarray
    hat_Sigma2: np.ndarray
    time_change: np.ndarray  # n_{t,z} for t = 1..T_z
    T_z: int
    elliptic_form: str

    def n_t(self, t: int) -> int:
        """n_{t,z}; for t >= T_z the cap n applies."""
        if t < 1:
            raise ParameterError("t must be >= 1")
        return int(self.time_change[t - 1]) if t <= self.T_z else self.schedule.n


def hat_sigma2(schedule: RegimeSchedule, v: float) -> np.ndarray:
    k = np.arange(1, schedule.n + 1, dtype=float)
    k0, l0 = schedule.k0, schedule.ell0
    out = np.zeros(schedule.n)
    hyp = k < k0 - l0
    ell = k > k0 + l0
    out[hyp] = v / (2.0 * (k0 - k[hyp]))
    out[ell] = v / (4.0 * (k[ell] - k0))
    return out


def time_change_index(Sigma2: np.ndarray, v: float, T: int) -> np.ndarray:
    """n_t = min{k : Sigma2_k >= v t / 2} capped at n, for t = 1..T."""
    n = Sigma2.size
    t = np.arange(1, T + 1, dtype=float)
    idx = np.searchsorted(Sigma2, v * t / 2.0, side="left") + 1
    return np.minimum(idx, n).astype(np.int64)


def build_profile(z: float, n: int, spec: EnsembleSpec | None = None,
                  kappa: float = 4.0, delta: float | None = None, eta: float = 0.1,
                  schedule: RegimeSchedule | None = None,
                  elliptic_form: str = "averaged") -> VarianceProfile:
    """Exact and approximate variance profiles and the time change."""
    spec = EnsembleSpec.gbe(2.0) if spec is None else spec
    v = spec.v
    if not v > 0:
        raise ParameterError("the time change needs positive noise variance")
    if schedule is None:
        schedule = build_schedule(z, n, kappa, delta, eta)
    nf = noise_functionals(schedule, spec)
    if elliptic_form not in ELLIPTIC_FORMS:
        raise ParameterError(f"unknown elliptic form {elliptic_form!r}")
    sig = nf.sigma2 if elliptic_form == "averaged" else nf.sigma2_displayed
    S = kahan_cumsum(np.ascontiguousarray(sig))
    hs = hat_sigma2(schedule, v)
    hS = kahan_cumsum(hs)
    T = int(math.ceil(2.0 / v * S[-1]))
    tc = time_change_index(S, v, T)
    for arr in (sig, S, hs, hS, tc):
        arr.setflags(write=False)
    return VarianceProfile(schedule, v, sig, S, hs, hS, tc, T, elliptic_form)
