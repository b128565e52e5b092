"""Maxima of the centered log-characteristic polynomial and related diagnostics.

The statistic of interest is

    max_{z in net} log|p_n(z)| - n (z^2/4 - 1/2),

expected to grow like sqrt(v) log n - (3 sqrt(v)/4) log log n.  The net is a
scaled Chebyshev net, on which the maximum of a degree-n polynomial is within
a factor 14 of its maximum on [-2, 2].
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .ensemble import (EnsembleSpec, JacobiCoefficients, ParameterError, SeedSpec, sample,
                       zero_noise)
from .oracle import NumericalError
from .recursion import log_abs_charpoly_many
from .regimes import basis_arrays, conjugated_trajectory, restarted_log_norm
from .variance import VarianceProfile, build_profile

__all__ = [
    "NumericalError",
    "EvalNet",
    "MaxRecord",
    "RegressionFit",
    "BarrierReport",
    "ExperimentSpec",
    "chebyshev_nodes",
    "chebyshev_net",
    "uniform_net",
    "default_net",
    "max_centered",
    "run_experiment",
    "fit_leading",
    "fit_fixed_second_order",
    "mean_profile",
    "barrier_window",
    "time_changed_field",
    "deterministic_field",
    "barrier_scan",
    "truncation_window",
    "truncated_field",
    "anticoncentration_check",
    "excluded_window",
    "field_covariance",
]

MAX_NET_POINTS = 16385


@dataclass(frozen=True, eq=False)
class EvalNet:
    points: np.ndarray
    kind: str
    size: int  # degree for Chebyshev nets, requested count for uniform nets
    eta: float


@dataclass(frozen=True)
class MaxRecord:
    n: int
    beta: float
    stream_id: int
    max_centered: float
    argmax_z: float
    runtime_ms: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True)
class RegressionFit:
    slope_logn: float
    slope_loglogn: float
    intercept: float
    stderr: tuple
    residuals: tuple = ()


@dataclass(frozen=True, eq=False)
class BarrierReport:
    C: float
    q: float
    crossing_fraction: float
    crossed: np.ndarray           # per replica
    worst_excess: dict            # z -> array over t in the window (nan outside)
    window: dict                  # z -> sorted t values tested
    C_star: float                 # smallest C with no crossing on the window
    C_star_full: float            # same over all t in [1, T_z]
    C_star_centered: float = float("nan")  # full range, deterministic offset removed


def chebyshev_nodes(n: int) -> np.ndarray:
    """cos(pi (k-1) / (2n)) for k = 1..2n+1, from 1 down to -1."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    k = np.arange(1, 2 * n + 2)
    x = np.cos(np.pi * (k - 1) / (2 * n))
    x[n] = 0.0  # cos(pi/2) exactly
    return x


def _bulk(z, eta):
    a = np.abs(z)
    return (a >= eta) & (a <= 2.0 - eta)


def chebyshev_net(n: int, eta: float = 0.1) -> EvalNet:
    if not 0 < eta < 1:
        raise ParameterError("eta must lie in (0, 1)")
    z = 2.0 * chebyshev_nodes(n)
    z = np.unique(z[_bulk(z, eta)])
    return EvalNet(z, "chebyshev", n, eta)


def uniform_net(count: int, eta: float = 0.1) -> EvalNet:
    """count points, half on each side of the origin, evenly spaced in I_eta."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    half = np.linspace(eta, 2.0 - eta, (count + 1) // 2)
    z = np.concatenate([-half[: count // 2][::-1], half])
    return EvalNet(np.unique(z), "uniform", count, eta)


def default_net(n: int, eta: float = 0.1) -> EvalNet:
    """Chebyshev net with min(2n + 1, 16385) nodes before filtering."""
    return chebyshev_net(min(n, (MAX_NET_POINTS - 1) // 2), eta)


def max_centered(coeffs: JacobiCoefficients, net: EvalNet, stream_id: int = 0) -> MaxRecord:
    """Maximum over the net of the centered field; ties go to the smallest z."""
    if net.points.size == 0:
        raise ParameterError("empty net")
    t0 = time.perf_counter()
    _, _, centered, flagged = log_abs_charpoly_many(coeffs, net.points)
    vals = np.where(flagged | ~np.isfinite(centered), -np.inf, centered)
    j = int(np.argmax(vals))
    ms = (time.perf_counter() - t0) * 1e3
    beta = coeffs.spec.beta if coeffs.spec is not None and coeffs.spec.kind == "gbe" else float("nan")
    if not np.isfinite(vals[j]):
        return MaxRecord(coeffs.n, beta, stream_id, float("nan"), float("nan"), ms,
                         "no finite value on the net")
    return MaxRecord(coeffs.n, beta, stream_id, float(vals[j]), float(net.points[j]), ms)


@dataclass(frozen=True)
class ExperimentSpec:
    n_values: tuple
    replicas: int
    ensemble: EnsembleSpec = field(default_factory=lambda: EnsembleSpec.gbe(2.0))
    net: str = "chebyshev"        # "chebyshev" (default size rule), "chebyshev-full", "uniform"
    net_size: int = 0             # uniform count; ignored for Chebyshev kinds
    eta: float = 0.1
    master_seed: int = 0
    threads: int = 1
    timing: bool = True


def _net_for(spec: ExperimentSpec, n: int) -> EvalNet:
    if spec.net == "chebyshev":
        return default_net(n, spec.eta)
    if spec.net == "chebyshev-full":
        return chebyshev_net(n, spec.eta)
    if spec.net == "uniform":
        return uniform_net(spec.net_size, spec.eta)
    raise ParameterError(f"unknown net kind {spec.net!r}")


def run_experiment(spec: ExperimentSpec) -> list:
    """One MaxRecord per (n, replica), sorted by (n, stream_id).

    Stream ids are numbered consecutively across the whole (n, replica) grid
    so that no two units share random numbers.
    """
    units = []
    sid = 0
    for n in spec.n_values:
        for _ in range(spec.replicas):
            units.append((int(n), sid))
            sid += 1
    nets = {n: _net_for(spec, n) for n in set(int(n) for n in spec.n_values)}

    def work(unit):
        n, s = unit
        try:
            coeffs = sample(spec.ensemble, n, SeedSpec(spec.master_seed, s))
            rec = max_centered(coeffs, nets[n], s)
        except Exception as exc:  # recorded, the batch goes on
            beta = spec.ensemble.beta if spec.ensemble.kind == "gbe" else float("nan")
            rec = MaxRecord(n, beta, s, float("nan"), float("nan"), 0.0, repr(exc))
        if not spec.timing:
            rec = MaxRecord(rec.n, rec.beta, rec.stream_id, rec.max_centered,
                            rec.argmax_z, 0.0, rec.error)
        return rec

    if spec.threads > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            records = list(pool.map(work, units))
    else:
        records = [work(u) for u in units]
    return sorted(records, key=lambda r: (r.n, r.stream_id))


def _fit_points(records):
    """(n, max) for every successful record and the number of distinct n."""
    ok = [r for r in records if r.ok]
    ns = np.array([r.n for r in ok], dtype=float)
    ys = np.array([r.max_centered for r in ok], dtype=float)
    return ns, ys, np.unique(ns).size


def _ols(X, y):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise NumericalError("rank-deficient regression design")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    dof = X.shape[0] - X.shape[1]
    if dof > 0:
        s2 = float(res @ res) / dof
        se = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
    else:
        se = np.full(X.shape[1], np.nan)
    return coef, se, res


def fit_leading(records) -> RegressionFit:
    """OLS of the per-replica maximum on (log n, log log n, 1).

    With equal replica counts the coefficients equal those of the fit to the
    per-n means; the replica scatter supplies the standard errors.
    """
    ns, ys, distinct = _fit_points(records)
    if distinct < 3:
        raise ParameterError("need at least three distinct n values")
    L = np.log(ns)
    X = np.column_stack([L, np.log(L), np.ones_like(L)])
    coef, se, res = _ols(X, ys)
    return RegressionFit(float(coef[0]), float(coef[1]), float(coef[2]),
                         tuple(float(s) for s in se), tuple(float(r) for r in res))


def fit_fixed_second_order(records, v: float = 1.0) -> RegressionFit:
    """OLS on (log n, 1) after adding back the predicted -(3 sqrt(v)/4) log log n."""
    ns, ys, distinct = _fit_points(records)
    if distinct < 2:
        raise ParameterError("need at least two distinct n values")
    L = np.log(ns)
    c2 = -0.75 * math.sqrt(v)
    X = np.column_stack([L, np.ones_like(L)])
    coef, se, res = _ols(X, ys - c2 * np.log(L))
    return RegressionFit(float(coef[0]), c2, float(coef[1]),
                         (float(se[0]), 0.0, float(se[1])), tuple(float(r) for r in res))


def mean_profile(z: float, n: int) -> float:
    """D_n(z) = sum_{k <= k0} log alpha_k, the deterministic growth of |X_n|."""
    k0 = math.floor(Fraction(z) ** 2 * n / 4)
    k = np.arange(1, k0 + 1, dtype=float)
    zk = abs(z) * np.sqrt(n / k)
    disc = np.maximum((z * z * n - 4.0 * k) / k, 0.0)
    return math.fsum(np.log((zk + np.sqrt(disc)) / 2.0))


def barrier_window(n: int, q: float, T: int):
    """t in [1, t_q^-] union [t_q^+, T] with t_q^pm = floor(2 tau / 3 pm q log tau)."""
    tau = math.log(n)
    lo = math.floor(2.0 * tau / 3.0 - q * math.log(tau))
    hi = math.floor(2.0 * tau / 3.0 + q * math.log(tau))
    return np.array([t for t in range(1, T + 1) if t <= lo or t >= hi], dtype=int)


def excluded_window(n: int, q: float):
    tau = math.log(n)
    return (math.floor(2.0 * tau / 3.0 - q * math.log(tau)),
            math.floor(2.0 * tau / 3.0 + q * math.log(tau)))


def time_changed_field(coeffs: JacobiCoefficients, z: float,
                       profile: VarianceProfile, basis=None) -> np.ndarray:
    """Psi_t = psi_{n_t} for t = 1..T_z."""
    sch = profile.schedule
    tr = conjugated_trajectory(coeffs, z, sch, ks=profile.time_change, basis=basis)
    if tr.flagged:
        raise NumericalError(f"trajectory hit an exact zero at z={z}")
    lookup = {int(k): p for k, p in zip(tr.k, tr.psi)}
    return np.array([lookup[int(k)] for k in profile.time_change])


def deterministic_field(z: float, profile: VarianceProfile, basis=None) -> np.ndarray:
    """Psi_t of the noise-free recursion (means built with v = 0), sampled at
    the time change of `profile`.

    It stays near zero in the hyperbolic regime and jumps across the parabolic
    window, where no mean is subtracted; the noise rides on this offset.
    """
    n = profile.schedule.n
    if basis is None:
        basis = basis_arrays(profile.schedule, 0.0)
    return time_changed_field(zero_noise(n), z, profile, basis)


def barrier_scan(fields: dict, n: int, v: float, C: float, q: float,
                 offsets: dict | None = None) -> BarrierReport:
    """fields maps z to an array (replicas, T_z) of Psi_t, column t - 1.

    offsets, if given, maps z to the noise-free field (see deterministic_field);
    it only enters the C_star_centered diagnostic.
    """
    if not fields:
        raise ParameterError("no fields supplied")
    ll = math.log(math.log(n))
    sv = math.sqrt(v)
    reps = {a.shape[0] for a in fields.values()}
    if len(reps) != 1:
        raise ParameterError("all z must carry the same number of replicas")
    R = reps.pop()
    crossed = np.zeros(R, dtype=bool)
    worst, windows = {}, {}
    c_star, c_full, c_cent = -math.inf, -math.inf, -math.inf
    for z, Psi in fields.items():
        T = Psi.shape[1]
        if T < 1:
            raise ParameterError(f"missing time-change checkpoints for z={z}")
        t_all = np.arange(1, T + 1)
        excess_all = Psi - sv * t_all  # before subtracting C log log n
        c_full = max(c_full, float(np.max(excess_all)) / ll)
        if offsets is not None:
            c_cent = max(c_cent, float(np.max(excess_all - offsets[z])) / ll)
        win = barrier_window(n, q, T)
        windows[z] = win
        if win.size:
            ex = excess_all[:, win - 1]
            crossed |= np.any(ex > C * ll, axis=1)
            worst[z] = np.max(ex, axis=0) - C * ll
            c_star = max(c_star, float(np.max(ex)) / ll)
        else:
            worst[z] = np.empty(0)
    return BarrierReport(float(C), float(q), float(crossed.mean()), crossed, worst,
                         windows, c_star, c_full,
                         c_cent if offsets is not None else float("nan"))


def truncation_window(profile: VarianceProfile, epsilon: float):
    """(start, stop) steps of the truncated recursion: n_{t_eps} and n_{tau_eps}.

    t_eps = floor(eps log tau), tau = log n, and the stopping time uses
    t = floor(tau) - t_eps (capped at n for t >= T_z); n_0 = 1.
    """
    n = profile.schedule.n
    tau = math.log(n)
    t_eps = math.floor(epsilon * math.log(tau))
    t_stop = math.floor(tau) - t_eps
    if t_eps < 0 or t_stop <= t_eps:
        raise ParameterError("invalid truncation window")
    start = 1 if t_eps == 0 else profile.n_t(t_eps)
    stop = profile.n_t(t_stop)
    if not start < stop:
        raise ParameterError("invalid truncation window (empty)")
    return start, stop


def truncated_field(coeffs: JacobiCoefficients, z: float, epsilon: float,
                    profile: VarianceProfile | None = None, basis=None) -> float:
    """Recursion restarted at e_1 at time n_{t_eps}, run to n_{tau_eps},
    each step normalized by exp(mu_k)."""
    if profile is None:
        spec = coeffs.spec or EnsembleSpec.gbe(2.0)
        profile = build_profile(z, coeffs.n, spec)
    if basis is None:
        basis = basis_arrays(profile.schedule, coeffs.v)
    start, stop = truncation_window(profile, epsilon)
    return restarted_log_norm(coeffs, basis, start, stop)


def anticoncentration_check(coeffs_set, z: float, delta: float = 0.05) -> float:
    """Frequency of |<e_1, X_n>| <= delta^(5/6) |X_m|, m = floor((1 - delta) n)."""
    hits = 0
    total = 0
    for c in coeffs_set:
        n = c.n
        m = math.floor((1 - Fraction(delta)) * n)
        zs = np.array([float(z)])
        x, _, e = _kernels.sweep_grid(c.b, c.a2, zs, n, 8)
        if m >= 1:
            xm, ym, em = _kernels.sweep_grid(c.b, c.a2, zs, m, 8)
            log_xm = math.log(math.hypot(xm[0], ym[0])) + em[0] * _kernels.LN2
        else:
            log_xm = 0.0  # X_0 = (1, 0)
        log_xn = (math.log(abs(x[0])) + e[0] * _kernels.LN2) if x[0] != 0 else -math.inf
        hits += log_xn <= (5.0 / 6.0) * math.log(delta) + log_xm
        total += 1
    if total == 0:
        raise ParameterError("no replicas supplied")
    return hits / total


def field_covariance(Psi: np.ndarray, s: int, t: int, n: int | None = None,
                     q: float = 0.5) -> float:
    """Empirical covariance of (Psi_s, Psi_t) across replicas (rows)."""
    if n is not None:
        lo, hi = excluded_window(n, q)
        for u in (s, t):
            if lo < u < hi:
                raise ParameterError(f"t={u} lies inside the excluded window ({lo}, {hi})")
    Psi = np.asarray(Psi, dtype=float)
    if Psi.shape[0] < 100:
        warnings.warn("fewer than 100 replicas: covariance estimate is noisy",
                      RuntimeWarning, stacklevel=2)
    a = Psi[:, s - 1]
    b = Psi[:, t - 1]
    return float(np.mean((a - a.mean()) * (b - b.mean())) * a.size / max(a.size - 1, 1))
