"""Independent ground truth for the recursion: dense determinants, a Sturm
bisection eigensolver, the logarithmic potential and a semicircle check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ensemble import JacobiCoefficients, ParameterError

__all__ = [
    "NumericalError",
    "Spectrum",
    "dense_det",
    "sturm_count",
    "gershgorin_bounds",
    "eigen_tridiag",
    "log_potential",
    "semicircle_cdf",
    "semicircle_distance",
    "hermite_value",
    "hermite_roots",
]

MAX_BISECTION_STEPS = 200


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    n: int
    eigenvalues: np.ndarray


def dense_det(coeffs: JacobiCoefficients, z: float, k: int) -> float:
    """det(z sqrt(n) I_k - J_k) by LU with partial pivoting (LAPACK)."""
    if not 1 <= k <= min(64, coeffs.n):
        raise ParameterError("dense_det needs 1 <= k <= min(64, n)")
    M = z * math.sqrt(coeffs.n) * np.eye(k) - coeffs.dense(k)
    return float(np.linalg.det(M))


def sturm_count(coeffs: JacobiCoefficients, x: float) -> int:
    """Number of eigenvalues of J_n strictly below x."""
    return int(_kernels.sturm_count(coeffs.b, coeffs.a2, float(x)))


def gershgorin_bounds(coeffs: JacobiCoefficients):
    r = np.zeros(coeffs.n)
    r[:-1] += coeffs.a
    r[1:] += coeffs.a
    lo = float(np.min(coeffs.b - r))
    hi = float(np.max(coeffs.b + r))
    # widen by a hair so the Sturm counts at the ends are exactly 0 and n
    pad = 1e-12 * max(1.0, hi - lo)
    return lo - pad, hi + pad


def eigen_tridiag(coeffs: JacobiCoefficients, tolerance: float | None = None,
                  max_steps: int = MAX_BISECTION_STEPS) -> Spectrum:
    """All eigenvalues of J_n by Sturm-sequence bisection.

    Default tolerance is 1e-12 times the Gershgorin diameter.  An interval
    that reaches floating-point resolution counts as converged.
    """
    lo, hi = gershgorin_bounds(coeffs)
    diameter = max(hi - lo, 1e-300)
    tol = 1e-12 * diameter if tolerance is None else float(tolerance)
    if not tol > 0:
        raise ParameterError("tolerance must be positive")
    vals, steps = _kernels.bisect_all(coeffs.b, coeffs.a2, lo, hi, tol, int(max_steps))
    if steps > max_steps:
        raise NumericalError(
            f"bisection did not reach tolerance {tol:g} in {max_steps} "
            f"steps (interval [{lo:g}, {hi:g}], n={coeffs.n})")
    return Spectrum(coeffs.n, np.sort(vals))


def log_potential(spectrum: Spectrum, z: float) -> float:
    """sum_i log|z - lambda_i / sqrt(n)|; -inf when z hits an eigenvalue."""
    d = np.abs(z - spectrum.eigenvalues / math.sqrt(spectrum.n))
    if np.any(d == 0):
        return -math.inf
    return math.fsum(np.log(d))


def semicircle_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    return 0.5 + x * np.sqrt(4.0 - x * x) / (4.0 * math.pi) + np.arcsin(x / 2.0) / math.pi


def semicircle_distance(spectrum: Spectrum) -> float:
    """Kolmogorov distance between the law of lambda_i / sqrt(n) and the semicircle."""
    x = np.sort(spectrum.eigenvalues / math.sqrt(spectrum.n))
    n = x.size
    F = semicircle_cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def hermite_value(n: int, x):
    """Probabilists' Hermite polynomial He_n(x) by He_{k+1} = x He_k - k He_{k-1}."""
    x = np.asarray(x, dtype=float)
    h_prev, h = np.zeros_like(x), np.ones_like(x)
    for k in range(n):
        h_prev, h = h, x * h - k * h_prev
    return h


def hermite_roots(n: int, grid: int = 20000) -> np.ndarray:
    """Roots of He_n: sign changes on a fine grid, then bisection to the last bit."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    r = 2.0 * math.sqrt(n) + 1.0
    xs = np.linspace(-r, r, grid * n + 1)
    hs = hermite_value(n, xs)
    roots = list(xs[hs == 0.0])
    for j in np.flatnonzero(hs[:-1] * hs[1:] < 0):
        lo, hi = xs[j], xs[j + 1]
        flo = hs[j]
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            fm = float(hermite_value(n, mid))
            if fm == 0.0:
                lo = hi = mid
                break
            if (fm < 0) == (flo < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    roots = np.sort(np.array(roots))
    if roots.size != n:
        raise NumericalError(f"found {roots.size} roots of He_{n}, expected {n}")
    return roots
