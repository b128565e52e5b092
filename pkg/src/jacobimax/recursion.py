"""Characteristic polynomials of Jacobi matrices by three-term recursion.

q_k(z) = det(z sqrt(n) I_k - J_k) obeys

    q_k = (z sqrt(n) - b_k) q_{k-1} - a_{k-1}^2 q_{k-2},   q_0 = 1, q_{-1} = 0.

For large n we follow phi_k = q_k / sqrt(k!) instead, whose transfer matrix
has entries of order one.  log|p_n(z)| = log|q_n| - (n/2) log n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .ensemble import JacobiCoefficients, ParameterError

__all__ = [
    "EvalPoint",
    "ScaledState",
    "CharPolyResult",
    "raw_charpoly",
    "scaled_state",
    "log_abs_charpoly",
    "log_abs_charpoly_many",
    "eval_grid",
    "log_norm_offset",
]

DEFAULT_PERIOD = 8


@dataclass(frozen=True)
class EvalPoint:
    z: float
    n: int
    eta: float = 0.1

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ParameterError("eta must lie in (0, 1)")
        if not self.eta <= abs(self.z) <= 2 - self.eta:
            raise ParameterError(f"z={self.z} outside the bulk [eta, 2 - eta]")


@dataclass(frozen=True)
class ScaledState:
    """X_k stored as exp(log_norm) * direction with a unit direction."""

    k: int
    direction: tuple
    log_norm: float
    sign: int

    def vector(self) -> np.ndarray:
        return math.exp(self.log_norm) * np.asarray(self.direction)


@dataclass(frozen=True)
class CharPolyResult:
    z: float
    log_abs_p: float
    sign: int
    centered: float
    flagged: bool = False


def raw_charpoly(coeffs: JacobiCoefficients, z: float, k: int) -> float:
    """q_k(z) straight from the unscaled recursion.  Overflow gives +-inf."""
    if not 0 <= k <= coeffs.n:
        raise ParameterError("need 0 <= k <= n")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_kernels.raw_recursion(coeffs.b, coeffs.a2,
                                            z * math.sqrt(coeffs.n), k))


def log_norm_offset(n: int) -> float:
    """log sqrt(n!) - (n/2) log n, converting log|phi_n| to log|p_n|."""
    return 0.5 * math.lgamma(n + 1.0) - 0.5 * n * math.log(n)


def _sweep(coeffs, zs, stop, period):
    zs = np.ascontiguousarray(zs, dtype=float)
    return _kernels.sweep_grid(coeffs.b, coeffs.a2, zs, int(stop), int(period))


def scaled_state(coeffs: JacobiCoefficients, z: float, k: int | None = None,
                 period: int = DEFAULT_PERIOD) -> ScaledState:
    """X_k = (phi_k, phi_{k-1}) in normalized form."""
    k = coeffs.n if k is None else int(k)
    if not 1 <= k <= coeffs.n:
        raise ParameterError("need 1 <= k <= n")
    x, y, e = _sweep(coeffs, [z], k, period)
    nrm = math.hypot(x[0], y[0])
    if nrm == 0.0:
        return ScaledState(k, (0.0, 0.0), -math.inf, 0)
    lead = x[0] if x[0] != 0 else y[0]
    sign = 1 if lead > 0 else -1
    return ScaledState(k, (x[0] / nrm, y[0] / nrm),
                       math.log(nrm) + float(e[0]) * _kernels.LN2, sign)


def log_abs_charpoly_many(coeffs: JacobiCoefficients, zs,
                          period: int = DEFAULT_PERIOD):
    """Vectorized form: arrays (log_abs_p, sign, centered, flagged)."""
    zs = np.asarray(zs, dtype=float)
    n = coeffs.n
    if zs.size == 0:
        empty = np.empty(0)
        return empty, np.empty(0, dtype=int), empty, np.empty(0, dtype=bool)
    x, _, e = _sweep(coeffs, zs, n, period)
    flagged = x == 0.0
    with np.errstate(divide="ignore"):
        lp = np.log(np.abs(x)) + e * _kernels.LN2 + log_norm_offset(n)
    lp[flagged] = -np.inf
    sign = np.sign(x).astype(int)
    centered = lp - n * (zs * zs / 4.0 - 0.5)
    return lp, sign, centered, flagged


def log_abs_charpoly(coeffs: JacobiCoefficients, z: float,
                     period: int = DEFAULT_PERIOD) -> CharPolyResult:
    """log|p_n(z)| with p_n(z) = det(z - J_n / sqrt(n))."""
    lp, sign, centered, flagged = log_abs_charpoly_many(coeffs, [z], period)
    return CharPolyResult(float(z), float(lp[0]), int(sign[0]),
                          float(centered[0]), bool(flagged[0]))


def eval_grid(coeffs: JacobiCoefficients,
              grid: Sequence[EvalPoint] | Iterable[float]) -> list:
    zs = []
    for p in grid:
        if isinstance(p, EvalPoint):
            if p.n != coeffs.n:
                raise ParameterError("grid point n differs from coefficient n")
            zs.append(p.z)
        else:
            zs.append(float(p))
    lp, sign, centered, flagged = log_abs_charpoly_many(coeffs, zs)
    return [CharPolyResult(z, float(a), int(s), float(c), bool(f))
            for z, a, s, c, f in zip(zs, lp, sign, centered, flagged)]
