"""Random Jacobi coefficients.

Two laws are provided: the Gaussian beta ensemble in its tridiagonal form
(Gaussian diagonal, chi off-diagonal) and a generic bounded family whose
moments mimic it.  Every draw is tied to a (master_seed, stream_id) pair
through a counter-based Philox stream, so replicas may be generated in any
order and on any thread without changing their values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParameterError",
    "SamplingError",
    "EnsembleSpec",
    "JacobiCoefficients",
    "SeedSpec",
    "standard_gamma",
    "sample_gbe",
    "sample_generic",
    "sample",
    "truncate_coefficients",
    "truncation_level",
    "zero_noise",
]

MAX_REJECTIONS = 10**6
GENERIC_FAMILIES = ("uniform", "zero")


class ParameterError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str = "gbe"
    beta: float = 2.0
    v_generic: float = 1.0
    family: str = "uniform"
    truncate: bool = False
    truncation_exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in ("gbe", "generic"):
            raise ParameterError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "gbe" and not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.kind == "generic":
            if self.family not in GENERIC_FAMILIES:
                raise ParameterError(f"unsupported family tag {self.family!r}")
            if self.family != "zero" and not self.v_generic > 0:
                raise ParameterError(f"v must be positive, got {self.v_generic}")
        if not self.truncation_exponent >= 1:
            raise ParameterError("truncation_exponent must be >= 1")

    @classmethod
    def gbe(cls, beta, **kw):
        return cls(kind="gbe", beta=float(beta), **kw)

    @classmethod
    def generic(cls, v=1.0, family="uniform", **kw):
        return cls(kind="generic", v_generic=float(v), family=family, **kw)

    @property
    def v(self) -> float:
        """Noise variance: Var(b_k) and Var(a_k^2)/k to leading order."""
        if self.kind == "gbe":
            return 2.0 / self.beta
        if self.family == "zero":
            return 0.0
        return self.v_generic

    def var_b(self, k):
        return np.full(np.shape(k), self.v, dtype=float)

    def var_a2(self, k):
        """Exact Var(a_k^2) (k may be an array; a_0 = 0 has zero variance)."""
        k = np.asarray(k, dtype=float)
        return self.v * k


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ParameterError("master_seed must fit in 64 bits")
        if int(self.stream_id) < 0:
            raise ParameterError("stream_id must be nonnegative")

    def generator(self, purpose: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed),
                                    spawn_key=(int(self.stream_id), purpose))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class JacobiCoefficients:
    """One Jacobi matrix: a[k-1] holds a_k (k = 1..n-1), b[k-1] holds b_k.

    The matrix is oriented so that the leading k x k minor involves
    b_1..b_k and a_1..a_{k-1}.
    """

    n: int
    a: np.ndarray
    b: np.ndarray
    a2: np.ndarray = field(default=None)
    spec: EnsembleSpec | None = None
    resampled: int = 0

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=float)
        b = np.ascontiguousarray(self.b, dtype=float)
        a2 = a * a if self.a2 is None else np.ascontiguousarray(self.a2, dtype=float)
        if self.n < 1:
            raise ParameterError("n must be positive")
        if b.shape != (self.n,) or a.shape != (self.n - 1,) or a2.shape != a.shape:
            raise ParameterError("need len(b) == n and len(a) == n - 1")
        if np.any(a < 0):
            raise ParameterError("off-diagonal entries must be nonnegative")
        for name, arr in (("a", a), ("b", b), ("a2", a2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def v(self) -> float:
        return 1.0 if self.spec is None else self.spec.v

    def __eq__(self, other):
        if not isinstance(other, JacobiCoefficients):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.a2, other.a2)
                and np.array_equal(self.b, other.b))

    def dense(self, k=None) -> np.ndarray:
        k = self.n if k is None else k
        J = np.diag(self.b[:k])
        off = self.a[: k - 1]
        J[np.arange(k - 1), np.arange(1, k)] = off
        J[np.arange(1, k), np.arange(k - 1)] = off
        return J


def standard_gamma(shape, rng: np.random.Generator) -> np.ndarray:
    """Gamma(shape, 1) variates by Marsaglia-Tsang squeeze/rejection.

    Shapes below one are boosted: G(s) = G(s + 1) * U**(1/s).
    """
    shape_in = np.asarray(shape, dtype=float)
    shape = shape_in.ravel()
    if np.any(shape <= 0):
        raise ParameterError("gamma shape must be positive")
    small = shape < 1.0
    s = np.where(small, shape + 1.0, shape)
    d = s - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(s)
    todo = np.arange(s.size)
    for _ in range(MAX_REJECTIONS):
        if todo.size == 0:
            break
        dd, cc = d[todo], c[todo]
        x = rng.standard_normal(todo.size)
        u = rng.random(todo.size)
        v = 1.0 + cc * x
        v3 = v * v * v
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            logv3 = np.log(np.where(ok, v3, 1.0))
            accept = ok & ((u < 1.0 - 0.0331 * x**4)
                           | (np.log(u) < 0.5 * x * x + dd * (1.0 - v3 + logv3)))
        out[todo[accept]] = dd[accept] * v3[accept]
        todo = todo[~accept]
    else:
        raise SamplingError("gamma rejection loop exceeded its cap")
    if np.any(small):
        u = rng.random(int(small.sum()))
        out[small] *= u ** (1.0 / shape[small])
    return out.reshape(shape_in.shape)


def _gbe_b(beta, count, rng):
    return math.sqrt(2.0 / beta) * rng.standard_normal(count)


def _gbe_a2(beta, ks, rng):
    return (2.0 / beta) * standard_gamma(beta * np.asarray(ks, dtype=float) / 2.0, rng)


def _uniform_b(v, count, rng):
    return math.sqrt(v) * rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), count)


def _uniform_a2(v, ks, rng):
    ks = np.asarray(ks, dtype=float)
    u = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), ks.size)
    return np.maximum(ks + np.sqrt(v * ks) * u, 0.25 * ks)


def _draw_b(spec, count, rng):
    if spec.kind == "gbe":
        return _gbe_b(spec.beta, count, rng)
    if spec.family == "zero":
        return np.zeros(count)
    return _uniform_b(spec.v, count, rng)


def _draw_a2(spec, ks, rng):
    if spec.kind == "gbe":
        return _gbe_a2(spec.beta, ks, rng)
    if spec.family == "zero":
        return np.asarray(ks, dtype=float).copy()
    return _uniform_a2(spec.v, ks, rng)


def _build(spec, n, seed):
    if n < 1:
        raise ParameterError("n must be positive")
    rng = seed.generator(0)
    b = _draw_b(spec, n, rng)
    a2 = _draw_a2(spec, np.arange(1, n), rng)
    coeffs = JacobiCoefficients(n, np.sqrt(a2), b, a2=a2, spec=spec)
    if spec.truncate:
        coeffs = truncate_coefficients(coeffs, spec.truncation_exponent, seed)
    return coeffs


def sample_gbe(beta: float, n: int, seed: SeedSpec) -> JacobiCoefficients:
    """Tridiagonal Gaussian beta ensemble: b_k ~ N(0, 2/beta), beta a_k^2 ~ chi^2(beta k)."""
    return _build(EnsembleSpec.gbe(beta), n, seed)


def sample_generic(spec: EnsembleSpec, n: int, seed: SeedSpec) -> JacobiCoefficients:
    if spec.kind != "generic":
        raise ParameterError("sample_generic needs a generic ensemble spec")
    return _build(spec, n, seed)


def sample(spec: EnsembleSpec, n: int, seed: SeedSpec) -> JacobiCoefficients:
    return _build(spec, n, seed)


def zero_noise(n: int) -> JacobiCoefficients:
    """Deterministic member: b = 0, a_k^2 = k (the Hermite recursion)."""
    spec = EnsembleSpec.generic(family="zero")
    a2 = np.arange(1, n, dtype=float)
    return JacobiCoefficients(n, np.sqrt(a2), np.zeros(n), a2=a2, spec=spec)


def truncation_level(n: int, exponent: float) -> float:
    return math.log(n) ** exponent


def _violations(b, a2, level):
    # bound on b_k and on k^{-1/2}|a_{k-1}^2 - (k-1)| for k = 2..n
    ks = np.arange(1, a2.size + 1, dtype=float)
    bad_b = np.abs(b) > level
    bad_a = np.abs(a2 - ks) / np.sqrt(ks + 1.0) > level
    return bad_b, bad_a


def truncate_coefficients(coeffs: JacobiCoefficients, exponent: float,
                          seed: SeedSpec) -> JacobiCoefficients:
    """Resample, entry by entry, every coefficient violating the log-power bound.

    This draws from the conditional law given that all entries satisfy the
    bound.  Inputs already inside the bound come back unchanged.
    """
    if not exponent >= 1:
        raise ParameterError("exponent must be >= 1")
    spec = coeffs.spec
    if spec is None:
        raise ParameterError("coefficients carry no ensemble spec to resample from")
    level = truncation_level(coeffs.n, exponent)
    b = coeffs.b.copy()
    a2 = coeffs.a2.copy()
    bad_b, bad_a = _violations(b, a2, level)
    if not (bad_b.any() or bad_a.any()):
        return coeffs
    rng = seed.generator(1)
    ks_all = np.arange(1, a2.size + 1)
    for _ in range(MAX_REJECTIONS):
        if not (bad_b.any() or bad_a.any()):
            break
        ib = np.flatnonzero(bad_b)
        ia = np.flatnonzero(bad_a)
        b[ib] = _draw_b(spec, ib.size, rng)
        a2[ia] = _draw_a2(spec, ks_all[ia], rng)
        bad_b, bad_a = _violations(b, a2, level)
    else:
        raise SamplingError("truncation resampling exceeded 10**6 rejections")
    changed = int(np.count_nonzero(b != coeffs.b) + np.count_nonzero(a2 != coeffs.a2))
    return JacobiCoefficients(coeffs.n, np.sqrt(a2), b, a2=a2, spec=spec,
                              resampled=changed)
