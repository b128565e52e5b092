import math

import numpy as np
import pytest

from jacobimax.ensemble import EnsembleSpec, JacobiCoefficients, ParameterError, SeedSpec, sample, zero_noise
from jacobimax.oracle import (NumericalError, Spectrum, dense_det, eigen_tridiag,
                              gershgorin_bounds, hermite_roots, hermite_value, log_potential,
                              semicircle_cdf, semicircle_distance, sturm_count)
from jacobimax.recursion import log_abs_charpoly_many, raw_charpoly


def test_dense_det_trivial():
    c = JacobiCoefficients(1, np.array([]), np.array([0.25]))
    assert dense_det(c, 1.0, 1) == pytest.approx(1.0 - 0.25)
    c2 = JacobiCoefficients(2, np.array([1.0]), np.array([0.0, 0.0]))
    x = 0.9 * math.sqrt(2)
    assert dense_det(c2, 0.9, 2) == pytest.approx(x * x - 1)
    with pytest.raises(ParameterError):
        dense_det(sample(EnsembleSpec.gbe(2.0), 80, SeedSpec(0)), 1.0, 65)


def test_dense_det_vs_recursion_k12():
    c = sample(EnsembleSpec.gbe(2.0), 40, SeedSpec(12))
    for z in (-1.1, 0.2, 1.6):
        d = dense_det(c, z, 12)
        assert raw_charpoly(c, z, 12) == pytest.approx(d, rel=1e-9)


def test_eigen_trivial():
    c = JacobiCoefficients(1, np.array([]), np.array([0.7]))
    assert eigen_tridiag(c).eigenvalues == pytest.approx([0.7])
    c2 = JacobiCoefficients(2, np.array([1.0]), np.array([0.0, 0.0]))
    assert eigen_tridiag(c2).eigenvalues == pytest.approx([-1.0, 1.0], abs=1e-11)


def test_hermite_value_closed_forms():
    x = np.linspace(-3, 3, 13)
    assert np.allclose(hermite_value(3, x), x**3 - 3 * x)
    assert np.allclose(hermite_value(4, x), x**4 - 6 * x**2 + 3)


def test_hermite_roots_n20():
    roots = hermite_roots(20)
    # cross-check the bisection oracle against the library root finder
    lib = np.sort(np.polynomial.hermite_e.hermeroots([0] * 20 + [1]))
    assert np.max(np.abs(roots - lib)) < 1e-10
    eig = eigen_tridiag(zero_noise(20)).eigenvalues
    assert np.max(np.abs(eig - roots)) <= 1e-10


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_eigen_vs_library(beta):
    c = sample(EnsembleSpec.gbe(beta), 300, SeedSpec(5))
    ours = eigen_tridiag(c).eigenvalues
    ref = np.linalg.eigvalsh(c.dense())
    assert np.max(np.abs(ours - ref)) < 1e-9 * np.max(np.abs(ref))


def test_sturm_at_gershgorin_bounds():
    c = sample(EnsembleSpec.gbe(2.0), 500, SeedSpec(1))
    lo, hi = gershgorin_bounds(c)
    assert sturm_count(c, lo) == 0
    assert sturm_count(c, hi) == c.n


def test_symmetric_spectrum_when_b_zero():
    c = sample(EnsembleSpec.gbe(2.0), 101, SeedSpec(1))
    c0 = JacobiCoefficients(c.n, c.a, np.zeros(c.n), a2=c.a2)
    ev = eigen_tridiag(c0).eigenvalues
    assert np.allclose(ev, -ev[::-1], atol=1e-10)


def test_invalid_tolerance_and_nonconvergence():
    c = sample(EnsembleSpec.gbe(2.0), 20, SeedSpec(1))
    with pytest.raises(ParameterError):
        eigen_tridiag(c, tolerance=0.0)
    with pytest.raises(NumericalError):
        eigen_tridiag(c, max_steps=5)


def test_log_potential():
    assert log_potential(Spectrum(1, np.array([0.0])), math.e) == pytest.approx(1.0)
    assert log_potential(Spectrum(4, np.array([-2.0, 2.0, 3.0, 4.0])), 1.0) == -math.inf


@pytest.mark.parametrize("n", [64, 256, 1024])
def test_log_potential_matches_recursion(n):
    for beta in (1.0, 2.0, 4.0):
        c = sample(EnsembleSpec.gbe(beta), n, SeedSpec(3, n))
        sp = eigen_tridiag(c)
        zs = np.linspace(-1.8, 1.8, 9)
        lp = log_abs_charpoly_many(c, zs)[0]
        ref = np.array([log_potential(sp, z) for z in zs])
        assert np.all(np.abs(lp - ref) <= 1e-8 * np.abs(ref) + 1e-8)


def test_semicircle_distance_trivial():
    n = 1000
    # exact quantiles of the semicircle: F(x_i) = (i - 1/2)/n
    p = (np.arange(1, n + 1) - 0.5) / n
    lo, hi = -2.0 * np.ones(n), 2.0 * np.ones(n)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = semicircle_cdf(mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    sp = Spectrum(n, 0.5 * (lo + hi) * math.sqrt(n))
    assert semicircle_distance(sp) <= 1.0 / n
    assert semicircle_distance(Spectrum(n, np.zeros(n))) == pytest.approx(0.5)


def test_semicircle_cdf_endpoints():
    assert semicircle_cdf(-2.0) == pytest.approx(0.0, abs=1e-15)
    assert semicircle_cdf(0.0) == pytest.approx(0.5)
    assert semicircle_cdf(2.5) == pytest.approx(1.0)


@pytest.mark.slow
def test_semicircle_fit_n10000():
    d = [semicircle_distance(eigen_tridiag(sample(EnsembleSpec.gbe(2.0), 10000, SeedSpec(40, s)),
                                           tolerance=1e-6))
         for s in range(20)]
    assert np.mean(d) <= 0.02
