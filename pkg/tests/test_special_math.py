import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncpla.special_math import (
    DomainError,
    NoSignChangeError,
    chi2_cdf,
    chi2_logpdf,
    chi2_pdf,
    chi2_sf,
    solve_monotone,
)

mpmath.mp.dps = 50


def mp_cdf(N, z):
    # finite sum for the integer-order lower tail: 1 - e^{-z} sum_{k<N} z^k/k!
    z = mpmath.mpf(z)
    return 1 - mpmath.exp(-z) * mpmath.fsum(z**k / mpmath.factorial(k) for k in range(N))


def mp_sf(N, z):
    z = mpmath.mpf(z)
    return mpmath.exp(-z) * mpmath.fsum(z**k / mpmath.factorial(k) for k in range(N))


CASES = [(1, 0.3), (1, 5.0), (2, 0.01), (8, 3.0), (8, 20.0), (32, 32.0), (64, 40.0),
         (128, 100.0), (128, 128.0), (128, 170.0), (256, 200.0), (256, 330.0)]


@pytest.mark.parametrize("N,z", CASES)
def test_cdf_and_sf_match_big_float_series(N, z):
    exact_cdf = float(mp_cdf(N, z))
    exact_sf = float(mp_sf(N, z))
    assert chi2_cdf(N, z) == pytest.approx(exact_cdf, rel=1e-12, abs=1e-300)
    assert chi2_sf(N, z) == pytest.approx(exact_sf, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("N,z", [(128, 40.0), (128, 260.0), (256, 120.0)])
def test_deep_tails_keep_relative_accuracy(N, z):
    small = min(mp_cdf(N, z), mp_sf(N, z))
    assert small < 1e-10
    got = chi2_cdf(N, z) if z < N else chi2_sf(N, z)
    assert got == pytest.approx(float(small), rel=1e-10)


def test_boundary_values():
    assert chi2_cdf(5, 0.0) == 0.0
    assert chi2_sf(5, 0.0) == 1.0
    assert chi2_cdf(1, 2.0) == pytest.approx(1 - math.exp(-2.0), rel=1e-15)


def test_scalar_in_scalar_out_and_vectorized():
    assert isinstance(chi2_cdf(4, 1.0), float)
    z = np.array([0.5, 1.0, 2.0])
    out = chi2_cdf(4, z)
    assert out.shape == (3,)
    np.testing.assert_allclose(out, [chi2_cdf(4, float(v)) for v in z], rtol=0)


@pytest.mark.parametrize("bad", [(0, 1.0), (2.5, 1.0), (3, -0.1), (3, float("nan"))])
def test_domain_errors(bad):
    with pytest.raises(DomainError):
        chi2_cdf(*bad)


@pytest.mark.parametrize("N,z", [(1, 0.7), (8, 5.0), (128, 120.0)])
def test_pdf_is_derivative_of_cdf(N, z):
    h = 1e-5 * max(z, 1.0)
    fd = (chi2_cdf(N, z + h) - chi2_cdf(N, z - h)) / (2 * h)
    assert chi2_pdf(N, z) == pytest.approx(fd, rel=1e-6)
    assert chi2_logpdf(N, z) == pytest.approx(math.log(chi2_pdf(N, z)), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(N=st.integers(1, 300), z=st.floats(0, 600), dz=st.floats(1e-6, 50))
def test_cdf_is_monotone_and_complementary(N, z, dz):
    assert chi2_cdf(N, z) <= chi2_cdf(N, z + dz)
    assert chi2_cdf(N, z) + chi2_sf(N, z) == pytest.approx(1.0, abs=1e-14)
    assert 0.0 <= chi2_cdf(N, z) <= 1.0


@settings(max_examples=100, deadline=None)
@given(N=st.integers(1, 300), z=st.floats(0.01, 600))
def test_cdf_decreases_with_degrees_of_freedom(N, z):
    assert chi2_cdf(N + 1, z) <= chi2_cdf(N, z)


def test_solve_monotone():
    root = solve_monotone(lambda x: x**3 - 2.0, 0.0, 2.0)
    assert root == pytest.approx(2 ** (1 / 3), abs=1e-12)
    with pytest.raises(NoSignChangeError):
        solve_monotone(lambda x: x * x + 1.0, -1.0, 1.0)
