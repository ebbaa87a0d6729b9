import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ncpla.config import SystemConfig, db_to_linear
from ncpla.constellation import (
    InfeasibleError,
    design_constellation,
    message_error_per_symbol,
    message_only_ser,
    ratio_for_snr,
    threshold,
)
from ncpla.special_math import DomainError, chi2_pdf


def roots_oracle(L_m, gamma_m):
    # real root > 1 of sum_{j<L_m} R^j = L_m (gamma_m + 1)
    coeffs = np.ones(L_m)
    coeffs[-1] -= L_m * (gamma_m + 1)
    r = np.roots(coeffs)
    r = r[np.abs(r.imag) < 1e-9].real
    return float(r[r > 1][0])


def test_two_level_closed_form():
    assert ratio_for_snr(2, 10.0) == pytest.approx(21.0, rel=1e-14)


@pytest.mark.parametrize("L_m", [2, 4, 8, 16])
@pytest.mark.parametrize("gamma_db", [0.0, 6.0, 10.0, 14.0])
def test_ratio_matches_polynomial_roots(L_m, gamma_db):
    g = db_to_linear(gamma_db)
    assert ratio_for_snr(L_m, g) == pytest.approx(roots_oracle(L_m, g), rel=1e-10)


def test_four_level_ten_db():
    assert ratio_for_snr(4, 10.0) == pytest.approx(3.113795, abs=1e-6)


def test_constellation_energy_equals_target():
    con = design_constellation(L_m=8, gamma_m=db_to_linear(12.0), sigma2=0.5)
    assert con.E_m == pytest.approx(db_to_linear(12.0) * 0.5, rel=1e-10)
    np.testing.assert_allclose(con.A, 0.5 * con.R ** np.arange(8), rtol=1e-14)
    assert con.A[0] == 0.5 and con.powers[0] == 0.0


def test_nonpositive_snr_infeasible():
    with pytest.raises(InfeasibleError):
        ratio_for_snr(4, 0.0)


def test_threshold_equalises_likelihoods():
    N = 64
    lo, hi = 2.0, 5.0
    c = threshold(lo, hi)
    # density of ||y||^2 / N under each hypothesis must coincide at the boundary
    f = lambda a: chi2_pdf(N, N * c / a) * N / a
    assert f(lo) == pytest.approx(f(hi), rel=1e-10)
    assert lo < c < hi


@settings(max_examples=100, deadline=None)
@given(a=st.floats(1e-3, 1e3), ratio=st.floats(1 + 1e-9, 1e3))
def test_threshold_between_points(a, ratio):
    c = threshold(a, a * ratio)
    assert a <= c <= a * ratio


def test_threshold_rejects_unordered():
    with pytest.raises(DomainError):
        threshold(3.0, 2.0)


def _quad_ser(N, A, B):
    # independent oracle: integrate the gamma density of ||y||^2 outside each region
    err = []
    edges = np.concatenate([[0.0], np.asarray(B) * N, [np.inf]])
    for i, a in enumerate(A):
        pdf = lambda x: stats.gamma.pdf(x, N, scale=a)
        inside = integrate.quad(pdf, edges[i], edges[i + 1], epsabs=0, epsrel=1e-12,
                                limit=200, points=[N * a])[0] if np.isfinite(edges[i + 1]) else \
            integrate.quad(pdf, edges[i], np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
        err.append(1 - inside)
    return np.array(err)


def test_message_error_matches_quadrature():
    N = 16
    con = design_constellation(L_m=4, gamma_m=10.0)
    got = message_error_per_symbol(N, con.A[:, None], con.B)
    np.testing.assert_allclose(got, _quad_ser(N, con.A, con.B), rtol=1e-7, atol=1e-14)


def test_message_only_ser_accepts_config():
    cfg = SystemConfig(N=128, gamma_m=10.0)
    con = design_constellation(cfg)
    assert message_only_ser(cfg, con) == message_only_ser(128, con)
    assert 0 < message_only_ser(cfg, con) < 1e-6


def test_more_antennas_fewer_errors():
    con = design_constellation(L_m=4, gamma_m=10.0)
    sers = [message_only_ser(n, con) for n in (8, 32, 128)]
    assert sers[0] > sers[1] > sers[2]


def test_arrays_are_read_only():
    con = design_constellation(L_m=4, gamma_m=10.0)
    with pytest.raises(ValueError):
        con.A[0] = 0.0
    assert math.isclose(con.to_dict()["R"], con.R)
