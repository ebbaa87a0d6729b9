import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncpla.constellation import design_constellation
from ncpla.embedding import (
    EmbeddingScheme,
    build_message_based,
    build_uniform,
    detect,
    gray_code,
    gray_decode,
)
from ncpla.special_math import DomainError, chi2_logpdf

N = 64


def ml_oracle(y, A):
    # joint maximum likelihood over every grid point of the energy statistic
    flat = A.ravel()
    ll = np.array([chi2_logpdf(N, N * y / a) - np.log(a) for a in flat])
    idx = int(np.argmax(ll))
    return divmod(idx, A.shape[1])


def test_uniform_grid_layout(con10):
    s = build_uniform(con10, 2, 0.5)
    step = 0.5 * (con10.A[1] - con10.A[0])
    np.testing.assert_allclose(s.A[:, 1] - s.A[:, 0], step)
    np.testing.assert_allclose(s.A[:, 0], con10.A)
    assert s.E_t == pytest.approx(step / 2)
    assert s.E_m == pytest.approx(con10.E_m)


def test_uniform_beta_one_touches_next_row(con10):
    s = build_uniform(con10, 4, 1.0)
    assert s.A[0, -1] == pytest.approx(s.A[1, 0])
    assert s.B[0] == pytest.approx(s.A[1, 0])


@pytest.mark.parametrize("beta", [0.0, -0.1, 1.01])
def test_uniform_beta_outside_interval(con10, beta):
    with pytest.raises(DomainError):
        build_uniform(con10, 2, beta)


def test_message_based_grid_layout(con10):
    r = [1.2, 1.3, 1.4, 1.5]
    s = build_message_based(con10, 4, 1.3)
    np.testing.assert_allclose(s.A[:, 1:] / s.A[:, :-1], 1.3)
    s = build_message_based(con10, 2, r)
    np.testing.assert_allclose(s.A[:, 1] / s.A[:, 0], r)


@pytest.mark.parametrize("r", [1.0, 0.9, 3.2])
def test_message_based_ratio_out_of_range(con10, r):
    with pytest.raises(DomainError):
        build_message_based(con10, 2, r)


def test_rows_never_overlap(con10):
    rmax = con10.R ** (1 / 3)
    s = build_message_based(con10, 4, rmax * (1 - 1e-6))
    flat = s.A.ravel()
    assert np.all(np.diff(flat) > 0)


@pytest.mark.parametrize("kind", ["uniform", "message_based"])
@settings(max_examples=300, deadline=None)
@given(y=st.floats(0.05, 40.0))
def test_two_stage_detector_is_joint_ml(kind, y):
    con = design_constellation(L_m=4, gamma_m=10.0)
    s = build_uniform(con, 4, 0.7) if kind == "uniform" else build_message_based(con, 4, 1.25)
    assert detect(y, s) == ml_oracle(y, s.A)


def test_ties_go_to_lower_symbol(con10):
    s = build_message_based(con10, 2, 1.3)
    assert detect(s.B[1], s) == (1, 1)
    assert detect(s.C[2, 0], s) == (2, 0)


def test_detect_vectorised(con10):
    s = build_message_based(con10, 2, 1.3)
    y = s.A.ravel()
    msg, tag = detect(y, s)
    np.testing.assert_array_equal(msg, np.repeat(np.arange(4), 2))
    np.testing.assert_array_equal(tag, np.tile(np.arange(2), 4))


def test_gray_neighbours_differ_in_one_bit():
    n = np.arange(256)
    g = gray_code(n)
    diff = g[1:] ^ g[:-1]
    assert np.all(diff & (diff - 1) == 0)
    np.testing.assert_array_equal(gray_decode(g), n)
    assert len(set(g.tolist())) == 256


def test_json_round_trip(con10):
    for s in (build_uniform(con10, 4, 0.3), build_message_based(con10, 2, [1.1, 1.2, 1.3, 1.4])):
        back = EmbeddingScheme.from_json(s.to_json())
        assert back.kind == s.kind and back.beta == s.beta
        for name in ("A", "B", "C"):
            np.testing.assert_array_equal(getattr(back, name), getattr(s, name))
