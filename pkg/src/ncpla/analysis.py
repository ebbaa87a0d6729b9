"""Closed-form message and tag symbol error rates.

Tag errors are measured conditionally on a correct message decision: the row
of the transmitted message is assumed known and only the tag quantiser on that
row is analysed.
"""

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .constellation import message_error_per_symbol
from .embedding import EmbeddingScheme
from .special_math import DomainError, chi2_cdf, chi2_sf

__all__ = [
    "ErrorReport",
    "message_ser",
    "tag_ser",
    "tag_ser_message_based",
    "message_ser_upper_bound",
    "conditional_tag_ser_exact",
    "u_of_k",
    "v_of_k",
    "g_of_k",
    "h_of_k",
    "tag_kernel",
    "bound_kernel",
]


def u_of_k(k):
    """``ln r / (r - 1)`` with ``r = e^k``; equals 1 at ``k = 0``."""
    k = np.asarray(k, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(k == 0, 1.0, k / np.expm1(k))
    return out


def v_of_k(k):
    """``r ln r / (r - 1)`` with ``r = e^k``."""
    return u_of_k(k) + np.asarray(k, dtype=float)


def _slack(k, R, L_t):
    return np.log(R) - (L_t - 1) * np.asarray(k, dtype=float)


def g_of_k(k, R, L_t):
    """``R ln(R/q) / (R - q)`` with ``q = e^{k (L_t - 1)}``."""
    return v_of_k(_slack(k, R, L_t))


def h_of_k(k, R, L_t):
    """``q ln(R/q) / (R - q)`` with ``q = e^{k (L_t - 1)}``."""
    return u_of_k(_slack(k, R, L_t))


def tag_kernel(k, N):
    """Per-row tag error mass ``1 + G(N u) - G(N v)`` at ``r = e^k``."""
    return chi2_sf(N, N * v_of_k(k)) + chi2_cdf(N, N * u_of_k(k))


def bound_kernel(k, N, R, L_t):
    """Per-boundary message error bound ``1 - G(N g) + G(N h)``."""
    return chi2_sf(N, N * g_of_k(k, R, L_t)) + chi2_cdf(N, N * h_of_k(k, R, L_t))


@dataclass
class ErrorReport:
    """Message and tag error rates from theory or from simulation.

    ``source`` is ``"theory"`` or ``"monte_carlo"``; for the latter ``frames``
    and the 95% Wilson intervals are filled in.
    """

    p_em: float
    p_et: float
    per_symbol_tag: list
    p_em_upper: float | None = None
    source: str = "theory"
    frames: int | None = None
    p_em_ci: tuple | None = None
    p_et_ci: tuple | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("p_em", "p_et"):
            if not -1e-15 <= getattr(self, name) <= 1 + 1e-15:
                raise ValueError(f"{name} outside [0, 1]")
        if self.p_em_upper is not None and self.p_em_upper < self.p_em:
            raise ValueError("upper bound below the exact message SER")

    def as_row(self):
        row = asdict(self)
        row.pop("extra")
        per = row.pop("per_symbol_tag")
        for i, p in enumerate(per, start=1):
            row[f"p_et_{i}"] = p
        for key in ("p_em_ci", "p_et_ci"):
            ci = row.pop(key)
            row[f"{key}_lo"], row[f"{key}_hi"] = ci if ci is not None else (None, None)
        row.update(self.extra)
        return row

    def to_csv(self):
        buf = io.StringIO()
        row = self.as_row()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def message_ser(scheme: EmbeddingScheme, N, con=None):
    """Average message SER of an embedded grid (``con`` is accepted for symmetry)."""
    return float(np.mean(message_error_per_symbol(N, scheme.A, scheme.B)))


def tag_ser(scheme: EmbeddingScheme, N, con=None):
    """Average conditional tag SER and its per-message-symbol breakdown.

    Returns
    -------
    p_et : float
    per_symbol : ndarray, shape (L_m,)
        ``P_{et,i} = 1 - P_{ct,i}``.
    """
    A, C = scheme.A, scheme.C
    # each tag threshold contributes an upward error from the point below and a
    # downward error from the point above
    err = chi2_sf(N, N * C / A[:, :-1]) + chi2_cdf(N, N * C / A[:, 1:])
    per_symbol = err.sum(axis=1) / scheme.L_t
    return float(per_symbol.mean()), per_symbol


def tag_ser_message_based(r, L_t, N):
    """Tag SER of a message-based scheme from its ratios alone.

    It does not depend on the message constellation, hence not on the message
    SNR.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 1):
        raise DomainError("tag ratios must exceed 1")
    L_m = r.size
    return float((L_t - 1) / (L_m * L_t) * np.sum(tag_kernel(np.log(r), N)))


def message_ser_upper_bound(r, R, L_t, L_m, N):
    """Upper bound on the message SER of a message-based scheme.

    Each interior error is bounded by the error of the extreme tag point on
    that side; the top row's ratio does not enter.
    """
    r = np.broadcast_to(np.asarray(r, dtype=float), (L_m,))
    q = r ** (L_t - 1)
    if np.any(q[:-1] <= 1) or np.any(q[:-1] >= R):
        raise DomainError("need 1 < r_i**(L_t-1) < R")
    return _bound_from_k(np.log(r[:-1]), N, R, L_t, L_m)


def _bound_from_k(k, N, R, L_t, L_m):
    return float(np.sum(bound_kernel(k, N, R, L_t)) / L_m)


def conditional_tag_ser_exact(scheme: EmbeddingScheme, N):
    """Exact ``P(tag wrong | message right)`` for the two-stage detector.

    Unlike :func:`tag_ser` this truncates the energy statistic to the decision
    region of the transmitted message, which is what a simulator that only
    scores frames with a correct message decision measures.  The two agree up
    to terms of the order of the message SER.
    """
    A, B, C = scheme.A, scheme.B, scheme.C
    L_m, L_t = A.shape
    lo = np.concatenate([[0.0], B])
    hi = np.concatenate([B, [np.inf]])
    joint_ok = 0.0
    msg_ok = 0.0
    for i in range(L_m):
        edges = np.concatenate([[lo[i]], np.clip(C[i], lo[i], hi[i]), [hi[i]]])
        for j in range(L_t):
            a = A[i, j]
            cdf = chi2_cdf(N, N * edges / a)
            msg_ok += cdf[-1] - cdf[0]
            joint_ok += cdf[j + 1] - cdf[j]
    return float(1.0 - joint_ok / msg_ok)
