"""Tag-embedded constellations and the two-stage energy detector.

A tag symbol ``t_{i,j}`` is superimposed in power on message symbol ``m_i``,
producing the received-power grid ``A[i, j] = |m_i|^2 + |t_{i,j}|^2 + sigma2``
with ``|t_{i,0}|^2 = 0``.  Two grid families are supported:

* uniform: a constant power step ``|dt|^2 = beta * (A_2 - A_1) / (L_t - 1)``
  in every row;
* message-based: row ``i`` is geometric with ratio ``r_i``.

Indices are zero-based throughout the code.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .constellation import MessageConstellation, _frozen, threshold
from .special_math import DomainError

__all__ = [
    "EmbeddingScheme",
    "build_uniform",
    "build_message_based",
    "detect",
    "gray_code",
    "gray_decode",
]


@dataclass(frozen=True)
class EmbeddingScheme:
    """Received-power grid with message thresholds ``B`` and tag thresholds ``C``.

    ``kind`` is ``"uniform"`` (``beta`` set) or ``"message_based"`` (``r`` set).
    ``R`` is the message ratio of the underlying constellation.
    """

    kind: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sigma2: float
    R: float
    beta: float | None = None
    r: np.ndarray | None = field(default=None)

    @property
    def L_m(self):
        return self.A.shape[0]

    @property
    def L_t(self):
        return self.A.shape[1]

    @property
    def tag_powers(self):
        """``|t_{i,j}|^2`` for every grid point."""
        return self.A - self.A[:, :1]

    @property
    def E_t(self):
        """Average tag power over equiprobable grid points."""
        return float(np.mean(self.tag_powers))

    @property
    def E_m(self):
        return float(np.mean(self.A[:, 0] - self.sigma2))

    def to_dict(self):
        return {
            "kind": self.kind,
            "beta": self.beta,
            "r": None if self.r is None else self.r.tolist(),
            "R": self.R,
            "sigma2": self.sigma2,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "E_m": self.E_m,
            "E_t": self.E_t,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            A=_frozen(d["A"]),
            B=_frozen(d["B"]),
            C=_frozen(d["C"]),
            sigma2=float(d["sigma2"]),
            R=float(d["R"]),
            beta=d.get("beta"),
            r=None if d.get("r") is None else _frozen(d["r"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _thresholds(A):
    A = np.asarray(A)
    B = threshold(A[:-1, -1], A[1:, 0])
    C = threshold(A[:, :-1], A[:, 1:])
    return np.atleast_1d(B), np.atleast_2d(C)


def build_uniform(con: MessageConstellation, L_t, beta):
    """Uniform embedding with normalised tag power ``beta`` in ``(0, 1]``.

    The constant step is ``|dt|^2 = beta * (A_2 - A_1) / (L_t - 1)``, so the
    top tag of the lowest row reaches the second message point exactly at
    ``beta = 1``.  That boundary case is allowed; the corresponding message
    threshold degenerates to the shared power.
    """
    if not 0 < beta <= 1:
        raise DomainError(f"beta must lie in (0, 1], got {beta!r}")
    step = beta * (con.A[1] - con.A[0]) / (L_t - 1)
    A = con.A[:, None] + step * np.arange(L_t)[None, :]
    C = threshold(A[:, :-1], A[:, 1:])
    lo, hi = A[:-1, -1], A[1:, 0]
    B = np.where(hi > lo, 0.0, lo)
    open_ = hi > lo
    if np.any(open_):
        B[open_] = threshold(lo[open_], hi[open_])
    return EmbeddingScheme("uniform", _frozen(A), _frozen(B), _frozen(np.atleast_2d(C)),
                           sigma2=con.sigma2, R=con.R, beta=float(beta))


def build_message_based(con: MessageConstellation, L_t, r):
    """Message-based embedding: row ``i`` is ``A_i * r_i**j``, ``j < L_t``.

    Every ratio must satisfy ``1 < r_i < R**(1/(L_t-1))`` so rows never touch.
    """
    r = np.broadcast_to(np.asarray(r, dtype=float), (con.L_m,)).copy()
    r_max = con.R ** (1.0 / (L_t - 1))
    if np.any(r <= 1) or np.any(r >= r_max):
        raise DomainError(f"tag ratios must lie in (1, {r_max:.6g}), got {r.tolist()}")
    A = con.A[:, None] * r[:, None] ** np.arange(L_t)[None, :]
    B, C = _thresholds(A)
    return EmbeddingScheme("message_based", _frozen(A), _frozen(B), _frozen(C),
                           sigma2=con.sigma2, R=con.R, r=_frozen(r))


def detect(ynorm, scheme: EmbeddingScheme):
    """Two-stage quantisation of the energy statistic ``||y||^2 / N``.

    The message index is the number of message thresholds strictly below the
    statistic; the tag index is found the same way on the row of the detected
    message.  A statistic lying exactly on a threshold therefore maps to the
    lower symbol.

    Returns zero-based ``(msg, tag)`` index arrays (or ints for scalar input).
    """
    y = np.asarray(ynorm, dtype=float)
    msg = np.searchsorted(scheme.B, y, side="left")
    C = scheme.C
    # count of row thresholds strictly below y, evaluated on the detected row
    tag = np.sum(C[msg] < y[..., None], axis=-1)
    if y.ndim == 0:
        return int(msg), int(tag)
    return msg, tag


def gray_code(n):
    n = np.asarray(n)
    return n ^ (n >> 1)


def gray_decode(g):
    g = np.array(g, copy=True)
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g
