"""Non-negative PAM message constellation for non-coherent energy detection.

Received powers form a geometric sequence ``A_i = sigma2 * R**(i-1)`` whose
ratio ``R`` is fixed by the average message power.  Decisions are taken on
``||y||^2 / N`` against the maximum-likelihood thresholds returned by
:func:`threshold`.
"""

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SystemConfig
from .special_math import DomainError, chi2_cdf, chi2_sf, solve_monotone

__all__ = [
    "InfeasibleError",
    "MessageConstellation",
    "design_constellation",
    "ratio_for_snr",
    "threshold",
    "message_only_ser",
    "message_error_per_symbol",
]


class InfeasibleError(ValueError):
    """Requested design cannot be realised (budget or reliability target)."""


def threshold(A_lo, A_hi):
    """ML boundary between two received powers under the energy detector.

    Equal likelihood of ``||y||^2/N = b`` under powers ``A_lo`` and ``A_hi``
    gives ``b = A_lo A_hi ln(A_hi/A_lo) / (A_hi - A_lo)``.  ``log1p`` keeps the
    result accurate when the two powers are nearly equal.
    """
    A_lo = np.asarray(A_lo, dtype=float)
    A_hi = np.asarray(A_hi, dtype=float)
    if np.any(A_lo <= 0) or np.any(A_hi <= A_lo):
        raise DomainError("threshold needs 0 < A_lo < A_hi")
    d = A_hi - A_lo
    out = A_lo * A_hi * np.log1p(d / A_lo) / d
    return float(out) if out.ndim == 0 else out


def ratio_for_snr(L_m, gamma_m):
    """Common ratio ``R > 1`` solving ``sum_{j<L_m} R^j = L_m (gamma_m + 1)``."""
    if not gamma_m > 0:
        raise InfeasibleError(f"message SNR must be positive, got {gamma_m!r}")
    target = L_m * (gamma_m + 1.0)
    if L_m == 2:
        return target - 1.0
    # the polynomial is strictly increasing for R > 0
    return solve_monotone(lambda R: np.polyval(np.ones(L_m), R) - target,
                          1.0, target, tol=1e-14)


@dataclass(frozen=True)
class MessageConstellation:
    R: float
    A: np.ndarray
    B: np.ndarray
    sigma2: float = 1.0

    @property
    def L_m(self):
        return len(self.A)

    @property
    def powers(self):
        """Transmit powers ``|m_i|^2``."""
        return self.A - self.sigma2

    @property
    def E_m(self):
        return float(np.mean(self.powers))

    def to_dict(self):
        return {"R": self.R, "A": self.A.tolist(), "B": self.B.tolist(), "sigma2": self.sigma2}


def _frozen(x):
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    return x


def design_constellation(cfg: SystemConfig = None, *, L_m=None, gamma_m=None, sigma2=None):
    """Asymptotically optimal constellation for the configured message SNR.

    Either pass a :class:`SystemConfig` or the three keyword arguments.
    """
    if cfg is not None:
        L_m = cfg.L_m if L_m is None else L_m
        gamma_m = cfg.gamma_m if gamma_m is None else gamma_m
        sigma2 = cfg.sigma2 if sigma2 is None else sigma2
    if L_m is None or gamma_m is None:
        raise ConfigError("L_m and gamma_m are required")
    sigma2 = 1.0 if sigma2 is None else sigma2
    R = ratio_for_snr(L_m, gamma_m)
    A = sigma2 * R ** np.arange(L_m)
    B = threshold(A[:-1], A[1:])
    return MessageConstellation(R=float(R), A=_frozen(A), B=_frozen(np.atleast_1d(B)),
                                sigma2=float(sigma2))


def message_error_per_symbol(N, A, B):
    """Message error probability of each row of a (possibly tag-embedded) grid.

    ``A`` has shape ``(L_m, L_t)``; every column of row ``i`` is sent with equal
    probability and decided on the message thresholds ``B``.  Both tails are
    evaluated directly so that tiny probabilities are not lost.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    L_m = A.shape[0]
    err = np.zeros(L_m)
    # exceed the upper boundary
    err[:-1] += np.mean(chi2_sf(N, N * B[:, None] / A[:-1]), axis=1)
    # fall below the lower boundary
    err[1:] += np.mean(chi2_cdf(N, N * B[:, None] / A[1:]), axis=1)
    return err


def message_only_ser(cfg, con: MessageConstellation):
    """Average SER of the bare constellation (no tag embedded)."""
    N = cfg if isinstance(cfg, (int, np.integer)) else cfg.N
    return float(np.mean(message_error_per_symbol(N, con.A[:, None], con.B)))
