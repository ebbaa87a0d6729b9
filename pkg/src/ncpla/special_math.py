"""Complex chi-squared distribution helpers and a bracketed root finder.

The energy statistic ``||y||^2 / A`` of an N-antenna Rayleigh link follows a
complex chi-squared law with N degrees of freedom, i.e. a unit-scale gamma
distribution with shape N.  Its CDF is the regularized lower incomplete gamma
function ``P(N, z) = 1 - exp(-z) * sum_{L<N} z^L / L!``.

The naive finite sum overflows for a few hundred antennas, so evaluation is
delegated to :func:`scipy.special.gammainc` / :func:`scipy.special.gammaincc`,
which switch between the power series and the continued fraction internally.
The upper tail is always computed directly (never as ``1 - cdf``) so that tiny
error probabilities keep full relative precision.
"""

import math

import numpy as np
from scipy import optimize, special

__all__ = [
    "DomainError",
    "NoSignChangeError",
    "chi2_cdf",
    "chi2_sf",
    "chi2_pdf",
    "chi2_logpdf",
    "solve_monotone",
]


class DomainError(ValueError):
    """Argument outside the domain of a distribution function."""


class NoSignChangeError(ValueError):
    """The bracket handed to :func:`solve_monotone` does not contain a root."""


def _check(N, z):
    if int(N) != N or N < 1:
        raise DomainError(f"order N must be a positive integer, got {N!r}")
    z = np.asarray(z, dtype=float)
    if np.any(np.isnan(z)) or np.any(z < 0):
        raise DomainError("z must be non-negative")
    return int(N), z


def _out(value, z):
    return float(value) if np.ndim(z) == 0 else value


def chi2_cdf(N, z):
    """CDF ``G(z)`` of a complex chi-squared variable with ``N`` degrees of freedom.

    Parameters
    ----------
    N : int
        Degrees of freedom (number of receive antennas), ``N >= 1``.
    z : float or array_like
        Evaluation point(s), ``z >= 0``.  ``np.inf`` is accepted.

    Returns
    -------
    float or ndarray
        ``P(N, z)`` with the shape of ``z``.
    """
    N, z = _check(N, z)
    return _out(special.gammainc(N, z), z)


def chi2_sf(N, z):
    """Upper tail ``1 - G(z)``, evaluated without cancellation."""
    N, z = _check(N, z)
    return _out(special.gammaincc(N, z), z)


def chi2_logpdf(N, z):
    N, z = _check(N, z)
    with np.errstate(divide="ignore"):
        out = special.xlogy(N - 1, z) - z - math.lgamma(N)
    return _out(out, z)


def chi2_pdf(N, z):
    """Density ``z^(N-1) exp(-z) / (N-1)!``, computed in log space."""
    return _out(np.exp(chi2_logpdf(N, z)), np.asarray(z))


def solve_monotone(f, lo, hi, tol=1e-12):
    """Root of a continuous monotone function on ``[lo, hi]``.

    Brent's method on a guaranteed bracket.  The result is deterministic for a
    given ``f`` and bracket.

    Raises
    ------
    NoSignChangeError
        If ``f(lo)`` and ``f(hi)`` have the same strict sign.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChangeError(
            f"no sign change on [{lo}, {hi}]: f(lo)={flo:g}, f(hi)={fhi:g}"
        )
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
