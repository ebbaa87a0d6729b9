"""Monte Carlo link-level simulation of the non-coherent SIMO channel.

Each trial sends one grid point ``x_{i,j} = sqrt(A[i, j] - sigma2)`` through
``y = h x + n`` with i.i.d. unit-variance Rayleigh gains and noise of power
``sigma2`` per antenna, then runs the two-stage energy detector.

Trials are generated in fixed-size blocks; block ``b`` draws from its own
substream seeded by ``(seed, b)``.  Results are therefore bit-identical for
any number of worker processes.
"""

import concurrent.futures as cf
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .embedding import EmbeddingScheme, detect
from .special_math import chi2_cdf

__all__ = [
    "BLOCK",
    "SimResult",
    "block_rng",
    "draw_energy",
    "simulate_ser",
    "chi2_statistic_check",
    "wilson_interval",
    "within_wilson",
    "format_rate",
]

BLOCK = 4096


def block_rng(seed, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def wilson_interval(k, n, z=1.959963984540054):
    """Wilson score interval for ``k`` successes out of ``n``."""
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


def within_wilson(k, n, p, z=3.0):
    """True if ``p`` lies in the ``z``-sigma Wilson interval of ``k / n``."""
    lo, hi = wilson_interval(k, n, z)
    return lo - 1e-15 <= p <= hi + 1e-15


def format_rate(k, n):
    return f"<{1.0 / n:.3g}" if k == 0 else repr(k / n)


def draw_energy(rng, powers, N, sigma2, method="channel"):
    """Energy statistic ``||y||^2 / N`` for each transmit power in ``powers``.

    ``method="channel"`` draws ``h`` and ``n`` explicitly (two independent
    normals per complex entry, scaled by ``1/sqrt(2)``).  ``method="energy"``
    draws ``||y||^2 / A`` from its exact gamma law, one number per trial.
    """
    powers = np.asarray(powers, dtype=float)
    A = powers + sigma2
    if method == "energy":
        return A * rng.standard_gamma(N, size=powers.shape) / N
    if method != "channel":
        raise ValueError(f"unknown method {method!r}")
    shape = powers.shape + (N,)
    s = math.sqrt(0.5)
    h = s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    n = math.sqrt(sigma2 / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    y = h * np.sqrt(powers)[..., None] + n
    return np.einsum("...k,...k->...", y.real, y.real) / N + \
        np.einsum("...k,...k->...", y.imag, y.imag) / N


@dataclass
class SimResult:
    """Error tallies of a Monte Carlo run.

    Per-symbol arrays are indexed by the transmitted message symbol.
    ``tag_trials`` counts trials whose message was decided correctly; only
    those are scored for ``tag_errors``.  ``tag_errors_known_row`` scores the
    tag detector of the transmitted row on every trial, which is the quantity
    the closed-form tag SER describes.
    """

    frames: int
    sent: np.ndarray
    msg_errors_per_symbol: np.ndarray
    tag_trials_per_symbol: np.ndarray
    tag_errors_per_symbol: np.ndarray
    tag_errors_known_row_per_symbol: np.ndarray
    seed: int = 0
    method: str = "channel"
    extra: dict = field(default_factory=dict)

    @property
    def msg_errors(self):
        return int(self.msg_errors_per_symbol.sum())

    @property
    def tag_trials(self):
        return int(self.tag_trials_per_symbol.sum())

    @property
    def tag_errors(self):
        return int(self.tag_errors_per_symbol.sum())

    @property
    def tag_errors_known_row(self):
        return int(self.tag_errors_known_row_per_symbol.sum())

    @property
    def p_em(self):
        return self.msg_errors / self.frames

    @property
    def p_et(self):
        return self.tag_errors / self.tag_trials if self.tag_trials else float("nan")

    @property
    def p_et_known_row(self):
        return self.tag_errors_known_row / self.frames

    @property
    def p_em_ci(self):
        return wilson_interval(self.msg_errors, self.frames)

    @property
    def p_et_ci(self):
        return wilson_interval(self.tag_errors, self.tag_trials)

    @property
    def p_et_known_row_ci(self):
        return wilson_interval(self.tag_errors_known_row, self.frames)

    @property
    def per_symbol_tag(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.tag_errors_per_symbol / self.tag_trials_per_symbol

    def __add__(self, other):
        return SimResult(
            frames=self.frames + other.frames,
            sent=self.sent + other.sent,
            msg_errors_per_symbol=self.msg_errors_per_symbol + other.msg_errors_per_symbol,
            tag_trials_per_symbol=self.tag_trials_per_symbol + other.tag_trials_per_symbol,
            tag_errors_per_symbol=self.tag_errors_per_symbol + other.tag_errors_per_symbol,
            tag_errors_known_row_per_symbol=(self.tag_errors_known_row_per_symbol
                                             + other.tag_errors_known_row_per_symbol),
            seed=self.seed, method=self.method,
        )

    def as_row(self):
        lo, hi = self.p_em_ci
        tlo, thi = self.p_et_ci
        klo, khi = self.p_et_known_row_ci
        return {
            "frames": self.frames, "seed": self.seed, "method": self.method,
            "msg_errors": self.msg_errors, "p_em": format_rate(self.msg_errors, self.frames),
            "p_em_ci_lo": lo, "p_em_ci_hi": hi,
            "tag_trials": self.tag_trials, "tag_errors": self.tag_errors,
            "p_et": format_rate(self.tag_errors, max(self.tag_trials, 1)),
            "p_et_ci_lo": tlo, "p_et_ci_hi": thi,
            "tag_errors_known_row": self.tag_errors_known_row,
            "p_et_known_row": format_rate(self.tag_errors_known_row, self.frames),
            "p_et_known_row_ci_lo": klo, "p_et_known_row_ci_hi": khi,
            **self.extra,
        }

    def to_csv(self):
        buf = io.StringIO()
        row = self.as_row()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def _empty(L_m):
    z = np.zeros(L_m, dtype=np.int64)
    return SimResult(0, z.copy(), z.copy(), z.copy(), z.copy(), z.copy())


def _run_block(args):
    scheme_dict, N, n, seed, block, method = args
    scheme = EmbeddingScheme.from_dict(scheme_dict)
    L_m, L_t = scheme.L_m, scheme.L_t
    rng = block_rng(seed, block)
    i = rng.integers(0, L_m, size=n)
    j = rng.integers(0, L_t, size=n)
    ynorm = draw_energy(rng, scheme.A[i, j] - scheme.sigma2, N, scheme.sigma2, method)
    mi, tj = detect(ynorm, scheme)
    msg_ok = mi == i
    tag_bad = tj != j
    known = np.sum(scheme.C[i] < ynorm[:, None], axis=1) != j
    cnt = lambda mask: np.bincount(i[mask], minlength=L_m).astype(np.int64)
    return SimResult(
        frames=n,
        sent=np.bincount(i, minlength=L_m).astype(np.int64),
        msg_errors_per_symbol=cnt(~msg_ok),
        tag_trials_per_symbol=cnt(msg_ok),
        tag_errors_per_symbol=cnt(msg_ok & tag_bad),
        tag_errors_known_row_per_symbol=cnt(known),
    )


def simulate_ser(scheme: EmbeddingScheme, N, trials, seed=0, workers=1, method="channel"):
    """Empirical message SER and conditional tag SER of ``scheme``.

    Parameters
    ----------
    scheme : EmbeddingScheme
    N : int
        Receive antennas.
    trials : int
        Number of transmitted symbols, each drawn uniformly from the grid.
    seed : int
        Root seed; results depend only on ``seed`` and ``trials``.
    workers : int
        Worker processes; ``1`` runs in-process.
    method : {"channel", "energy"}
        See :func:`draw_energy`.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    nblocks = -(-trials // BLOCK)
    sizes = [BLOCK] * (nblocks - 1) + [trials - BLOCK * (nblocks - 1)]
    sd = scheme.to_dict()
    jobs = [(sd, int(N), n, int(seed), b, method) for b, n in enumerate(sizes)]
    total = _empty(scheme.L_m)
    if workers > 1:
        with cf.ProcessPoolExecutor(workers) as ex:
            for part in ex.map(_run_block, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                total = total + part
    else:
        for job in jobs:
            total = total + _run_block(job)
    total.seed = int(seed)
    total.method = method
    return total


@dataclass
class GoodnessOfFit:
    N: int
    samples: int
    ks_statistic: float
    p_value: float
    critical_1pct: float

    @property
    def passed(self):
        return self.ks_statistic < self.critical_1pct


def chi2_statistic_check(N, A, samples, seed=0, sigma2=1.0, assumed_A=None):
    """Kolmogorov-Smirnov test of ``||y||^2 / A`` against the complex chi-squared CDF.

    The channel is simulated explicitly for a fixed transmit power
    ``A - sigma2``.  ``assumed_A`` normalises by a different power, which
    should make the test fail.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    if A < sigma2:
        raise ValueError("A must be at least sigma2")
    rng = block_rng(seed, 0)
    energy = np.empty(samples)
    for start in range(0, samples, BLOCK):
        n = min(BLOCK, samples - start)
        energy[start:start + n] = draw_energy(rng, np.full(n, A - sigma2), N, sigma2) * N
    z = energy / (A if assumed_A is None else assumed_A)
    res = stats.kstest(z, lambda x: chi2_cdf(N, np.maximum(x, 0.0)))
    crit = float(stats.kstwo.ppf(0.99, samples))
    return GoodnessOfFit(int(N), int(samples), float(res.statistic), float(res.pvalue), crit)
