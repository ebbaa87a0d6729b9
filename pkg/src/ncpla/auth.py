"""Keyed MAC generation, tag mapping and the Neyman-Pearson acceptance test.

A frame carries ``s`` symbols.  Message bits ``b`` select the message index
of each symbol; the ``l``-bit MAC ``M = HMAC-SHA256(k, b)`` (truncated)
selects the tag index.  Bit groups map to indices through a Gray code.  The
receiver recomputes the MAC from the decoded message bits and accepts when at
least ``i*`` MAC bits agree with the decoded tag bits.
"""

import hashlib
import hmac
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy import stats

from .config import SystemConfig
from .embedding import EmbeddingScheme, detect, gray_code, gray_decode
from .simulator import block_rng, draw_energy, wilson_interval

__all__ = [
    "HASH_ID",
    "Frame",
    "AuthDecision",
    "AuthReport",
    "make_mac",
    "np_threshold",
    "detection_rate",
    "bits_to_symbols",
    "symbols_to_bits",
    "build_frame",
    "authenticate",
    "run_auth_experiment",
]

HASH_ID = "HMAC-SHA256"


def _pack(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    return len(bits).to_bytes(8, "big") + np.packbits(bits).tobytes()


def make_mac(bits, key, l):
    """``l``-bit MAC of a bit vector: HMAC-SHA256 in counter mode, truncated.

    Returns an ``uint8`` array of 0/1 values.
    """
    if not key:
        raise ValueError("empty key")
    if l < 1:
        raise ValueError("MAC length must be >= 1")
    msg = _pack(bits)
    out = b""
    counter = 0
    while 8 * len(out) < l:
        out += hmac.new(key, counter.to_bytes(4, "big") + msg, hashlib.sha256).digest()
        counter += 1
    return np.unpackbits(np.frombuffer(out, dtype=np.uint8))[:l]


def np_threshold(l, epsilon):
    """Neyman-Pearson acceptance rule for a random-MAC forger.

    Returns ``(i_star, theta0, achieved_fa)``: accept iff at least ``i_star``
    of ``l`` bits match, i.e. ``theta >= theta0 = (i_star - 1/2) / l``.
    ``i_star`` is the smallest count whose binomial(l, 1/2) tail does not
    exceed ``epsilon``; ``i_star = l + 1`` means never accept.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    eps = Fraction(epsilon)
    total = 2**l
    tail = 0
    i_star = l + 1
    # grow the tail from the top until it would exceed the budget
    for c in range(l, -1, -1):
        tail_c = tail + comb(l, c)
        if Fraction(tail_c, total) > eps:
            break
        tail, i_star = tail_c, c
    theta0 = (i_star - 0.5) / l
    return i_star, theta0, tail / total


def detection_rate(l, i_star, p):
    """``P(l' >= i_star)`` for ``l' ~ Binomial(l, 1 - p)``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if i_star > l:
        return 0.0
    if i_star <= 0:
        return 1.0
    return float(stats.binom.sf(i_star - 1, l, 1.0 - p))


def bits_to_symbols(bits, order):
    """Gray-map groups of ``log2(order)`` bits to symbol indices (last axis)."""
    m = int(math.log2(order))
    bits = np.asarray(bits, dtype=np.int64)
    groups = bits.reshape(bits.shape[:-1] + (-1, m))
    weights = 1 << np.arange(m - 1, -1, -1)
    return gray_decode(groups @ weights)


def symbols_to_bits(idx, order):
    m = int(math.log2(order))
    g = gray_code(np.asarray(idx, dtype=np.int64))
    bits = (g[..., None] >> np.arange(m - 1, -1, -1)) & 1
    return bits.reshape(bits.shape[:-2] + (-1,)).astype(np.uint8)


@dataclass
class Frame:
    message_bits: np.ndarray
    mac: np.ndarray
    msg_idx: np.ndarray
    tag_idx: np.ndarray

    @property
    def symbols(self):
        return list(zip(self.msg_idx.tolist(), self.tag_idx.tolist()))


def frame_shape(l, L_m, L_t):
    """Symbols per frame and message bits per frame for an ``l``-bit MAC."""
    bt = int(math.log2(L_t))
    if l % bt:
        raise ValueError(f"MAC length {l} is not a multiple of {bt} tag bits")
    s = l // bt
    return s, s * int(math.log2(L_m))


def build_frame(message_bits, key, l, L_m, L_t, mac=None):
    s, nb = frame_shape(l, L_m, L_t)
    message_bits = np.asarray(message_bits, dtype=np.uint8)
    if message_bits.size != nb:
        raise ValueError(f"expected {nb} message bits, got {message_bits.size}")
    M = make_mac(message_bits, key, l) if mac is None else np.asarray(mac, dtype=np.uint8)
    return Frame(message_bits, M, bits_to_symbols(message_bits, L_m), bits_to_symbols(M, L_t))


@dataclass
class AuthDecision:
    theta: float
    accepted: bool
    theta0: float
    i_star: int
    matches: int


def authenticate(msg_hat, tag_hat, key, l, L_m, L_t, i_star):
    """Receiver side: recompute the MAC from decoded message bits and test."""
    b_hat = symbols_to_bits(msg_hat, L_m)
    m_hat = symbols_to_bits(tag_hat, L_t)
    m_new = make_mac(b_hat, key, l)
    matches = int(np.sum(m_hat == m_new))
    return AuthDecision(matches / l, matches >= i_star, (i_star - 0.5) / l, i_star, matches)


@dataclass
class AuthReport:
    """Aggregate outcome of an authentication experiment."""

    attacker: str
    frames: int
    accepted: int
    i_star: int
    theta0: float
    achieved_fa: float
    mac_len: int
    epsilon: float
    bit_errors: int
    bits_scored: int
    mean_theta: float
    frames_with_msg_error: int
    seed: int
    key_id: str
    hash_id: str = HASH_ID

    @property
    def rate(self):
        return self.accepted / self.frames

    @property
    def rate_ci(self):
        return wilson_interval(self.accepted, self.frames)

    @property
    def p_hat(self):
        """Empirical MAC bit error rate (``M'`` vs recomputed ``M_n``)."""
        return self.bit_errors / self.bits_scored

    @property
    def theory_rate(self):
        """Acceptance predicted by the binomial model at the measured ``p``."""
        if self.attacker == "forger":
            return self.achieved_fa
        return detection_rate(self.mac_len, self.i_star, self.p_hat)

    def as_row(self):
        row = asdict(self)
        lo, hi = self.rate_ci
        row.update(rate=self.rate, rate_ci_lo=lo, rate_ci_hi=hi, p_hat=self.p_hat,
                   theory_rate=self.theory_rate)
        return row


def key_id(key):
    return hashlib.sha256(key).hexdigest()[:16]


def run_auth_experiment(cfg: SystemConfig, scheme: EmbeddingScheme, frames, attacker="legit",
                        seed=0, key=b"ncpla-demo-key", method="channel", batch=2048):
    """Send ``frames`` frames through the channel and apply the acceptance test.

    ``attacker="legit"`` tags each frame with the true MAC; ``"forger"`` draws
    a uniformly random ``l``-bit MAC, as an adversary without the key must.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    if attacker not in ("legit", "forger"):
        raise ValueError(f"unknown attacker model {attacker!r}")
    l, L_m, L_t = cfg.mac_len, scheme.L_m, scheme.L_t
    s, nb = frame_shape(l, L_m, L_t)
    i_star, theta0, fa = np_threshold(l, cfg.fa_budget)
    accepted = bit_errors = msg_err_frames = 0
    theta_sum = 0.0
    for b_idx, start in enumerate(range(0, frames, batch)):
        n = min(batch, frames - start)
        rng = block_rng(seed, b_idx)
        b = rng.integers(0, 2, size=(n, nb), dtype=np.uint8)
        if attacker == "legit":
            M = np.stack([make_mac(row, key, l) for row in b])
        else:
            M = rng.integers(0, 2, size=(n, l), dtype=np.uint8)
        mi = bits_to_symbols(b, L_m)
        ti = bits_to_symbols(M, L_t)
        ynorm = draw_energy(rng, scheme.A[mi, ti] - scheme.sigma2, cfg.N, scheme.sigma2, method)
        mh, th = detect(ynorm, scheme)
        b_hat = symbols_to_bits(mh, L_m)
        m_hat = symbols_to_bits(th, L_t)
        m_new = np.stack([make_mac(row, key, l) for row in b_hat])
        matches = np.sum(m_hat == m_new, axis=1)
        accepted += int(np.sum(matches >= i_star))
        bit_errors += int(l * n - matches.sum())
        theta_sum += float(matches.sum()) / l
        msg_err_frames += int(np.sum(np.any(mh != mi, axis=1)))
    return AuthReport(
        attacker=attacker, frames=frames, accepted=accepted, i_star=i_star, theta0=theta0,
        achieved_fa=fa, mac_len=l, epsilon=cfg.fa_budget, bit_errors=bit_errors,
        bits_scored=l * frames, mean_theta=theta_sum / frames,
        frames_with_msg_error=msg_err_frames, seed=int(seed), key_id=key_id(key),
    )
