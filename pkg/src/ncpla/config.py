"""Scenario parameters shared by every stage of the pipeline."""

import dataclasses
import json
import math
from dataclasses import dataclass


class ConfigError(ValueError):
    """Invalid or inconsistent scenario parameters."""


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters, in linear units.

    ``gamma_m`` is the message SNR ``E_m / sigma2`` and ``gamma_tot`` the
    total SNR ``E_tot / sigma2``.  When only the total is known (optimizer
    runs) ``gamma_m`` defaults to ``gamma_tot``.
    """

    N: int
    L_m: int = 4
    L_t: int = 2
    sigma2: float = 1.0
    gamma_m: float = 10.0
    gamma_tot: float | None = None
    mac_len: int = 32
    fa_budget: float = 0.01

    def __post_init__(self):
        if self.gamma_tot is None:
            object.__setattr__(self, "gamma_tot", self.gamma_m)
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        for name in ("L_m", "L_t"):
            if not _is_pow2(getattr(self, name)):
                raise ConfigError(f"{name} must be a power of two >= 2")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if not self.gamma_m > 0 or not self.gamma_tot > 0:
            raise ConfigError("SNRs must be positive")
        if self.gamma_m > self.gamma_tot * (1 + 1e-12):
            raise ConfigError("gamma_m cannot exceed gamma_tot")
        if int(self.mac_len) != self.mac_len or self.mac_len < 1:
            raise ConfigError("mac_len must be a positive integer")
        if not 0 < self.fa_budget < 1:
            raise ConfigError("fa_budget must lie in (0, 1)")

    @property
    def E_m(self):
        return self.gamma_m * self.sigma2

    @property
    def E_tot(self):
        return self.gamma_tot * self.sigma2

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d):
        """Build from a mapping; keys ending in ``_db`` are converted to linear.

        Unknown keys are ignored so a single JSON file can carry settings for
        several commands.
        """
        d = dict(d)
        kw = {}
        for key in ("gamma_m", "gamma_tot"):
            if f"{key}_db" in d:
                if key in d:
                    raise ConfigError(f"give either {key} or {key}_db, not both")
                kw[key] = db_to_linear(float(d.pop(f"{key}_db")))
            elif key in d:
                kw[key] = float(d.pop(key))
        for key, conv in (("N", int), ("L_m", int), ("L_t", int), ("mac_len", int),
                          ("sigma2", float), ("fa_budget", float)):
            if key in d:
                kw[key] = conv(d[key])
        if "N" not in kw:
            raise ConfigError("config must define N")
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)
