"""System parameters and the quantities derived from them.

Rates are kept in bits throughout; conversions to natural units happen only
inside :mod:`urasparc.potential`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

MAX_J = 30


class ConfigError(ValueError):
    """Raised when a configuration document or value is unusable."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


@dataclass(frozen=True)
class SystemConfig:
    K_a: int
    n: int
    L: int
    J: int
    B: int
    N0_half: float
    P: float
    master_seed: int = 0

    @property
    def N0(self) -> float:
        return 2.0 * self.N0_half

    @classmethod
    def from_dict(cls, doc: dict) -> "SystemConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        required = {f.name for f in fields(cls) if f.name != "master_seed"}
        missing = sorted(required - set(doc))
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(config: SystemConfig) -> list[Violation]:
    """Return every violated invariant; an empty list means the config is ok."""
    out = []
    c = config
    for name in ("K_a", "n", "L", "J", "B", "master_seed"):
        if not _is_int(getattr(c, name)):
            out.append(Violation(name, f"{name} must be an integer"))
    if out:
        return out
    if c.K_a < 1:
        out.append(Violation("K_a", "K_a must be at least 1"))
    if c.n < 1:
        out.append(Violation("n", "n must be at least 1"))
    if c.L < 1:
        out.append(Violation("L", "L must be at least 1"))
    if not 1 <= c.J <= MAX_J:
        out.append(Violation("J", "J out of range"))
    if c.B < 0:
        out.append(Violation("B", "B must be nonnegative"))
    if c.B > c.L * c.J:
        out.append(Violation("B", "B exceeds LJ"))
    if not (isinstance(c.P, (int, float)) and c.P > 0 and math.isfinite(c.P)):
        out.append(Violation("P", "P must be positive"))
    if not (isinstance(c.N0_half, (int, float)) and c.N0_half > 0
            and math.isfinite(c.N0_half)):
        out.append(Violation("N0_half", "N0_half must be positive"))
    if not 0 <= c.master_seed < 2**64:
        out.append(Violation("master_seed", "master_seed must fit in 64 bits"))
    return out


def check_config(config: SystemConfig) -> SystemConfig:
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(map(str, violations)), violations)
    return config


def inactivity_prob(K_a: int, J: int) -> float:
    """(1 - 2^-J)^K_a, evaluated without cancellation."""
    return math.exp(K_a * math.log1p(-(2.0 ** -J)))


def activity_prob(K_a: int, J: int) -> float:
    """1 - (1 - 2^-J)^K_a, accurate even when it is tiny."""
    return -math.expm1(K_a * math.log1p(-(2.0 ** -J)))


@dataclass(frozen=True)
class DerivedParams:
    snr: float
    R_in: float
    R_out: float
    S_in: float
    E_in: float
    P_hat: float
    p0: float
    beta: float
    alpha: Optional[float]  # None when K_a == 1 (log2 K_a = 0)

    @property
    def S(self) -> float:
        """Total sum rate K_a * R_in * R_out."""
        return self.S_in * self.R_out

    @property
    def eb_n0(self) -> float:
        return self.E_in / self.R_out if self.R_out > 0 else math.inf


def derive_params(config: SystemConfig) -> DerivedParams:
    c = config
    snr = c.P / c.N0_half
    R_in = c.L * c.J / c.n
    R_out = c.B / (c.L * c.J)
    alpha = c.J / math.log2(c.K_a) if c.K_a > 1 else None
    return DerivedParams(
        snr=snr,
        R_in=R_in,
        R_out=R_out,
        S_in=c.K_a * R_in,
        E_in=snr / (2.0 * R_in),
        P_hat=c.n * snr / c.L,
        p0=inactivity_prob(c.K_a, c.J),
        beta=2.0**c.J * R_in / c.J,
        alpha=alpha,
    )


def read_document(path) -> dict:
    """Parse a JSON or TOML file (chosen by suffix) into a dict."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:  # Python < 3.11
                import tomli as tomllib
            doc = tomllib.loads(text)
        else:
            doc = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return doc


def load_config(path) -> SystemConfig:
    """Read a SystemConfig from a JSON or TOML file."""
    return check_config(SystemConfig.from_dict(read_document(path)))


def config_for(K_a, L, J, B, *, S_in=None, n=None, E_in=None, eb_n0=None,
               N0_half=1.0, master_seed=0) -> SystemConfig:
    """Build a config from rate-style targets.

    Exactly one of ``S_in``/``n`` fixes the blocklength (n is rounded to an
    integer, so the realised S_in differs slightly), and exactly one of
    ``E_in``/``eb_n0`` fixes the power.
    """
    if (S_in is None) == (n is None):
        raise ValueError("give exactly one of S_in, n")
    if (E_in is None) == (eb_n0 is None):
        raise ValueError("give exactly one of E_in, eb_n0")
    if n is None:
        n = max(1, int(round(K_a * L * J / S_in)))
    R_in = L * J / n
    if E_in is None:
        R_out = B / (L * J)
        E_in = eb_n0 * R_out
    snr = 2.0 * R_in * E_in
    return check_config(SystemConfig(K_a=K_a, n=n, L=L, J=J, B=B, N0_half=N0_half,
                                     P=snr * N0_half, master_seed=master_seed))
