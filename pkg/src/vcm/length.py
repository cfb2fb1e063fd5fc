"""Target concept length from keyword counts, and the loss-weight schedule."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction

from .alignment import max_concepts
from .errors import InvalidInput

# absorbs binary representation error in M * S products such as 576 * (1/6)
_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class KeywordStats:
    n_instruction: int
    n_response: int
    r: float = 0.0

    def __post_init__(self):
        if self.n_instruction < 0 or self.n_response < 0:
            raise InvalidInput("keyword counts must be nonnegative")
        if not 0.0 <= self.r <= 1.0:
            raise InvalidInput(f"mask ratio must lie in [0, 1], got {self.r}")


@dataclass(frozen=True)
class LengthConfig:
    S: float = 0.25
    n_key_max: float = 10
    n_key_min: float = -35
    min_length: int = 1

    def __post_init__(self):
        if not 0.0 < float(self.S) <= 0.5:
            raise InvalidInput(f"information domain scalar must lie in (0, 1/2], got {self.S}")
        if not self.n_key_max > self.n_key_min:
            raise InvalidInput("n_key_max must exceed n_key_min")


@dataclass(frozen=True)
class CoefficientParams:
    a: float = 0.2
    b: float = 1.2
    k: float = 5.0

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidInput("coefficient range requires b > a")
        if not self.k > 0:
            raise InvalidInput("growth rate k must be positive")


def parse_scalar(value) -> float:
    """Accept floats and ratio strings like ``"1/4"``."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise InvalidInput(f"cannot parse number {value!r}") from None
    return float(value)


def load_config(path):
    """Read a JSON object with any of ``S, n_key_max, n_key_min, min_length, a, b, k``."""
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise InvalidInput("config file must hold a JSON object")
    return configs_from_dict(obj)


def configs_from_dict(obj, length=None, coeffs=None):
    length = length or LengthConfig()
    coeffs = coeffs or CoefficientParams()
    lkeys = {f.name for f in fields(LengthConfig)}
    ckeys = {f.name for f in fields(CoefficientParams)}
    unknown = set(obj) - lkeys - ckeys
    if unknown:
        raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
    lvals = {k: parse_scalar(v) for k, v in obj.items() if k in lkeys}
    if "min_length" in lvals:
        lvals["min_length"] = int(lvals["min_length"])
    cvals = {k: parse_scalar(v) for k, v in obj.items() if k in ckeys}
    return replace(length, **lvals), replace(coeffs, **cvals)


def config_to_dict(length: LengthConfig, coeffs: CoefficientParams) -> dict:
    return {**asdict(length), **asdict(coeffs)}


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def effective_keyword_diff(stats: KeywordStats, cfg: LengthConfig = LengthConfig()) -> int:
    """Unmasked instruction keywords minus response keywords, clamped to the config bounds.

    Masking a fraction ``r`` of instruction keywords lowers the difference,
    which raises the estimated length.
    """
    visible = round_half_up((1.0 - stats.r) * stats.n_instruction)
    diff = visible - stats.n_response
    return int(min(max(diff, cfg.n_key_min), cfg.n_key_max))


def raw_length(M: int, n_key: float, cfg: LengthConfig = LengthConfig()) -> int:
    frac = (n_key - cfg.n_key_min) / (cfg.n_key_max - cfg.n_key_min)
    return math.floor(M * float(cfg.S) * (1.0 - frac) + _FLOOR_SLACK)


def estimate_length(M: int, n_key: float, cfg: LengthConfig = LengthConfig()) -> int:
    """Min-max normalised length ``floor(M * S * (1 - norm(n_key)))``.

    The result is clamped to ``[min_length, (M + 1) // 2]``; the upper bound is
    the most concepts an ``M``-token lattice can hold.
    """
    if M < 1:
        raise InvalidInput(f"token count must be positive, got {M}")
    n_key = min(max(n_key, cfg.n_key_min), cfg.n_key_max)
    raw = raw_length(M, n_key, cfg)
    return int(min(max(raw, cfg.min_length), max_concepts(M)))


def length_from_stats(M: int, stats: KeywordStats, cfg: LengthConfig = LengthConfig()) -> int:
    return estimate_length(M, effective_keyword_diff(stats, cfg), cfg)


def epsilon(r: float, params: CoefficientParams = CoefficientParams()) -> float:
    """Tanh-shaped weight rising from ``a`` (at ``r = 0``) to ``b`` (at ``r = 1``)."""
    if not 0.0 <= r <= 1.0:
        raise InvalidInput(f"mask ratio must lie in [0, 1], got {r}")
    s = (1.0 + math.tanh(params.k * (2.0 * r - 1.0))) / 2.0
    return params.a + (params.b - params.a) * s


def total_loss(ntp_loss: float, vcm_loss: float, r: float,
               params: CoefficientParams = CoefficientParams()) -> float:
    return ntp_loss + epsilon(r, params) * vcm_loss
