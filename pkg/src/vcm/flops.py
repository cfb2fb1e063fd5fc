"""Transformer FLOPs model and the expected saving from shorter sequences.

Per layer, projections cost ``4 n d^2``, attention scores ``2 n^2 d`` and the
FFN ``2 n d m`` (a multiply-accumulate counts as 2 FLOPs). With ``m = 4d`` the
projection and FFN terms fold into ``12 n d^2``, which is the form used for
expectations over a random sequence length ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import InvalidInput


@dataclass(frozen=True)
class FlopsProfile:
    T: int
    d: int
    m: int | None = None
    n_mean: float | None = None
    n_var: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.T <= 0 or self.d <= 0:
            raise InvalidInput("layer count and hidden size must be positive")
        if self.m is None:
            object.__setattr__(self, "m", 4 * self.d)
        if self.n_mean is None:
            object.__setattr__(self, "n_mean", self.d / 4)
        if self.m <= 0 or self.n_mean <= 0:
            raise InvalidInput("FFN size and mean sequence length must be positive")
        if self.n_var < 0:
            raise InvalidInput("sequence-length variance must be nonnegative")
        if not 0.0 < self.scale <= 1.0:
            raise InvalidInput(f"scale must lie in (0, 1], got {self.scale}")


def flops_exact(profile: FlopsProfile, n: float) -> float:
    T, d, m = profile.T, profile.d, profile.m
    return T * (4 * n * d**2 + 2 * n**2 * d + 2 * n * d * m)


def length_moments(profile: FlopsProfile):
    """``E[n]`` and ``E[n^2]`` after scaling ``n`` by ``profile.scale``."""
    s = profile.scale
    mean = s * profile.n_mean
    second = s**2 * (profile.n_var + profile.n_mean**2)
    return mean, second


def flops_expected(profile: FlopsProfile) -> float:
    mean, second = length_moments(profile)
    d = profile.d
    return profile.T * (12 * mean * d**2 + 2 * second * d)


def reduction_ratio(profile: FlopsProfile) -> float:
    """Expected FLOPs at ``profile.scale`` relative to the unscaled sequence."""
    return flops_expected(profile) / flops_expected(replace(profile, scale=1.0))


def flops_table(profile: FlopsProfile) -> list[dict]:
    """Rows for the unscaled and scaled sequence, with the exact FLOPs at the mean length."""
    rows = []
    for label, p in (("original", replace(profile, scale=1.0)), ("scaled", profile)):
        mean, _ = length_moments(p)
        rows.append({
            "case": label,
            "scale": p.scale,
            "mean_length": mean,
            "exact_at_mean": flops_exact(p, mean),
            "expected": flops_expected(p),
        })
    ratio = reduction_ratio(profile)
    rows.append({"case": "ratio", "R": ratio, "reduction": 1.0 - ratio})
    return rows
