"""Forward-backward lattice over keep/blank alignments of vision tokens.

Each of the ``M`` vision tokens emits a blank (``BLANK``, dropped) or keep
(``KEEP``, retained) symbol. A target of ``L`` concepts is extended to the
state sequence ``[blank, keep, blank, keep, ..., blank]`` of length
``2L + 1``. A lattice path visits states monotonically, at each step either
staying in its state or advancing by exactly one, starting in state 0 or 1
and ending in one of the last two states. There are no skip transitions, so
two consecutive concepts are always separated by at least one blank token and
the emitted binary string has exactly ``L`` maximal runs of keep tokens.

Conventions (0-based in code):

* ``alpha[t, l]`` is the probability of emitting tokens ``0..t`` and being in
  state ``l`` at step ``t``; it includes the emission at ``t``.
* ``beta[t, l]`` is the probability of emitting tokens ``t+1..M-1`` given the
  path is in state ``l`` at step ``t``; it excludes the emission at ``t``.

With these conventions ``sum_l alpha[t, l] * beta[t, l]`` equals the total
probability at every ``t`` and the posterior ``gamma = alpha * beta / p`` has
unit row sums.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateProbability,
    DimensionMismatch,
    InfeasibleLength,
    InvalidInput,
    OracleTooLarge,
)

BLANK = 0
KEEP = 1

PROB_SUM_TOL = 1e-9
BRUTE_FORCE_MAX_M = 20


class SpaceMode(str, enum.Enum):
    LINEAR = "linear"
    LOG = "log"


def _mode(mode) -> SpaceMode:
    try:
        return SpaceMode(mode)
    except ValueError:
        raise InvalidInput(f"unknown mode {mode!r}; expected 'linear' or 'log'") from None


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=float)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax(x, axis=-1):
    return np.exp(log_softmax(x, axis=axis))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmissionSequence:
    """Per-token ``(p_blank, p_keep)`` pairs, shape ``(M, 2)``."""

    probs: np.ndarray
    log_probs: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] != 2 or probs.shape[0] < 1:
            raise InvalidInput(f"emissions must have shape (M, 2) with M >= 1, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
            raise InvalidInput("emission probabilities must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_SUM_TOL):
            raise InvalidInput("each (p_blank, p_keep) pair must sum to 1")
        object.__setattr__(self, "probs", _readonly(probs))
        if self.log_probs is None:
            with np.errstate(divide="ignore"):
                logp = np.log(probs)
        else:
            logp = np.asarray(self.log_probs, dtype=float)
            if logp.shape != probs.shape:
                raise DimensionMismatch("log_probs shape differs from probs")
        object.__setattr__(self, "log_probs", _readonly(logp))

    @classmethod
    def from_logits(cls, logits) -> "EmissionSequence":
        logp = log_softmax(np.asarray(logits, dtype=float), axis=1)
        return cls(np.exp(logp), log_probs=logp)

    @classmethod
    def from_keep(cls, p_keep) -> "EmissionSequence":
        p_keep = np.asarray(p_keep, dtype=float).reshape(-1)
        return cls(np.stack([1.0 - p_keep, p_keep], axis=1))

    @property
    def M(self) -> int:
        return self.probs.shape[0]

    @property
    def p_blank(self) -> np.ndarray:
        return self.probs[:, BLANK]

    @property
    def p_keep(self) -> np.ndarray:
        return self.probs[:, KEEP]


@dataclass(frozen=True)
class LogitSequence:
    """Unconstrained ``(u_blank, u_keep)`` pairs, shape ``(M, 2)``."""

    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float)
        if logits.ndim != 2 or logits.shape[1] != 2 or logits.shape[0] < 1:
            raise InvalidInput(f"logits must have shape (M, 2) with M >= 1, got {logits.shape}")
        if not np.all(np.isfinite(logits)):
            raise InvalidInput("logits must be finite")
        object.__setattr__(self, "logits", _readonly(logits))

    @property
    def M(self) -> int:
        return self.logits.shape[0]

    def emissions(self) -> EmissionSequence:
        return EmissionSequence.from_logits(self.logits)


@dataclass(frozen=True)
class ExtendedTarget:
    L: int
    symbols: np.ndarray

    @property
    def size(self) -> int:
        return len(self.symbols)


def as_emissions(emissions) -> EmissionSequence:
    if isinstance(emissions, EmissionSequence):
        return emissions
    if isinstance(emissions, LogitSequence):
        return emissions.emissions()
    return EmissionSequence(emissions)


def as_logits(logits) -> LogitSequence:
    if isinstance(logits, LogitSequence):
        return logits
    return LogitSequence(logits)


def extend_target(L: int) -> ExtendedTarget:
    """Blank-interleaved target ``[blank, keep, ..., keep, blank]`` of length ``2L+1``."""
    L = int(L)
    if L < 0:
        raise InvalidInput(f"concept count must be nonnegative, got {L}")
    symbols = np.zeros(2 * L + 1, dtype=np.int64)
    symbols[1::2] = KEEP
    symbols.setflags(write=False)
    return ExtendedTarget(L, symbols)


def max_concepts(M: int) -> int:
    """Largest ``L`` an ``M``-token lattice can hold."""
    return (M + 1) // 2


def is_feasible(M: int, L: int) -> bool:
    return M >= 1 and L >= 0 and M >= 2 * L - 1


def check_feasible(M: int, L: int) -> None:
    if L < 0:
        raise InvalidInput(f"concept count must be nonnegative, got {L}")
    if not is_feasible(M, L):
        raise InfeasibleLength(f"{M} tokens cannot hold {L} concepts (need M >= 2L-1 = {2 * L - 1})")


def _target(target) -> ExtendedTarget:
    return target if isinstance(target, ExtendedTarget) else extend_target(target)


# ---------------------------------------------------------------------------
# Recurrences. ``P`` is the (M, 2) table of per-token (blank, keep) values;
# state l of the extended target reads column l % 2, so even states are blank
# and odd states keep. Emissions are applied with strided views rather than an
# (M, 2L+1) copy.


def _emit(row, pair, op):
    op(row[0::2], pair[BLANK], out=row[0::2])
    op(row[1::2], pair[KEEP], out=row[1::2])


def _forward_linear(P, S):
    M = P.shape[0]
    alpha = np.zeros((M, S))
    alpha[0, : min(2, S)] = P[0, : min(2, S)]
    for t in range(1, M):
        prev, cur = alpha[t - 1], alpha[t]
        cur[:] = prev
        cur[1:] += prev[:-1]
        _emit(cur, P[t], np.multiply)
    return alpha


def _backward_linear(P, S):
    M = P.shape[0]
    beta = np.zeros((M, S))
    beta[M - 1, max(S - 2, 0) :] = 1.0
    w = np.empty(S)
    for t in range(M - 2, -1, -1):
        w[:] = beta[t + 1]
        _emit(w, P[t + 1], np.multiply)
        cur = beta[t]
        cur[:] = w
        cur[:-1] += w[1:]
    return beta


# Unreachable states carry a large finite floor instead of -inf inside the log
# recursions, and exponent arguments are bounded below. Both keep ``exp`` out
# of its slow underflow path, which otherwise makes the cost per step grow
# with the dynamic range of the table. The bound drops terms below 1e-304.
_LOG_FLOOR = -1e200
_EXP_MIN = -700.0


def _log_add(a, b, out, hi, lo):
    np.maximum(a, b, out=hi)
    np.minimum(a, b, out=lo)
    lo -= hi
    np.maximum(lo, _EXP_MIN, out=lo)
    np.exp(lo, out=lo)
    np.log1p(lo, out=lo)
    np.add(hi, lo, out=out)


def _restore_neg_inf(table):
    table[table < _LOG_FLOOR / 2] = -np.inf
    return table


def _forward_log(logP, S):
    M = logP.shape[0]
    logP = np.maximum(logP, _LOG_FLOOR)
    alpha = np.full((M, S), _LOG_FLOOR)
    alpha[0, : min(2, S)] = logP[0, : min(2, S)]
    hi, lo = np.empty(S - 1), np.empty(S - 1)
    for t in range(1, M):
        prev, cur = alpha[t - 1], alpha[t]
        cur[0] = prev[0]
        _log_add(prev[1:], prev[:-1], cur[1:], hi, lo)
        _emit(cur, logP[t], np.add)
    return _restore_neg_inf(alpha)


def _backward_log(logP, S):
    M = logP.shape[0]
    logP = np.maximum(logP, _LOG_FLOOR)
    beta = np.full((M, S), _LOG_FLOOR)
    beta[M - 1, max(S - 2, 0) :] = 0.0
    w = np.empty(S)
    hi, lo = np.empty(S - 1), np.empty(S - 1)
    for t in range(M - 2, -1, -1):
        w[:] = beta[t + 1]
        _emit(w, logP[t + 1], np.add)
        cur = beta[t]
        cur[-1] = w[-1]
        _log_add(w[:-1], w[1:], cur[:-1], hi, lo)
    return _restore_neg_inf(beta)


def _state_emissions(emissions: EmissionSequence, target: ExtendedTarget, log: bool):
    source = emissions.log_probs if log else emissions.probs
    return source[:, target.symbols]


def forward_pass(emissions, target, mode="linear") -> np.ndarray:
    """Forward table ``alpha`` of shape ``(M, 2L+1)`` (log values in log mode)."""
    em, tg = as_emissions(emissions), _target(target)
    check_feasible(em.M, tg.L)
    if _mode(mode) is SpaceMode.LOG:
        return _forward_log(em.log_probs, tg.size)
    return _forward_linear(em.probs, tg.size)


def backward_pass(emissions, target, mode="linear") -> np.ndarray:
    """Backward table ``beta`` excluding the emission at the current step."""
    em, tg = as_emissions(emissions), _target(target)
    check_feasible(em.M, tg.L)
    if _mode(mode) is SpaceMode.LOG:
        return _backward_log(em.log_probs, tg.size)
    return _backward_linear(em.probs, tg.size)


@dataclass(frozen=True)
class AlignmentLattice:
    """Forward, backward and posterior tables for one sequence.

    ``alpha`` and ``beta`` hold probabilities in linear mode and natural-log
    probabilities in log mode. ``gamma`` is always a probability table.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    log_prob: float
    mode: SpaceMode
    emissions: EmissionSequence
    target: ExtendedTarget

    @property
    def M(self) -> int:
        return self.alpha.shape[0]

    @property
    def L(self) -> int:
        return self.target.L

    @property
    def total_prob(self) -> float:
        return float(np.exp(self.log_prob))

    def _linear(self, table):
        return np.exp(table) if self.mode is SpaceMode.LOG else table

    def probability_routes(self):
        """The three ways of reading off the total probability.

        Returns ``(alpha_terminal, beta_initial, per_step)`` where
        ``per_step[t] = sum_l alpha[t, l] * beta[t, l]``. The backward route
        weights ``beta[0, :2]`` by the first emissions because ``beta``
        excludes the emission at its own step.
        """
        alpha, beta = self._linear(self.alpha), self._linear(self.beta)
        first = self.emissions.probs[0, self.target.symbols[: min(2, self.target.size)]]
        terminal = float(alpha[-1, -min(2, self.target.size) :].sum())
        initial = float(np.dot(first, beta[0, : first.size]))
        per_step = (alpha * beta).sum(axis=1)
        return terminal, initial, per_step

    def log_probability_routes(self):
        """Log-space counterpart of :meth:`probability_routes`."""
        alpha, beta = self.alpha, self.beta
        if self.mode is SpaceMode.LINEAR:
            with np.errstate(divide="ignore"):
                alpha, beta = np.log(alpha), np.log(beta)
        k = min(2, self.target.size)
        first = self.emissions.log_probs[0, self.target.symbols[:k]]
        terminal = float(np.logaddexp.reduce(alpha[-1, -k:]))
        initial = float(np.logaddexp.reduce(first + beta[0, :k]))
        per_step = np.logaddexp.reduce(alpha + beta, axis=1)
        return terminal, initial, per_step


def compute_lattice(emissions, L, mode="log") -> AlignmentLattice:
    """Run the forward and backward passes and the posterior for ``L`` concepts."""
    em, tg = as_emissions(emissions), _target(L)
    check_feasible(em.M, tg.L)
    mode = _mode(mode)
    k = min(2, tg.size)
    if mode is SpaceMode.LINEAR:
        alpha, beta = _forward_linear(em.probs, tg.size), _backward_linear(em.probs, tg.size)
        total = float(alpha[-1, -k:].sum())
        if not total > 0.0:
            raise DegenerateProbability(
                "alignment probability is zero in linear mode; use log mode for long sequences"
            )
        gamma = alpha * beta / total
        log_prob = float(np.log(total))
    else:
        alpha, beta = _forward_log(em.log_probs, tg.size), _backward_log(em.log_probs, tg.size)
        log_prob = float(np.logaddexp.reduce(alpha[-1, -k:]))
        if not np.isfinite(log_prob):
            raise DegenerateProbability("no alignment has nonzero probability")
        z = alpha + beta
        z -= log_prob
        dead = z < _EXP_MIN
        np.maximum(z, _EXP_MIN, out=z)
        gamma = np.exp(z, out=z)
        gamma[dead] = 0.0
    return AlignmentLattice(alpha, beta, gamma, log_prob, mode, em, tg)


def sequence_probability(lattice: AlignmentLattice) -> float:
    """Total probability of all alignments (forward terminal route)."""
    p = lattice.total_prob if lattice.mode is SpaceMode.LOG else lattice.probability_routes()[0]
    if lattice.mode is SpaceMode.LINEAR and p == 0.0:
        raise DegenerateProbability("alignment probability underflowed in linear mode")
    return p


def posterior(lattice: AlignmentLattice) -> np.ndarray:
    return lattice.gamma


def vcm_loss(emissions, L, mode="log") -> float:
    """Negative log of the total alignment probability."""
    return -compute_lattice(emissions, L, mode=mode).log_prob


def class_posterior(gamma: np.ndarray) -> np.ndarray:
    """Sum posterior mass over states sharing a symbol; shape ``(M, 2)``."""
    out = np.empty((gamma.shape[0], 2))
    out[:, BLANK] = gamma[:, 0::2].sum(axis=1)
    out[:, KEEP] = gamma[:, 1::2].sum(axis=1)
    return out


def vcm_loss_and_gradient(logits, L, mode="log"):
    """Loss and its gradient with respect to the ``(M, 2)`` logits.

    The per-state gradient ``p(z_l | y_t) - gamma(t, l)`` is collapsed onto the
    two logit classes, since every blank (or keep) state reads the same logit.
    """
    lg = as_logits(logits)
    em = lg.emissions()
    lat = compute_lattice(em, L, mode=mode)
    grad = em.probs - class_posterior(lat.gamma)
    return -lat.log_prob, grad


def vcm_gradient(logits, L, mode="log") -> np.ndarray:
    return vcm_loss_and_gradient(logits, L, mode=mode)[1]


# ---------------------------------------------------------------------------
# Oracle and decoding


def count_runs(mask) -> int:
    """Number of maximal runs of ones in a binary vector."""
    m = np.asarray(mask).astype(bool)
    if m.size == 0:
        return 0
    return int(m[0]) + int(np.count_nonzero(m[1:] & ~m[:-1]))


@functools.lru_cache(maxsize=32)
def _enumeration(M):
    codes = np.arange(2**M, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(M)) & 1).astype(bool)
    runs = bits[:, 0].astype(np.int64) + np.count_nonzero(bits[:, 1:] & ~bits[:, :-1], axis=1)
    return bits, runs


def brute_force_probability(emissions, L) -> float:
    """Sum of path weights over every keep/blank string with exactly ``L`` keep runs.

    Exponential in ``M``; intended as an independent check of the lattice.
    """
    em = as_emissions(emissions)
    M = em.M
    if M > BRUTE_FORCE_MAX_M:
        raise OracleTooLarge(f"enumeration over 2^{M} strings refused (limit M <= {BRUTE_FORCE_MAX_M})")
    bits, runs = _enumeration(M)
    selected = bits[runs == int(L)]
    if selected.shape[0] == 0:
        return 0.0
    weights = np.where(selected, em.p_keep, em.p_blank)
    return float(np.prod(weights, axis=1).sum())


def best_path_decode(emissions, L) -> np.ndarray:
    """Most probable lattice path as 0-based state indices, one per token.

    Max-product recursion with backtracking. On ties the advancing move is
    preferred, and the later terminal state wins over the earlier one.
    """
    em, tg = as_emissions(emissions), extend_target(L)
    check_feasible(em.M, tg.L)
    logE = _state_emissions(em, tg, log=True)
    M, S = logE.shape
    score = np.full(S, -np.inf)
    score[: min(2, S)] = logE[0, : min(2, S)]
    back = np.zeros((M, S), dtype=np.int64)
    states = np.arange(S)
    for t in range(1, M):
        advance = np.concatenate(([-np.inf], score[:-1]))
        take_advance = advance >= score
        take_advance[0] = False
        back[t] = np.where(take_advance, states - 1, states)
        score = logE[t] + np.where(take_advance, advance, score)
    if S == 1:
        last = 0
    else:
        last = S - 1 if score[S - 1] >= score[S - 2] else S - 2
    if not np.isfinite(score[last]):
        raise DegenerateProbability("no alignment has nonzero probability")
    path = np.empty(M, dtype=np.int64)
    path[-1] = last
    for t in range(M - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def path_to_mask(path) -> np.ndarray:
    """Binary keep mask emitted by a state path (odd states are keep states)."""
    return (np.asarray(path) % 2 == 1).astype(np.int64)


def path_log_weight(emissions, path) -> float:
    em = as_emissions(emissions)
    mask = path_to_mask(path)
    return float(em.log_probs[np.arange(em.M), mask].sum())
