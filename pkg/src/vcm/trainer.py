"""Plain gradient descent on a synthetic logit sequence under the alignment loss."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import (
    LogitSequence,
    best_path_decode,
    check_feasible,
    count_runs,
    path_to_mask,
    vcm_loss_and_gradient,
)
from .concepts import ConceptSegments, greedy_select, merge_segments
from .checks import finite_difference_gradient, max_relative_error
from .errors import CheckFailed, InvalidInput, NonConvergence
from .length import CoefficientParams, KeywordStats, LengthConfig, epsilon, length_from_stats


@dataclass(frozen=True)
class TrainConfig:
    M: int
    L: int
    lr: float = 0.1
    max_steps: int = 2000
    seed: int = 0
    init_scale: float = 0.1
    plateau_tol: float = 1e-6
    check_every: int = 0
    fd_step: float = 1e-5
    mode: str = "log"

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidInput("learning rate must be positive")
        if self.max_steps < 1:
            raise InvalidInput("max_steps must be at least 1")
        check_feasible(self.M, self.L)


@dataclass
class TrainTrace:
    losses: list
    logits: np.ndarray
    mask: np.ndarray
    best_path: np.ndarray
    concepts: ConceptSegments
    converged: bool
    L: int
    weight: float = 1.0
    grad_errors: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.losses)

    @property
    def greedy_runs(self) -> int:
        return count_runs(self.mask)

    @property
    def decoded_runs(self) -> int:
        return count_runs(path_to_mask(self.best_path))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.losses).round(12).tobytes())
        h.update(np.asarray(self.logits).round(12).tobytes())
        return h.hexdigest()


def descent_step(logits, L, lr, weight=1.0, mode="log"):
    """One update ``y <- y - lr * weight * dLoss/dy``; returns ``(new_logits, loss, grad)``."""
    loss, grad = vcm_loss_and_gradient(logits, L, mode=mode)
    return np.asarray(logits, dtype=float) - lr * weight * grad, loss, grad


def train_logits(cfg: TrainConfig, weight: float = 1.0, features=None, strict: bool = False) -> TrainTrace:
    """Descend from seeded near-uniform logits until the greedy keep mask has
    exactly ``L`` runs and the per-step loss change drops below ``plateau_tol``.

    ``features`` default to the token positions, so each final concept is the
    score-weighted centre of its run. With ``strict`` a run that never meets the
    criterion raises :class:`NonConvergence`; otherwise the flag is set on the trace.
    """
    rng = np.random.default_rng(cfg.seed)
    logits = rng.normal(scale=cfg.init_scale, size=(cfg.M, 2))
    losses, grad_errors = [], []
    converged = False
    for step in range(cfg.max_steps):
        new_logits, loss, grad = descent_step(logits, cfg.L, cfg.lr, weight, cfg.mode)
        losses.append(loss)
        if cfg.check_every and step % cfg.check_every == 0:
            fd = finite_difference_gradient(logits, cfg.L, cfg.fd_step, cfg.mode)
            grad_errors.append((step, max_relative_error(grad, fd)))
        if step > 0 and abs(losses[-2] - loss) < cfg.plateau_tol:
            if count_runs(greedy_select(LogitSequence(logits).emissions()).mask) == cfg.L:
                converged = True
                break
        logits = new_logits

    emissions = LogitSequence(logits).emissions()
    sel = greedy_select(emissions)
    if features is None:
        features = np.arange(1, cfg.M + 1, dtype=float)[:, None]
    trace = TrainTrace(
        losses=losses,
        logits=logits,
        mask=sel.mask,
        best_path=best_path_decode(emissions, cfg.L),
        concepts=merge_segments(features, sel),
        converged=converged,
        L=cfg.L,
        weight=weight,
        grad_errors=grad_errors,
    )
    if strict and not converged:
        raise NonConvergence(f"criterion unmet after {cfg.max_steps} steps (final loss {losses[-1]:.6g})")
    return trace


def masked_curriculum(cfg: TrainConfig, stats: KeywordStats, ratios,
                      length_cfg: LengthConfig = LengthConfig(),
                      coeffs: CoefficientParams = CoefficientParams()) -> list:
    """Train once per mask ratio with the length and loss weight that ratio implies.

    ``cfg.L`` is replaced by the estimated length for each ratio. Raises if the
    estimated length ever decreases as the ratio grows.
    """
    traces = []
    for r in ratios:
        step_stats = replace(stats, r=float(r))
        L = length_from_stats(cfg.M, step_stats, length_cfg)
        traces.append((float(r), train_logits(replace(cfg, L=L), weight=epsilon(float(r), coeffs))))
    by_ratio = sorted(traces, key=lambda item: item[0])
    lengths = [trace.L for _, trace in by_ratio]
    if any(b < a for a, b in zip(lengths, lengths[1:])):
        raise CheckFailed(f"estimated lengths decrease with mask ratio: {lengths}")
    return [trace for _, trace in traces]
