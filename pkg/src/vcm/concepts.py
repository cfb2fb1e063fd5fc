"""Greedy token selection and score-weighted segment merging.

Each maximal run of selected tokens collapses into one concept vector, the
score-weighted mean of the run's features. The batched path finds run
boundaries on the flattened mask and reduces each run with one sparse
matrix product, reading only the selected rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .alignment import as_emissions
from .errors import DimensionMismatch, InvalidInput


@dataclass(frozen=True)
class SelectionMask:
    mask: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask).astype(np.int64).reshape(-1)
        scores = np.asarray(self.scores, dtype=float).reshape(-1)
        if mask.shape != scores.shape:
            raise DimensionMismatch(f"mask has {mask.size} entries but scores has {scores.size}")
        if np.any((mask != 0) & (mask != 1)):
            raise InvalidInput("mask must be binary")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "scores", scores)

    @property
    def M(self) -> int:
        return self.mask.size


@dataclass(frozen=True)
class ConceptSegments:
    """Merged concepts; row ``k`` of ``spans`` is the 1-based inclusive token range of concept ``k``."""

    concepts: np.ndarray
    spans: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        spans = np.asarray(self.spans, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "spans", spans)

    def __len__(self):
        return len(self.spans)

    @classmethod
    def empty(cls, d: int) -> "ConceptSegments":
        return cls(np.zeros((0, d)), np.zeros((0, 2), dtype=np.int64), np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "concepts": self.concepts.tolist(),
            "spans": self.spans.tolist(),
            "masses": self.masses.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ConceptSegments":
        concepts = np.asarray(obj["concepts"], dtype=float)
        if concepts.size == 0:
            concepts = concepts.reshape(0, 0)
        return cls(concepts, obj["spans"], np.asarray(obj["masses"], dtype=float))


def greedy_select(emissions) -> SelectionMask:
    """Keep token ``t`` iff ``p_keep > p_blank`` (ties drop the token)."""
    em = as_emissions(emissions)
    return SelectionMask((em.p_keep > em.p_blank).astype(np.int64), em.p_keep.copy())


def _check_pair(features, sel: SelectionMask):
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch(f"features must be a 2-D (M, d) matrix, got shape {x.shape}")
    if x.shape[0] != sel.M:
        raise DimensionMismatch(f"features have {x.shape[0]} rows but the mask has {sel.M} entries")
    return x


def merge_segments_arrays(x, x_mask, scores):
    """Segment merge over a padded batch without a per-token Python loop.

    ``x`` has shape ``(B, S, D)``, ``x_mask`` and ``scores`` shape ``(B, S)``.
    Run boundaries come from the flattened mask; each run's weighted mean is
    one row of a sparse ``(runs, B*S)`` weight matrix times the flattened
    features, so only selected rows are read. Returns a list of
    ``(concepts, spans, masses)`` triples, one per sample; ``spans`` is a
    ``(runs, 2)`` array of 1-based inclusive token ranges.
    """
    x = np.asarray(x, dtype=float)
    x_mask = np.asarray(x_mask).astype(bool)
    scores = np.asarray(scores, dtype=float)
    B, S, D = x.shape
    if x_mask.shape != (B, S) or scores.shape != (B, S):
        raise DimensionMismatch("mask and scores must have shape (B, S) matching the features")

    idx = np.flatnonzero(x_mask)
    opens = np.ones(idx.size, dtype=bool)
    # a run continues only through adjacent tokens of the same sample
    opens[1:] = (np.diff(idx) != 1) | (idx[1:] % S == 0)
    first = np.flatnonzero(opens)
    ptr = np.append(first, idx.size)
    weights = scores.reshape(-1)[idx]

    if first.size:
        masses = np.add.reduceat(weights, first)
        divisor = np.where(masses == 0, 1.0, masses)
        # normalised weights make the product the weighted mean directly
        run_of = np.repeat(np.arange(first.size), np.diff(ptr))
        A = sparse.csr_matrix((weights / divisor[run_of], idx, ptr), shape=(first.size, B * S))
        concepts = A @ x.reshape(B * S, D)
    else:
        concepts, masses = np.zeros((0, D)), np.zeros(0)

    starts, ends = idx[first], idx[ptr[1:] - 1]
    spans = np.stack((starts % S + 1, ends % S + 1), axis=1)
    bounds = np.searchsorted(starts // S, np.arange(B + 1)).tolist()
    return [(concepts[lo:hi], spans[lo:hi], masses[lo:hi]) for lo, hi in zip(bounds, bounds[1:])]


def merge_segments(features, sel: SelectionMask) -> ConceptSegments:
    """Score-weighted mean of each maximal run of selected tokens.

    A run whose scores sum to exactly zero is divided by one instead, so its
    concept is the (zero-weighted) sum of its features, i.e. the zero vector.
    """
    x = _check_pair(features, sel)
    concepts, spans, masses = merge_segments_arrays(x[None], sel.mask[None], sel.scores[None])[0]
    return ConceptSegments(concepts, spans, masses)


def merge_batch(batch) -> list:
    """Merge a batch of ``(features, SelectionMask)`` pairs in one vectorised pass.

    Samples of different lengths are right-padded with unselected tokens.
    All samples must share the feature width.
    """
    batch = list(batch)
    if not batch:
        return []
    xs = [_check_pair(f, s) for f, s in batch]
    widths = {x.shape[1] for x in xs}
    if len(widths) != 1:
        raise DimensionMismatch(f"feature widths differ across the batch: {sorted(widths)}")
    D = widths.pop()
    S = max(x.shape[0] for x in xs)
    X = np.zeros((len(xs), S, D))
    mask = np.zeros((len(xs), S), dtype=bool)
    scores = np.zeros((len(xs), S))
    for i, (x, (_, sel)) in enumerate(zip(xs, batch)):
        X[i, : x.shape[0]] = x
        mask[i, : sel.M] = sel.mask.astype(bool)
        scores[i, : sel.M] = sel.scores
    return [ConceptSegments(c, sp, m) for c, sp, m in merge_segments_arrays(X, mask, scores)]


def merge_segments_loop(x, x_mask, scores):
    """Reference double loop over samples and tokens; same output as the batched path."""
    x = np.asarray(x, dtype=float)
    x_mask = np.asarray(x_mask)
    scores = np.asarray(scores, dtype=float)
    B, S, D = x.shape
    out = []
    for b in range(B):
        concepts, spans, masses = [], [], []
        acc, mass, start = None, 0.0, None
        for t in range(S):
            if x_mask[b, t]:
                if start is None:
                    acc, mass, start = np.zeros(D), 0.0, t
                acc = acc + scores[b, t] * x[b, t]
                mass += scores[b, t]
            if start is not None and (t == S - 1 or not x_mask[b, t + 1]):
                concepts.append(acc / (mass if mass != 0 else 1.0))
                spans.append((start + 1, t + 1))
                masses.append(mass)
                start = None
        out.append((np.array(concepts).reshape(len(concepts), D),
                    np.array(spans, dtype=np.int64).reshape(len(spans), 2), np.array(masses)))
    return out
