"""Verification routines shared by the CLI and the test-suite."""

from __future__ import annotations

import numpy as np

from .alignment import (
    EmissionSequence,
    LogitSequence,
    brute_force_probability,
    compute_lattice,
    max_concepts,
    vcm_loss,
    vcm_loss_and_gradient,
)
from .fixtures import WORKED_DECIMALS, WORKED_L, worked_alpha, worked_probs


def finite_difference_gradient(logits, L, h=1e-5, mode="log") -> np.ndarray:
    """Central differences of the loss with respect to every logit."""
    base = np.array(logits, dtype=float)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        up, down = base.copy(), base.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (vcm_loss(LogitSequence(up), L, mode) - vcm_loss(LogitSequence(down), L, mode)) / (2 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-12) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|)``; ``floor`` guards exact zeros."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def relative_gap(a, b) -> float:
    a, b = float(a), float(b)
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def random_logits(rng, M, scale=1.5) -> np.ndarray:
    return rng.normal(scale=scale, size=(M, 2))


def random_emissions(rng, M, scale=1.5) -> EmissionSequence:
    return EmissionSequence.from_logits(random_logits(rng, M, scale))


def oracle_check(M_values, trials, seed=0, L=None) -> dict:
    """Compare lattice probabilities with exhaustive enumeration.

    Every feasible ``L`` is tried for each ``M`` unless ``L`` is given.
    """
    rng = np.random.default_rng(seed)
    worst, count = 0.0, 0
    for M in M_values:
        lengths = range(max_concepts(M) + 1) if L is None else [L]
        for ell in lengths:
            for _ in range(trials):
                em = random_emissions(rng, M)
                dp = compute_lattice(em, ell, mode="linear").probability_routes()[0]
                worst = max(worst, relative_gap(dp, brute_force_probability(em, ell)))
                count += 1
    return {"cases": count, "max_rel_err": worst}


def gradient_check(trials, max_M=10, seed=0, h=1e-5) -> dict:
    """Analytic gradient against central differences on random feasible instances."""
    rng = np.random.default_rng(seed)
    worst, row_sum = 0.0, 0.0
    for _ in range(trials):
        M = int(rng.integers(1, max_M + 1))
        L = int(rng.integers(0, max_concepts(M) + 1))
        logits = random_logits(rng, M)
        _, grad = vcm_loss_and_gradient(logits, L)
        worst = max(worst, max_relative_error(grad, finite_difference_gradient(logits, L, h)))
        row_sum = max(row_sum, float(np.abs(grad.sum(axis=1)).max()))
    return {"cases": trials, "max_rel_err": worst, "max_row_sum": row_sum}


def identity_check(trials, max_M=64, seed=0) -> dict:
    """Agreement of the three total-probability routes and posterior normalisation."""
    rng = np.random.default_rng(seed)
    worst_route, worst_gamma = 0.0, 0.0
    for _ in range(trials):
        M = int(rng.integers(1, max_M + 1))
        L = int(rng.integers(0, max_concepts(M) + 1))
        lat = compute_lattice(random_emissions(rng, M), L, mode="linear")
        terminal, initial, per_step = lat.probability_routes()
        gaps = [relative_gap(terminal, initial)] + [relative_gap(terminal, v) for v in per_step]
        worst_route = max(worst_route, max(gaps))
        worst_gamma = max(worst_gamma, float(np.abs(lat.gamma.sum(axis=1) - 1.0).max()))
    return {"cases": trials, "max_route_rel_err": worst_route, "max_gamma_row_err": worst_gamma}


def worked_example_check():
    """Forward table of the worked instance next to the reference values."""
    lat = compute_lattice(worked_probs(), WORKED_L, mode="linear")
    reference = worked_alpha()
    rounded = np.round(lat.alpha, WORKED_DECIMALS)
    return {
        "alpha": lat.alpha,
        "reference": reference,
        "delta": lat.alpha - reference,
        "cells_matching": int(np.count_nonzero(np.isclose(rounded, reference, rtol=0, atol=1e-12))),
        "cells": reference.size,
        "total_prob": lat.probability_routes()[0],
    }
