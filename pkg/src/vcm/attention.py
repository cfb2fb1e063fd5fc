"""Forward-only toy attention layers, keyword scoring and the concept pipeline.

Weights are seeded Gaussians with scale ``1/sqrt(d)``; nothing here is
trained. The pipeline wires the keyword selector, the length policy, a
seeded keep/blank classification head, the alignment loss and segment
merging into one reproducible forward pass.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .alignment import EmissionSequence, best_path_decode, count_runs, log_softmax, path_to_mask, softmax, vcm_loss
from .concepts import ConceptSegments, greedy_select, merge_segments
from .errors import DimensionMismatch, InvalidInput
from .length import (
    CoefficientParams,
    KeywordStats,
    LengthConfig,
    effective_keyword_diff,
    epsilon,
    estimate_length,
)

ROLES = ("instruction", "response", "vision", "concat")


@dataclass(frozen=True)
class TokenMatrix:
    rows: np.ndarray
    role: str = "concat"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise DimensionMismatch(f"token matrix must be 2-D, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvalidInput("token matrix has non-finite entries")
        if self.role not in ROLES:
            raise InvalidInput(f"unknown role {self.role!r}")
        object.__setattr__(self, "rows", rows)


def _rows(x) -> np.ndarray:
    x = x.rows if isinstance(x, TokenMatrix) else np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected an (N, d) matrix, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    heads: int = 16

    def __post_init__(self):
        d = self.w_q.shape[0]
        if d % self.heads:
            raise DimensionMismatch(f"width {d} is not divisible by {self.heads} heads")

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def random(cls, d: int, heads: int = 16, rng=None) -> "AttentionParams":
        if d % heads:
            raise DimensionMismatch(f"width {d} is not divisible by {heads} heads")
        rng = np.random.default_rng(rng)
        w = rng.normal(scale=1.0 / np.sqrt(d), size=(4, d, d))
        return cls(w[0], w[1], w[2], w[3], heads)


def _split_heads(x, heads):
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def attention(query, context, params: AttentionParams):
    """Scaled dot-product multi-head attention; returns ``(output, weights)``.

    ``weights`` has shape ``(heads, Nq, Nc)`` with rows summing to one.
    """
    q_in, kv_in = _rows(query), _rows(context)
    if q_in.shape[1] != params.d or kv_in.shape[1] != params.d:
        raise DimensionMismatch(
            f"token widths {q_in.shape[1]}/{kv_in.shape[1]} do not match parameter width {params.d}"
        )
    if kv_in.shape[0] == 0:
        raise DimensionMismatch("attention context is empty")
    h = params.heads
    q = _split_heads(q_in @ params.w_q, h)
    k = _split_heads(kv_in @ params.w_k, h)
    v = _split_heads(kv_in @ params.w_v, h)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(params.d // h)
    weights = softmax(scores, axis=-1)
    heads_out = weights @ v
    out = heads_out.transpose(1, 0, 2).reshape(q_in.shape[0], params.d) @ params.w_o
    return out, weights


def mhsa(tokens, params: AttentionParams) -> np.ndarray:
    return attention(tokens, tokens, params)[0]


def mhca(query, context, params: AttentionParams) -> np.ndarray:
    return attention(query, context, params)[0]


def keyword_scores(instr_resp, g_vision, params: AttentionParams) -> np.ndarray:
    """Softmax over text tokens of their self-attended features against the global vision vector."""
    x = _rows(instr_resp)
    g = np.asarray(g_vision, dtype=float).reshape(-1)
    if g.size != x.shape[1]:
        raise DimensionMismatch(f"vision vector has width {g.size}, tokens have width {x.shape[1]}")
    return softmax(mhsa(x, params) @ g)


def select_keywords(K) -> np.ndarray:
    """0-based indices of scores strictly above the mean score."""
    K = np.asarray(K, dtype=float)
    return np.flatnonzero(K > K.mean())


def semantic_alignment_loss(g_llm, g_vision, g_text, lmh) -> float:
    """Cross-entropy of the vision and text vocab distributions against the LLM text distribution."""
    lmh = np.asarray(lmh, dtype=float)
    if lmh.ndim != 2 or lmh.shape[1] < 2:
        raise DimensionMismatch("vocabulary head must be a (d, V) matrix with V >= 2")
    vecs = [np.asarray(g, dtype=float).reshape(-1) for g in (g_llm, g_vision, g_text)]
    if any(v.size != lmh.shape[0] for v in vecs):
        raise DimensionMismatch("global feature widths must match the vocabulary head")
    log_llm, log_vis, log_txt = (log_softmax(v @ lmh) for v in vecs)
    p_llm = np.exp(log_llm)
    return float(-(p_llm * log_vis).sum() - (p_llm * log_txt).sum())


def entropy(logits) -> float:
    logp = log_softmax(np.asarray(logits, dtype=float))
    return float(-(np.exp(logp) * logp).sum())


# ---------------------------------------------------------------------------
# Pipeline


@dataclass(frozen=True)
class PipelineConfig:
    d: int = 32
    heads: int = 16
    vocab: int = 64
    seed: int = 0
    r: float = 0.0
    mode: str = "log"
    length: LengthConfig = field(default_factory=LengthConfig)
    coeffs: CoefficientParams = field(default_factory=CoefficientParams)


@dataclass(frozen=True)
class ToyModel:
    selector: AttentionParams
    cross: AttentionParams
    w_v2t: np.ndarray
    w_t2v: np.ndarray
    w_cls: np.ndarray
    lmh: np.ndarray

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "ToyModel":
        rng = np.random.default_rng(cfg.seed)
        d, scale = cfg.d, 1.0 / np.sqrt(cfg.d)
        selector = AttentionParams.random(d, cfg.heads, rng)
        cross = AttentionParams.random(d, cfg.heads, rng)
        return cls(
            selector,
            cross,
            rng.normal(scale=scale, size=(d, d)),
            rng.normal(scale=scale, size=(d, d)),
            rng.normal(scale=scale, size=(d, 2)),
            rng.normal(scale=scale, size=(d, cfg.vocab)),
        )


@dataclass(frozen=True)
class PipelineResult:
    concepts: ConceptSegments
    emissions: EmissionSequence
    features: np.ndarray
    keyword_scores: np.ndarray
    diagnostics: dict


def pipeline_forward(vision_features, instruction_tokens, response_tokens,
                     config: PipelineConfig = PipelineConfig(), model: ToyModel | None = None) -> PipelineResult:
    vision = _rows(vision_features)
    instr = _rows(instruction_tokens)
    resp = np.asarray(response_tokens, dtype=float).reshape(-1, vision.shape[1]) \
        if np.size(response_tokens) == 0 else _rows(response_tokens)
    d = config.d
    for name, x in (("vision", vision), ("instruction", instr), ("response", resp)):
        if x.shape[1] != d:
            raise DimensionMismatch(f"{name} tokens have width {x.shape[1]}, config expects {d}")
    if vision.shape[0] == 0 or instr.shape[0] == 0:
        raise DimensionMismatch("vision and instruction inputs need at least one token")
    model = model or ToyModel.from_config(config)

    M, n_instr_tokens = vision.shape[0], instr.shape[0]
    text = np.vstack([instr, resp])
    g_vision = vision.mean(axis=0) @ model.w_v2t
    K = keyword_scores(text, g_vision, model.selector)
    keywords = select_keywords(K)
    n_instruction = int(np.count_nonzero(keywords < n_instr_tokens))
    stats = KeywordStats(n_instruction, int(keywords.size) - n_instruction, config.r)
    n_key = effective_keyword_diff(stats, config.length)
    L = estimate_length(M, n_key, config.length)

    # pooled after self-attention
    h_text = mhsa(text, model.selector)
    prior = h_text[:n_instr_tokens].mean(axis=0)
    if resp.shape[0]:
        prior = prior - h_text[n_instr_tokens:].mean(axis=0)
    queries = vision + prior @ model.w_t2v
    h_vision = mhca(queries, vision, model.cross) @ model.w_v2t

    emissions = EmissionSequence.from_logits(h_vision @ model.w_cls)
    loss = vcm_loss(emissions, L, mode=config.mode)
    sel = greedy_select(emissions)
    concepts = merge_segments(h_vision, sel)
    best_runs = count_runs(path_to_mask(best_path_decode(emissions, L)))
    weight = epsilon(config.r, config.coeffs)
    sa = semantic_alignment_loss(h_text.mean(axis=0), g_vision, text.mean(axis=0), model.lmh)

    diagnostics = {
        "M": M,
        "L": L,
        "n_instruction": stats.n_instruction,
        "n_response": stats.n_response,
        "n_key": n_key,
        "r": config.r,
        "epsilon": weight,
        "vcm_loss": loss,
        "weighted_vcm_loss": weight * loss,
        "sa_loss": sa,
        "greedy_runs": count_runs(sel.mask),
        "best_path_runs": best_runs,
        "run_count_gap": count_runs(sel.mask) - L,
        "n_concepts": len(concepts),
    }
    return PipelineResult(concepts, emissions, h_vision, K, diagnostics)


def diagnostics_hash(diagnostics: dict, digits: int = 10) -> str:
    """SHA-256 of the diagnostics with floats rounded to ``digits`` significant digits."""
    canon = {k: (float(f"{v:.{digits}g}") if isinstance(v, float) else v) for k, v in diagnostics.items()}
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()
