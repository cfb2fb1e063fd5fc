import hashlib
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vcm.attention import (
    AttentionParams,
    PipelineConfig,
    TokenMatrix,
    attention,
    diagnostics_hash,
    entropy,
    keyword_scores,
    mhca,
    mhsa,
    pipeline_forward,
    select_keywords,
    semantic_alignment_loss,
)
from vcm.errors import DimensionMismatch, InvalidInput
from vcm.length import LengthConfig

# frozen from the first seeded run
MHCA_DIGEST = "31d30d70e36971add82ddd71b0a383f8ea37e6d936ec07c876250f1f9f02a8c9"
PIPELINE_DIGEST = "b38900d11436a4893aff0714848647f4e8aad1ea51112a4b9a140a7b2fc01b32"


def _params(seed=0, d=32, heads=16):
    return AttentionParams.random(d, heads, np.random.default_rng(seed))


def _pipeline_inputs():
    rng = np.random.default_rng(11)
    return rng.normal(size=(64, 32)), rng.normal(size=(12, 32)), rng.normal(size=(4, 32))


PIPE_CFG = PipelineConfig(seed=3, length=LengthConfig(S=0.5))


@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 8))
def test_attention_rows_are_distributions(seed, nq, nc):
    rng = np.random.default_rng(seed)
    params = AttentionParams.random(32, 16, rng)
    out, w = attention(rng.normal(size=(nq, 32)), rng.normal(size=(nc, 32)), params)
    assert out.shape == (nq, 32)
    assert w.shape == (16, nq, nc)
    assert np.all(w >= 0)
    assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-9)


def test_single_token_self_attention_is_linear():
    params = _params()
    x = np.random.default_rng(1).normal(size=(1, 32))
    out, w = attention(x, x, params)
    assert np.all(w == 1.0)
    assert np.allclose(out, x @ params.w_v @ params.w_o, atol=1e-12)


def test_self_attention_is_permutation_equivariant():
    params = _params()
    x = np.random.default_rng(2).normal(size=(6, 32))
    perm = np.random.default_rng(3).permutation(6)
    assert np.allclose(mhsa(x[perm], params), mhsa(x, params)[perm], atol=1e-12)


def test_cross_attention_single_context_row():
    params = _params()
    rng = np.random.default_rng(4)
    c = rng.normal(size=(1, 32))
    out = mhca(rng.normal(size=(5, 32)), c, params)
    assert np.allclose(out, np.repeat(c @ params.w_v @ params.w_o, 5, axis=0), atol=1e-12)


def test_cross_attention_duplicated_context_unchanged():
    params = _params()
    rng = np.random.default_rng(5)
    q, c = rng.normal(size=(3, 32)), rng.normal(size=(4, 32))
    assert np.allclose(mhca(q, np.vstack([c, c]), params), mhca(q, c, params), atol=1e-12)


def test_cross_attention_golden_digest():
    rng = np.random.default_rng(7)
    params = AttentionParams.random(32, 16, rng)
    out = mhca(rng.normal(size=(3, 32)), rng.normal(size=(5, 32)), params)
    assert out.shape == (3, 32)
    assert hashlib.sha256(np.round(out, 8).tobytes()).hexdigest() == MHCA_DIGEST


def test_attention_shape_errors():
    params = _params()
    with pytest.raises(DimensionMismatch):
        mhsa(np.ones((2, 16)), params)
    with pytest.raises(DimensionMismatch):
        mhca(np.ones((2, 32)), np.ones((0, 32)), params)
    with pytest.raises(DimensionMismatch):
        AttentionParams.random(30, 16)
    with pytest.raises(DimensionMismatch):
        TokenMatrix(np.ones(3))
    with pytest.raises(InvalidInput):
        TokenMatrix(np.ones((2, 2)), role="image")


def test_keyword_scores():
    params = _params()
    x = np.random.default_rng(8).normal(size=(7, 32))
    assert np.allclose(keyword_scores(x, np.zeros(32), params), 1 / 7, atol=1e-15)
    assert keyword_scores(x[:1], np.ones(32), params).tolist() == [1.0]
    K = keyword_scores(x, np.random.default_rng(9).normal(size=32), params)
    assert np.all(K > 0) and abs(K.sum() - 1) <= 1e-9
    with pytest.raises(DimensionMismatch):
        keyword_scores(x, np.ones(16), params)


def test_select_keywords():
    # indices are 0-based
    assert select_keywords([0.1, 0.5, 0.4]).tolist() == [1, 2]
    assert select_keywords([0.25] * 4).tolist() == []
    assert select_keywords([0.7, 0.2, 0.1]).tolist() == [0]


def test_sa_loss_equal_inputs_is_twice_entropy():
    rng = np.random.default_rng(10)
    lmh, g = rng.normal(size=(8, 5)), rng.normal(size=8)
    assert semantic_alignment_loss(g, g, g, lmh) == pytest.approx(2 * entropy(g @ lmh), abs=1e-12)


def test_sa_loss_two_word_limit():
    # p_llm close to (1, 0), vision uniform, text equal to p_llm
    lmh = np.eye(2)
    g_llm = np.array([40.0, 0.0])
    loss = semantic_alignment_loss(g_llm, np.zeros(2), g_llm, lmh)
    assert loss == pytest.approx(math.log(2), abs=1e-12)


def test_sa_loss_bound_on_random_instances():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        lmh = rng.normal(size=(16, 12))
        g_llm, g_vis, g_txt = rng.normal(size=(3, 16))
        assert semantic_alignment_loss(g_llm, g_vis, g_txt, lmh) >= 2 * entropy(g_llm @ lmh) - 1e-9


def test_sa_loss_shape_errors():
    with pytest.raises(DimensionMismatch):
        semantic_alignment_loss(np.ones(4), np.ones(4), np.ones(4), np.ones((4, 1)))
    with pytest.raises(DimensionMismatch):
        semantic_alignment_loss(np.ones(3), np.ones(4), np.ones(4), np.ones((4, 5)))


def test_pipeline_golden_digest():
    res = pipeline_forward(*_pipeline_inputs(), PIPE_CFG)
    d = res.diagnostics
    assert (d["M"], d["L"], d["n_instruction"], d["n_response"]) == (64, 5, 5, 3)
    assert d["best_path_runs"] == d["L"]
    assert d["n_concepts"] == d["greedy_runs"] == len(res.concepts)
    assert diagnostics_hash(d, 8) == PIPELINE_DIGEST


def test_pipeline_is_reproducible():
    a = pipeline_forward(*_pipeline_inputs(), PIPE_CFG)
    b = pipeline_forward(*_pipeline_inputs(), PIPE_CFG)
    assert diagnostics_hash(a.diagnostics) == diagnostics_hash(b.diagnostics)
    assert np.array_equal(a.concepts.concepts, b.concepts.concepts)


def test_masking_instruction_keywords_lengthens():
    inputs = _pipeline_inputs()
    short = pipeline_forward(*inputs, PIPE_CFG).diagnostics
    long = pipeline_forward(*inputs, replace(PIPE_CFG, r=1.0)).diagnostics
    assert long["L"] >= short["L"]
    assert long["L"] == 9
    assert long["epsilon"] > short["epsilon"]


def test_pipeline_without_response_tokens():
    vision, instr, _ = _pipeline_inputs()
    d = pipeline_forward(vision, instr, np.zeros((0, 32)), PIPE_CFG).diagnostics
    assert d["n_response"] == 0
    assert np.isfinite(d["vcm_loss"])
    assert d["best_path_runs"] == d["L"]


def test_pipeline_width_errors():
    vision, instr, resp = _pipeline_inputs()
    with pytest.raises(DimensionMismatch):
        pipeline_forward(vision[:, :16], instr, resp, PIPE_CFG)
    with pytest.raises(DimensionMismatch):
        pipeline_forward(vision, instr[:0], resp, PIPE_CFG)
