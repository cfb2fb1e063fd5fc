import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from vcm.alignment import EmissionSequence, count_runs
from vcm.concepts import (
    ConceptSegments,
    SelectionMask,
    greedy_select,
    merge_batch,
    merge_segments,
    merge_segments_arrays,
    merge_segments_loop,
)
from vcm.errors import DimensionMismatch, InvalidInput


def test_hand_example():
    x = np.array([[2.0], [4.0], [6.0], [8.0]])
    seg = merge_segments(x, SelectionMask([1, 1, 0, 1], [0.25, 0.75, 0.5, 1.0]))
    assert seg.concepts.tolist() == [[3.5], [8.0]]
    assert seg.spans.tolist() == [[1, 2], [4, 4]]
    assert seg.masses.tolist() == [1.0, 1.0]


def test_run_count_law_exhaustive():
    # every binary mask up to length 16 in one batched call
    for M in range(1, 17):
        masks = np.array(list(itertools.product([0, 1], repeat=M)), dtype=bool)
        x = np.ones((len(masks), M, 1))
        out = merge_segments_arrays(x, masks, np.ones(masks.shape))
        counts = [len(spans) for _, spans, _ in out]
        assert counts == [count_runs(m) for m in masks.astype(int)]


def test_greedy_select_ties_drop():
    em = EmissionSequence([[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]])
    sel = greedy_select(em)
    assert sel.mask.tolist() == [0, 1, 0]
    assert sel.scores.tolist() == [0.5, 0.8, 0.1]


def test_zero_score_run_gives_zero_vector():
    seg = merge_segments(np.array([[1.0, 2.0], [3.0, 4.0]]), SelectionMask([1, 1], [0.0, 0.0]))
    assert seg.concepts.tolist() == [[0.0, 0.0]]
    assert seg.masses.tolist() == [0.0]


def test_empty_selection():
    seg = merge_segments(np.ones((3, 4)), SelectionMask([0, 0, 0], [0.1, 0.2, 0.3]))
    assert len(seg) == 0
    assert seg.concepts.shape == (0, 4)
    assert seg.spans.shape == (0, 2)


def test_mask_validation():
    with pytest.raises(DimensionMismatch):
        SelectionMask([1, 0], [0.5])
    with pytest.raises(InvalidInput):
        SelectionMask([2, 0], [0.5, 0.5])
    with pytest.raises(DimensionMismatch):
        merge_segments(np.ones((3, 2)), SelectionMask([1, 0], [0.5, 0.5]))
    with pytest.raises(DimensionMismatch):
        merge_segments(np.ones(2), SelectionMask([1, 0], [0.5, 0.5]))


def test_batch_mixes_empty_and_nonempty():
    a = (np.arange(6.0).reshape(3, 2), SelectionMask([1, 0, 1], [1.0, 1.0, 3.0]))
    b = (np.ones((2, 2)), SelectionMask([0, 0], [0.0, 0.0]))
    c = (np.arange(10.0).reshape(5, 2), SelectionMask([0, 1, 1, 1, 0], [0.0, 1.0, 1.0, 2.0, 0.0]))
    out = merge_batch([a, b, c])
    assert [len(s) for s in out] == [2, 0, 1]
    assert out[0].spans.tolist() == [[1, 1], [3, 3]]
    assert out[2].spans.tolist() == [[2, 4]]
    assert np.allclose(out[2].concepts, [[(2 + 4 + 2 * 6) / 4, (3 + 5 + 2 * 7) / 4]])
    for (feat, sel), seg in zip([a, b, c], out):
        single = merge_segments(feat, sel)
        assert np.array_equal(single.spans, seg.spans)
        assert np.allclose(single.concepts, seg.concepts, atol=1e-15)


def test_batch_edge_cases():
    assert merge_batch([]) == []
    with pytest.raises(DimensionMismatch):
        merge_batch([(np.ones((2, 2)), SelectionMask([1, 1], [1, 1])),
                     (np.ones((2, 3)), SelectionMask([1, 1], [1, 1]))])


def test_runs_do_not_cross_samples():
    x = np.ones((2, 3, 1))
    mask = np.array([[0, 1, 1], [1, 1, 0]], dtype=bool)
    out = merge_segments_arrays(x, mask, np.ones((2, 3)))
    assert out[0][1].tolist() == [[2, 3]]
    assert out[1][1].tolist() == [[1, 2]]


def test_dict_round_trip():
    seg = merge_segments(np.array([[2.0], [4.0], [6.0]]), SelectionMask([1, 0, 1], [1.0, 1.0, 2.0]))
    back = ConceptSegments.from_dict(seg.to_dict())
    assert np.array_equal(back.concepts, seg.concepts)
    assert np.array_equal(back.spans, seg.spans)
    assert np.array_equal(back.masses, seg.masses)


@st.composite
def batches(draw):
    B = draw(st.integers(1, 4))
    S = draw(st.integers(1, 24))
    D = draw(st.integers(1, 4))
    x = draw(arrays(float, (B, S, D), elements=st.floats(-10, 10)))
    mask = draw(arrays(bool, (B, S)))
    scores = draw(arrays(float, (B, S), elements=st.floats(0, 1)))
    return x, mask, scores


@given(batches())
def test_batched_matches_loop(batch):
    x, mask, scores = batch
    for fast, slow in zip(merge_segments_arrays(x, mask, scores), merge_segments_loop(x, mask, scores)):
        assert np.array_equal(fast[1], slow[1])
        assert np.allclose(fast[0], slow[0], rtol=0, atol=1e-12)
        assert np.allclose(fast[2], slow[2], rtol=0, atol=1e-12)


@given(batches())
def test_concepts_lie_in_run_bounding_box(batch):
    # a positive-mass concept is a convex combination of its run's features
    x, mask, scores = batch
    for b, (concepts, spans, masses) in enumerate(merge_segments_arrays(x, mask, scores)):
        for c, (lo, hi), m in zip(concepts, spans, masses):
            if m > 0:
                run = x[b, lo - 1 : hi]
                assert np.all(c >= run.min(axis=0) - 1e-9)
                assert np.all(c <= run.max(axis=0) + 1e-9)
