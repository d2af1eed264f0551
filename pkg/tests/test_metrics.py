from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from oasd.errors import ValidationError
from oasd.metrics import count_runs, evaluate, jaccard

from oracles import metrics_oracle


def test_hand_computed_case():
    corpus = [("a", [0, 1, 1, 0], [0, 1, 0, 0]),
              ("b", [0, 0, 0, 0], [0, 1, 0, 0])]
    r = evaluate(corpus)
    assert r.J == 0.5
    assert (r.n_gt_runs, r.n_det_runs) == (1, 2)
    assert r.precision == 0.25 and r.recall == 0.5
    assert math.isclose(r.f1, 2 * 0.25 * 0.5 / 0.75)
    assert r.tf1 == 0.0  # J_a = 0.5 is not above phi


def test_empty_and_mismatch():
    r = evaluate([("a", [0, 0], [0, 0])])
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        evaluate([("a", [0, 0, 0], [0, 0])])


def _fragmented(L, m, k):
    """Interior of length L; m detected positions, all inside the gt run, in k runs."""
    det = [0] * (L + 2)
    sizes = [m // k + (j < m % k) for j in range(k)]
    pos = 1
    for size in sizes:
        for _ in range(size):
            det[pos] = 1
            pos += 1
        pos += 1
    return det


def test_fragmentation_penalizes_precision():
    gt = [0] + [1] * 6 + [0]
    one = evaluate([("a", gt, _fragmented(6, 4, 1))])
    two = evaluate([("a", gt, _fragmented(6, 4, 2))])
    assert one.J == two.J == 4 / 6
    assert two.recall == one.recall
    assert two.precision < one.precision


@given(st.integers(2, 28), st.data())
def test_more_fragments_same_positions(L, data):
    m = data.draw(st.integers(1, L))
    k = data.draw(st.integers(1, min(m, L - m + 1)))
    gt = [0] + [1] * L + [0]
    base = evaluate([("a", gt, _fragmented(L, m, 1))])
    frag = evaluate([("a", gt, _fragmented(L, m, k))])
    assert frag.J == base.J and frag.recall == base.recall
    if k > 1:
        assert frag.precision < base.precision
    assert frag.n_det_runs == k


def test_jaccard_and_runs():
    assert jaccard(set(), set()) == 0.0
    assert jaccard({1, 2}, {2, 3}) == 1 / 3
    assert count_runs([1, 1, 0, 1, 0, 0, 1]) == 3


@st.composite
def corpora(draw):
    n = draw(st.integers(1, 20))
    out = []
    for k in range(n):
        m = draw(st.integers(2, 30))
        gt = draw(st.lists(st.integers(0, 1), min_size=m, max_size=m))
        det = draw(st.lists(st.integers(0, 1), min_size=m, max_size=m))
        out.append((f"t{k}", gt, det))
    return out


@given(corpora())
def test_matches_brute_force(corpus):
    r = evaluate(corpus, 0.5)
    (p, rc, f), (tp, tr, tf) = metrics_oracle(corpus, 0.5)
    assert (r.precision, r.recall, r.f1) == (p, rc, f)
    assert (r.tprecision, r.trecall, r.tf1) == (tp, tr, tf)
