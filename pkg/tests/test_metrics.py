import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraudfusion.errors import ConfigError, MetricError
from fraudfusion.metrics import (
    ConfusionCounts,
    CostParams,
    bootstrap_evaluate,
    confusion,
    derive_seed,
    financial_loss,
    optimal_f1_threshold,
    roc_auc,
)


def pair_count_auc(scores, labels):
    """O(n^2) oracle: P(s+ > s-) + 0.5 P(s+ = s-)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a, b in itertools.product(pos, neg):
        total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def sweep_f1(scores, labels):
    """Every unique score as a threshold, rule score >= t."""
    out = {}
    for t in sorted(set(scores)):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        fn = sum(1 for s, y in zip(scores, labels) if s < t and y == 1)
        out[t] = 2 * tp / (2 * tp + fp + fn)
    return out


# roc_auc -------------------------------------------------------------------

def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.3] * 5, [1, 0, 1, 0, 0]) == 0.5
    scores, labels = [0.9, 0.4, 0.6, 0.2], [1, 0, 0, 1]
    assert pair_count_auc(scores, labels) == 0.5
    assert roc_auc(scores, labels) == 0.5


def test_auc_single_class():
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2], [1, 1])


def test_auc_matches_pair_counting_with_ties(rng):
    for _ in range(100):
        n = int(rng.integers(2, 120))
        scores = rng.integers(0, 10, n) / 10.0  # heavy ties
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert abs(roc_auc(scores, labels) - pair_count_auc(scores, labels)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-800, 800), st.integers(0, 1)), min_size=2, max_size=60))
def test_auc_invariant_under_increasing_transform(pairs):
    # dyadic grid keeps both transforms strictly increasing in floating point
    scores = np.array([p[0] / 16 for p in pairs])
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        return
    a = roc_auc(scores, labels)
    assert roc_auc(2.0 * scores - 7.0, labels) == a
    assert roc_auc(scores**3, labels) == a


# thresholds ---------------------------------------------------------------

def test_f1_threshold_example():
    scores, labels = [0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]
    oracle = sweep_f1(scores, labels)
    assert oracle[0.3] == pytest.approx(0.8)
    t, f1 = optimal_f1_threshold(scores, labels)
    assert t == 0.3
    assert f1 == pytest.approx(0.8)


def test_f1_perfect_separation():
    t, f1 = optimal_f1_threshold([0.9, 0.7, 0.4, 0.1], [1, 1, 0, 0])
    assert (t, f1) == (0.7, 1.0)


def test_f1_constant_scores():
    t, f1 = optimal_f1_threshold([0.5] * 4, [1, 0, 0, 0])
    assert t == 0.5
    assert f1 == pytest.approx(2 * 1 / (2 * 1 + 3))


def test_f1_ties_prefer_larger_threshold():
    # thresholds 0.9 and 0.4 both give F1 2/3
    scores, labels = [0.9, 0.5, 0.4, 0.1], [1, 0, 1, 0]
    oracle = sweep_f1(scores, labels)
    best = max(oracle.values())
    winners = [t for t, v in oracle.items() if v == best]
    t, f1 = optimal_f1_threshold(scores, labels)
    assert t == max(winners)
    assert f1 == best


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 1)), min_size=2, max_size=40))
def test_f1_threshold_beats_sweep(pairs):
    scores = [p[0] / 20 for p in pairs]
    labels = [p[1] for p in pairs]
    if len(set(labels)) < 2:
        return
    t, f1 = optimal_f1_threshold(scores, labels)
    oracle = sweep_f1(scores, labels)
    assert f1 >= max(oracle.values()) - 1e-15
    assert f1 == pytest.approx(oracle[t])


# confusion and loss -------------------------------------------------------

def test_confusion_examples():
    assert confusion([0.9, 0.1], [1, 0], 0.5) == ConfusionCounts(tp=1, fp=0, tn=1, fn=0)
    c = confusion([0.3, 0.2, 0.6], [1, 0, 1], 0.7)
    assert c.tp == c.fp == 0
    c = confusion([0.3, 0.2, 0.6], [1, 0, 1], 0.2)
    assert c.tn == c.fn == 0
    assert c.total == 3


def test_confusion_length_mismatch():
    with pytest.raises(ConfigError):
        confusion([0.1, 0.2], [1], 0.5)


def test_loss_examples():
    costs = CostParams(acl=1000, clv=500, churn_given_reject=0.2)
    assert financial_loss(ConfusionCounts(5, 0, 5, 0), costs) == 0
    assert financial_loss(ConfusionCounts(0, 3, 0, 2), costs) == 2 * 1000 + 3 * 500 * 0.2 == 2300
    free_fp = CostParams(acl=1000, clv=500, churn_given_reject=0.0)
    assert financial_loss(ConfusionCounts(0, 9, 0, 4), free_fp) == 4000


def test_cost_params_validation():
    with pytest.raises(ConfigError):
        CostParams(acl=-1)
    with pytest.raises(ConfigError):
        CostParams(churn_given_reject=1.5)


counts = st.integers(0, 10_000)
money = st.floats(0, 1e6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(counts, counts, money, money, st.floats(0, 1))
def test_loss_monotone_and_linear(fn, fp, acl, clv, churn):
    c = CostParams(acl, clv, churn)
    base = financial_loss(ConfusionCounts(0, fp, 0, fn), c)
    assert financial_loss(ConfusionCounts(0, fp, 0, fn + 1), c) >= base
    assert financial_loss(ConfusionCounts(0, fp + 1, 0, fn), c) >= base
    doubled_acl = financial_loss(ConfusionCounts(0, fp, 0, fn), CostParams(2 * acl, clv, churn))
    assert doubled_acl - base == pytest.approx(fn * acl, rel=1e-12, abs=1e-6)
    doubled_clv = financial_loss(ConfusionCounts(0, fp, 0, fn), CostParams(acl, 2 * clv, churn))
    assert doubled_clv - base == pytest.approx(fp * clv * churn, rel=1e-12, abs=1e-6)


# bootstrap ----------------------------------------------------------------

def test_bootstrap_deterministic(rng):
    y = (rng.random(500) < 0.2).astype(int)
    s = rng.random(500) + 0.5 * y
    c = CostParams()
    a = bootstrap_evaluate(s, y, c, 20, seed=4)
    b = bootstrap_evaluate(s, y, c, 20, seed=4)
    assert a == b
    assert bootstrap_evaluate(s, y, c, 20, seed=5) != a
    assert a.threshold == optimal_f1_threshold(s, y)[0]


def test_bootstrap_constant_scores():
    y = np.array([0, 1] * 50)
    m = bootstrap_evaluate(np.full(100, 0.4), y, CostParams(), 30, seed=1)
    assert m.mean["auc"] == 0.5
    assert m.std["auc"] == 0.0


def test_bootstrap_perfect_separation_has_zero_spread(rng):
    y = (rng.random(300) < 0.3).astype(int)
    s = np.where(y == 1, 0.6 + 0.4 * rng.random(300), 0.5 * rng.random(300))
    m = bootstrap_evaluate(s, y, CostParams(), 25, seed=2)
    for k in ("auc", "f1", "precision", "recall", "financial_loss"):
        assert m.std[k] == 0.0, k
    assert m.mean["f1"] == 1.0
    assert m.mean["financial_loss"] == 0.0


def test_bootstrap_rejects_bad_input():
    with pytest.raises(ConfigError):
        bootstrap_evaluate([0.1, 0.9], [0, 1], CostParams(), 1)
    with pytest.raises(MetricError):
        bootstrap_evaluate([0.1, 0.9], [1, 1], CostParams(), 5)


def test_bootstrap_retry_budget():
    # one positive among 2000 rows: most resamples lack it, a budget of 1 must fail
    y = np.zeros(2000, dtype=int)
    y[0] = 1
    s = np.linspace(0, 1, 2000)
    with pytest.raises(MetricError, match="both classes"):
        bootstrap_evaluate(s, y, CostParams(), 50, seed=0, max_retries=1)


def test_format_two_decimals():
    y = np.array([0, 1] * 50)
    m = bootstrap_evaluate(np.arange(100) / 100, y, CostParams(), 10, seed=3)
    text = m.fmt("auc", 100)
    mean, std = text.split("±")
    assert len(mean.split(".")[1]) == 2 and len(std.split(".")[1]) == 2


def test_derive_seed_stable():
    assert derive_seed(1, "S+C", "fit") == derive_seed(1, "S+C", "fit")
    assert derive_seed(1, "S+C", "fit") != derive_seed(1, "S", "fit")
    assert 0 <= derive_seed("x") < 2**64
