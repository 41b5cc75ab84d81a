"""Ranking and threshold metrics, the cost-weighted financial loss, and bootstrap summaries."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, MetricError

METRIC_NAMES = ("auc", "f1", "precision", "recall", "financial_loss")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def precision(self) -> float:
        flagged = self.tp + self.fp
        return self.tp / flagged if flagged else 0.0

    @property
    def recall(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass(frozen=True)
class CostParams:
    """Price of a false negative (``acl``) and of a false positive (``clv * churn_given_reject``)."""

    acl: float = 1000.0
    clv: float = 300.0
    churn_given_reject: float = 0.3

    def __post_init__(self):
        if self.acl < 0 or self.clv < 0:
            raise ConfigError("acl and clv must be non-negative")
        if not 0.0 <= self.churn_given_reject <= 1.0:
            raise ConfigError("churn_given_reject must be in [0, 1]")

    @property
    def false_positive_cost(self) -> float:
        return self.clv * self.churn_given_reject

    def to_dict(self) -> dict:
        return {"acl": self.acl, "clv": self.clv, "churn_given_reject": self.churn_given_reject}

    @classmethod
    def from_dict(cls, d: dict) -> CostParams:
        unknown = set(d) - {"acl", "clv", "churn_given_reject"}
        if unknown:
            raise ConfigError(f"unknown cost keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class MetricSummary:
    mean: dict
    std: dict
    threshold: float
    n_replicates: int

    def fmt(self, name: str, scale: float = 1.0, digits: int = 2) -> str:
        return f"{self.mean[name] * scale:.{digits}f}±{self.std[name] * scale:.{digits}f}"

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n_replicates": self.n_replicates,
            "mean": dict(self.mean),
            "std": dict(self.std),
        }


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigError(f"scores and labels must be equal-length vectors ({scores.shape} vs {labels.shape})")
    return scores, labels


def _require_both(labels):
    n_pos = int(np.count_nonzero(labels == 1))
    if n_pos == 0 or n_pos == len(labels):
        raise MetricError("both classes must be present")
    return n_pos


def roc_auc(scores, labels) -> float:
    """Mann-Whitney form: rank-sum of positives with average ranks for ties."""
    scores, labels = _check(scores, labels)
    n_pos = _require_both(labels)
    n_neg = len(labels) - n_pos
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion(scores, labels, threshold: float) -> ConfusionCounts:
    """Counts under the rule ``score >= threshold`` means fraud."""
    scores, labels = _check(scores, labels)
    flagged = scores >= threshold
    pos = labels == 1
    tp = int(np.count_nonzero(flagged & pos))
    fp = int(np.count_nonzero(flagged & ~pos))
    fn = int(np.count_nonzero(~flagged & pos))
    return ConfusionCounts(tp=tp, fp=fp, tn=len(labels) - tp - fp - fn, fn=fn)


def optimal_f1_threshold(scores, labels) -> tuple[float, float]:
    """Sweep unique scores; the largest threshold wins F1 ties."""
    scores, labels = _check(scores, labels)
    n_pos = _require_both(labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = (labels[order] == 1).astype(np.int64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1 - pos)
    # last index of each run of equal scores = counts at threshold = that score
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp, fp = tp[last], fp[last]
    f1 = 2 * tp / (2 * tp + fp + (n_pos - tp))
    k = int(np.argmax(f1))
    return float(s[last[k]]), float(f1[k])


def financial_loss(counts: ConfusionCounts, costs: CostParams) -> float:
    return counts.fn * costs.acl + counts.fp * costs.clv * costs.churn_given_reject


def _evaluate_at(scores, labels, threshold, costs) -> dict:
    c = confusion(scores, labels, threshold)
    return {
        "auc": roc_auc(scores, labels),
        "f1": c.f1,
        "precision": c.precision,
        "recall": c.recall,
        "financial_loss": financial_loss(c, costs),
    }


def derive_seed(*parts) -> int:
    """64-bit seed from a stable hash of the parts."""
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def bootstrap_evaluate(
    scores,
    labels,
    costs: CostParams,
    n_replicates: int = 100,
    seed: int = 0,
    max_retries: int = 100,
) -> MetricSummary:
    """Mean and sample std of each metric over test-set resamples.

    The F1-optimal threshold is chosen once on the full sample and held
    fixed. Replicate ``r`` draws from its own generator seeded by
    ``derive_seed(seed, r)``; a resample missing a class is redrawn.
    """
    scores, labels = _check(scores, labels)
    _require_both(labels)
    if n_replicates < 2:
        raise ConfigError("n_replicates must be at least 2")
    threshold, _ = optimal_f1_threshold(scores, labels)
    n = len(labels)
    values = {k: [] for k in METRIC_NAMES}
    for r in range(n_replicates):
        rng = np.random.default_rng(derive_seed(seed, r))
        for _ in range(max_retries):
            idx = rng.integers(0, n, size=n)
            ys = labels[idx]
            if 0 < ys.sum() < n:
                break
        else:
            raise MetricError(f"replicate {r}: no resample with both classes after {max_retries} draws")
        for k, v in _evaluate_at(scores[idx], ys, threshold, costs).items():
            values[k].append(v)
    mean = {k: float(np.mean(v)) for k, v in values.items()}
    std = {k: float(np.std(v, ddof=1)) for k, v in values.items()}
    return MetricSummary(mean=mean, std=std, threshold=threshold, n_replicates=n_replicates)
