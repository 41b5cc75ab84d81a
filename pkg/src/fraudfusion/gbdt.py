"""Gradient boosted decision trees for binary classification.

Logistic loss, second-order (Newton) leaf weights, histogram split finding on
quantile bins, learned default directions for missing values and level-wise
growth to ``max_depth``.

Histograms are accumulated per feature with rows visited in a fixed order,
and the best split per node is reduced over features sequentially, so a
fitted model does not depend on the number of worker threads.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path

import numba
import numpy as np
from numba import njit, prange
from scipy.special import expit

from .dataset import FeatureGroup, LabeledDataset, time_split
from .errors import ConfigError, SchemaError, TrainingError

logger = logging.getLogger(__name__)

FORMAT_NAME = "fraudfusion-gbdt"
FORMAT_VERSION = 1

# Splits must improve the objective by more than this to be kept.
_MIN_GAIN = 1e-12
# Floor on per-row hessians; keeps every non-empty leaf's cover positive.
_MIN_HESS = 1e-16


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    subsample: float = 1.0
    n_bins: int = 256
    seed: int = 0
    pos_weight: float = 1.0

    def validate(self) -> GbdtParams:
        checks = [
            (isinstance(self.n_trees, int) and self.n_trees >= 0, "n_trees must be a non-negative integer"),
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (isinstance(self.max_depth, int) and self.max_depth >= 1, "max_depth must be a positive integer"),
            (self.min_child_weight >= 0, "min_child_weight must be >= 0"),
            (self.l2_reg >= 0, "l2_reg must be >= 0"),
            (0 < self.subsample <= 1, "subsample must be in (0, 1]"),
            (isinstance(self.n_bins, int) and 2 <= self.n_bins <= 65535, "n_bins must be an integer in [2, 65535]"),
            (self.pos_weight > 0, "pos_weight must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg} (got {self.to_dict()})")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GbdtParams:
        names = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown GBDT parameters: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            kw[k] = int(v) if k in ("n_trees", "max_depth", "n_bins", "seed") else float(v)
        return cls(**kw)


# --------------------------------------------------------------------------
# trees and models


@dataclass(frozen=True, eq=False)
class Tree:
    """Node arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        def rec(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(rec(self.left[node]), rec(self.right[node]))

        return rec(0)

    def scaled(self, factor: float) -> Tree:
        return replace(self, value=self.value * factor)

    def to_rows(self) -> list:
        rows = []
        for i in range(self.n_nodes):
            rows.append([
                int(self.feature[i]),
                float(self.threshold[i]),
                bool(self.default_left[i]),
                int(self.left[i]),
                int(self.right[i]),
                float(self.value[i]),
                float(self.cover[i]),
            ])
        return rows

    @classmethod
    def from_rows(cls, rows) -> Tree:
        if not rows:
            raise SchemaError("tree has no nodes")
        cols = list(zip(*rows))
        return cls(
            feature=np.asarray(cols[0], dtype=np.int32),
            threshold=np.asarray(cols[1], dtype=np.float64),
            default_left=np.asarray(cols[2], dtype=np.bool_),
            left=np.asarray(cols[3], dtype=np.int32),
            right=np.asarray(cols[4], dtype=np.int32),
            value=np.asarray(cols[5], dtype=np.float64),
            cover=np.asarray(cols[6], dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class GbdtModel:
    base_margin: float
    trees: tuple
    params: GbdtParams
    schema_fingerprint: str
    feature_names: tuple
    feature_groups: tuple
    history: dict = field(default_factory=dict, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @cached_property
    def _flat(self):
        offsets, total = [], 0
        for t in self.trees:
            offsets.append(total)
            total += t.n_nodes
        feature = np.full(total, -1, dtype=np.int32)
        threshold = np.zeros(total)
        default_left = np.zeros(total, dtype=np.bool_)
        left = np.full(total, -1, dtype=np.int32)
        right = np.full(total, -1, dtype=np.int32)
        value = np.zeros(total)
        for off, t in zip(offsets, self.trees):
            sl = slice(off, off + t.n_nodes)
            feature[sl] = t.feature
            threshold[sl] = t.threshold
            default_left[sl] = t.default_left
            internal = t.feature >= 0
            left[sl] = np.where(internal, t.left + off, -1)
            right[sl] = np.where(internal, t.right + off, -1)
            value[sl] = t.value
        roots = np.asarray(offsets, dtype=np.int64)
        return feature, threshold, default_left, left, right, value, roots

    def _matrix(self, data) -> np.ndarray:
        if isinstance(data, LabeledDataset):
            if not data.encoded:
                raise SchemaError("dataset must be encoded before prediction")
            if data.schema_fingerprint != self.schema_fingerprint:
                raise SchemaError(
                    f"schema fingerprint mismatch: model {self.schema_fingerprint}, "
                    f"data {data.schema_fingerprint}"
                )
            X = data.X
        else:
            X = np.asarray(data, dtype=np.float64)
            if X.ndim == 1:
                X = X[None, :]
            if X.shape[1] != self.n_features:
                raise SchemaError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.ascontiguousarray(X, dtype=np.float64)

    def predict_margin(self, data) -> np.ndarray:
        X = self._matrix(data)
        if not self.trees:
            return np.full(X.shape[0], self.base_margin)
        return _predict_margin(X, *self._flat, self.base_margin)

    def predict_score(self, data) -> np.ndarray:
        return sigmoid(self.predict_margin(data))

    def scaled(self, factor: float) -> GbdtModel:
        """Copy with every leaf weight multiplied by ``factor`` (base margin unchanged)."""
        return replace(self, trees=tuple(t.scaled(factor) for t in self.trees), history={})

    # serialization ---------------------------------------------------------

    def dumps(self) -> str:
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "base_margin": self.base_margin,
            "schema_fingerprint": self.schema_fingerprint,
            "params": self.params.to_dict(),
            "features": [{"name": n, "group": g.value} for n, g in zip(self.feature_names, self.feature_groups)],
        }
        lines = ["{"]
        for k, v in header.items():
            lines.append(f"  {json.dumps(k)}: {json.dumps(v)},")
        lines.append('  "node_fields": ["feature", "threshold", "default_left", "left", "right", "value", "cover"],')
        lines.append('  "trees": [')
        for ti, t in enumerate(self.trees):
            rows = [json.dumps(r) for r in t.to_rows()]
            body = ",\n    ".join(rows)
            sep = "," if ti < len(self.trees) - 1 else ""
            lines.append(f"   [\n    {body}\n   ]{sep}")
        lines.append("  ]")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> GbdtModel:
        d = json.loads(text)
        if d.get("format") != FORMAT_NAME:
            raise SchemaError(f"not a {FORMAT_NAME} model file")
        if d.get("version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported model format version {d.get('version')}")
        feats = d["features"]
        return cls(
            base_margin=float(d["base_margin"]),
            trees=tuple(Tree.from_rows(rows) for rows in d["trees"]),
            params=GbdtParams.from_dict(d["params"]),
            schema_fingerprint=d["schema_fingerprint"],
            feature_names=tuple(f["name"] for f in feats),
            feature_groups=tuple(FeatureGroup.parse(f["group"]) for f in feats),
        )

    @classmethod
    def load(cls, path: str | Path) -> GbdtModel:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# loss


def sigmoid(margin):
    return expit(margin)


def logistic_loss(margin, y):
    """Per-row negative log-likelihood of labels ``y`` under logit ``margin``."""
    margin = np.asarray(margin, dtype=np.float64)
    return np.logaddexp(0.0, margin) - np.asarray(y) * margin


def logistic_grad_hess(margin, y):
    p = sigmoid(np.asarray(margin, dtype=np.float64))
    return p - y, p * (1.0 - p)


# --------------------------------------------------------------------------
# numba kernels


@njit(parallel=True, cache=True)
def _predict_margin(X, feature, threshold, default_left, left, right, value, roots, base):
    n = X.shape[0]
    out = np.empty(n)
    for i in prange(n):
        acc = base
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                x = X[i, feature[node]]
                if np.isnan(x):
                    node = left[node] if default_left[node] else right[node]
                elif x <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc
    return out


@njit(parallel=True, cache=True)
def _build_histograms(binned, rows, slots, n_slots, gh, n_total_bins):
    """Per (feature, slot, bin): grad sum, hess sum, row count."""
    n_features = binned.shape[1]
    hist = np.zeros((n_features, n_slots, n_total_bins, 3))
    for f in prange(n_features):
        col = binned[:, f]
        hf = hist[f]
        for k in range(rows.shape[0]):
            r = rows[k]
            b = col[r]
            s = slots[k]
            hf[s, b, 0] += gh[r, 0]
            hf[s, b, 1] += gh[r, 1]
            hf[s, b, 2] += 1.0
    return hist


@njit(cache=True)
def _gain_term(g, h, lam):
    return g * g / (h + lam)


@njit(parallel=True, cache=True)
def _find_splits(hist, node_g, node_h, n_edges, missing_bin, lam, min_child_weight):
    n_features, n_slots, _, _ = hist.shape
    best_gain = np.zeros(n_slots)
    best_feat = np.full(n_slots, -1, dtype=np.int64)
    best_bin = np.zeros(n_slots, dtype=np.int64)
    best_left = np.zeros(n_slots, dtype=np.bool_)
    for s in prange(n_slots):
        parent = _gain_term(node_g[s], node_h[s], lam)
        top = _MIN_GAIN
        for f in range(n_features):
            ne = n_edges[f]
            if ne == 0:
                continue
            hb = hist[f, s]
            gm = hb[missing_bin, 0]
            hm = hb[missing_bin, 1]
            cm = hb[missing_bin, 2]
            g_tot = 0.0
            h_tot = 0.0
            c_tot = 0.0
            for b in range(missing_bin):
                g_tot += hb[b, 0]
                h_tot += hb[b, 1]
                c_tot += hb[b, 2]
            if c_tot == 0:
                continue
            gl = 0.0
            hl = 0.0
            cl = 0.0
            for b in range(ne):
                gl += hb[b, 0]
                hl += hb[b, 1]
                cl += hb[b, 2]
                gr = g_tot - gl
                hr = h_tot - hl
                cr = c_tot - cl
                # missing rows sent left, then right; left wins ties
                for miss_left in (True, False):
                    if miss_left:
                        gL, hL, cL = gl + gm, hl + hm, cl + cm
                        gR, hR, cR = gr, hr, cr
                    else:
                        gL, hL, cL = gl, hl, cl
                        gR, hR, cR = gr + gm, hr + hm, cr + cm
                    if cL == 0 or cR == 0:
                        continue
                    if hL < min_child_weight or hR < min_child_weight:
                        continue
                    if hL + lam <= 0.0 or hR + lam <= 0.0:
                        continue
                    gain = 0.5 * (_gain_term(gL, hL, lam) + _gain_term(gR, hR, lam) - parent)
                    if gain > top:
                        top = gain
                        best_gain[s] = gain
                        best_feat[s] = f
                        best_bin[s] = b
                        best_left[s] = miss_left
    return best_gain, best_feat, best_bin, best_left


# --------------------------------------------------------------------------
# training


def bin_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Split candidates for one feature; a value ``x`` falls left of edge ``e`` iff ``x <= e``."""
    v = column[~np.isnan(column)]
    if v.size == 0:
        return np.empty(0)
    uniq = np.unique(v)
    if uniq.size <= n_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.quantile(v, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    edges = np.unique(qs)
    # a top edge equal to the max would leave the last bin empty
    return edges[edges < uniq[-1]]


def bin_matrix(X: np.ndarray, edges: list, missing_bin: int) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.uint16, order="F")
    for f, e in enumerate(edges):
        col = X[:, f]
        b = np.searchsorted(e, col, side="left")
        b[np.isnan(col)] = missing_bin
        out[:, f] = b
    return out


def _grow_tree(binned, edges, grad, hess, sampled, params: GbdtParams):
    n = binned.shape[0]
    missing_bin = params.n_bins
    n_edges = np.asarray([len(e) for e in edges], dtype=np.int64)
    lam = params.l2_reg
    mcw = params.min_child_weight

    feature, thr, defl, left, right, split_bin = [-1], [0.0], [False], [-1], [-1], [-1]
    node_of = np.zeros(n, dtype=np.int64)
    rows = np.flatnonzero(sampled)

    def node_stats(n_nodes):
        nid = node_of[rows]
        G = np.bincount(nid, weights=grad[rows], minlength=n_nodes)
        H = np.bincount(nid, weights=hess[rows], minlength=n_nodes)
        C = np.bincount(nid, minlength=n_nodes)
        return G, H, C

    gh = np.ascontiguousarray(np.stack([grad, hess], axis=1))
    frontier = [0]
    G, H, C = node_stats(1)
    for _ in range(params.max_depth):
        cands = [v for v in frontier if C[v] >= 2 and H[v] >= 2 * mcw]
        if not cands:
            break
        slot_lookup = np.full(len(feature), -1, dtype=np.int64)
        slot_lookup[cands] = np.arange(len(cands))
        row_slots = slot_lookup[node_of[rows]]
        active = row_slots >= 0
        hist = _build_histograms(binned, rows[active], row_slots[active], len(cands), gh, missing_bin + 1)
        cand_arr = np.asarray(cands)
        _, bf, bb, bl = _find_splits(hist, G[cand_arr], H[cand_arr], n_edges, missing_bin, lam, mcw)

        new_frontier = []
        split_nodes = []
        for s, v in enumerate(cands):
            if bf[s] < 0:
                continue
            f, b = int(bf[s]), int(bb[s])
            feature[v], thr[v], defl[v], split_bin[v] = f, float(edges[f][b]), bool(bl[s]), b
            for side in (left, right):
                side[v] = len(feature)
                feature.append(-1)
                thr.append(0.0)
                defl.append(False)
                left.append(-1)
                right.append(-1)
                split_bin.append(-1)
            new_frontier += [left[v], right[v]]
            split_nodes.append(v)
        if not split_nodes:
            break
        route_nodes(binned, node_of, split_nodes, feature, split_bin, defl, left, right, missing_bin)
        frontier = new_frontier
        G, H, C = node_stats(len(feature))

    feature = np.asarray(feature, dtype=np.int32)
    G, H, C = node_stats(len(feature))
    value = np.where(feature < 0, -params.learning_rate * G / np.maximum(H + lam, _MIN_HESS), 0.0)
    cover = np.where(feature < 0, H, 0.0)
    left_a = np.asarray(left, dtype=np.int32)
    right_a = np.asarray(right, dtype=np.int32)
    # children always have larger indices, so a reverse sweep sums covers bottom-up
    for v in range(len(feature) - 1, -1, -1):
        if feature[v] >= 0:
            cover[v] = cover[left_a[v]] + cover[right_a[v]]
    tree = Tree(
        feature=feature,
        threshold=np.asarray(thr, dtype=np.float64),
        default_left=np.asarray(defl, dtype=np.bool_),
        left=left_a,
        right=right_a,
        value=value,
        cover=cover,
    )
    return tree, node_of


def route_nodes(binned, node_of, split_nodes, feature, split_bin, defl, left, right, missing_bin):
    split_nodes = np.asarray(split_nodes)
    is_split = np.zeros(len(feature), dtype=bool)
    is_split[split_nodes] = True
    idx = np.flatnonzero(is_split[node_of])
    if idx.size == 0:
        return
    cur = node_of[idx]
    f = np.asarray(feature)[cur]
    b = binned[idx, f].astype(np.int64)
    go_left = np.where(b == missing_bin, np.asarray(defl)[cur], b <= np.asarray(split_bin)[cur])
    node_of[idx] = np.where(go_left, np.asarray(left)[cur], np.asarray(right)[cur])


def fit(train: LabeledDataset, params: GbdtParams | None = None) -> GbdtModel:
    """Boost ``params.n_trees`` trees on an encoded dataset."""
    params = (params or GbdtParams()).validate()
    if not train.encoded:
        raise ConfigError("training data must be encoded")
    if train.n_features == 0:
        raise ConfigError("training data has no feature columns")
    y = train.y.astype(np.float64)
    if train.n_rows == 0 or y.min() == y.max():
        raise TrainingError("training data must contain both classes")

    w = np.where(y == 1, params.pos_weight, 1.0)
    p = float(np.sum(w * y) / np.sum(w))
    base = math.log(p / (1.0 - p))

    X = np.asarray(train.X, dtype=np.float64)
    edges = [bin_edges(X[:, f], params.n_bins) for f in range(X.shape[1])]
    binned = bin_matrix(X, edges, params.n_bins)

    rng = np.random.default_rng(params.seed)
    margin = np.full(train.n_rows, base)
    trees = []
    losses = [float(np.mean(w * logistic_loss(margin, y)))]
    for _ in range(params.n_trees):
        g, h = logistic_grad_hess(margin, y)
        g, h = g * w, np.maximum(h, _MIN_HESS) * w
        if params.subsample < 1.0:
            sampled = rng.random(train.n_rows) < params.subsample
            if not sampled.any():
                sampled[rng.integers(train.n_rows)] = True
        else:
            sampled = np.ones(train.n_rows, dtype=bool)
        tree, node_of = _grow_tree(binned, edges, g, h, sampled, params)
        margin = margin + tree.value[node_of]
        trees.append(tree)
        losses.append(float(np.mean(w * logistic_loss(margin, y))))

    return GbdtModel(
        base_margin=base,
        trees=tuple(trees),
        params=params,
        schema_fingerprint=train.schema_fingerprint,
        feature_names=tuple(train.feature_names),
        feature_groups=tuple(train.groups),
        history={"train_loss": losses},
    )


def predict_score(model: GbdtModel, dataset: LabeledDataset) -> np.ndarray:
    return model.predict_score(dataset)


# --------------------------------------------------------------------------
# grid search


def expand_grid(grid: dict, base: GbdtParams | None = None) -> list[GbdtParams]:
    """Grid points in lexicographic order over the declared parameter order."""
    if not grid:
        raise ConfigError("hyperparameter grid is empty")
    base = base or GbdtParams()
    names = list(grid)
    unknown = set(names) - {f.name for f in fields(GbdtParams)}
    if unknown:
        raise ConfigError(f"unknown grid parameters: {sorted(unknown)}")
    points = []
    for combo in itertools.product(*(list(grid[k]) for k in names)):
        point = dict(zip(names, combo))
        try:
            params = GbdtParams.from_dict({**base.to_dict(), **point}).validate()
        except (ConfigError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid grid point {point}: {e}") from None
        points.append(params)
    return points


def grid_search(
    train: LabeledDataset,
    grid: dict,
    holdout_fraction: float = 0.2,
    base: GbdtParams | None = None,
) -> tuple[GbdtParams, list]:
    """Pick the grid point with the best validation AUC on a chronological holdout."""
    from .metrics import roc_auc

    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    points = expand_grid(grid, base)
    fit_part, valid = time_split(train, train_fraction=1.0 - holdout_fraction)
    table = []
    best, best_auc = None, -math.inf
    for params in points:
        model = fit(fit_part, params)
        auc = roc_auc(model.predict_margin(valid), valid.y)
        table.append((params, auc))
        logger.debug("grid point %s -> validation AUC %.6f", params, auc)
        if auc > best_auc:
            best, best_auc = params, auc
    return best, table


def set_threads(n: int | None) -> int:
    """Cap numba worker threads; results do not depend on the value."""
    if n is None:
        return numba.get_num_threads()
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
