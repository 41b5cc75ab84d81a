"""Exact Shapley attributions for tree ensembles, in margin (log-odds) units.

The value of a feature coalition ``S`` for one tree is the path-conditional
expectation: at a split on a feature in ``S`` follow the row, otherwise
average both children weighted by training cover. Along a root-to-leaf path
this factorises per feature. For path feature ``j`` let ``z_j`` be the
product of cover ratios of its edges and ``o_j`` the indicator that the row
satisfies all of its edges. The leaf then contributes
``v * prod_{j in S} o_j * prod_{j not in S} z_j`` and its Shapley share for
feature ``i`` is

    v * (o_i - z_i) * sum_k w(k, d) * [t^k] prod_{j != i} (z_j + o_j t)

with ``w(k, d) = k! (d - k - 1)! / d!`` and ``d`` the number of distinct
features on the path. The product polynomial is built once per leaf and the
factor for ``i`` divided back out.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numba import njit, prange

from .dataset import FeatureGroup, LabeledDataset
from .errors import ConfigError, ModelIntegrityError
from .gbdt import GbdtModel

BRUTE_FORCE_MAX_FEATURES = 12


@dataclass(frozen=True)
class ShapExplanation:
    phi: np.ndarray
    base_value: float
    prediction_margin: float

    @property
    def efficiency_gap(self) -> float:
        return abs(self.base_value + float(np.sum(self.phi)) - self.prediction_margin)


@dataclass(frozen=True)
class ImportanceEntry:
    feature: str
    group: FeatureGroup
    mean_abs_shap: float


@dataclass(frozen=True)
class GlobalImportance:
    entries: tuple

    def by_group(self) -> dict:
        out = {g: 0.0 for g in FeatureGroup}
        for e in self.entries:
            out[e.group] += e.mean_abs_shap
        return out

    def top(self, k: int) -> tuple:
        return self.entries[:k]


@lru_cache(maxsize=None)
def _shapley_weights(max_d: int) -> np.ndarray:
    W = np.zeros((max_d + 1, max(max_d, 1)))
    for d in range(1, max_d + 1):
        for k in range(d):
            W[d, k] = math.factorial(k) * math.factorial(d - k - 1) / math.factorial(d)
    return W


class _PathTable:
    """Root-to-leaf paths of every tree, flattened for the kernel."""

    def __init__(self, model: GbdtModel):
        leaf_value, leaf_nfeat, leaf_feats, leaf_z = [], [], [], []
        edge_ptr, edge_node, edge_left, edge_slot = [0], [], [], []
        offsets, total = [], 0
        base = model.base_margin
        for t in model.trees:
            offsets.append(total)
            total += t.n_nodes
        for off, t in zip(offsets, model.trees):
            internal = t.feature >= 0
            if np.any(t.cover[internal] <= 0):
                raise ModelIntegrityError("tree has an internal node with zero cover")
            expected = 0.0
            stack = [(0, [])]
            while stack:
                node, path = stack.pop()
                if t.feature[node] >= 0:
                    f = int(t.feature[node])
                    stack.append((int(t.right[node]), path + [(node, False, f, t.right[node])]))
                    stack.append((int(t.left[node]), path + [(node, True, f, t.left[node])]))
                    continue
                feats, z = [], []
                for parent, went_left, f, child in path:
                    ratio = t.cover[child] / t.cover[parent]
                    if f in feats:
                        z[feats.index(f)] *= ratio
                    else:
                        feats.append(f)
                        z.append(ratio)
                    edge_node.append(off + parent)
                    edge_left.append(went_left)
                    edge_slot.append(feats.index(f))
                edge_ptr.append(len(edge_node))
                v = float(t.value[node])
                leaf_value.append(v)
                leaf_nfeat.append(len(feats))
                leaf_feats.append(feats)
                leaf_z.append(z)
                expected += v * math.prod(z)
            base += expected
        self.base_value = base
        self.max_d = max(leaf_nfeat, default=0)
        width = max(self.max_d, 1)
        n_leaves = len(leaf_value)
        self.leaf_value = np.asarray(leaf_value, dtype=np.float64)
        self.leaf_nfeat = np.asarray(leaf_nfeat, dtype=np.int64)
        self.leaf_feat = np.zeros((n_leaves, width), dtype=np.int64)
        self.leaf_z = np.zeros((n_leaves, width))
        for i, (fs, zs) in enumerate(zip(leaf_feats, leaf_z)):
            self.leaf_feat[i, : len(fs)] = fs
            self.leaf_z[i, : len(zs)] = zs
        self.edge_ptr = np.asarray(edge_ptr, dtype=np.int64)
        self.edge_node = np.asarray(edge_node, dtype=np.int64)
        self.edge_left = np.asarray(edge_left, dtype=np.bool_)
        self.edge_slot = np.asarray(edge_slot, dtype=np.int64)
        feature, threshold, default_left, *_ = model._flat if model.trees else (
            np.zeros(0, np.int32), np.zeros(0), np.zeros(0, np.bool_))
        self.node_feature = feature
        self.node_threshold = threshold
        self.node_default_left = default_left
        self.weights = _shapley_weights(self.max_d)


@njit(parallel=True, cache=True)
def _shap_kernel(X, node_feature, node_threshold, node_default_left,
                 leaf_value, leaf_nfeat, leaf_feat, leaf_z,
                 edge_ptr, edge_node, edge_left, edge_slot, W, max_d):
    n, n_features = X.shape
    phi = np.zeros((n, n_features))
    width = max(max_d, 1)
    for i in prange(n):
        o = np.empty(width)
        P = np.empty(width + 1)
        Q = np.empty(width)
        for l in range(leaf_value.shape[0]):
            d = leaf_nfeat[l]
            if d == 0:
                continue
            for j in range(d):
                o[j] = 1.0
            for e in range(edge_ptr[l], edge_ptr[l + 1]):
                node = edge_node[e]
                x = X[i, node_feature[node]]
                if np.isnan(x):
                    went = node_default_left[node]
                else:
                    went = x <= node_threshold[node]
                if went != edge_left[e]:
                    o[edge_slot[e]] = 0.0
            P[0] = 1.0
            for k in range(1, d + 1):
                P[k] = 0.0
            for j in range(d):
                zj = leaf_z[l, j]
                oj = o[j]
                for k in range(j + 1, 0, -1):
                    P[k] = zj * P[k] + oj * P[k - 1]
                P[0] = zj * P[0]
            v = leaf_value[l]
            for j in range(d):
                zj = leaf_z[l, j]
                oj = o[j]
                if oj == 0.0 and zj == 0.0:
                    continue
                if oj == 1.0:
                    Q[d - 1] = P[d]
                    for k in range(d - 1, 0, -1):
                        Q[k - 1] = P[k] - zj * Q[k]
                else:
                    for k in range(d):
                        Q[k] = P[k] / zj
                s = 0.0
                for k in range(d):
                    s += Q[k] * W[d, k]
                phi[i, leaf_feat[l, j]] += v * (oj - zj) * s
    return phi


def _as_matrix(model: GbdtModel, data) -> np.ndarray:
    return model._matrix(data)


def shap_values(model: GbdtModel, data) -> tuple[np.ndarray, float]:
    """Attribution matrix (rows x encoded features) and the shared base value."""
    X = _as_matrix(model, data)
    table = _PathTable(model)
    if not model.trees:
        return np.zeros(X.shape), table.base_value
    phi = _shap_kernel(
        X, table.node_feature, table.node_threshold, table.node_default_left,
        table.leaf_value, table.leaf_nfeat, table.leaf_feat, table.leaf_z,
        table.edge_ptr, table.edge_node, table.edge_left, table.edge_slot,
        table.weights, table.max_d,
    )
    return phi, table.base_value


def tree_shap(model: GbdtModel, row) -> ShapExplanation:
    X = _as_matrix(model, row)
    if X.shape[0] != 1:
        raise ConfigError("tree_shap explains a single row; use shap_values for batches")
    phi, base = shap_values(model, X)
    return ShapExplanation(phi[0], base, float(model.predict_margin(X)[0]))


# --------------------------------------------------------------------------
# brute-force oracle


def _conditional_expectation(tree, x, known: frozenset) -> float:
    def rec(node):
        f = tree.feature[node]
        if f < 0:
            return float(tree.value[node])
        if f in known:
            xv = x[f]
            if math.isnan(xv):
                go_left = bool(tree.default_left[node])
            else:
                go_left = xv <= tree.threshold[node]
            return rec(tree.left[node] if go_left else tree.right[node])
        c = tree.cover[node]
        if c <= 0:
            raise ModelIntegrityError("tree has an internal node with zero cover")
        lc, rc = tree.cover[tree.left[node]], tree.cover[tree.right[node]]
        return (lc * rec(tree.left[node]) + rc * rec(tree.right[node])) / c

    return rec(0)


def brute_force_shap(model: GbdtModel, row) -> ShapExplanation:
    """Shapley values by enumerating every feature coalition. Test oracle only."""
    n = model.n_features
    if n > BRUTE_FORCE_MAX_FEATURES:
        raise ConfigError(f"brute force limited to {BRUTE_FORCE_MAX_FEATURES} features, model has {n}")
    x = _as_matrix(model, row)[0]
    value = np.empty(1 << n)
    for mask in range(1 << n):
        known = frozenset(j for j in range(n) if mask >> j & 1)
        value[mask] = model.base_margin + sum(_conditional_expectation(t, x, known) for t in model.trees)
    fact = [math.factorial(k) for k in range(n + 1)]
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        for mask in range(1 << n):
            if mask & bit:
                continue
            size = bin(mask).count("1")
            w = fact[size] * fact[n - size - 1] / fact[n]
            phi[i] += w * (value[mask | bit] - value[mask])
    return ShapExplanation(phi, float(value[0]), float(value[(1 << n) - 1]))


# --------------------------------------------------------------------------
# global importance


def global_importance(
    model: GbdtModel, dataset: LabeledDataset, aggregate_sources: bool = False
) -> GlobalImportance:
    """Mean |phi| per encoded column, sorted descending (schema order breaks ties).

    With ``aggregate_sources`` the per-row |phi| of one-hot siblings are summed
    first, giving one entry per raw column.
    """
    if dataset.n_rows == 0:
        raise ConfigError("cannot compute importance on an empty dataset")
    phi, _ = shap_values(model, dataset)
    abs_phi = np.abs(phi)
    if aggregate_sources:
        sources, groups, cols = [], [], []
        for j, c in enumerate(dataset.columns):
            if c.source not in sources:
                sources.append(c.source)
                groups.append(c.group)
                cols.append([])
            cols[sources.index(c.source)].append(j)
        values = [float(abs_phi[:, idx].sum(axis=1).mean()) for idx in cols]
        names = sources
    else:
        values = [float(v) for v in abs_phi.mean(axis=0)]
        names, groups = dataset.feature_names, dataset.groups
    order = sorted(range(len(values)), key=lambda k: -values[k])
    return GlobalImportance(tuple(ImportanceEntry(names[k], groups[k], values[k]) for k in order))


def write_importance(importance: GlobalImportance, csv_path: str | Path, plot_path: str | Path | None = None) -> None:
    lines = ["rank,feature,group,mean_abs_shap"]
    for rank, e in enumerate(importance.entries, start=1):
        lines.append(f"{rank},{e.feature},{e.group.value},{e.mean_abs_shap!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if plot_path is not None:
        data = {e.feature: e.mean_abs_shap for e in importance.entries}
        Path(plot_path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
