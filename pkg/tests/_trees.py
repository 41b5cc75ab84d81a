"""Random tree ensembles built directly from node arrays, for attribution checks."""
import numpy as np

from fraudfusion.dataset import FeatureGroup
from fraudfusion.gbdt import GbdtModel, GbdtParams, Tree


def random_tree(rng, n_features, max_depth):
    feature, threshold, default_left, left, right, value, cover = [], [], [], [], [], [], []

    def new_node():
        for arr in (feature, threshold, default_left, left, right, value, cover):
            arr.append(None)
        return len(feature) - 1

    def grow(depth):
        node = new_node()
        if depth < max_depth and (depth == 0 or rng.random() < 0.7):
            feature[node] = int(rng.integers(n_features))
            threshold[node] = float(rng.normal())
            default_left[node] = bool(rng.random() < 0.5)
            value[node] = 0.0
            lo = grow(depth + 1)
            hi = grow(depth + 1)
            left[node], right[node] = lo, hi
            cover[node] = cover[lo] + cover[hi]
        else:
            feature[node], threshold[node], default_left[node] = -1, 0.0, False
            left[node] = right[node] = -1
            value[node] = float(rng.normal())
            cover[node] = float(rng.uniform(0.1, 5.0))
        return node

    grow(0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        default_left=np.asarray(default_left, dtype=np.bool_),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
        cover=np.asarray(cover, dtype=np.float64),
    )


def model_from_trees(trees, n_features, base_margin=0.0):
    return GbdtModel(
        base_margin=base_margin,
        trees=tuple(trees),
        params=GbdtParams(n_trees=len(trees)),
        schema_fingerprint="test",
        feature_names=tuple(f"f{i}" for i in range(n_features)),
        feature_groups=tuple(FeatureGroup.SUPER_APP for _ in range(n_features)),
    )


def random_model(rng, max_features=8, max_trees=5, max_depth=3):
    n_features = int(rng.integers(1, max_features + 1))
    n_trees = int(rng.integers(1, max_trees + 1))
    depth = int(rng.integers(1, max_depth + 1))
    trees = [random_tree(rng, n_features, depth) for _ in range(n_trees)]
    return model_from_trees(trees, n_features, float(rng.normal()))


def random_row(rng, n_features, missing_rate=0.15):
    x = rng.normal(size=n_features)
    x[rng.random(n_features) < missing_rate] = np.nan
    return x


def stump(feature, n_features, threshold, a, b, cover_left=1.0, cover_right=1.0, base_margin=0.0):
    tree = Tree(
        feature=np.array([feature, -1, -1], dtype=np.int32),
        threshold=np.array([threshold, 0.0, 0.0]),
        default_left=np.array([True, False, False]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        value=np.array([0.0, a, b]),
        cover=np.array([cover_left + cover_right, cover_left, cover_right]),
    )
    return model_from_trees([tree], n_features, base_margin)
