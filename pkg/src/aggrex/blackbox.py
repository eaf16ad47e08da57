"""Black-box classifiers whose predictions the explainers must match.

Two kinds: a bagged forest of Gini trees (the working black box) and an
exact lookup table with nearest-neighbor fallback (a test oracle). Both
predict deterministically; forest votes break ties toward the smaller
label. Forests serialize to a versioned text file so pipeline stages can
run separately:

    aggrex-model v1 bagged_forest <n_trees>
    node 0 split 3 0.52
    node 1 leaf 2
    ...

with each tree's pre-order records concatenated (pre-order is
self-delimiting, so no separators are needed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureSchema
from .sampler import mixed_distance
from .tree import DecisionTree, tree_fit, tree_from_lines, tree_to_lines

FOREST_MAX_DEPTH = 12
FOREST_MIN_LEAF = 2

MODEL_MAGIC = "aggrex-model"
MODEL_VERSION = "v1"


@dataclass
class BlackBoxModel:
    """Deterministic classifier: bagged_forest or table_oracle."""

    kind: str
    label_set: tuple[int, ...]
    trees: list[DecisionTree] | None = None
    table_points: np.ndarray | None = None
    table_labels: np.ndarray | None = None
    schema: FeatureSchema | None = None

    def predict(self, x) -> int:
        x = np.asarray(x, dtype=float)
        self._check_dim(x.shape[-1])
        if self.kind == "bagged_forest":
            return int(self.predict_batch(x[None, :])[0])
        return self._table_lookup(x)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        self._check_dim(X.shape[1])
        if self.kind == "bagged_forest":
            label_ids = {lab: i for i, lab in enumerate(self.label_set)}
            votes = np.zeros((X.shape[0], len(self.label_set)), dtype=int)
            for tree in self.trees:
                pred = tree.predict_batch(X)
                for lab, col in label_ids.items():
                    votes[pred == lab, col] += 1
            # argmax takes the first maximum; label_set is sorted, so vote
            # ties resolve toward the smaller label.
            return np.array([self.label_set[i] for i in np.argmax(votes, axis=1)], dtype=int)
        return np.array([self._table_lookup(X[i]) for i in range(X.shape[0])], dtype=int)

    def _check_dim(self, m: int) -> None:
        if self.schema is not None:
            if m != self.schema.count:
                raise ValueError(f"point has {m} features, schema expects {self.schema.count}")
        elif self.kind == "bagged_forest":
            need = max((t.max_feature_index() for t in self.trees), default=-1) + 1
            if m < need:
                raise ValueError(f"point has {m} features, model references feature {need - 1}")
        elif self.table_points is not None and m != self.table_points.shape[1]:
            raise ValueError(f"point has {m} features, table stores {self.table_points.shape[1]}")

    def _table_lookup(self, x: np.ndarray) -> int:
        exact = np.nonzero(np.all(self.table_points == x, axis=1))[0]
        if exact.size:
            return int(self.table_labels[exact[0]])
        if self.schema is not None:
            dists = np.array(
                [mixed_distance(x, self.table_points[i], self.schema) for i in range(self.table_points.shape[0])]
            )
        else:
            dists = np.max(np.abs(self.table_points - x[None, :]), axis=1)
        # argmin takes the first minimum: equidistant ties go to the
        # lower-index stored point.
        return int(self.table_labels[int(np.argmin(dists))])


def train_bagged_forest(d: Dataset, n_trees: int = 50, seed: int = 0) -> BlackBoxModel:
    """Fit n_trees Gini trees on seeded bootstrap resamples; predict by majority vote."""
    if d.n == 0:
        raise ValueError("cannot train on an empty dataset")
    if n_trees < 1:
        raise ValueError("need at least one tree")
    rng = np.random.default_rng(seed)
    trees = []
    all_features = range(d.m)
    for _ in range(n_trees):
        idx = rng.integers(0, d.n, size=d.n)
        trees.append(
            tree_fit(d.X[idx], d.y[idx], all_features, max_depth=FOREST_MAX_DEPTH, min_leaf=FOREST_MIN_LEAF)
        )
    return BlackBoxModel(kind="bagged_forest", label_set=d.label_set, trees=trees, schema=d.schema)


def table_oracle(pairs, schema: FeatureSchema | None = None) -> BlackBoxModel:
    """Exact point->label lookup; unseen points resolve to the nearest stored point.

    Distinct stored points are required; duplicate points with conflicting
    labels raise. The nearest-neighbor metric is the pool's mixed metric
    when a schema is given, else plain Linf.
    """
    points = np.array([np.asarray(p, dtype=float) for p, _ in pairs])
    labels = np.array([int(lab) for _, lab in pairs], dtype=int)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("need at least one (point, label) pair")
    seen: dict[tuple, int] = {}
    keep = []
    for i in range(points.shape[0]):
        key = tuple(points[i].tolist())
        if key in seen:
            if seen[key] != labels[i]:
                raise ValueError(f"duplicate point {key} with conflicting labels")
            continue
        seen[key] = int(labels[i])
        keep.append(i)
    points = points[keep]
    labels = labels[keep]
    return BlackBoxModel(
        kind="table_oracle",
        label_set=tuple(sorted(set(int(v) for v in labels))),
        table_points=points,
        table_labels=labels,
        schema=schema,
    )


def predict(model: BlackBoxModel, x) -> int:
    return model.predict(x)


def save_model(model: BlackBoxModel, path) -> None:
    if model.kind != "bagged_forest":
        raise ValueError("only bagged_forest models serialize to the model file format")
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION} {model.kind} {len(model.trees)}"]
    for tree in model.trees:
        lines.extend(tree_to_lines(tree))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> BlackBoxModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty model file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != MODEL_MAGIC:
        raise ValueError(f"bad model header: {lines[0]!r}")
    if header[1] != MODEL_VERSION:
        raise ValueError(f"unsupported model version {header[1]!r}")
    kind, n_trees = header[2], int(header[3])
    if kind != "bagged_forest":
        raise ValueError(f"unsupported model kind {kind!r}")
    trees = []
    rest = lines[1:]
    for _ in range(n_trees):
        tree, consumed = tree_from_lines(rest)
        trees.append(tree)
        rest = rest[consumed:]
    if rest:
        raise ValueError(f"{len(rest)} trailing records after {n_trees} trees")
    labels: set[int] = set()

    def leaf_labels(node):
        if node.is_leaf:
            labels.add(node.label)
        else:
            leaf_labels(node.left)
            leaf_labels(node.right)

    for tree in trees:
        leaf_labels(tree.root)
    return BlackBoxModel(kind="bagged_forest", label_set=tuple(sorted(labels)), trees=trees)
