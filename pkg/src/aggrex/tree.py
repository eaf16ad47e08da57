"""Greedy Gini decision trees with deterministic tie-breaking.

Induction rules: best split by Gini gain; ties broken by (lower feature
index, lower threshold); leaves take the majority label, ties toward the
smaller label. Zero-gain splits are allowed on impure nodes (both children
are always non-empty, so growth terminates), which lets the tree represent
parity-style targets no single split can improve on.

Trees serialize to a line-oriented text grammar, one pre-order record per
line: `node <id> split <feature> <threshold>` | `node <id> leaf <label>`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    label: int = -1
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class DecisionTree:
    root: Node
    features_used: frozenset[int] = field(default_factory=frozenset)

    @property
    def leaf_count(self) -> int:
        def count(node: Node) -> int:
            if node.is_leaf:
                return 1
            return count(node.left) + count(node.right)

        return count(self.root)

    def predict(self, x) -> int:
        node = self.root
        x = np.asarray(x, dtype=float)
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=int)

        def route(node: Node, idx: np.ndarray) -> None:
            if idx.size == 0:
                return
            if node.is_leaf:
                out[idx] = node.label
                return
            go_left = X[idx, node.feature] <= node.threshold
            route(node.left, idx[go_left])
            route(node.right, idx[~go_left])

        route(self.root, np.arange(X.shape[0]))
        return out

    def max_feature_index(self) -> int:
        best = -1

        def walk(node: Node) -> None:
            nonlocal best
            if not node.is_leaf:
                best = max(best, node.feature)
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return best


def _majority_label(counts: np.ndarray, classes: np.ndarray) -> int:
    # argmax returns the first maximum; classes are sorted, so ties go to
    # the smaller label.
    return int(classes[int(np.argmax(counts))])


def _best_split_for_feature(xs, y_codes, n_classes, min_leaf, parent_gini):
    """Best (gain, threshold) for one feature column, or None if no valid split."""
    order = np.argsort(xs, kind="stable")
    xs_sorted = xs[order]
    cuts = np.nonzero(xs_sorted[1:] > xs_sorted[:-1])[0]
    if cuts.size == 0:
        return None
    onehot = np.zeros((xs.size, n_classes))
    onehot[np.arange(xs.size), y_codes[order]] = 1.0
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    n = xs.size

    left_counts = cum[cuts]
    left_n = (cuts + 1).astype(float)
    right_counts = total[None, :] - left_counts
    right_n = n - left_n
    valid = (left_n >= min_leaf) & (right_n >= min_leaf)
    if not np.any(valid):
        return None
    gini_l = 1.0 - np.sum((left_counts / left_n[:, None]) ** 2, axis=1)
    gini_r = 1.0 - np.sum((right_counts / right_n[:, None]) ** 2, axis=1)
    weighted = (left_n * gini_l + right_n * gini_r) / n
    gain = np.where(valid, parent_gini - weighted, -np.inf)
    best = int(np.argmax(gain))  # first max -> lowest threshold
    threshold = (xs_sorted[cuts[best]] + xs_sorted[cuts[best] + 1]) / 2.0
    return float(gain[best]), float(threshold)


def tree_fit(
    X: np.ndarray,
    y: np.ndarray,
    features,
    max_depth: int | None = 12,
    min_leaf: int = 2,
) -> DecisionTree:
    """Fit a Gini decision tree on X[:, features] vs integer labels y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on zero points")
    features = sorted(int(f) for f in features)
    if not features:
        raise ValueError("feature subset must be non-empty")
    classes, y_codes = np.unique(y, return_inverse=True)
    n_classes = classes.size
    used: set[int] = set()

    def gini(counts: np.ndarray, n: int) -> float:
        return 1.0 - float(np.sum((counts / n) ** 2))

    def build(idx: np.ndarray, depth: int) -> Node:
        counts = np.bincount(y_codes[idx], minlength=n_classes).astype(float)
        label = _majority_label(counts, classes)
        n_here = idx.size
        pure = np.max(counts) == n_here
        depth_ok = max_depth is None or depth < max_depth
        if pure or not depth_ok or n_here < 2 * min_leaf:
            return Node(label=label)
        parent_gini = gini(counts, n_here)
        best = None  # (gain, feature, threshold)
        for f in features:
            cand = _best_split_for_feature(X[idx, f], y_codes[idx], n_classes, min_leaf, parent_gini)
            if cand is None:
                continue
            gain, threshold = cand
            if best is None or gain > best[0]:
                best = (gain, f, threshold)
        if best is None or best[0] < -1e-12:  # zero-gain splits allowed, rounding noise too
            return Node(label=label)
        _, f, threshold = best
        used.add(f)
        go_left = X[idx, f] <= threshold
        node = Node(feature=f, threshold=threshold, label=label)
        node.left = build(idx[go_left], depth + 1)
        node.right = build(idx[~go_left], depth + 1)
        return node

    root = build(np.arange(X.shape[0]), 0)
    return DecisionTree(root=root, features_used=frozenset(used))


# -- text format ------------------------------------------------------------

def tree_to_lines(tree: DecisionTree) -> list[str]:
    """Pre-order node records, ids numbered in visit order."""
    lines: list[str] = []

    def emit(node: Node) -> None:
        nid = len(lines)
        if node.is_leaf:
            lines.append(f"node {nid} leaf {node.label}")
        else:
            lines.append(f"node {nid} split {node.feature} {node.threshold!r}")
            emit(node.left)
            emit(node.right)

    emit(tree.root)
    return lines


def tree_from_lines(lines) -> tuple[DecisionTree, int]:
    """Parse one pre-order tree from an iterable of records.

    Returns (tree, records consumed); extra trailing lines are left for the
    caller, which lets forests concatenate trees without separators.
    """
    records = list(lines)
    pos = 0
    used: set[int] = set()

    def parse() -> Node:
        nonlocal pos
        if pos >= len(records):
            raise ValueError("truncated tree record stream")
        parts = records[pos].split()
        pos += 1
        if len(parts) < 4 or parts[0] != "node":
            raise ValueError(f"bad node record: {records[pos - 1]!r}")
        if parts[2] == "leaf":
            return Node(label=int(parts[3]))
        if parts[2] == "split":
            if len(parts) != 5:
                raise ValueError(f"bad split record: {records[pos - 1]!r}")
            feature = int(parts[3])
            threshold = float(parts[4])
            used.add(feature)
            node = Node(feature=feature, threshold=threshold)
            node.left = parse()
            node.right = parse()
            return node
        raise ValueError(f"unknown node type in record: {records[pos - 1]!r}")

    root = parse()
    return DecisionTree(root=root, features_used=frozenset(used)), pos


def tree_to_rules(tree: DecisionTree, feature_names=None) -> str:
    """Human-readable nested if/else rendering."""
    out: list[str] = []

    def name(f: int) -> str:
        return feature_names[f] if feature_names is not None else f"x{f}"

    def walk(node: Node, indent: int) -> None:
        pad = "  " * indent
        if node.is_leaf:
            out.append(f"{pad}predict {node.label}")
            return
        out.append(f"{pad}if {name(node.feature)} <= {node.threshold:.6g}:")
        walk(node.left, indent + 1)
        out.append(f"{pad}else:")
        walk(node.right, indent + 1)

    walk(tree.root, 0)
    return "\n".join(out) + "\n"
