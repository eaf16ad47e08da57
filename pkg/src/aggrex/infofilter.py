"""Mutual-information feature filtering over histogram bins.

Feature relevance is scored by a plug-in estimate of the conditional
mutual information between a feature's bin index and the label, given the
features selected so far. Conditioning is represented by partition leaves:
disjoint sample subsets, one per realized bin combination of the selected
features. Within each leaf the estimator reduces to empirical frequencies:

    I_hat = sum over leaves L, samples x in L of
            (1/N) * ln( p_L(bin(x), y(x)) / (p_L(bin(x)) * p_L(y(x))) )

with 0*ln(0) = 0 and N the full sample count (samples in dropped leaves
contribute nothing but still divide). Each term group is a scaled KL
divergence, so the estimate is nonnegative up to float rounding.

Forward selection greedily appends the highest-scoring feature, re-splits
every leaf by that feature's bins, and stops when no remaining feature
scores above a small positive threshold (a plug-in estimate is almost
never exactly zero in floating point) or when every leaf has been dropped.
Cells smaller than 2 samples are dropped at each split: singletons carry
zero empirical information and would otherwise keep the recursion alive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BINARY, FeatureSchema
from .sampler import SampleSet

EPS_MI = 1e-9
MIN_CELL = 2


@dataclass(frozen=True)
class BinAssignment:
    """Per-feature histogram edges plus the N x m array of bin indices.

    Equivalent to the dense (bin, feature, sample) 0/1 membership tensor:
    membership[b, f, x] == 1 iff assignment[x, f] == b. The index array
    carries the same information in 1/B of the space.
    """

    edges: tuple[np.ndarray, ...]
    n_bins: tuple[int, ...]
    assignment: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.n_bins)

    @property
    def n_samples(self) -> int:
        return self.assignment.shape[0]


@dataclass(frozen=True)
class PartitionLeaves:
    """Disjoint sample-index sets conditioning the MI estimate."""

    leaves: tuple[np.ndarray, ...]

    @staticmethod
    def whole(n: int) -> "PartitionLeaves":
        return PartitionLeaves((np.arange(n),))

    def __len__(self) -> int:
        return len(self.leaves)

    def __iter__(self):
        return iter(self.leaves)

    @property
    def empty(self) -> bool:
        return len(self.leaves) == 0


@dataclass(frozen=True)
class RoundRecord:
    """One forward-selection round: candidate scores and the outcome."""

    scores: dict[int, float]
    selected: int | None
    best_score: float
    leaf_count: int


@dataclass(frozen=True)
class SelectionState:
    selected: tuple[int, ...]
    unselected: tuple[int, ...]
    leaves: PartitionLeaves
    trace: tuple[RoundRecord, ...] = ()

    @staticmethod
    def fresh(n_features: int, n_samples: int) -> "SelectionState":
        return SelectionState(
            selected=(),
            unselected=tuple(range(n_features)),
            leaves=PartitionLeaves.whole(n_samples),
        )


def build_histograms(samples: SampleSet, schema: FeatureSchema, max_bins: int = 3) -> BinAssignment:
    """Equal-width bins over each continuous feature's sampled range; {0},{1} for binary.

    A degenerate (constant) continuous range collapses to a single bin.
    """
    if max_bins < 2:
        raise ValueError("need at least 2 bins")
    points = samples.points
    if points.shape[0] == 0:
        raise ValueError("empty sample set")
    edges: list[np.ndarray] = []
    n_bins: list[int] = []
    assignment = np.empty(points.shape, dtype=np.int32)
    for f in range(schema.count):
        col = points[:, f]
        if schema.kinds[f] == BINARY:
            edges.append(np.array([0.0, 0.5, 1.0]))
            n_bins.append(2)
            assignment[:, f] = col.astype(np.int32)
            continue
        lo, hi = float(col.min()), float(col.max())
        if hi == lo:
            edges.append(np.array([lo, hi]))
            n_bins.append(1)
            assignment[:, f] = 0
            continue
        edges.append(np.linspace(lo, hi, max_bins + 1))
        n_bins.append(max_bins)
        idx = ((col - lo) / (hi - lo) * max_bins).astype(np.int32)
        assignment[:, f] = np.clip(idx, 0, max_bins - 1)
    assignment.setflags(write=False)
    return BinAssignment(edges=tuple(edges), n_bins=tuple(n_bins), assignment=assignment)


def _encode_labels(labels: np.ndarray) -> tuple[np.ndarray, int]:
    classes, codes = np.unique(np.asarray(labels, dtype=int), return_inverse=True)
    return codes, classes.size


def _cmi_encoded(
    feature: int,
    y_codes: np.ndarray,
    n_labels: int,
    leaves: PartitionLeaves,
    bins: BinAssignment,
) -> float:
    nb = bins.n_bins[feature]
    n_total = bins.n_samples
    total = 0.0
    for leaf in leaves:
        size = leaf.size
        b = bins.assignment[leaf, feature].astype(np.int64)
        joint = np.bincount(b * n_labels + y_codes[leaf], minlength=nb * n_labels).astype(float)
        joint = joint.reshape(nb, n_labels)
        row = joint.sum(axis=1)
        col = joint.sum(axis=0)
        nz = joint > 0
        if not np.any(nz):
            continue
        ratio = (joint[nz] * size) / (row[:, None] * col[None, :])[nz]
        total += float(np.sum(joint[nz] * np.log(ratio))) / n_total
    return total


def cond_mutual_info(
    feature: int,
    labels: np.ndarray,
    leaves: PartitionLeaves,
    bins: BinAssignment,
) -> float:
    """Plug-in conditional MI (nats) between a feature's bins and the labels, given the leaves."""
    if feature < 0 or feature >= bins.n_features:
        raise IndexError(f"feature {feature} out of range for {bins.n_features} features")
    y_codes, n_labels = _encode_labels(labels)
    return _cmi_encoded(feature, y_codes, n_labels, leaves, bins)


def bin_partition(
    bins: BinAssignment,
    leaves: PartitionLeaves,
    feature: int,
    min_cell: int = MIN_CELL,
) -> PartitionLeaves:
    """Split every leaf by the feature's bin index; drop empty and sub-min_cell cells."""
    if feature < 0 or feature >= bins.n_features:
        raise IndexError(f"feature {feature} out of range")
    out: list[np.ndarray] = []
    for leaf in leaves:
        b = bins.assignment[leaf, feature]
        for bv in range(bins.n_bins[feature]):
            cell = leaf[b == bv]
            if cell.size >= min_cell:
                out.append(cell)
    return PartitionLeaves(tuple(out))


def select_feature(
    state: SelectionState,
    bins: BinAssignment,
    labels: np.ndarray,
    eps_mi: float = EPS_MI,
    min_cell: int = MIN_CELL,
) -> SelectionState:
    """One forward-selection round.

    Scores every unselected feature; if the best score clears eps_mi, moves
    the argmax (ties to the lowest index) into the selected list and
    re-partitions the leaves, else empties the unselected set as the
    termination signal, leaving selection and leaves untouched.
    """
    if not state.unselected:
        raise ValueError("no unselected features left")
    y_codes, n_labels = _encode_labels(labels)
    scores: dict[int, float] = {}
    best_f = None
    best = -np.inf
    for f in state.unselected:
        score = _cmi_encoded(f, y_codes, n_labels, state.leaves, bins)
        scores[f] = score
        if score > best:  # strict: ties keep the lowest feature index
            best = score
            best_f = f
    if best <= eps_mi:
        record = RoundRecord(scores=scores, selected=None, best_score=best, leaf_count=len(state.leaves))
        return SelectionState(
            selected=state.selected,
            unselected=(),
            leaves=state.leaves,
            trace=state.trace + (record,),
        )
    leaves = bin_partition(bins, state.leaves, best_f, min_cell=min_cell)
    record = RoundRecord(scores=scores, selected=best_f, best_score=best, leaf_count=len(leaves))
    return SelectionState(
        selected=state.selected + (best_f,),
        unselected=tuple(f for f in state.unselected if f != best_f),
        leaves=leaves,
        trace=state.trace + (record,),
    )


def forward_select(
    state: SelectionState,
    bins: BinAssignment,
    labels: np.ndarray,
    eps_mi: float = EPS_MI,
    min_cell: int = MIN_CELL,
    max_features: int | None = None,
) -> SelectionState:
    """Run selection rounds until no features remain, leaves empty, or the cap is hit."""
    while state.unselected and not state.leaves.empty:
        if max_features is not None and len(state.selected) >= max_features:
            break
        state = select_feature(state, bins, labels, eps_mi=eps_mi, min_cell=min_cell)
    return state


def select_informative_features(
    samples: SampleSet,
    labels: np.ndarray,
    schema: FeatureSchema,
    max_bins: int = 3,
    eps_mi: float = EPS_MI,
    min_cell: int = MIN_CELL,
    max_features: int | None = None,
) -> tuple[int, ...]:
    """Histogram the samples, then forward-select features by conditional MI."""
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != samples.count:
        raise ValueError("labels and samples must align")
    bins = build_histograms(samples, schema, max_bins=max_bins)
    state = SelectionState.fresh(schema.count, samples.count)
    state = forward_select(state, bins, labels, eps_mi=eps_mi, min_cell=min_cell, max_features=max_features)
    return state.selected


def selection_trace(
    samples: SampleSet,
    labels: np.ndarray,
    schema: FeatureSchema,
    max_bins: int = 3,
    eps_mi: float = EPS_MI,
    min_cell: int = MIN_CELL,
    max_features: int | None = None,
) -> dict:
    """JSON-ready debug dump: per-round candidate scores, pick, and leaf counts."""
    labels = np.asarray(labels, dtype=int)
    bins = build_histograms(samples, schema, max_bins=max_bins)
    state = SelectionState.fresh(schema.count, samples.count)
    state = forward_select(state, bins, labels, eps_mi=eps_mi, min_cell=min_cell, max_features=max_features)
    return {
        "selected": list(state.selected),
        "rounds": [
            {
                "scores": {str(f): rec.scores[f] for f in sorted(rec.scores)},
                "selected": rec.selected,
                "best_score": rec.best_score,
                "leaf_count": rec.leaf_count,
            }
            for rec in state.trace
        ],
    }
