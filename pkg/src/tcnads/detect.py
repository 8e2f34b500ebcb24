"""Divergence scores and the decision-tree attack classifier."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Union

import numpy as np

from .errors import InsufficientDataError, ShapeError, ValidationError
from .ingest import SignalSeries, format_float, window_arrays
from .tcna import TcnaModel

# relative slack for treating two split impurities as equal
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class DivergenceVector:
    message_index: int
    scores: np.ndarray
    label: int


@dataclass
class DivergenceScores:
    """Signed per-signal prediction errors of one ID, one row per judged message.

    Row ``i`` compares the prediction made from the window ending at message
    ``t`` with the observed message ``t + 1 = index[i]``.
    """

    message_id: str
    index: np.ndarray  # (n,)
    scores: np.ndarray  # (n, n_signals)
    labels: np.ndarray  # (n,)

    def __len__(self):
        return len(self.index)

    def __iter__(self) -> Iterator[DivergenceVector]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return DivergenceScores(self.message_id, self.index[i], self.scores[i], self.labels[i])
        return DivergenceVector(int(self.index[i]), self.scores[i], int(self.labels[i]))

    @property
    def n_signals(self) -> int:
        return self.scores.shape[1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["message_index", "label"] + [f"ds_{i + 1}" for i in range(self.n_signals)])
            for idx, lab, row in zip(self.index, self.labels, self.scores):
                writer.writerow([int(idx), int(lab)] + [format_float(v) for v in row])

    @classmethod
    def read_csv(cls, path, message_id: str = "?") -> "DivergenceScores":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        body = rows[1:]
        width = len(rows[0]) - 2
        return cls(
            message_id,
            np.array([int(r[0]) for r in body], dtype=np.int64),
            np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64).reshape(len(body), width),
            np.array([int(r[1]) for r in body], dtype=np.int64),
        )


def divergence_scores(model: TcnaModel, series: SignalSeries, batch_size: int = 4096) -> DivergenceScores:
    """DS_i = predicted_i(t) - observed_i(t + 1) for every full window of a scaled series."""
    R = model.config.receptive_field
    if series.n_signals != model.config.m:
        raise ShapeError(f"model expects {model.config.m} signals, series {series.message_id!r} has {series.n_signals}")
    X, Y = window_arrays(series.values, R, series.message_id)
    preds = np.concatenate([model.forward(X[lo : lo + batch_size]) for lo in range(0, len(X), batch_size)])
    index = np.arange(R, len(series), dtype=np.int64)
    return DivergenceScores(series.message_id, index, preds - Y, series.labels[R:].copy())


def split_calibration_evaluation(
    ds: DivergenceScores, ratio: float = 0.5, require_both_classes: bool = True
) -> tuple[DivergenceScores, DivergenceScores]:
    """Chronological split; the first ``ratio`` share calibrates the tree."""
    if not 0 < ratio < 1:
        raise ValueError(f"calibration ratio must be in (0, 1), got {ratio}")
    cut = math.floor(round(ratio * len(ds), 9))
    cal, ev = ds[:cut], ds[cut:]
    if require_both_classes:
        present = set(np.unique(cal.labels).tolist())
        if present != {0, 1}:
            missing = sorted({0, 1} - present)
            raise ValidationError(f"calibration data for {ds.message_id!r} lacks class(es) {missing}")
    return cal, ev


# ---------------------------------------------------------------------------
# CART


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p**2))


@dataclass
class Leaf:
    counts: tuple[int, int]

    @property
    def label(self) -> int:
        n0, n1 = self.counts
        return 1 if n1 >= n0 else 0  # ties flag an attack

    @property
    def probability(self) -> float:
        n0, n1 = self.counts
        return n1 / (n0 + n1)


@dataclass
class Branch:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Branch]


def _best_split(X: np.ndarray, y: np.ndarray):
    """Lowest weighted-Gini (feature, threshold, impurity) over all midpoints, or None."""
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if len(valid) == 0:
            continue
        n_left = valid + 1.0
        n_right = n - n_left
        ones_left = np.cumsum(ys)[valid].astype(np.float64)
        ones_right = ys.sum() - ones_left
        gini_left = 1.0 - (ones_left / n_left) ** 2 - ((n_left - ones_left) / n_left) ** 2
        gini_right = 1.0 - (ones_right / n_right) ** 2 - ((n_right - ones_right) / n_right) ** 2
        weighted = (n_left * gini_left + n_right * gini_right) / n
        lowest = weighted.min()
        pos = int(np.flatnonzero(weighted <= lowest + _TIE_RTOL * max(lowest, 1e-300))[0])
        i = valid[pos]
        threshold = (xs[i] + xs[i + 1]) / 2.0
        if not xs[i] <= threshold < xs[i + 1]:
            threshold = xs[i]  # adjacent floats: the midpoint rounded up
        if best is None or weighted[pos] < best[2] - _TIE_RTOL * max(best[2], 1e-300):
            best = (f, float(threshold), float(weighted[pos]))
    return best


class DecisionTree:
    """Binary CART classifier with Gini splits and deterministic tie-breaks."""

    def __init__(self, root: Node, n_features: int):
        self.root = root
        self.n_features = n_features

    @classmethod
    def fit(cls, X, y, max_depth: int | None = None, min_samples_split: int = 2) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise ShapeError("X must be (n, features) with one label per row")
        if len(y) == 0:
            raise InsufficientDataError("cannot fit a tree on zero samples")
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("labels must be 0 or 1")

        def make_leaf(idx):
            ones = int(y[idx].sum())
            return Leaf((len(idx) - ones, ones))

        root_holder: list = [None]
        # explicit stack: (sample indices, depth, parent branch or None, side)
        stack = [(np.arange(len(y)), 0, None, None)]
        while stack:
            idx, depth, parent, side = stack.pop()
            node: Node
            ones = int(y[idx].sum())
            impurity = gini((len(idx) - ones, ones))
            split = None
            if impurity > 0 and len(idx) >= min_samples_split and (max_depth is None or depth < max_depth):
                # zero-gain splits are kept: balanced XOR has no improving first split
                split = _best_split(X[idx], y[idx])
            if split is None:
                node = make_leaf(idx)
            else:
                f, thr, _ = split
                node = Branch(f, thr, None, None)
                go_left = X[idx, f] <= thr
                stack.append((idx[~go_left], depth + 1, node, "right"))
                stack.append((idx[go_left], depth + 1, node, "left"))
            if parent is None:
                root_holder[0] = node
            else:
                setattr(parent, side, node)
        return cls(root_holder[0], X.shape[1])

    def _leaves(self, X: np.ndarray) -> list[Leaf]:
        out = []
        for row in X:
            node = self.root
            while isinstance(node, Branch):
                node = node.left if row[node.feature] <= node.threshold else node.right
            out.append(node)
        return out

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"tree expects {self.n_features} features, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        return np.array([leaf.label for leaf in self._leaves(self._check(X))], dtype=np.int64)

    def predict_proba(self, X) -> np.ndarray:
        """Attack probability n1 / (n0 + n1) of the reached leaf."""
        return np.array([leaf.probability for leaf in self._leaves(self._check(X))], dtype=np.float64)

    def predict_one(self, vector) -> tuple[int, float]:
        leaf = self._leaves(self._check(vector))[0]
        return leaf.label, leaf.probability

    # -- structure ----------------------------------------------------------

    def nodes(self) -> Iterator[Node]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Branch):
                stack.extend((node.right, node.left))

    @property
    def depth(self) -> int:
        best = 0
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if isinstance(node, Branch):
                stack.extend(((node.left, d + 1), (node.right, d + 1)))
        return best

    @property
    def n_leaves(self) -> int:
        return sum(isinstance(n, Leaf) for n in self.nodes())

    # -- persistence --------------------------------------------------------

    def to_json(self) -> dict:
        # iterative so deep chains do not hit the recursion limit
        def shell(node):
            if isinstance(node, Leaf):
                return {"counts": list(node.counts)}
            return {"feature": node.feature, "threshold": node.threshold}

        doc = shell(self.root)
        stack = [(self.root, doc)]
        while stack:
            node, out = stack.pop()
            if isinstance(node, Branch):
                for side in ("left", "right"):
                    child = getattr(node, side)
                    out[side] = shell(child)
                    stack.append((child, out[side]))
        return {"n_features": self.n_features, "tree": doc}

    @classmethod
    def from_json(cls, doc: Mapping) -> "DecisionTree":
        def shell(d):
            if "counts" in d:
                n0, n1 = d["counts"]
                return Leaf((int(n0), int(n1)))
            return Branch(int(d["feature"]), float(d["threshold"]), None, None)

        root = shell(doc["tree"])
        stack = [(root, doc["tree"])]
        while stack:
            node, d = stack.pop()
            if isinstance(node, Branch):
                for side in ("left", "right"):
                    child = shell(d[side])
                    setattr(node, side, child)
                    stack.append((child, d[side]))
        return cls(root, int(doc["n_features"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "DecisionTree":
        return cls.from_json(json.loads(Path(path).read_text()))


def tree_fit(calibration, max_depth: int | None = None, min_samples_split: int = 2) -> DecisionTree:
    """Fit on DivergenceScores (or an (X, y) pair)."""
    if isinstance(calibration, DivergenceScores):
        X, y = calibration.scores, calibration.labels
    else:
        X, y = calibration
    return DecisionTree.fit(X, y, max_depth=max_depth, min_samples_split=min_samples_split)


def tree_predict(tree: DecisionTree, vector) -> tuple[int, float]:
    if isinstance(vector, DivergenceVector):
        vector = vector.scores
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1:
        raise ShapeError("tree_predict takes a single vector; use DecisionTree.predict for batches")
    return tree.predict_one(vector)
