"""Gradient-boosted regression trees on the logistic loss (plus single-tree and forest variants).

Trees are grown level by level with exact greedy split search: each feature
is pre-sorted once, and every level sweeps all features in sorted order,
accumulating first/second-order sums per open node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

KINDS = ("gbm", "tree", "forest")
_PROB_EPS = 1e-7


@dataclass(frozen=True)
class GBMConfig:
    tree_depth: int = 3
    n_trees: int = 100
    learning_rate: float = 0.1
    seed: int = 0
    reg_lambda: float = 1.0
    min_child_weight: float = 0.0
    kind: str = "gbm"
    line_search: bool = True

    def __post_init__(self):
        if self.tree_depth < 1:
            raise ValueError("tree_depth must be >= 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64),
        )


@numba.njit(cache=True)
def _best_splits(order, xs, grad, hess, node_of, n_open, lam, min_child):
    """Best (feature, threshold, gain) for each open node at the current level.

    ``order[f]`` lists sample ids sorted by feature f and ``xs[f]`` the matching values.
    """
    F, n = order.shape
    G = np.zeros(n_open)
    H = np.zeros(n_open)
    for i in range(n):
        j = node_of[i]
        if j >= 0:
            G[j] += grad[i]
            H[j] += hess[i]
    best_gain = np.zeros(n_open)
    best_feat = -np.ones(n_open, dtype=np.int64)
    best_thr = np.zeros(n_open)
    GL = np.zeros(n_open)
    HL = np.zeros(n_open)
    cnt = np.zeros(n_open, dtype=np.int64)
    last = np.zeros(n_open)
    parent = np.empty(n_open)
    for j in range(n_open):
        parent[j] = G[j] * G[j] / (H[j] + lam)
    for f in range(F):
        GL[:] = 0.0
        HL[:] = 0.0
        cnt[:] = 0
        of = order[f]
        xf = xs[f]
        for p in range(n):
            i = of[p]
            j = node_of[i]
            if j < 0:
                continue
            x = xf[p]
            if cnt[j] > 0 and x != last[j]:
                hl = HL[j]
                hr = H[j] - hl
                if hl >= min_child and hr >= min_child:
                    gl = GL[j]
                    gr = G[j] - gl
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[j])
                    if gain > best_gain[j] + 1e-12:
                        best_gain[j] = gain
                        best_feat[j] = f
                        thr = 0.5 * (last[j] + x)
                        if thr >= x:
                            thr = last[j]
                        best_thr[j] = thr
            GL[j] += grad[i]
            HL[j] += hess[i]
            cnt[j] += 1
            last[j] = x
    return best_feat, best_thr, best_gain, G, H


@numba.njit(cache=True)
def _route(X, node_of, feat, thr, left_slot, right_slot):
    out = np.empty_like(node_of)
    for i in range(X.shape[0]):
        j = node_of[i]
        if j < 0 or feat[j] < 0:
            out[i] = -1
        elif X[i, feat[j]] <= thr[j]:
            out[i] = left_slot[j]
        else:
            out[i] = right_slot[j]
    return out


def grow_tree(X, sorted_features, grad, hess, depth, lam=1.0, min_child=0.0, feature_mask=None):
    """Fit one regression tree to Newton targets; returns ``(tree, leaf_index_per_sample)``.

    ``sorted_features`` is the ``(order, values)`` pair from :func:`presort`.
    """
    n = X.shape[0]
    order, xs = sorted_features
    feature, threshold, left, right, value = [0], [0.0], [-1], [-1], [0.0]
    feature[0] = -1
    slot_node = np.array([0])  # node id of each open slot
    node_of = np.zeros(n, dtype=np.int64)
    leaf_of = np.zeros(n, dtype=np.int64)
    if feature_mask is not None:
        # masked features become constant, so no split can use them
        xs = np.where(feature_mask[:, None], xs, 0.0)
    for level in range(depth + 1):
        n_open = len(slot_node)
        if n_open == 0:
            break
        feat, thr, gain, G, H = _best_splits(order, xs, grad, hess, node_of, n_open, lam, min_child)
        if level == depth:
            feat[:] = -1
        left_slot = -np.ones(n_open, dtype=np.int64)
        right_slot = -np.ones(n_open, dtype=np.int64)
        next_nodes = []
        for j in range(n_open):
            nid = int(slot_node[j])
            if feat[j] < 0:
                value[nid] = -G[j] / (H[j] + lam)
                continue
            feature[nid] = int(feat[j])
            threshold[nid] = float(thr[j])
            for side, slots in (("L", left_slot), ("R", right_slot)):
                child = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                slots[j] = len(next_nodes)
                next_nodes.append(child)
                if side == "L":
                    left[nid] = child
                else:
                    right[nid] = child
        finished = (node_of >= 0) & (feat[np.maximum(node_of, 0)] < 0)
        leaf_of[finished] = slot_node[node_of[finished]]
        node_of = _route(X, node_of, feat, thr, left_slot, right_slot)
        slot_node = np.array(next_nodes, dtype=np.int64)
    tree = Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )
    return tree, leaf_of


@numba.njit(cache=True)
def _sum_trees(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for k in range(roots.shape[0]):
            node = roots[k]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc
    return out


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_loss(margin, y):
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass
class GroupClassifier:
    trees: list
    base_score: float
    learning_rate: float
    kind: str = "gbm"
    loss_history: list = field(default_factory=list)
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def _pack(self):
        if self._packed is None or self._packed[0] != len(self.trees):
            if self.trees:
                roots = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]]).astype(np.int64)
                feature = np.concatenate([t.feature for t in self.trees])
                threshold = np.concatenate([t.threshold for t in self.trees])
                left = np.concatenate([np.where(t.left >= 0, t.left + r, -1) for t, r in zip(self.trees, roots)])
                right = np.concatenate([np.where(t.right >= 0, t.right + r, -1) for t, r in zip(self.trees, roots)])
                value = np.concatenate([t.value for t in self.trees])
            else:
                roots = np.zeros(0, dtype=np.int64)
                feature = np.array([-1], dtype=np.int64)
                threshold = np.zeros(1)
                left = right = np.array([-1], dtype=np.int64)
                value = np.zeros(1)
            self._packed = (len(self.trees), feature, threshold, left, right, value, roots)
        return self._packed

    def leaf_sum(self, X, n_trees=None):
        _, feature, threshold, left, right, value, roots = self._pack()
        if n_trees is not None:
            roots = roots[:n_trees]
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return _sum_trees(X, feature, threshold, left, right, value, roots)

    def predict_proba(self, X, n_trees=None):
        """g(e) for each row of X, always inside (0, 1)."""
        s = self.leaf_sum(X, n_trees)
        if self.kind == "forest":
            k = len(self.trees) if n_trees is None else min(n_trees, len(self.trees))
            p = s / max(k, 1)
        else:
            p = _sigmoid(self.base_score + self.learning_rate * s)
        return np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)

    def max_split_feature(self):
        return max((int(t.feature.max()) for t in self.trees), default=-1)

    def n_parameters(self):
        """Split nodes store (feature, threshold); leaves store one value."""
        return sum(2 * (t.n_nodes - t.n_leaves) + t.n_leaves for t in self.trees) + 1

    def to_dict(self):
        return {
            "kind": self.kind,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "loss_history": list(self.loss_history),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            [Tree.from_dict(t) for t in doc["trees"]],
            float(doc["base_score"]),
            float(doc["learning_rate"]),
            doc.get("kind", "gbm"),
            list(doc.get("loss_history", [])),
        )

    def dumps(self):
        return json.dumps(self.to_dict())


def presort(X):
    """Per-feature sample order and sorted values, each ``(F, n)`` and row-contiguous."""
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    values = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
    return order, values


def train_classifier(X, y, config=None):
    """Fit a GroupClassifier on features X (n, F) and labels y in {0, 1}."""
    config = config or GBMConfig()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, F) with one label per row")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("training data must contain both labels")
    sorted_features = presort(X)
    if config.kind == "forest":
        return _train_forest(X, y, sorted_features, config)
    n_trees = 1 if config.kind == "tree" else config.n_trees
    lr = 1.0 if config.kind == "tree" else config.learning_rate
    rate = float(y.mean())
    base = math.log(rate / (1.0 - rate))
    margin = np.full(len(y), base)
    loss = _log_loss(margin, y)
    clf = GroupClassifier([], base, lr, config.kind, [loss])
    for _ in range(n_trees):
        p = _sigmoid(margin)
        grad, hess = p - y, p * (1.0 - p)
        tree, leaf_of = grow_tree(X, sorted_features, grad, hess, config.tree_depth, config.reg_lambda,
                                  config.min_child_weight)
        step = lr * tree.value[leaf_of]
        new_loss = _log_loss(margin + step, y)
        if config.line_search:
            # halve the tree until the training loss does not increase
            shrink = 1.0
            while new_loss > loss and shrink > 1e-6:
                shrink *= 0.5
                new_loss = _log_loss(margin + shrink * step, y)
            if new_loss > loss:
                shrink, new_loss = 0.0, loss
            if shrink != 1.0:
                tree.value = tree.value * shrink
                step = lr * tree.value[leaf_of]
                new_loss = _log_loss(margin + step, y)
        margin = margin + step
        loss = new_loss
        clf.trees.append(tree)
        clf.loss_history.append(loss)
    clf._packed = None
    return clf


def _train_forest(X, y, sorted_features, config):
    rng = np.random.default_rng(config.seed)
    n, F = X.shape
    n_feat = max(1, int(round(math.sqrt(F))))
    trees = []
    for _ in range(config.n_trees):
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        mask = np.zeros(F, dtype=bool)
        mask[rng.choice(F, size=n_feat, replace=False)] = True
        tree, _ = grow_tree(X, sorted_features, -y * counts, counts, config.tree_depth, 1e-12, 1.0, mask)
        trees.append(tree)
    clf = GroupClassifier(trees, 0.0, 1.0, "forest")
    p = clf.predict_proba(X)
    clf.loss_history = [float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))]
    return clf
