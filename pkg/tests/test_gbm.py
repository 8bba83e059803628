import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcprune import gbm


def separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0.1).astype(float)
    return X, y


def noisy(n=1000, seed=0, F=6):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, F))
    logit = 1.5 * X[:, 0] - X[:, 1] * X[:, 2] + 0.5 * np.sin(3 * X[:, 3])
    y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(float)
    return X, y


def test_config_validation():
    with pytest.raises(ValueError):
        gbm.GBMConfig(tree_depth=0)
    with pytest.raises(ValueError):
        gbm.GBMConfig(n_trees=0)
    with pytest.raises(ValueError):
        gbm.GBMConfig(kind="svm")


def test_single_class_rejected():
    with pytest.raises(ValueError):
        gbm.train_classifier(np.ones((4, 2)), np.ones(4))


def test_separable_reaches_full_accuracy():
    X, y = separable()
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 100, 0.1))
    p = clf.predict_proba(X)
    assert np.mean((p >= 0.5) == y) == 1.0


def blobs2d(n=400, seed=0):
    """Two Gaussian clouds cut at the line x0 + x1 = 0 so they stay linearly separable."""
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.5).astype(float)
    X = rng.normal(0, 0.4, (n, 2)) + np.where(y == 1, 1.0, -1.0)[:, None]
    keep = np.sign(X.sum(axis=1)) == np.where(y == 1, 1, -1)
    return X[keep], y[keep]


@pytest.mark.parametrize("seed", range(3))
def test_separable_confident_scores(seed):
    X, y = blobs2d(seed=seed)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 100, 0.1))
    p = clf.predict_proba(X)
    assert (p[y == 1] > 0.9).all() and (p[y == 0] < 0.1).all()


def test_zero_shrinkage_is_prior():
    X, y = separable()
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 1, 0.0))
    assert np.allclose(clf.predict_proba(X), y.mean(), rtol=0, atol=1e-15)
    assert clf.base_score == pytest.approx(math.log(y.mean() / (1 - y.mean())))


@pytest.mark.parametrize("depth", [3, 5, 7])
@pytest.mark.parametrize("lr", [0.05, 0.1, 0.3])
def test_loss_monotone(depth, lr):
    X, y = noisy()
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(depth, 40, lr))
    h = np.array(clf.loss_history)
    assert len(h) == 41
    assert np.all(np.diff(h) <= 0)
    assert np.all(np.diff(h[:11]) < 0)


@pytest.mark.parametrize("lr", [0.05, 0.3])
def test_loss_strictly_decreases_without_safeguard(lr):
    X, y = noisy(seed=3)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 10, lr, line_search=False))
    assert np.all(np.diff(clf.loss_history) < 0)


def test_recorded_loss_matches_prediction():
    X, y = noisy(300)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 15, 0.2))
    p = 1 / (1 + np.exp(-(clf.base_score + clf.learning_rate * clf.leaf_sum(X))))
    ll = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert ll == pytest.approx(clf.loss_history[-1], rel=1e-9)


def test_tree_structure_and_split_indices():
    X, y = noisy(500, F=4)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 10, 0.1))
    for t in clf.trees:
        internal = t.feature >= 0
        assert t.feature.max() < 4
        assert t.n_nodes <= 2 ** 4 - 1
        assert (t.left[internal] > 0).all() and (t.left[~internal] == -1).all()


def brute_first_split(X, y):
    """Exhaustive best root split on the second-order objective, lambda = 1."""
    p = np.full(len(y), y.mean())
    g, h = p - y, p * (1 - p)
    G, H = g.sum(), h.sum()
    best = (-np.inf, None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            left = X[:, f] <= a
            gl, hl = g[left].sum(), h[left].sum()
            gain = 0.5 * (gl ** 2 / (hl + 1) + (G - gl) ** 2 / (H - hl + 1) - G ** 2 / (H + 1))
            if gain > best[0] + 1e-12:
                best = (gain, f, (a, b))
    return best


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_root_split_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.standard_normal((40, 3)), 1)
    y = (rng.random(40) < 0.5).astype(float)
    y[0], y[1] = 0, 1
    gain, f, (a, b) = brute_first_split(X, y)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(1, 1, 1.0, line_search=False))
    t = clf.trees[0]
    if f is None or gain <= 0:
        return
    assert t.feature[0] == f
    assert a <= t.threshold[0] < b


def test_serialization_bit_identical():
    X, y = noisy(400)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(4, 20, 0.3))
    back = gbm.GroupClassifier.from_dict(json.loads(clf.dumps()))
    assert np.array_equal(back.predict_proba(X), clf.predict_proba(X))


def test_prefix_prediction():
    X, y = noisy(300)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(3, 20, 0.1))
    short = gbm.GroupClassifier(clf.trees[:5], clf.base_score, clf.learning_rate)
    assert np.array_equal(short.predict_proba(X), clf.predict_proba(X, n_trees=5))


@pytest.mark.parametrize("kind", ["tree", "forest"])
def test_alternative_kinds(kind):
    X, y = separable(300)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(6, 20, 0.1, kind=kind))
    p = clf.predict_proba(X)
    assert ((p > 0) & (p < 1)).all()
    assert np.mean((p >= 0.5) == y) > 0.9
    if kind == "tree":
        assert len(clf.trees) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_probabilities_in_open_interval(seed, depth):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 3)) * 100
    y = (rng.random(60) < 0.5).astype(float)
    y[:2] = [0, 1]
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(depth, 30, 0.3))
    p = clf.predict_proba(rng.standard_normal((50, 3)) * 1000)
    assert ((p > 0) & (p < 1)).all()


def test_parameter_count():
    X, y = separable(200)
    clf = gbm.train_classifier(X, y, gbm.GBMConfig(2, 3, 0.1))
    want = 1 + sum(2 * int((t.feature >= 0).sum()) + int((t.feature < 0).sum()) for t in clf.trees)
    assert clf.n_parameters() == want
    assert clf.n_parameters() <= 1 + 3 * (2 * 3 + 4)
