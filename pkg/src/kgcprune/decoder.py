"""Per-relation-group binary classifiers over pruned triple features."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dft
from .gbm import GBMConfig, GroupClassifier, train_classifier
from .negatives import NegSpec, sample_batch

logger = logging.getLogger(__name__)

ENSEMBLE_FORMAT = "kgcprune-ensemble"
ENSEMBLE_VERSION = 1


@dataclass
class TrainingSet:
    triples: np.ndarray
    labels: np.ndarray
    features: np.ndarray


def build_training_set(group, store, selector, partition, negspec, model, rng=None, pools=None,
                       filter_index=None, features="pca"):
    """One positive per train triple of the group plus ``negspec.n_neg`` negatives each."""
    rng = rng if rng is not None else np.random.default_rng(negspec.seed)
    pos = store.train[np.isin(store.train[:, 1], partition.members(group))]
    if len(pos) == 0:
        raise ValueError(f"relation group {group} has no training triples")
    neg = sample_batch(pos, negspec, rng, store.n_entities, pools=pools, model=model,
                       filter_index=filter_index).reshape(-1, 3)
    triples = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    X = dft.triple_features(selector, group, model, triples, features)
    return TrainingSet(triples, labels, np.ascontiguousarray(X))


class DecoderEnsemble:
    """One classifier per relation group, plus the selector/partition that feed it."""

    def __init__(self, classifiers, selector, partition, features="pca"):
        if features not in dft.FEATURE_MODES:
            raise ValueError(f"unknown feature mode {features!r}")
        self.classifiers = dict(classifiers)
        self.selector = selector
        self.partition = partition
        self.features = features
        if set(self.classifiers) != set(range(partition.k)):
            raise ValueError(f"need one classifier per group 0..{partition.k - 1}")

    def classifier_for(self, r):
        return self.classifiers[self.partition.group_of(r)]

    def predict_triples(self, model, triples, n_trees=None):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        out = np.empty(len(triples))
        groups = self.partition.assignment[triples[:, 1]]
        for g in np.unique(groups):
            idx = np.flatnonzero(groups == g)
            X = dft.triple_features(self.selector, int(g), model, triples[idx], self.features)
            out[idx] = self.classifiers[int(g)].predict_proba(X, n_trees)
        return out

    def n_parameters(self):
        return sum(c.n_parameters() for c in self.classifiers.values())

    def to_dict(self):
        return {
            "format": ENSEMBLE_FORMAT,
            "version": ENSEMBLE_VERSION,
            "features": self.features,
            "groups": {str(g): c.to_dict() for g, c in sorted(self.classifiers.items())},
        }

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path, selector, partition):
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != ENSEMBLE_FORMAT or doc.get("version") != ENSEMBLE_VERSION:
            raise ValueError(f"{path}: not a version-{ENSEMBLE_VERSION} {ENSEMBLE_FORMAT} document")
        classifiers = {int(g): GroupClassifier.from_dict(c) for g, c in doc["groups"].items()}
        return cls(classifiers, selector, partition, doc.get("features", "pca"))


def predict(ensemble, selector, partition, triple, model):
    """g(e) of one triple: route by relation group, project, classify."""
    h, r, t = (int(x) for x in triple)
    if not 0 <= r < len(partition.assignment):
        raise IndexError(f"unknown relation {r}")
    g = partition.group_of(r)
    e = dft.feature_rows(selector, g, model.entity[h][None], model.relation[r][None], model.entity[t][None],
                         ensemble.features)
    return float(ensemble.classifiers[g].predict_proba(e)[0])


def train_decoder(model, store, selector, partition, negspec=None, gbm=None, pools=None,
                  filter_index=None, seed=0, features="pca"):
    """Fit one classifier per relation group; returns ``(ensemble, training_sets)``."""
    negspec = negspec or NegSpec()
    gbm = gbm or GBMConfig()
    rng = np.random.default_rng(seed)
    classifiers, sets = {}, {}
    for g in range(partition.k):
        ts = build_training_set(g, store, selector, partition, negspec, model, rng, pools, filter_index, features)
        logger.info("group %d: %d samples x %d features", g, *ts.features.shape)
        classifiers[g] = train_classifier(ts.features, ts.labels, gbm)
        sets[g] = ts
    return DecoderEnsemble(classifiers, selector, partition, features), sets


class DecoderScorer:
    """Scores every candidate entity of a link-prediction query through the ensemble.

    For a tail query the head/relation columns are scalars broadcast against
    the candidate tail rows, so features match per-triple projection bit for bit.
    """

    def __init__(self, ensemble, model, n_trees=None):
        self.ensemble = ensemble
        self.model = model
        self.n_trees = n_trees
        self.n_entities = model.n_entities

    def _scores(self, r, h_rows, t_rows):
        g = self.ensemble.partition.group_of(r)
        X = dft.feature_rows(self.ensemble.selector, g, h_rows, self.model.relation[r][None], t_rows,
                             self.ensemble.features)
        X = np.broadcast_to(X, (self.n_entities, X.shape[-1]))
        return self.ensemble.classifiers[g].predict_proba(X, self.n_trees)

    def score_tails(self, h, r):
        return self._scores(r, self.model.entity[h][None], self.model.entity)

    def score_heads(self, r, t):
        return self._scores(r, self.model.entity, self.model.entity[t][None])

    def score_triples(self, triples):
        return self.ensemble.predict_triples(self.model, triples, self.n_trees)
