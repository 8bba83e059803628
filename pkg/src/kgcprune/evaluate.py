"""Filtered link-prediction ranking, triple classification and parameter accounting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .embed import entity_width, relation_width, score_all_heads, score_all_tails, score_triples

HITS_AT = (1, 3, 10)


def filtered_rank(target_score, candidate_scores, filtered_ids=()):
    """1 + #(strictly higher) + #(ties)/2 among candidates left after filtering.

    ``candidate_scores`` excludes the target itself; ``filtered_ids`` index into it.
    """
    scores = np.asarray(candidate_scores, dtype=np.float64)
    keep = np.ones(len(scores), dtype=bool)
    keep[np.asarray(filtered_ids, dtype=np.int64)] = False
    s = scores[keep]
    return 1.0 + float(np.sum(s > target_score)) + 0.5 * float(np.sum(s == target_score))


class KGEScorer:
    """Raw embedding scores f_r(h, t) for all candidates."""

    def __init__(self, model):
        self.model = model
        self.n_entities = model.n_entities

    def score_tails(self, h, r):
        return score_all_tails(self.model, h, r)

    def score_heads(self, r, t):
        return score_all_heads(self.model, r, t)

    def score_triples(self, triples):
        return score_triples(self.model, triples)


@dataclass
class EvalReport:
    mrr: float
    hits: dict
    n_queries: int
    by_direction: dict = field(default_factory=dict)
    ranks: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_ranks(cls, ranks, directions=None, keep_ranks=True):
        ranks = np.asarray(ranks, dtype=np.float64)
        rep = cls(
            float(np.mean(1.0 / ranks)),
            {k: float(np.mean(ranks <= k)) for k in HITS_AT},
            int(len(ranks)),
            ranks=ranks if keep_ranks else None,
        )
        if directions is not None:
            directions = np.asarray(directions)
            for side in ("head", "tail"):
                sel = ranks[directions == side]
                if len(sel):
                    rep.by_direction[side] = cls.from_ranks(sel, keep_ranks=False)
        return rep

    def as_row(self):
        return {"mrr": self.mrr, **{f"hits@{k}": v for k, v in self.hits.items()}, "n_queries": self.n_queries}

    def summary(self, label=""):
        head = f"{label}: " if label else ""
        hits = "  ".join(f"H@{k} {v:.4f}" for k, v in self.hits.items())
        return f"{head}MRR {self.mrr:.4f}  {hits}  ({self.n_queries} queries)"


def query_ranks(scorer, triples, filter_index):
    """Filtered tail and head ranks of each triple; returns ``(ranks, directions, queries)``."""
    ranks, directions = [], []
    for h, r, t in np.asarray(triples, dtype=np.int64).tolist():
        tails = scorer.score_tails(h, r)
        known = filter_index.tails(h, r)
        mask = np.zeros(len(tails), dtype=bool)
        mask[known] = True
        mask[t] = True
        ranks.append(_rank_masked(tails, t, mask))
        directions.append("tail")
        heads = scorer.score_heads(r, t)
        known = filter_index.heads(r, t)
        mask = np.zeros(len(heads), dtype=bool)
        mask[known] = True
        mask[h] = True
        ranks.append(_rank_masked(heads, h, mask))
        directions.append("head")
    return np.array(ranks), np.array(directions)


def _rank_masked(scores, target, mask):
    target_score = scores[target]
    s = scores[~mask]
    return 1.0 + float(np.count_nonzero(s > target_score)) + 0.5 * float(np.count_nonzero(s == target_score))


def link_prediction(scorer, store, filter_index, split="test", limit=None):
    """MRR and Hits@{1,3,10} with head and tail queries for every triple of ``split``."""
    triples = store.split(split)
    if triples is None or len(triples) == 0:
        raise ValueError(f"split {split!r} is empty")
    if limit is not None:
        triples = triples[:limit]
    ranks, directions = query_ranks(scorer, triples, filter_index)
    return EvalReport.from_ranks(ranks, directions)


def write_ranks(path, triples, report):
    """Per-query ranks (tail query then head query for each triple) as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["head", "relation", "tail", "direction", "rank"])
        for i, (h, r, t) in enumerate(np.asarray(triples).tolist()):
            w.writerow([h, r, t, "tail", report.ranks[2 * i]])
            w.writerow([h, r, t, "head", report.ranks[2 * i + 1]])


# ---------------------------------------------------------------------------
# triple classification


@dataclass
class ThresholdTable:
    thresholds: dict
    fallback: float = 0.5

    def __getitem__(self, r):
        return self.thresholds.get(int(r), self.fallback)

    def for_relations(self, rels):
        return np.array([self[r] for r in np.asarray(rels).tolist()])


def best_threshold(scores, labels):
    """Accuracy-maximizing threshold (predict 1 iff score >= threshold).

    Candidates: just below the minimum (accept all), midpoints of consecutive
    distinct scores, just above the maximum (reject all). Ties go to the
    lowest candidate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    distinct = np.unique(scores)
    cands = np.concatenate([
        [np.nextafter(distinct[0], -np.inf)],
        0.5 * (distinct[:-1] + distinct[1:]),
        [np.nextafter(distinct[-1], np.inf)],
    ])
    acc = np.array([np.mean((scores >= c) == labels) for c in cands])
    best = int(np.argmax(acc))
    return float(cands[best]), float(acc[best])


def tune_thresholds(val_scores, fallback=0.5):
    """``val_scores``: relation id -> list of (score, label). Returns a ThresholdTable."""
    table = {}
    for r, pairs in val_scores.items():
        if not len(pairs):
            continue
        arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
        table[int(r)] = best_threshold(arr[:, 0], arr[:, 1])[0]
    return ThresholdTable(table, fallback)


def group_scores(triples, scores, labels):
    out = {}
    for (h, r, t), s, y in zip(np.asarray(triples).tolist(), np.asarray(scores).tolist(), np.asarray(labels).tolist()):
        out.setdefault(r, []).append((s, y))
    return out


def classification_metrics(pred, labels):
    pred = np.asarray(pred).astype(bool)
    labels = np.asarray(labels).astype(bool)
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    acc = float(np.mean(pred == labels))
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    return acc, f1


def labeled_split(store, split):
    neg = store.split(f"{split}_neg")
    if neg is None or len(neg) == 0:
        raise ValueError(f"triple classification needs labeled negatives for the {split} split")
    pos = store.split(split)
    triples = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return triples, labels


def triple_classification(scorer, store, thresholds, split="test"):
    """Accuracy and F1 on positives plus labeled negatives of ``split``."""
    triples, labels = labeled_split(store, split)
    scores = scorer.score_triples(triples)
    pred = scores >= thresholds.for_relations(triples[:, 1])
    return classification_metrics(pred, labels)


def fit_thresholds(scorer, store, split="valid"):
    triples, labels = labeled_split(store, split)
    return tune_thresholds(group_scores(triples, scorer.score_triples(triples), labels))


# ---------------------------------------------------------------------------
# parameter accounting


@dataclass
class ParameterCounts:
    embedding: int
    selector: int = 0
    classifier: int = 0

    @property
    def total(self):
        return self.embedding + self.selector + self.classifier

    def millions(self, ndigits=2):
        return round(self.total / 1e6, ndigits)


def embedding_parameters(family, n_entities, n_relations, d):
    return n_entities * entity_width(family, d) + n_relations * relation_width(family, d)


def count_parameters(model, selector=None, ensemble=None, d=None):
    """Embedding, selector and tree parameters.

    With a selector, embeddings are only counted on the kept dimensions
    (``d`` overrides the dimension used for the embedding count). Selector
    parameters per kept dimension: n_v basis entries, the projected mean and
    the threshold.
    """
    if selector is not None and d is None:
        d = len(set().union(*(selector.dims(g).tolist() for g in selector.groups)))
    d = model.d if d is None else d
    emb = embedding_parameters(model.family, model.n_entities, model.n_relations, d)
    sel = 0
    if selector is not None:
        sel = sum(len(recs) * (selector.n_v + 2) for recs in selector.groups.values())
    clf = ensemble.n_parameters() if ensemble is not None else 0
    return ParameterCounts(emb, sel, clf)
