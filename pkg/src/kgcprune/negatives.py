"""Negatives for classifier training: uniform, type-pool constrained and score-mined."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed import sample_negatives_uniform, score_triples

SCHEMES = ("random", "ontology", "embedding")


@dataclass(frozen=True)
class NegSpec:
    scheme: str = "embedding"
    n_neg: int = 2
    pool_size: int = 32
    seed: int = 0
    exclude_known: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown negative-sampling scheme {self.scheme!r}; expected {SCHEMES}")
        if self.n_neg < 1:
            raise ValueError("n_neg must be >= 1")
        if self.scheme == "embedding" and self.pool_size < self.n_neg:
            raise ValueError("pool_size must be >= n_neg")


def _draw_excluding(rng, pool, exclude):
    """Uniform draw from ``pool`` minus one value, or None if nothing is left."""
    i = np.searchsorted(pool, exclude)
    present = i < len(pool) and pool[i] == exclude
    size = len(pool) - int(present)
    if size <= 0:
        return None
    j = int(rng.integers(size))
    if present and j >= i:
        j += 1
    return int(pool[j])


def ontology_negatives(triple, pools, n_neg, rng, n_entities):
    """Corrupt head (from the relation's head pool) or tail (from its tail pool), side uniform.

    When the pool holds nothing but the true entity the draw falls back to a
    uniform entity different from the true one.
    """
    h, r, t = (int(x) for x in triple)
    out = []
    for _ in range(n_neg):
        if rng.random() < 0.5:
            e = _draw_excluding(rng, pools.head_pool(r), h)
            if e is None:
                e = int(sample_negatives_uniform_side(h, rng, n_entities))
            out.append((e, r, t))
        else:
            e = _draw_excluding(rng, pools.tail_pool(r), t)
            if e is None:
                e = int(sample_negatives_uniform_side(t, rng, n_entities))
            out.append((h, r, e))
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def sample_negatives_uniform_side(true_entity, rng, n_entities):
    if n_entities < 2:
        raise ValueError("cannot corrupt a triple when there is a single entity")
    e = int(rng.integers(n_entities - 1))
    return e + (e >= true_entity)


def _corrupted_entity(candidates, positive):
    """The entity id placed in the corrupted slot of each candidate."""
    head_changed = candidates[..., 0] != positive[..., 0]
    return np.where(head_changed, candidates[..., 0], candidates[..., 2])


def top_scoring(positive, candidates, scores, n_neg):
    """Indices of the ``n_neg`` best candidates; ties go to the lower corrupted-entity id."""
    ent = _corrupted_entity(candidates, positive)
    order = np.lexsort((ent, -scores))
    return order[:n_neg]


def embedding_negatives(triple, model, m, n_neg, rng, filter_index=None):
    """Draw ``m`` uniform corruptions and keep the ``n_neg`` with the highest ``gamma + f_r``.

    Candidates that are known true (per ``filter_index``) are redrawn.
    """
    if m < n_neg:
        raise ValueError("pool size m must be >= n_neg")
    triple = np.asarray(triple, dtype=np.int64)
    cand = sample_negatives_uniform(triple, m, rng, model.n_entities)
    if filter_index is not None:
        cand = _redraw_known(cand[None], triple[None], filter_index, rng, model.n_entities)[0]
    scores = model.gamma + score_triples(model, cand)
    return cand[top_scoring(triple, cand, scores, n_neg)]


def _redraw_known(cand, pos, filter_index, rng, n_entities, max_rounds=10):
    """Replace candidates that are known-true triples with fresh uniform draws (bounded retries)."""
    cand = cand.copy()
    for _ in range(max_rounds):
        bad = filter_index.contains_many(cand.reshape(-1, 3)).reshape(cand.shape[:-1])
        if not bad.any():
            break
        rows, cols = np.nonzero(bad)
        fresh = sample_negatives_uniform(pos[rows], 1, rng, n_entities)[:, 0]
        cand[rows, cols] = fresh
    return cand


def sample_batch(positives, spec, rng, n_entities, pools=None, model=None, filter_index=None, chunk=4096):
    """Negatives for many positives at once; returns ``(n_pos, spec.n_neg, 3)``."""
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if spec.scheme == "random":
        neg = sample_negatives_uniform(positives, spec.n_neg, rng, n_entities)
        if filter_index is not None and spec.exclude_known:
            neg = _redraw_known(neg, positives, filter_index, rng, n_entities)
        return neg
    if spec.scheme == "ontology":
        if pools is None:
            raise ValueError("ontology negatives need type pools")
        return np.stack([ontology_negatives(p, pools, spec.n_neg, rng, n_entities) for p in positives])
    if model is None:
        raise ValueError("embedding negatives need a trained model")
    out = np.empty((len(positives), spec.n_neg, 3), dtype=np.int64)
    for lo in range(0, len(positives), chunk):
        pos = positives[lo:lo + chunk]
        cand = sample_negatives_uniform(pos, spec.pool_size, rng, n_entities)
        if filter_index is not None and spec.exclude_known:
            cand = _redraw_known(cand, pos, filter_index, rng, n_entities)
        scores = model.gamma + score_triples(model, cand.reshape(-1, 3)).reshape(cand.shape[:2])
        ent = _corrupted_entity(cand, pos[:, None, :])
        # descending score, then ascending corrupted entity id
        order = np.lexsort((ent, -scores), axis=-1)[:, :spec.n_neg]
        out[lo:lo + len(pos)] = np.take_along_axis(cand, order[..., None], axis=1)
    return out
