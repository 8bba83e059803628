"""KGE score functions, self-adversarial training and embedding manifests.

Table layouts (d = embedding dimension):

=========  ==================  ==================  ===
family     entity row          relation row        n_v
=========  ==================  ==================  ===
TransE     d reals             d reals             3
DistMult   d reals             d reals             3
RotatE     [Re(d), Im(d)]      d phases            5
ComplEx    [Re(d), Im(d)]      [Re(d), Im(d)]      6
=========  ==================  ==================  ===
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FAMILIES = ("TransE", "DistMult", "RotatE", "ComplEx")
_COMPLEX_ENTITY = {"RotatE", "ComplEx"}
DEFAULT_GAMMA = {"TransE": 12.0, "RotatE": 12.0, "DistMult": 0.0, "ComplEx": 0.0}
# TransE norm gradient is undefined at h + r == t
_NORM_EPS = 1e-12


class TrainingDiverged(FloatingPointError):
    pass


class EmbeddingFormatError(ValueError):
    pass


def check_family(family):
    if family not in FAMILIES:
        raise ValueError(f"unknown KGE family {family!r}; expected one of {FAMILIES}")
    return family


def entity_width(family, d):
    return 2 * d if check_family(family) in _COMPLEX_ENTITY else d


def relation_width(family, d):
    return 2 * d if check_family(family) == "ComplEx" else d


def n_vars(family):
    return {"TransE": 3, "DistMult": 3, "RotatE": 5, "ComplEx": 6}[check_family(family)]


def dim_columns(family, d, dim):
    """Columns of the entity and relation rows that hold dimension ``dim``."""
    if not 0 <= dim < d:
        raise IndexError(f"dimension {dim} out of range for d={d}")
    ent = [dim, d + dim] if family in _COMPLEX_ENTITY else [dim]
    rel = [dim, d + dim] if family == "ComplEx" else [dim]
    return ent, rel


@dataclass
class EmbeddingModel:
    family: str
    d: int
    entity: np.ndarray
    relation: np.ndarray
    gamma: float = 0.0
    seed: int | None = None
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        check_family(self.family)
        self.entity = np.asarray(self.entity, dtype=np.float64)
        self.relation = np.asarray(self.relation, dtype=np.float64)
        if self.entity.ndim != 2 or self.entity.shape[1] != entity_width(self.family, self.d):
            raise EmbeddingFormatError(
                f"{self.family} entity rows must have width {entity_width(self.family, self.d)}, "
                f"got shape {self.entity.shape}"
            )
        if self.relation.ndim != 2 or self.relation.shape[1] != relation_width(self.family, self.d):
            raise EmbeddingFormatError(
                f"{self.family} relation rows must have width {relation_width(self.family, self.d)}, "
                f"got shape {self.relation.shape}"
            )

    @property
    def n_entities(self):
        return self.entity.shape[0]

    @property
    def n_relations(self):
        return self.relation.shape[0]

    @property
    def n_v(self):
        return n_vars(self.family)

    def copy(self):
        return EmbeddingModel(
            self.family, self.d, self.entity.copy(), self.relation.copy(), self.gamma, self.seed,
            list(self.loss_history),
        )


def init_model(family, n_entities, n_relations, d, gamma=None, seed=0):
    """Uniform init in [-6/sqrt(d), 6/sqrt(d)]; RotatE phases uniform in [-pi, pi]."""
    check_family(family)
    rng = np.random.default_rng(seed)
    bound = 6.0 / math.sqrt(d)
    ent = rng.uniform(-bound, bound, size=(n_entities, entity_width(family, d)))
    if family == "RotatE":
        rel = rng.uniform(-math.pi, math.pi, size=(n_relations, d))
    else:
        rel = rng.uniform(-bound, bound, size=(n_relations, relation_width(family, d)))
    if gamma is None:
        gamma = DEFAULT_GAMMA[family]
    return EmbeddingModel(family, d, ent, rel, float(gamma), seed)


# ---------------------------------------------------------------------------
# score functions on broadcastable arrays: h, t (..., entity width), r (..., relation width)


def score_arrays(family, d, h, r, t):
    if family == "TransE":
        u = h + r - t
        return -np.sqrt(np.sum(u * u, axis=-1))
    if family == "DistMult":
        return np.sum(h * r * t, axis=-1)
    if family == "RotatE":
        cos, sin = np.cos(r), np.sin(r)
        h_re, h_im = h[..., :d], h[..., d:]
        d_re = h_re * cos - h_im * sin - t[..., :d]
        d_im = h_re * sin + h_im * cos - t[..., d:]
        return -np.sum(d_re * d_re + d_im * d_im, axis=-1)
    if family == "ComplEx":
        h_re, h_im = h[..., :d], h[..., d:]
        r_re, r_im = r[..., :d], r[..., d:]
        t_re, t_im = t[..., :d], t[..., d:]
        return np.sum(
            h_re * r_re * t_re + h_im * r_re * t_im + h_re * r_im * t_im - h_im * r_im * t_re, axis=-1
        )
    raise ValueError(family)


def score_and_grad(family, d, h, r, t):
    """Score plus its partial derivatives w.r.t. h, r and t (inputs share leading shape)."""
    if family == "TransE":
        u = h + r - t
        norm = np.sqrt(np.sum(u * u, axis=-1))
        unit = u / np.maximum(norm, _NORM_EPS)[..., None]
        return -norm, -unit, -unit, unit
    if family == "DistMult":
        return np.sum(h * r * t, axis=-1), r * t, h * t, h * r
    if family == "RotatE":
        cos, sin = np.cos(r), np.sin(r)
        h_re, h_im = h[..., :d], h[..., d:]
        hr_re = h_re * cos - h_im * sin
        hr_im = h_re * sin + h_im * cos
        d_re = hr_re - t[..., :d]
        d_im = hr_im - t[..., d:]
        f = -np.sum(d_re * d_re + d_im * d_im, axis=-1)
        dh = np.concatenate([-2 * (d_re * cos + d_im * sin), -2 * (d_im * cos - d_re * sin)], axis=-1)
        dr = -2 * (d_im * hr_re - d_re * hr_im)
        dt = np.concatenate([2 * d_re, 2 * d_im], axis=-1)
        return f, dh, dr, dt
    if family == "ComplEx":
        h_re, h_im = h[..., :d], h[..., d:]
        r_re, r_im = r[..., :d], r[..., d:]
        t_re, t_im = t[..., :d], t[..., d:]
        f = np.sum(
            h_re * r_re * t_re + h_im * r_re * t_im + h_re * r_im * t_im - h_im * r_im * t_re, axis=-1
        )
        dh = np.concatenate([r_re * t_re + r_im * t_im, r_re * t_im - r_im * t_re], axis=-1)
        dr = np.concatenate([h_re * t_re + h_im * t_im, h_re * t_im - h_im * t_re], axis=-1)
        dt = np.concatenate([h_re * r_re - h_im * r_im, h_im * r_re + h_re * r_im], axis=-1)
        return f, dh, dr, dt
    raise ValueError(family)


def score_triples(model, triples):
    """Raw f_r(h, t) for an ``(n, 3)`` array of triples."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    h = model.entity[triples[:, 0]]
    r = model.relation[triples[:, 1]]
    t = model.entity[triples[:, 2]]
    return score_arrays(model.family, model.d, h, r, t)


def score(model, h, r, t):
    """f_r(h, t) for a single triple of ids."""
    for name, idx, n in (("head", h, model.n_entities), ("relation", r, model.n_relations),
                         ("tail", t, model.n_entities)):
        if not 0 <= idx < n:
            raise IndexError(f"{name} id {idx} out of range [0, {n})")
    return float(score_triples(model, [(h, r, t)])[0])


def score_all_tails(model, h, r):
    return score_arrays(model.family, model.d, model.entity[h][None], model.relation[r][None], model.entity)


def score_all_heads(model, r, t):
    return score_arrays(model.family, model.d, model.entity, model.relation[r][None], model.entity[t][None])


# ---------------------------------------------------------------------------
# negatives and loss


def sample_negatives_uniform(triples, n_neg, rng, n_entities):
    """Corrupt head or tail (uniform side) with a uniformly drawn *different* entity.

    ``triples`` may be a single triple or an ``(n, 3)`` array; the result has
    shape ``(n_neg, 3)`` or ``(n, n_neg, 3)`` accordingly.
    """
    if n_neg < 1:
        raise ValueError("n_neg must be >= 1")
    if n_entities < 2:
        raise ValueError("cannot corrupt a triple when there is a single entity")
    triples = np.asarray(triples, dtype=np.int64)
    single = triples.ndim == 1
    triples = triples.reshape(-1, 3)
    n = len(triples)
    side = np.where(rng.random((n, n_neg)) < 0.5, 0, 2)
    true_ent = np.where(side == 0, triples[:, [0]], triples[:, [2]])
    # uniform over the other n_entities - 1 ids (equivalent to reject-and-redraw)
    draw = rng.integers(0, n_entities - 1, size=(n, n_neg))
    draw = draw + (draw >= true_ent)
    neg = np.repeat(triples[:, None, :], n_neg, axis=1)
    rows, cols = np.nonzero(side == 0)
    neg[rows, cols, 0] = draw[rows, cols]
    rows, cols = np.nonzero(side == 2)
    neg[rows, cols, 2] = draw[rows, cols]
    return neg[0] if single else neg


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def adversarial_weights(neg_scores, alpha):
    """Softmax of ``alpha * neg_scores`` over the last axis."""
    z = alpha * np.asarray(neg_scores, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def self_adversarial_loss(model, positive, negatives, alpha, gamma=None, weights=None):
    """Loss of one positive against its negatives; weights are treated as constants.

    Pass ``weights`` to evaluate with fixed negative weights (useful for
    finite-difference checks, which must hold the weights constant).
    """
    negatives = np.asarray(negatives, dtype=np.int64).reshape(-1, 3)
    if len(negatives) == 0:
        raise ValueError("at least one negative is required")
    if not (np.isfinite(model.entity).all() and np.isfinite(model.relation).all()):
        raise FloatingPointError("non-finite embedding values")
    gamma = model.gamma if gamma is None else gamma
    s_pos = gamma + score_triples(model, positive)[0]
    s_neg = gamma + score_triples(model, negatives)
    if weights is None:
        weights = adversarial_weights(s_neg, alpha)
    return float(-_log_sigmoid(s_pos) - np.sum(weights * _log_sigmoid(-s_neg)))


def loss_and_grads(model, pos, neg, alpha, gamma=None, weights=None):
    """Mean batch loss and sparse gradients.

    pos: (B, 3); neg: (B, n, 3). Returns ``loss, (ent_ids, ent_grads), (rel_ids, rel_grads)``
    with one gradient row per occurrence (callers accumulate duplicates).
    """
    gamma = model.gamma if gamma is None else gamma
    fam, d = model.family, model.d
    E, R = model.entity, model.relation
    B = len(pos)
    f_p, dh_p, dr_p, dt_p = score_and_grad(fam, d, E[pos[:, 0]], R[pos[:, 1]], E[pos[:, 2]])
    f_n, dh_n, dr_n, dt_n = score_and_grad(fam, d, E[neg[..., 0]], R[neg[..., 1]], E[neg[..., 2]])
    s_p, s_n = gamma + f_p, gamma + f_n
    if weights is None:
        weights = adversarial_weights(s_n, alpha)
    loss = float(np.mean(-_log_sigmoid(s_p) - np.sum(weights * _log_sigmoid(-s_n), axis=-1)))
    c_p = -_sigmoid(-s_p) / B  # dL/ds_pos
    c_n = weights * _sigmoid(s_n) / B  # dL/ds_neg
    ent_ids = np.concatenate([pos[:, 0], pos[:, 2], neg[..., 0].ravel(), neg[..., 2].ravel()])
    we = E.shape[1]
    ent_grads = np.concatenate([
        c_p[:, None] * dh_p,
        c_p[:, None] * dt_p,
        (c_n[..., None] * dh_n).reshape(-1, we),
        (c_n[..., None] * dt_n).reshape(-1, we),
    ])
    rel_ids = np.concatenate([pos[:, 1], neg[..., 1].ravel()])
    rel_grads = np.concatenate([c_p[:, None] * dr_p, (c_n[..., None] * dr_n).reshape(-1, R.shape[1])])
    return loss, (ent_ids, ent_grads), (rel_ids, rel_grads)


def dense_grads(model, pos, neg, alpha, gamma=None, weights=None):
    """Gradients accumulated into full-size tables (small models / gradient checks)."""
    loss, (ei, eg), (ri, rg) = loss_and_grads(model, pos, neg, alpha, gamma, weights)
    g_ent = np.zeros_like(model.entity)
    g_rel = np.zeros_like(model.relation)
    np.add.at(g_ent, ei, eg)
    np.add.at(g_rel, ri, rg)
    return loss, g_ent, g_rel


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 100
    batch_size: int = 512
    n_neg: int = 64
    alpha: float = 1.0
    gamma: float | None = None
    seed: int = 0
    optimizer: str = "sgd"
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.n_neg < 1:
            raise ValueError("epochs, batch_size and n_neg must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _unique_rows(ids, grads):
    uniq, inv = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(uniq), grads.shape[1]))
    np.add.at(acc, inv, grads)
    return uniq, acc


class _SparseAdam:
    """Adam whose moments are only touched on rows present in the batch."""

    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.step = 0

    def update(self, table, rows, grad):
        self.step += 1
        m = self.b1 * self.m[rows] + (1 - self.b1) * grad
        v = self.b2 * self.v[rows] + (1 - self.b2) * grad * grad
        self.m[rows], self.v[rows] = m, v
        mhat = m / (1 - self.b1 ** self.step)
        vhat = v / (1 - self.b2 ** self.step)
        table[rows] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(store, family, d, config=None, init=None):
    """Mini-batch training of a KGE model on ``store.train`` with self-adversarial negatives.

    Returns the trained model; per-epoch mean losses are in ``model.loss_history``.
    """
    config = config or TrainConfig()
    gamma = DEFAULT_GAMMA[check_family(family)] if config.gamma is None else config.gamma
    model = init.copy() if init is not None else init_model(
        family, store.n_entities, store.n_relations, d, gamma, config.seed
    )
    model.gamma = gamma
    model.seed = config.seed
    model.loss_history = []
    triples = np.asarray(store.train, dtype=np.int64)
    if len(triples) == 0:
        raise ValueError("empty train split")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    if config.optimizer == "adam":
        opt_e = _SparseAdam(model.entity.shape, config.learning_rate)
        opt_r = _SparseAdam(model.relation.shape, config.learning_rate)
    for epoch in range(config.epochs):
        order = rng.permutation(len(triples))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            pos = triples[order[start:start + config.batch_size]]
            neg = sample_negatives_uniform(pos, config.n_neg, rng, store.n_entities)
            loss, (ei, eg), (ri, rg) = loss_and_grads(model, pos, neg, config.alpha, gamma)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss} at epoch {epoch + 1}, batch starting at {start}; "
                    f"try a smaller learning rate (now {config.learning_rate})"
                )
            e_rows, e_grad = _unique_rows(ei, eg)
            r_rows, r_grad = _unique_rows(ri, rg)
            if config.clip_norm:
                norm = math.sqrt(float(np.sum(e_grad ** 2) + np.sum(r_grad ** 2)))
                if norm > config.clip_norm:
                    e_grad *= config.clip_norm / norm
                    r_grad *= config.clip_norm / norm
            if config.optimizer == "adam":
                opt_e.update(model.entity, e_rows, e_grad)
                opt_r.update(model.relation, r_rows, r_grad)
            else:
                model.entity[e_rows] -= config.learning_rate * e_grad
                model.relation[r_rows] -= config.learning_rate * r_grad
            total += loss * len(pos)
            count += len(pos)
        model.loss_history.append(total / count)
        logger.debug("epoch %d loss %.6f", epoch + 1, model.loss_history[-1])
    if not (np.isfinite(model.entity).all() and np.isfinite(model.relation).all()):
        raise TrainingDiverged("embedding tables contain non-finite values after training")
    return model


# ---------------------------------------------------------------------------
# manifests

MANIFEST_FORMAT = "kgcprune-embedding"


def export_embeddings(model, manifest_path):
    """Write a JSON header plus entity/relation text tables next to it."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    stem = manifest_path.stem
    ent_file, rel_file = f"{stem}.entities.txt", f"{stem}.relations.txt"
    np.savetxt(manifest_path.parent / ent_file, model.entity, fmt="%.17g")
    np.savetxt(manifest_path.parent / rel_file, model.relation, fmt="%.17g")
    header = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "family": model.family,
        "d": model.d,
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
        "seed": model.seed,
        "gamma": model.gamma,
        "entity_table": ent_file,
        "relation_table": rel_file,
        "loss_history": model.loss_history,
    }
    manifest_path.write_text(json.dumps(header, indent=2))
    return manifest_path


def _read_table(path, n_rows, width, what):
    table = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if n_rows == 0:
        table = table.reshape(0, width)
    if table.shape != (n_rows, width):
        raise EmbeddingFormatError(f"{what} table {path} has shape {table.shape}, expected {(n_rows, width)}")
    return table


def import_embeddings(manifest_path, vocab=None):
    """Load a manifest written by :func:`export_embeddings` (or by hand, same layout)."""
    manifest_path = Path(manifest_path)
    header = json.loads(manifest_path.read_text())
    try:
        family, d = check_family(header["family"]), int(header["d"])
        n_e, n_r = int(header["n_entities"]), int(header["n_relations"])
    except (KeyError, ValueError) as exc:
        raise EmbeddingFormatError(f"bad manifest header {manifest_path}: {exc}") from exc
    if vocab is not None and (n_e, n_r) != (vocab.n_entities, vocab.n_relations):
        raise EmbeddingFormatError(
            f"manifest has {n_e} entities / {n_r} relations but the vocabulary has "
            f"{vocab.n_entities} / {vocab.n_relations}"
        )
    base = manifest_path.parent
    ent = _read_table(base / header["entity_table"], n_e, entity_width(family, d), "entity")
    rel = _read_table(base / header["relation_table"], n_r, relation_width(family, d), "relation")
    gamma = header.get("gamma")
    return EmbeddingModel(
        family, d, ent, rel,
        DEFAULT_GAMMA[family] if gamma is None else float(gamma),
        header.get("seed"),
        list(header.get("loss_history", [])),
    )
