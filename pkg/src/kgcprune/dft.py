"""Per-group feature pruning: 1-D PCA per embedding dimension, then a cross-entropy split test.

For every embedding dimension the head, relation and tail variables of a
labeled triple form an ``n_v``-vector. Those vectors are centered and
projected on their first principal direction; the resulting scalar feature
is scored by the lowest weighted binary entropy over a scan of left/right
split thresholds. Low entropy means the dimension separates true triples
from corrupted ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .embed import dim_columns, n_vars, sample_negatives_uniform

DEFAULT_BINS = 31
SCHEMES = ("lowest", "highest", "random", "none")


class PCA1D(NamedTuple):
    basis: np.ndarray
    values: np.ndarray
    mean: np.ndarray
    singular_value: float
    degenerate: bool


class DFTResult(NamedTuple):
    entropy: float
    threshold: float
    degenerate: bool


@dataclass(frozen=True)
class DimensionRecord:
    dim: int
    basis: np.ndarray
    mean: np.ndarray
    threshold: float
    entropy: float
    degenerate: bool = False


@dataclass
class FeatureSelector:
    family: str
    d: int
    groups: dict[int, list[DimensionRecord]]
    all_scores: dict[int, list[DimensionRecord]] = field(default_factory=dict, repr=False)
    scheme: str = "lowest"

    @property
    def n_v(self):
        return n_vars(self.family)

    def d_out(self, group):
        return len(self.groups[group])

    def dims(self, group):
        return np.array([rec.dim for rec in self.groups[group]], dtype=np.int64)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "selector.meta").write_text(f"{self.family}\t{self.d}\t{self.scheme}\n")
        for g, records in self.groups.items():
            _write_records(directory / f"selector.group{g}.tsv", records)
        for g, records in self.all_scores.items():
            _write_records(directory / f"scores.group{g}.tsv", records)

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        family, d, scheme = (directory / "selector.meta").read_text().split()
        groups, scores = {}, {}
        for path in sorted(directory.glob("selector.group*.tsv")):
            groups[int(path.stem.split("group")[1])] = _read_records(path)
        for path in sorted(directory.glob("scores.group*.tsv")):
            scores[int(path.stem.split("group")[1])] = _read_records(path)
        return cls(family, int(d), groups, scores, scheme)


def _write_records(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fields = [str(rec.dim), repr(rec.entropy), repr(rec.threshold)]
            fields += [repr(float(v)) for v in rec.mean] + [repr(float(v)) for v in rec.basis]
            fh.write("\t".join(fields) + "\n")


def _read_records(path):
    records = []
    with open(path) as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            n_v = (len(parts) - 3) // 2
            vals = np.array([float(v) for v in parts[3:]])
            records.append(DimensionRecord(
                int(parts[0]), vals[n_v:], vals[:n_v], float(parts[2]), float(parts[1])
            ))
    return records


def assemble_dim_variables(model, triples, dim):
    """Rows ``[v_h, v_r, v_t]`` of the ``dim``-th per-dimension variables of each triple."""
    ecols, rcols = dim_columns(model.family, model.d, dim)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return np.concatenate([
        model.entity[triples[:, 0]][:, ecols],
        model.relation[triples[:, 1]][:, rcols],
        model.entity[triples[:, 2]][:, ecols],
    ], axis=1)


def _project_columns(cols, mean, basis):
    """Sum of ``(col_k - mean_k) * basis_k`` accumulated in column order.

    The fixed order makes per-triple and batched projections bit-identical.
    """
    acc = 0.0
    for k, col in enumerate(cols):
        acc = acc + (col - mean[k]) * basis[k]
    return acc


def fit_pca_1d(V):
    """First principal direction of the rows of ``V`` and the projected scalars.

    The direction is the top eigenvector of the centered scatter matrix (the
    right singular vector of the largest singular value), signed so its first
    nonzero component is positive.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or len(V) < 2:
        raise ValueError("need a 2-D matrix with at least two rows")
    mean = V.mean(axis=0)
    C = V - mean
    scatter = C.T @ C
    n_v = V.shape[1]
    if not np.any(C):
        basis = np.zeros(n_v)
        basis[0] = 1.0
        return PCA1D(basis, np.zeros(len(V)), mean, 0.0, True)
    evals, evecs = np.linalg.eigh(scatter)
    basis = evecs[:, -1].copy()
    nz = np.flatnonzero(np.abs(basis) > 1e-12)
    if basis[nz[0]] < 0:
        basis = -basis
    basis[np.abs(basis) <= 1e-15] = 0.0
    basis /= math.sqrt(float(basis @ basis))
    values = _project_columns(V.T, mean, basis)
    return PCA1D(basis, values, mean, math.sqrt(max(float(evals[-1]), 0.0)), False)


def _binary_entropy(p):
    p = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(p < 1, (1 - p) * np.log1p(-p), 0.0))
    return h


def split_candidates(lo, hi, n_bins):
    return lo + (hi - lo) * np.arange(1, n_bins + 1) / (n_bins + 1)


def dft_cross_entropy(values, labels, n_bins=DEFAULT_BINS):
    """Lowest weighted left/right entropy over ``n_bins`` uniform thresholds inside (min, max).

    Samples with value <= threshold go left. Natural log; ``0 log 0 = 0``.
    """
    e = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("need at least one sample of each label")
    lo, hi = float(e.min()), float(e.max())
    n = len(e)
    if lo == hi:
        return DFTResult(float(_binary_entropy(y.mean())), lo, True)
    thr = split_candidates(lo, hi, n_bins)
    order = np.argsort(e, kind="stable")
    e_sorted = e[order]
    pos_cum = np.concatenate([[0], np.cumsum(y[order])])
    n_left = np.searchsorted(e_sorted, thr, side="right")
    pos_left = pos_cum[n_left]
    n_right = n - n_left
    pos_right = pos_cum[-1] - pos_left
    with np.errstate(divide="ignore", invalid="ignore"):
        h_left = np.where(n_left > 0, _binary_entropy(pos_left / np.maximum(n_left, 1)), 0.0)
        h_right = np.where(n_right > 0, _binary_entropy(pos_right / np.maximum(n_right, 1)), 0.0)
    weighted = (n_left * h_left + n_right * h_right) / n
    best = int(np.argmin(weighted))
    return DFTResult(float(weighted[best]), float(thr[best]), False)


def score_dimension(V, labels, n_bins=DEFAULT_BINS, dim=0):
    pca = fit_pca_1d(V)
    if pca.degenerate:
        return DimensionRecord(dim, pca.basis, pca.mean, 0.0, math.inf, True)
    res = dft_cross_entropy(pca.values, labels, n_bins)
    return DimensionRecord(dim, pca.basis, pca.mean, res.threshold, res.entropy, res.degenerate)


def score_all_dimensions(model, triples, labels, n_bins=DEFAULT_BINS):
    """One DimensionRecord per embedding dimension, in dimension order.

    Degenerate (zero-variance) dimensions get the worst finite entropy plus a
    small margin so they always rank last.
    """
    records = []
    for dim in range(model.d):
        V = assemble_dim_variables(model, triples, dim)
        records.append(score_dimension(V, labels, n_bins, dim))
    finite = [r.entropy for r in records if math.isfinite(r.entropy)]
    worst = (max(finite) if finite else math.log(2)) + 1e-6
    return [
        DimensionRecord(r.dim, r.basis, r.mean, r.threshold, worst, True) if not math.isfinite(r.entropy) else r
        for r in records
    ]


def choose_dimensions(records, d_out, scheme="lowest", rng=None):
    """Pick ``d_out`` records according to the pruning scheme; result sorted by ascending entropy."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown pruning scheme {scheme!r}")
    if not 1 <= d_out <= len(records):
        raise ValueError(f"d_out={d_out} must be in [1, {len(records)}]")
    ranked = sorted(records, key=lambda r: (r.entropy, r.dim))
    if scheme == "lowest":
        chosen = ranked[:d_out]
    elif scheme == "highest":
        chosen = ranked[len(ranked) - d_out:]
    elif scheme == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        idx = set(rng.choice(len(records), size=d_out, replace=False).tolist())
        chosen = [r for r in ranked if r.dim in idx]
    else:
        chosen = ranked
    return chosen


def group_samples(store, partition, group, neg_ratio, rng):
    """Train triples of a relation group labeled 1 plus ``neg_ratio`` uniform corruptions each, labeled 0."""
    pos = store.train[np.isin(store.train[:, 1], partition.members(group))]
    if len(pos) == 0:
        raise ValueError(f"relation group {group} has no training triples")
    neg = sample_negatives_uniform(pos, neg_ratio, rng, store.n_entities).reshape(-1, 3)
    triples = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)])
    return triples, labels


def select_from_samples(model, triples, labels, d_out, scheme="lowest", n_bins=DEFAULT_BINS, rng=None):
    """Score every dimension on labeled triples and keep ``d_out`` of them.

    Returns ``(chosen, all_records)``.
    """
    if d_out > model.d:
        raise ValueError(f"d_out={d_out} exceeds embedding dimension {model.d}")
    records = score_all_dimensions(model, triples, labels, n_bins)
    if scheme == "none":
        d_out = model.d
    return choose_dimensions(records, d_out, scheme, rng), records


def select_features(model, store, partition, d_out, neg_ratio=1, seed=0, scheme="lowest",
                    n_bins=DEFAULT_BINS, per_group=True):
    """Fit a FeatureSelector with one dimension subset (and PCA bases) per relation group.

    ``per_group=False`` fits one shared selection on all training triples and
    reuses it for every group.
    """
    if d_out > model.d:
        raise ValueError(f"d_out={d_out} exceeds embedding dimension {model.d}")
    rng = np.random.default_rng(seed)
    groups, scores = {}, {}
    if per_group:
        for g in range(partition.k):
            triples, labels = group_samples(store, partition, g, neg_ratio, rng)
            groups[g], scores[g] = select_from_samples(model, triples, labels, d_out, scheme, n_bins, rng)
    else:
        from .partition import RelationPartition
        single = RelationPartition(1, np.zeros((1, 1)), np.zeros(store.n_relations, dtype=np.int64))
        triples, labels = group_samples(store, single, 0, neg_ratio, rng)
        chosen, records = select_from_samples(model, triples, labels, d_out, scheme, n_bins, rng)
        for g in range(partition.k):
            groups[g], scores[g] = chosen, records
    return FeatureSelector(model.family, model.d, groups, scores, scheme)


# ---------------------------------------------------------------------------
# projection


def group_projection(selector, group):
    """Stacked (dims, means, bases) of a group's selected records."""
    records = selector.groups[group]
    dims = np.array([r.dim for r in records], dtype=np.int64)
    means = np.stack([r.mean for r in records]) if records else np.zeros((0, selector.n_v))
    bases = np.stack([r.basis for r in records]) if records else np.zeros((0, selector.n_v))
    return dims, means, bases


def dimension_views(selector, dims, h_rows, r_rows, t_rows):
    """Per-dimension variable columns, each of shape ``(..., len(dims))``, in [h, r, t] order."""
    d = selector.d
    cols = []
    for rows, is_rel in ((h_rows, False), (r_rows, True), (t_rows, False)):
        complex_cols = (selector.family == "ComplEx") if is_rel else selector.family in ("RotatE", "ComplEx")
        cols.append(rows[..., dims])
        if complex_cols:
            cols.append(rows[..., d + dims])
    return cols


def project_rows(selector, group, h_rows, r_rows, t_rows):
    """Features for broadcastable batches of embedding rows; returns ``(..., d_out)``."""
    dims, means, bases = group_projection(selector, group)
    cols = dimension_views(selector, dims, np.asarray(h_rows), np.asarray(r_rows), np.asarray(t_rows))
    return _project_columns(cols, means.T, bases.T)


def raw_rows(selector, group, h_rows, r_rows, t_rows):
    """Unprojected variables of the kept dims; returns ``(..., n_v * d_out)``."""
    dims, _, _ = group_projection(selector, group)
    cols = dimension_views(selector, dims, np.asarray(h_rows), np.asarray(r_rows), np.asarray(t_rows))
    cols = np.broadcast_arrays(*cols)
    return np.concatenate(cols, axis=-1)


FEATURE_MODES = ("pca", "raw")


def feature_rows(selector, group, h_rows, r_rows, t_rows, mode="pca"):
    if mode == "pca":
        return project_rows(selector, group, h_rows, r_rows, t_rows)
    if mode == "raw":
        return raw_rows(selector, group, h_rows, r_rows, t_rows)
    raise ValueError(f"unknown feature mode {mode!r}; expected {FEATURE_MODES}")


def triple_features(selector, group, model, triples, mode="pca"):
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return feature_rows(
        selector, group, model.entity[triples[:, 0]], model.relation[triples[:, 1]], model.entity[triples[:, 2]],
        mode,
    )


def project(selector, group, h_emb, r_emb, t_emb):
    """Feature vector (length d_out) of one triple given its embedding rows."""
    return np.asarray(project_rows(selector, group, h_emb, r_emb, t_emb), dtype=np.float64)


def project_triples(selector, group, model, triples):
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return project_rows(
        selector, group, model.entity[triples[:, 0]], model.relation[triples[:, 1]], model.entity[triples[:, 2]]
    )


def write_curve(path, records):
    """CSV of (rank, dim, H) sorted by ascending entropy, for the pruning-curve plot."""
    ranked = sorted(records, key=lambda r: (r.entropy, r.dim))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "dim", "H"])
        for i, rec in enumerate(ranked, 1):
            w.writerow([i, rec.dim, repr(rec.entropy)])
