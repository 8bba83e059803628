"""k-Means (Lloyd) partitioning of relations into groups."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RelationPartition:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    objective_history: list = field(default_factory=list, compare=False)

    def group_of(self, r):
        if not 0 <= r < len(self.assignment):
            raise IndexError(f"relation {r} out of range [0, {len(self.assignment)})")
        return int(self.assignment[r])

    def members(self, group):
        return np.flatnonzero(self.assignment == group)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "partition.tsv", "w") as fh:
            for r, g in enumerate(self.assignment.tolist()):
                fh.write(f"{r}\t{g}\n")
        np.savetxt(directory / "centroids.txt", self.centroids, fmt="%.17g")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        rows = np.loadtxt(directory / "partition.tsv", dtype=np.int64, ndmin=2)
        if not np.array_equal(rows[:, 0], np.arange(len(rows))):
            raise ValueError(f"{directory / 'partition.tsv'}: relation ids must be dense and ordered")
        centroids = np.loadtxt(directory / "centroids.txt", dtype=np.float64, ndmin=2)
        return cls(len(centroids), centroids, rows[:, 1])


def group_of(partition, r):
    return partition.group_of(r)


def _sq_dists(x, c):
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def _objective(x, c, assign):
    return float(((x - c[assign]) ** 2).sum())


def kmeans(points, k, seed=0, max_iters=100):
    """Lloyd's algorithm with random distinct-point init and farthest-point empty-cluster repair.

    Returns ``(centroids, assignment, objective_history)``; the history holds
    the objective after each completed iteration and never increases.
    """
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=k, replace=False)].copy()
    assign = np.argmin(_sq_dists(x, centroids), axis=1)
    history = []
    for _ in range(max_iters):
        counts = np.bincount(assign, minlength=k)
        for g in np.flatnonzero(counts == 0):
            # reseed at the point farthest from its centroid, taken from a cluster that can spare it
            dist = ((x - centroids[assign]) ** 2).sum(axis=1)
            dist[counts[assign] <= 1] = -1.0
            far = int(np.argmax(dist))
            counts[assign[far]] -= 1
            assign[far] = g
            counts[g] = 1
        for g in range(k):
            centroids[g] = x[assign == g].mean(axis=0)
        history.append(_objective(x, centroids, assign))
        d2 = _sq_dists(x, centroids)
        # keep the current cluster on ties so the loop reaches a fixed point
        best = np.argmin(d2, axis=1)
        keep = d2[np.arange(n), assign] <= d2[np.arange(n), best]
        new_assign = np.where(keep, assign, best)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centroids, assign, history


def kmeans_restarts(points, k, seed=0, max_iters=100, n_init=20):
    """Best of ``n_init`` seeded Lloyd runs by final objective (first run wins ties)."""
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        run = kmeans(points, k, child, max_iters)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    return best


def cluster_relations(model, k=3, seed=0, max_iters=100, normalize=False, n_init=20):
    """Group relations by k-Means over their embedding rows (RotatE: the phase values)."""
    points = np.asarray(model.relation, dtype=np.float64)
    if not 1 <= k <= len(points):
        raise ValueError(f"k={k} must be between 1 and the number of relations ({len(points)})")
    if normalize:
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points = points / np.where(norms > 0, norms, 1.0)
    centroids, assign, history = kmeans_restarts(points, k, seed, max_iters, n_init)
    return RelationPartition(k, centroids, assign.astype(np.int64), history)
