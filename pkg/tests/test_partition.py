import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcprune import embed, partition


def model_with_relations(rel):
    rel = np.asarray(rel, dtype=float)
    d = rel.shape[1]
    return embed.EmbeddingModel("TransE", d, np.zeros((2, d)), rel)


def blobs(seed=0, per=6, d=4):
    rng = np.random.default_rng(seed)
    centers = np.array([[0] * d, [50] * d, [-50, 50] + [0] * (d - 2)], dtype=float)
    pts = np.concatenate([c + 0.5 * rng.standard_normal((per, d)) for c in centers])
    truth = np.repeat(np.arange(3), per)
    perm = rng.permutation(len(pts))
    return pts[perm], truth[perm]


def test_k1_single_group_with_mean_centroid():
    rel = np.random.default_rng(0).standard_normal((7, 3))
    p = partition.cluster_relations(model_with_relations(rel), k=1)
    assert (p.assignment == 0).all()
    assert np.allclose(p.centroids[0], rel.mean(axis=0))
    assert all(partition.group_of(p, r) == 0 for r in range(7))


def test_k_equals_r():
    rel = np.random.default_rng(1).standard_normal((5, 3))
    p = partition.cluster_relations(model_with_relations(rel), k=5)
    assert sorted(p.assignment.tolist()) == list(range(5))
    assert p.objective_history[-1] == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_blobs_recovered(seed):
    pts, truth = blobs(seed)
    p = partition.cluster_relations(model_with_relations(pts), k=3, seed=seed)
    # same partition up to relabeling
    pairs = set(zip(p.assignment.tolist(), truth.tolist()))
    assert len(pairs) == 3
    # exhaustive nearest-centroid check
    d2 = ((pts[:, None] - p.centroids[None]) ** 2).sum(-1)
    assert np.array_equal(np.argmin(d2, axis=1), p.assignment)
    blob2 = int(np.flatnonzero(truth == 2)[0])
    assert p.group_of(blob2) == p.assignment[truth == 2][0]


def test_k_out_of_range():
    m = model_with_relations(np.eye(3))
    with pytest.raises(ValueError):
        partition.cluster_relations(m, k=4)
    with pytest.raises(ValueError):
        partition.cluster_relations(m, k=0)


def test_group_of_errors_and_purity():
    p = partition.cluster_relations(model_with_relations(np.eye(3)), k=2)
    with pytest.raises(IndexError):
        p.group_of(3)
    assert [p.group_of(r) for r in range(3)] == [p.group_of(r) for r in range(3)]


def test_seed_determinism():
    pts, _ = blobs(3, per=10)
    a = partition.cluster_relations(model_with_relations(pts), k=4, seed=9)
    b = partition.cluster_relations(model_with_relations(pts), k=4, seed=9)
    assert np.array_equal(a.assignment, b.assignment) and np.array_equal(a.centroids, b.centroids)


def test_save_load(tmp_path):
    pts, _ = blobs(0)
    p = partition.cluster_relations(model_with_relations(pts), k=3)
    p.save(tmp_path)
    q = partition.RelationPartition.load(tmp_path)
    assert np.array_equal(p.assignment, q.assignment) and np.array_equal(p.centroids, q.centroids)


def test_rotate_clusters_on_phases():
    m = embed.init_model("RotatE", 3, 6, 4, seed=0)
    p = partition.cluster_relations(m, k=2)
    assert p.centroids.shape == (2, 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 25), st.integers(1, 5), st.integers(0, 10_000), st.booleans())
def test_kmeans_invariants(n, k, seed, dupes):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, 3))
    if dupes:
        pts[: n // 2] = pts[0]
    c, assign, hist = partition.kmeans(pts, k, seed)
    assert np.all(np.diff(hist) <= 1e-9 * max(1.0, hist[0]))
    assert np.bincount(assign, minlength=k).min() >= 1
    assert np.isfinite(c).all()
