"""Synthetic signal/noise embeddings shared by the pruning tests and the acceptance suite."""

import math

import numpy as np

from kgcprune import embed


def signal_noise_model(seed, d=64, n_signal=8, n_samples=1000, gap=3.0):
    """TransE model plus labeled triples where only ``n_signal`` dims carry the label.

    Every sample owns a distinct head and tail entity and shares relation 0.
    In a signal dim the head and tail values are equal to ``+gap`` (label 1) or
    ``-gap`` (label 0) plus small noise, so the leading principal direction is
    roughly (1, 0, 1) and the projection separates the classes. Noise dims are
    standard normal regardless of label.
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros(n_samples, dtype=np.int64)
    labels[rng.permutation(n_samples)[: n_samples // 2]] = 1
    signal = np.sort(rng.choice(d, size=n_signal, replace=False))
    ent = rng.standard_normal((2 * n_samples, d))
    sign = np.where(labels == 1, 1.0, -1.0)
    for j in signal:
        base = gap * sign + 0.3 * rng.standard_normal(n_samples)
        ent[0::2, j] = base + 0.3 * rng.standard_normal(n_samples)
        ent[1::2, j] = base + 0.3 * rng.standard_normal(n_samples)
    rel = rng.standard_normal((1, d))
    model = embed.EmbeddingModel("TransE", d, ent, rel, 12.0)
    triples = np.stack([np.arange(0, 2 * n_samples, 2), np.zeros(n_samples, dtype=np.int64),
                        np.arange(1, 2 * n_samples, 2)], axis=1)
    return model, triples, labels, signal


def brute_entropy(values, labels, n_bins=31):
    """Plain-loop weighted binary entropy over uniform interior thresholds."""
    values = [float(v) for v in values]
    labels = [int(y) for y in labels]
    lo, hi = min(values), max(values)
    n = len(values)

    def h(pos, tot):
        if tot == 0 or pos == 0 or pos == tot:
            return 0.0
        p = pos / tot
        return -(p * math.log(p) + (1 - p) * math.log(1 - p))

    if lo == hi:
        return h(sum(labels), n), lo
    best = None
    for i in range(1, n_bins + 1):
        thr = lo + (hi - lo) * i / (n_bins + 1)
        left = [y for v, y in zip(values, labels) if v <= thr]
        right = [y for v, y in zip(values, labels) if v > thr]
        val = (len(left) * h(sum(left), len(left)) + len(right) * h(sum(right), len(right))) / n
        if best is None or val < best[0]:
            best = (val, thr)
    return best


def svd_direction(V):
    C = V - V.mean(axis=0)
    _, s, vt = np.linalg.svd(C, full_matrices=False)
    w = vt[0]
    nz = np.flatnonzero(np.abs(w) > 1e-12)
    if len(nz) and w[nz[0]] < 0:
        w = -w
    return w, s[0], C @ w


def oracle_selection(model, triples, labels, d_out, n_bins=31):
    """Independent recomputation: SVD direction, loop-based entropy, lowest-H dims."""
    hs = []
    for dim in range(model.d):
        V = np.stack([model.entity[triples[:, 0], dim], model.relation[triples[:, 1], dim],
                      model.entity[triples[:, 2], dim]], axis=1)
        _, _, e = svd_direction(V)
        hs.append(brute_entropy(e, labels, n_bins)[0])
    order = sorted(range(model.d), key=lambda k: (hs[k], k))
    return sorted(order[:d_out]), hs
