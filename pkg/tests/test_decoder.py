import numpy as np
import pytest

from kgcprune import decoder, dft, embed, gbm, negatives, partition


def test_training_set_counts(toy, toy_model, toy_pipeline):
    part, sel, _, _ = toy_pipeline
    for g in range(part.k):
        n_pos = int(np.isin(toy.train[:, 1], part.members(g)).sum())
        ts = decoder.build_training_set(g, toy, sel, part, negatives.NegSpec("random", 2), toy_model)
        assert len(ts.labels) == 3 * n_pos
        assert ts.labels.sum() == n_pos
        assert ts.features.shape == (3 * n_pos, sel.d_out(g))
        pos = ts.triples[ts.labels == 1]
        assert np.array_equal(ts.features[ts.labels == 1], dft.project_triples(sel, g, toy_model, pos))


def test_empty_group_rejected(toy, toy_model, toy_pipeline):
    _, sel, _, _ = toy_pipeline
    # all relations in group 0; group 1 exists but is empty
    part = partition.RelationPartition(2, np.zeros((2, 16)), np.zeros(toy.n_relations, dtype=np.int64))
    with pytest.raises(ValueError):
        decoder.build_training_set(1, toy, sel, part, negatives.NegSpec("random"), toy_model)


def test_one_classifier_per_group(toy_pipeline):
    part, sel, ens, _ = toy_pipeline
    assert sorted(ens.classifiers) == list(range(part.k))
    with pytest.raises(ValueError):
        decoder.DecoderEnsemble({0: ens.classifiers[0]}, sel, part)


def test_predict_range_and_purity(toy, toy_model, toy_pipeline):
    part, sel, ens, _ = toy_pipeline
    for trip in toy.test.tolist() + toy.test_neg.tolist():
        p = decoder.predict(ens, sel, part, trip, toy_model)
        assert 0 < p < 1
        assert p == decoder.predict(ens, sel, part, trip, toy_model)


def test_predict_unknown_relation(toy_model, toy_pipeline):
    part, sel, ens, _ = toy_pipeline
    with pytest.raises(IndexError):
        decoder.predict(ens, sel, part, (0, 99, 1), toy_model)


def test_single_and_batch_predictions_agree(toy, toy_model, toy_pipeline):
    part, sel, ens, _ = toy_pipeline
    batch = ens.predict_triples(toy_model, toy.train)
    single = [decoder.predict(ens, sel, part, t, toy_model) for t in toy.train]
    assert np.array_equal(batch, single)


def test_scorer_matches_per_triple(toy, toy_model, toy_pipeline):
    _, _, ens, _ = toy_pipeline
    sc = decoder.DecoderScorer(ens, toy_model)
    h, r, t = toy.test[0]
    E = toy.n_entities
    tails = np.stack([np.full(E, h), np.full(E, r), np.arange(E)], axis=1)
    heads = np.stack([np.arange(E), np.full(E, r), np.full(E, t)], axis=1)
    assert np.array_equal(sc.score_tails(h, r), ens.predict_triples(toy_model, tails))
    assert np.array_equal(sc.score_heads(r, t), ens.predict_triples(toy_model, heads))


def test_routing_within_group(toy, toy_model, toy_pipeline):
    part, sel, ens, _ = toy_pipeline
    for g in range(part.k):
        members = part.members(g)
        for r in members:
            assert ens.classifier_for(r) is ens.classifiers[g]


def test_serialization_roundtrip(toy, toy_model, toy_pipeline, tmp_path):
    part, sel, ens, _ = toy_pipeline
    ens.save(tmp_path / "ens.json")
    back = decoder.DecoderEnsemble.load(tmp_path / "ens.json", sel, part)
    trip = np.concatenate([toy.train, toy.test, toy.test_neg])
    assert np.array_equal(back.predict_triples(toy_model, trip), ens.predict_triples(toy_model, trip))


def test_bad_document(tmp_path, toy_pipeline):
    part, sel, _, _ = toy_pipeline
    (tmp_path / "x.json").write_text('{"format": "other", "version": 1}')
    with pytest.raises(ValueError):
        decoder.DecoderEnsemble.load(tmp_path / "x.json", sel, part)


def test_raw_feature_variant(toy, toy_model, toy_pools, toy_filter, toy_pipeline, tmp_path):
    part, sel, _, _ = toy_pipeline
    ens, sets = decoder.train_decoder(toy_model, toy, sel, part, negatives.NegSpec("random", 2),
                                      gbm.GBMConfig(2, 10, 0.1), toy_pools, toy_filter, features="raw")
    assert sets[0].features.shape[1] == 3 * sel.d_out(0)
    ens.save(tmp_path / "raw.json")
    back = decoder.DecoderEnsemble.load(tmp_path / "raw.json", sel, part)
    assert back.features == "raw"
    sc = decoder.DecoderScorer(back, toy_model)
    h, r, t = toy.test[0]
    E = toy.n_entities
    tails = np.stack([np.full(E, h), np.full(E, r), np.arange(E)], axis=1)
    assert np.array_equal(sc.score_tails(h, r), ens.predict_triples(toy_model, tails))


def test_training_fits_training_data(toy_pipeline):
    _, _, ens, sets = toy_pipeline
    for g, ts in sets.items():
        clf = ens.classifiers[g]
        assert clf.loss_history[-1] < clf.loss_history[0]
