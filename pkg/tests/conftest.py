import numpy as np
import pytest

from kgcprune import data, decoder, dft, embed, gbm, negatives, partition


def write_triples(path, rows):
    path.write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def tri_files(tmp_path):
    """Writes named splits into tmp_path and returns a loader."""

    def make(**splits):
        paths = {}
        for name, rows in splits.items():
            paths[name] = write_triples(tmp_path / f"{name}.txt", rows)
        return paths

    return make


@pytest.fixture(scope="session")
def toy():
    return data.load_toy()


@pytest.fixture(scope="session")
def toy_filter(toy):
    return data.build_filter_index(toy)


@pytest.fixture(scope="session")
def toy_pools(toy):
    return data.build_type_pools(toy)


TOY_TRAIN = embed.TrainConfig(learning_rate=0.05, epochs=150, batch_size=64, n_neg=16, optimizer="adam", seed=3)


@pytest.fixture(scope="session")
def toy_model(toy):
    return embed.train(toy, "TransE", 16, TOY_TRAIN)


@pytest.fixture(scope="session")
def toy_pipeline(toy, toy_model, toy_pools, toy_filter):
    part = partition.cluster_relations(toy_model, k=2, seed=0)
    sel = dft.select_features(toy_model, toy, part, d_out=6, seed=0)
    ens, sets = decoder.train_decoder(
        toy_model, toy, sel, part, negatives.NegSpec("embedding", 2, 8), gbm.GBMConfig(3, 30, 0.1),
        toy_pools, toy_filter, seed=0,
    )
    return part, sel, ens, sets


def random_model(family, n_e=12, n_r=4, d=8, seed=0):
    return embed.init_model(family, n_e, n_r, d, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
