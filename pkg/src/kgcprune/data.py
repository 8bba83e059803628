"""Triple files, integer vocabularies, relation type pools and the filter index."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

TOY_DIR = Path(__file__).parent / "toy"


class DatasetError(ValueError):
    """Raised for unreadable or invalid knowledge-graph files."""


class ParseError(DatasetError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(frozen=True)
class Vocab:
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    entity_ids: dict[str, int] = field(repr=False)
    relation_ids: dict[str, int] = field(repr=False)

    @classmethod
    def from_names(cls, entities, relations):
        entities, relations = tuple(entities), tuple(relations)
        return cls(
            entities,
            relations,
            {name: i for i, name in enumerate(entities)},
            {name: i for i, name in enumerate(relations)},
        )

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_relations(self):
        return len(self.relations)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for fname, names in (("entities.tsv", self.entities), ("relations.tsv", self.relations)):
            with open(directory / fname, "w", encoding="utf-8") as fh:
                for i, name in enumerate(names):
                    fh.write(f"{name}\t{i}\n")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        tables = []
        for fname in ("entities.tsv", "relations.tsv"):
            names = []
            with open(directory / fname, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    parts = line.rstrip("\n").split("\t")
                    if len(parts) != 2 or int(parts[1]) != len(names):
                        raise ParseError(directory / fname, lineno, "expected 'name<TAB>id' with dense ids")
                    names.append(parts[0])
            tables.append(names)
        return cls.from_names(*tables)


@dataclass(frozen=True)
class TripleStore:
    """Integer-encoded KG. Each split is an ``(n, 3)`` int64 array of (h, r, t)."""

    vocab: Vocab
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    valid_neg: np.ndarray | None = None
    test_neg: np.ndarray | None = None
    unseen_entities: frozenset = frozenset()
    unseen_relations: frozenset = frozenset()

    @property
    def n_entities(self):
        return self.vocab.n_entities

    @property
    def n_relations(self):
        return self.vocab.n_relations

    def split(self, name):
        if name not in ("train", "valid", "test", "valid_neg", "test_neg"):
            raise KeyError(name)
        return getattr(self, name)

    def all_true(self):
        return np.concatenate([self.train, self.valid, self.test])


def read_triple_file(path):
    """Return the list of (head, relation, tail) name tuples in a TAB-separated file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such triple file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 TAB-separated fields, got {len(parts)}")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def _dedup(rows, label):
    seen = dict.fromkeys(rows)
    if len(seen) != len(rows):
        logger.warning("%s: dropped %d duplicate triples", label, len(rows) - len(seen))
    return list(seen)


def load_dataset(train_path, valid_path, test_path, valid_neg_path=None, test_neg_path=None):
    """Read the three splits (plus optional labeled-negative splits) into a TripleStore.

    Ids are assigned in order of first appearance: train, then valid, then
    test, then the negative files. Names that never occur in train are kept
    and reported in ``unseen_entities`` / ``unseen_relations``.
    """
    named = {
        "train": train_path,
        "valid": valid_path,
        "test": test_path,
        "valid_neg": valid_neg_path,
        "test_neg": test_neg_path,
    }
    raw = {}
    for name, path in named.items():
        if path is None:
            continue
        raw[name] = _dedup(read_triple_file(path), name)
    if not raw["train"]:
        raise DatasetError(f"empty train split: {train_path}")

    ents, rels = {}, {}
    for name in named:
        for h, r, t in raw.get(name, ()):
            ents.setdefault(h, len(ents))
            rels.setdefault(r, len(rels))
            ents.setdefault(t, len(ents))
    vocab = Vocab(tuple(ents), tuple(rels), ents, rels)

    def encode(rows):
        if not rows:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array([(ents[h], rels[r], ents[t]) for h, r, t in rows], dtype=np.int64)

    arrays = {name: encode(rows) for name, rows in raw.items()}
    train = arrays["train"]
    seen_e = set(train[:, 0].tolist()) | set(train[:, 2].tolist())
    seen_r = set(train[:, 1].tolist())
    unseen_e = frozenset(range(len(ents))) - seen_e
    unseen_r = frozenset(range(len(rels))) - seen_r
    if unseen_e or unseen_r:
        logger.info("%d entities / %d relations appear only outside train", len(unseen_e), len(unseen_r))

    return TripleStore(
        vocab=vocab,
        train=train,
        valid=arrays["valid"],
        test=arrays["test"],
        valid_neg=arrays.get("valid_neg"),
        test_neg=arrays.get("test_neg"),
        unseen_entities=unseen_e,
        unseen_relations=unseen_r,
    )


def load_dataset_dir(directory):
    """Load ``train.txt``/``valid.txt``/``test.txt`` (and ``*_negatives.txt`` if present)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such dataset directory: {directory}")
    neg = {}
    for split in ("valid", "test"):
        for candidate in (f"{split}_negatives.txt", f"{split}_neg.txt"):
            if (directory / candidate).is_file():
                neg[split] = directory / candidate
                break
    return load_dataset(
        directory / "train.txt",
        directory / "valid.txt",
        directory / "test.txt",
        neg.get("valid"),
        neg.get("test"),
    )


def load_toy():
    """The small bundled KG used by the tests and the smoke runs."""
    return load_dataset_dir(TOY_DIR)


@dataclass(frozen=True)
class TypePools:
    """Per relation: sorted arrays of entities seen as head / tail in train."""

    heads: dict[int, np.ndarray]
    tails: dict[int, np.ndarray]

    def head_pool(self, r):
        return self.heads.get(r, np.zeros(0, dtype=np.int64))

    def tail_pool(self, r):
        return self.tails.get(r, np.zeros(0, dtype=np.int64))


def build_type_pools(store):
    train = store.train
    order = np.argsort(train[:, 1], kind="stable")
    rels, starts = np.unique(train[order, 1], return_index=True)
    bounds = list(starts[1:]) + [len(order)]
    heads, tails = {}, {}
    for r, lo, hi in zip(rels.tolist(), starts, bounds):
        rows = train[order[lo:hi]]
        heads[r] = np.unique(rows[:, 0])
        tails[r] = np.unique(rows[:, 2])
    return TypePools(heads, tails)


_EMPTY = np.zeros(0, dtype=np.int64)


class FilterIndex:
    """Known-true lookups over train, valid and test: (h, r) -> tails, (r, t) -> heads."""

    def __init__(self, triples, n_entities, n_relations):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.n_entities = int(n_entities)
        self.n_relations = int(n_relations)
        self._keys = np.unique(self._encode(triples))
        tails, heads = {}, {}
        for h, r, t in np.asarray(triples).tolist():
            tails.setdefault((h, r), set()).add(t)
            heads.setdefault((r, t), set()).add(h)
        self._tails = {k: np.array(sorted(v), dtype=np.int64) for k, v in tails.items()}
        self._heads = {k: np.array(sorted(v), dtype=np.int64) for k, v in heads.items()}

    def tails(self, h, r):
        return self._tails.get((int(h), int(r)), _EMPTY)

    def heads(self, r, t):
        return self._heads.get((int(r), int(t)), _EMPTY)

    def _encode(self, triples):
        return (triples[:, 0] * self.n_relations + triples[:, 1]) * self.n_entities + triples[:, 2]

    def contains(self, h, r, t):
        return bool(self.contains_many(np.array([[h, r, t]]))[0])

    def contains_many(self, triples):
        keys = self._encode(np.asarray(triples, dtype=np.int64).reshape(-1, 3))
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, max(len(self._keys) - 1, 0))
        return self._keys[pos] == keys if len(self._keys) else np.zeros(len(keys), dtype=bool)


def build_filter_index(store):
    return FilterIndex(store.all_true(), store.n_entities, store.n_relations)
