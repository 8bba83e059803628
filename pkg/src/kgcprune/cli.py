"""Stage commands: train-kge, prune, train-decoder, eval, sweeps and score export.

Configuration is a ``key = value`` file; every key is also a ``--key`` flag and
flags win. Each stage writes into ``<out>/<stage>/`` with a ``stage.json``
recording the hash of the settings it depends on; a rerun with the same hash
is skipped unless ``--force`` is given.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data, decoder, dft, embed, evaluate, gbm, negatives, partition

logger = logging.getLogger("kgcprune")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class StageError(Exception):
    def __init__(self, message, code=EXIT_DATA):
        super().__init__(message)
        self.code = code


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s in (None, "", "none", "None") else float(s)


def _int_list(s):
    if isinstance(s, (list, tuple)):
        return [int(x) for x in s]
    return [int(x) for x in str(s).replace(",", " ").split()]


def _float_list(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    return [float(x) for x in str(s).replace(",", " ").split()]


# key: (type, default, help)
KEYS = {
    "data": (str, None, "dataset directory with train/valid/test.txt; 'toy' for the bundled KG"),
    "out": (str, "runs/default", "output directory"),
    "preset": (str, "", "best-known decoder defaults: wn18rr, fb15k-237, codex-s"),
    "seed": (int, 0, "root seed; every stage seed derives from it"),
    "family": (str, "TransE", "TransE, DistMult, RotatE or ComplEx"),
    "d": (int, 32, "embedding dimension"),
    "epochs": (int, 100, "embedding training epochs"),
    "batch_size": (int, 512, ""),
    "kge_n_neg": (int, 64, "negatives per positive for embedding training"),
    "kge_lr": (float, 10.0, "SGD step on the batch-mean loss"),
    "alpha": (float, 1.0, "self-adversarial temperature"),
    "gamma": (_opt_float, None, "margin; family default when unset"),
    "optimizer": (str, "sgd", "sgd or adam"),
    "k": (int, 3, "number of relation groups"),
    "d_out": (int, 8, "kept dimensions per group"),
    "scheme": (str, "lowest", "pruning scheme: lowest, highest, random, none"),
    "n_bins": (int, dft.DEFAULT_BINS, "DFT candidate thresholds"),
    "prune_neg_ratio": (int, 1, "uniform negatives per positive for DFT"),
    "per_group": (_bool, True, "fit one selector per relation group"),
    "normalize_relations": (_bool, False, "unit-normalize relation rows before k-means"),
    "neg_scheme": (str, "embedding", "classifier negatives: random, ontology, embedding"),
    "n_neg": (int, 2, "classifier negatives per positive"),
    "pool_size": (int, 32, "candidate pool for embedding negatives"),
    "features": (str, "pca", "classifier inputs: pca scalars or raw kept variables"),
    "classifier": (str, "gbm", "gbm, tree or forest"),
    "tree_depth": (int, 3, ""),
    "n_trees": (int, 100, ""),
    "gbm_lr": (float, 0.1, ""),
    "line_search": (_bool, True, "halve a tree that would raise training loss"),
    "grid": (_bool, False, "search depth x trees x lr on validation"),
    "grid_depths": (_int_list, [3, 5, 7], ""),
    "grid_trees": (_int_list, [100, 300, 500, 700, 1000], ""),
    "grid_lrs": (_float_list, [0.05, 0.1, 0.3], ""),
    "task": (str, "auto", "link, triple, both or auto (triple when labeled negatives exist)"),
    "raw_kge": (_bool, False, "evaluate the embedding scores directly, skipping the decoder"),
    "split": (str, "test", "evaluation split"),
    "limit": (int, 0, "evaluate only the first N triples (0 = all)"),
    "dump_ranks": (_bool, False, "write per-query ranks"),
    "sweep_dims": (_int_list, [8, 16, 32, 64], "dimensions for sweep-dim"),
    "sweep_ks": (_int_list, [1, 2, 3, 5], "group counts for sweep-k"),
    "svg": (_bool, True, "also render sweep and curve plots as SVG"),
}

PRESETS = {
    "wn18rr": {"tree_depth": 5, "n_trees": 1000, "gbm_lr": 0.3, "neg_scheme": "embedding"},
    "fb15k-237": {"tree_depth": 5, "n_trees": 1000, "gbm_lr": 0.3, "neg_scheme": "ontology"},
    "codex-s": {"tree_depth": 3, "n_trees": 500, "gbm_lr": 0.05, "neg_scheme": "embedding"},
}

STAGE_KEYS = {
    "train-kge": ["data", "seed", "family", "d", "epochs", "batch_size", "kge_n_neg", "kge_lr", "alpha", "gamma",
                  "optimizer"],
    "prune": ["k", "d_out", "scheme", "n_bins", "prune_neg_ratio", "per_group", "normalize_relations"],
    "train-decoder": ["neg_scheme", "n_neg", "pool_size", "features", "classifier", "tree_depth", "n_trees", "gbm_lr",
                      "line_search", "grid", "grid_depths", "grid_trees", "grid_lrs"],
    "eval": ["task", "raw_kge", "split", "limit"],
}
STAGE_ORDER = ["train-kge", "prune", "train-decoder", "eval"]
STAGE_DIRS = {"train-kge": "kge", "prune": "prune", "train-decoder": "decoder", "eval": "eval"}


# ---------------------------------------------------------------------------
# configuration


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment. Returns raw strings."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(file_values, flag_values):
    """Defaults < preset < config file < flags."""
    cfg = {k: v[1] for k, v in KEYS.items()}
    preset = flag_values.get("preset") or file_values.get("preset") or ""
    if preset:
        if preset.lower() not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        cfg.update(PRESETS[preset.lower()])
    for layer in (file_values, flag_values):
        for key, raw in layer.items():
            cfg[key] = KEYS[key][0](raw) if raw is not None else None
    return cfg


def validate_config(cfg):
    embed.check_family(cfg["family"])
    if cfg["d_out"] > cfg["d"]:
        raise ValueError(f"d_out={cfg['d_out']} exceeds d={cfg['d']}")
    if cfg["scheme"] not in dft.SCHEMES:
        raise ValueError(f"unknown pruning scheme {cfg['scheme']!r}; expected {dft.SCHEMES}")
    if cfg["features"] not in dft.FEATURE_MODES:
        raise ValueError(f"unknown feature mode {cfg['features']!r}")
    if cfg["task"] not in ("auto", "link", "triple", "both"):
        raise ValueError(f"unknown task {cfg['task']!r}")
    negspec(cfg)
    gbm_config(cfg)


def stage_hash(cfg, stage):
    keys = []
    for s in STAGE_ORDER[:STAGE_ORDER.index(stage) + 1]:
        keys += STAGE_KEYS[s]
    blob = json.dumps({k: cfg[k] for k in keys}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def stage_seeds(seed):
    """Independent child seeds per stage, all derived from the root seed."""
    names = ["train-kge", "kmeans", "prune", "train-decoder", "negatives"]
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def negspec(cfg, seed=0):
    return negatives.NegSpec(cfg["neg_scheme"], cfg["n_neg"], cfg["pool_size"], seed)


def gbm_config(cfg, seed=0, **override):
    kw = dict(tree_depth=cfg["tree_depth"], n_trees=cfg["n_trees"], learning_rate=cfg["gbm_lr"], seed=seed,
              kind=cfg["classifier"], line_search=cfg["line_search"])
    kw.update(override)
    return gbm.GBMConfig(**kw)


# ---------------------------------------------------------------------------
# artifacts


@dataclass
class Run:
    cfg: dict
    force: bool = False

    @property
    def out(self):
        return Path(self.cfg["out"])

    def stage_dir(self, stage):
        return self.out / STAGE_DIRS[stage]

    def up_to_date(self, stage):
        meta = self.stage_dir(stage) / "stage.json"
        if self.force or not meta.is_file():
            return False
        return json.loads(meta.read_text()).get("hash") == stage_hash(self.cfg, stage)

    def require(self, stage):
        meta = self.stage_dir(stage) / "stage.json"
        if not meta.is_file():
            raise StageError(f"missing {STAGE_DIRS[stage]} artifacts in {self.out}; run `kgcprune {stage}` first")
        if json.loads(meta.read_text()).get("hash") != stage_hash(self.cfg, stage):
            raise StageError(f"{STAGE_DIRS[stage]} artifacts in {self.out} were built with different settings; "
                             f"rerun `kgcprune {stage}`")

    def finish(self, stage, extra=None):
        d = self.stage_dir(stage)
        doc = {"stage": stage, "hash": stage_hash(self.cfg, stage),
               "config": {k: self.cfg[k] for k in sorted(self.cfg)}}
        doc.update(extra or {})
        (d / "stage.json").write_text(json.dumps(doc, indent=1, default=str))
        (self.out / "seeds.json").write_text(json.dumps({"seed": self.cfg["seed"], **stage_seeds(self.cfg["seed"])},
                                                        indent=1))

    # -- loaders -----------------------------------------------------------

    def store(self):
        src = self.cfg["data"]
        if src is None:
            raise StageError("no dataset given (set `data` in the config or pass --data)", EXIT_USAGE)
        path = data.TOY_DIR if src == "toy" else Path(src)
        if not path.is_dir():
            raise StageError(f"dataset directory not found: {path}", EXIT_USAGE)
        return data.load_dataset_dir(path)

    def model(self, store):
        self.require("train-kge")
        return embed.import_embeddings(self.stage_dir("train-kge") / "embedding.json", store.vocab)

    def pruned(self):
        self.require("prune")
        d = self.stage_dir("prune")
        return partition.RelationPartition.load(d), dft.FeatureSelector.load(d)

    def ensemble(self, selector, part):
        self.require("train-decoder")
        return decoder.DecoderEnsemble.load(self.stage_dir("train-decoder") / "ensemble.json", selector, part)


# ---------------------------------------------------------------------------
# stages


def train_config(cfg, seed):
    return embed.TrainConfig(learning_rate=cfg["kge_lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                             n_neg=cfg["kge_n_neg"], alpha=cfg["alpha"], gamma=cfg["gamma"], seed=seed,
                             optimizer=cfg["optimizer"])


def cmd_train_kge(run):
    if run.up_to_date("train-kge"):
        logger.info("train-kge: up to date")
        return
    store = run.store()
    seeds = stage_seeds(run.cfg["seed"])
    t0 = time.time()
    model = embed.train(store, run.cfg["family"], run.cfg["d"], train_config(run.cfg, seeds["train-kge"]))
    d = run.stage_dir("train-kge")
    d.mkdir(parents=True, exist_ok=True)
    embed.export_embeddings(model, d / "embedding.json")
    store.vocab.save(d)
    logger.info("train-kge: %s d=%d, final loss %.4f (%.1fs)", model.family, model.d, model.loss_history[-1],
                time.time() - t0)
    run.finish("train-kge", {"final_loss": model.loss_history[-1]})


def prune_model(cfg, model, store, seeds, k=None, d_out=None, scheme=None):
    k = cfg["k"] if k is None else k
    part = partition.cluster_relations(model, k=k, seed=seeds["kmeans"], normalize=cfg["normalize_relations"])
    sel = dft.select_features(model, store, part, cfg["d_out"] if d_out is None else d_out,
                              neg_ratio=cfg["prune_neg_ratio"], seed=seeds["prune"],
                              scheme=cfg["scheme"] if scheme is None else scheme, n_bins=cfg["n_bins"],
                              per_group=cfg["per_group"])
    return part, sel


def cmd_prune(run):
    if run.up_to_date("prune"):
        logger.info("prune: up to date")
        return
    store = run.store()
    model = run.model(store)
    part, sel = prune_model(run.cfg, model, store, stage_seeds(run.cfg["seed"]))
    d = run.stage_dir("prune")
    d.mkdir(parents=True, exist_ok=True)
    part.save(d)
    sel.save(d)
    for g, records in sel.all_scores.items():
        dft.write_curve(d / f"curve.group{g}.csv", records)
        if run.cfg["svg"]:
            hs = sorted(r.entropy for r in records)
            write_svg(d / f"curve.group{g}.svg", {f"group {g}": (list(range(1, len(hs) + 1)), hs)},
                      "rank-ordered dimension", "H")
    logger.info("prune: k=%d, sizes %s, d_out=%d", part.k, np.bincount(part.assignment, minlength=part.k).tolist(),
                run.cfg["d_out"])
    run.finish("prune")


def eval_task(cfg, store):
    if cfg["task"] != "auto":
        return cfg["task"]
    return "triple" if store.test_neg is not None and store.valid_neg is not None else "link"


def fit_decoder(cfg, model, store, sel, part, seeds, depth=None, n_trees=None, lr=None):
    pools = data.build_type_pools(store)
    fi = data.build_filter_index(store)
    over = {k: v for k, v in (("tree_depth", depth), ("n_trees", n_trees), ("learning_rate", lr)) if v is not None}
    ens, _ = decoder.train_decoder(model, store, sel, part, negspec(cfg, seeds["negatives"]),
                                   gbm_config(cfg, seeds["train-decoder"], **over), pools, fi,
                                   seed=seeds["train-decoder"], features=cfg["features"])
    return ens


def validation_score(cfg, scorer, store, fi, task, n_trees=None):
    if task == "triple":
        th = evaluate.fit_thresholds(scorer, store, "valid")
        return evaluate.triple_classification(scorer, store, th, "valid")[0]
    return evaluate.link_prediction(scorer, store, fi, "valid", cfg["limit"] or None).mrr


def grid_search(cfg, model, store, sel, part, seeds, out_dir):
    """Depth x lr fits at the largest tree count; smaller counts are prefixes of the same ensemble."""
    fi = data.build_filter_index(store)
    task = "triple" if eval_task(cfg, store) == "triple" else "link"
    rows, best = [], None
    for depth in cfg["grid_depths"]:
        for lr in cfg["grid_lrs"]:
            ens = fit_decoder(cfg, model, store, sel, part, seeds, depth, max(cfg["grid_trees"]), lr)
            for n in sorted(cfg["grid_trees"]):
                score = validation_score(cfg, decoder.DecoderScorer(ens, model, n), store, fi, task)
                rows.append((depth, n, lr, score))
                logger.info("grid depth=%d trees=%d lr=%g -> %.4f", depth, n, lr, score)
                if best is None or score > best[3]:
                    best = (depth, n, lr, score)
    with open(out_dir / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tree_depth", "n_trees", "learning_rate", "valid_" + ("accuracy" if task == "triple" else "mrr")])
        w.writerows(rows)
    return best


def cmd_train_decoder(run):
    if run.up_to_date("train-decoder"):
        logger.info("train-decoder: up to date")
        return
    store = run.store()
    model = run.model(store)
    part, sel = run.pruned()
    seeds = stage_seeds(run.cfg["seed"])
    d = run.stage_dir("train-decoder")
    d.mkdir(parents=True, exist_ok=True)
    extra = {}
    if run.cfg["grid"]:
        depth, n, lr, score = grid_search(run.cfg, model, store, sel, part, seeds, d)
        extra["best"] = {"tree_depth": depth, "n_trees": n, "learning_rate": lr, "valid_score": score}
        ens = fit_decoder(run.cfg, model, store, sel, part, seeds, depth, n, lr)
    else:
        ens = fit_decoder(run.cfg, model, store, sel, part, seeds)
    ens.save(d / "ensemble.json")
    logger.info("train-decoder: %d groups, %d tree parameters", part.k, ens.n_parameters())
    run.finish("train-decoder", extra)


def _scorer(run, store, model):
    if run.cfg["raw_kge"]:
        return evaluate.KGEScorer(model), None, None
    part, sel = run.pruned()
    ens = run.ensemble(sel, part)
    return decoder.DecoderScorer(ens, model), sel, ens


def cmd_eval(run):
    if run.up_to_date("eval"):
        logger.info("eval: up to date")
        print((run.stage_dir("eval") / "summary.txt").read_text(), end="")
        return
    cfg = run.cfg
    store = run.store()
    model = run.model(store)
    scorer, sel, ens = _scorer(run, store, model)
    task = eval_task(cfg, store)
    d = run.stage_dir("eval")
    d.mkdir(parents=True, exist_ok=True)
    label = "kge" if cfg["raw_kge"] else "decoder"
    lines, rows = [], []
    if task in ("link", "both"):
        fi = data.build_filter_index(store)
        rep = evaluate.link_prediction(scorer, store, fi, cfg["split"], cfg["limit"] or None)
        lines.append(rep.summary(f"{label} {cfg['split']}"))
        for side, sub in sorted(rep.by_direction.items()):
            lines.append(sub.summary(f"  {side}"))
        rows.append({"task": "link", **rep.as_row()})
        if cfg["dump_ranks"]:
            triples = store.split(cfg["split"])
            evaluate.write_ranks(d / "ranks.csv", triples[:cfg["limit"] or None], rep)
    if task in ("triple", "both"):
        th = evaluate.fit_thresholds(scorer, store, "valid")
        acc, f1 = evaluate.triple_classification(scorer, store, th, cfg["split"])
        lines.append(f"{label} {cfg['split']}: accuracy {acc:.4f}  F1 {f1:.4f}")
        rows.append({"task": "triple", "accuracy": acc, "f1": f1})
    params = evaluate.count_parameters(model, sel, ens)
    lines.append(f"parameters: embedding {params.embedding}  selector {params.selector}  "
                 f"classifier {params.classifier}  total {params.total} ({params.total / 1e6:.2f}M)")
    _write_rows(d / "report.csv", rows)
    _write_rows(d / "parameters.csv", [{"embedding": params.embedding, "selector": params.selector,
                                        "classifier": params.classifier, "total": params.total}])
    text = "\n".join(lines) + "\n"
    (d / "summary.txt").write_text(text)
    print(text, end="")
    run.finish("eval")


def _write_rows(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def cmd_sweep_dim(run):
    """MRR vs d: embeddings trained directly at d against the decoder on the base model pruned to d."""
    cfg = run.cfg
    store = run.store()
    base = run.model(store)
    seeds = stage_seeds(cfg["seed"])
    fi = data.build_filter_index(store)
    limit = cfg["limit"] or None
    rows, curves = [], {"kge": ([], []), "decoder": ([], [])}
    for dim in cfg["sweep_dims"]:
        small = embed.train(store, cfg["family"], dim, train_config(cfg, seeds["train-kge"]))
        rep = evaluate.link_prediction(evaluate.KGEScorer(small), store, fi, cfg["split"], limit)
        rows.append({"d": dim, "method": "kge", **rep.as_row()})
        curves["kge"][0].append(dim)
        curves["kge"][1].append(rep.mrr)
        if dim <= base.d:
            part, sel = prune_model(cfg, base, store, seeds, d_out=dim)
            ens = fit_decoder(cfg, base, store, sel, part, seeds)
            rep = evaluate.link_prediction(decoder.DecoderScorer(ens, base), store, fi, cfg["split"], limit)
            rows.append({"d": dim, "method": "decoder", **rep.as_row()})
            curves["decoder"][0].append(dim)
            curves["decoder"][1].append(rep.mrr)
        logger.info("sweep-dim d=%d done", dim)
    run.out.mkdir(parents=True, exist_ok=True)
    _write_rows(run.out / "sweep_dim.csv", rows)
    if cfg["svg"]:
        write_svg(run.out / "sweep_dim.svg", curves, "d", "MRR", log_x=True)


def cmd_sweep_k(run):
    cfg = run.cfg
    store = run.store()
    model = run.model(store)
    seeds = stage_seeds(cfg["seed"])
    fi = data.build_filter_index(store)
    task = eval_task(cfg, store)
    rows = []
    for k in cfg["sweep_ks"]:
        part, sel = prune_model(cfg, model, store, seeds, k=k)
        ens = fit_decoder(cfg, model, store, sel, part, seeds)
        scorer = decoder.DecoderScorer(ens, model)
        row = {"k": k}
        if task in ("link", "both"):
            row.update(evaluate.link_prediction(scorer, store, fi, cfg["split"], cfg["limit"] or None).as_row())
        if task in ("triple", "both"):
            acc, f1 = evaluate.triple_classification(scorer, store, evaluate.fit_thresholds(scorer, store), cfg["split"])
            row.update(accuracy=acc, f1=f1)
        rows.append(row)
        logger.info("sweep-k k=%d: %s", k, row)
    run.out.mkdir(parents=True, exist_ok=True)
    _write_rows(run.out / "sweep_k.csv", rows)
    if cfg["svg"]:
        metric = "mrr" if "mrr" in rows[0] else "accuracy"
        write_svg(run.out / "sweep_k.svg", {metric: ([r["k"] for r in rows], [r[metric] for r in rows])}, "k", metric)


def cmd_export_scores(run):
    """Scores of every positive (and labeled negative) of the split under the KGE and the decoder."""
    cfg = run.cfg
    store = run.store()
    model = run.model(store)
    part, sel = run.pruned()
    ens = run.ensemble(sel, part)
    pos = store.split(cfg["split"])
    neg = store.split(f"{cfg['split']}_neg")
    triples = pos if neg is None else np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(0 if neg is None else len(neg))]).astype(int)
    kge = embed.score_triples(model, triples)
    dec = ens.predict_triples(model, triples)
    out = run.out / f"scores.{cfg['split']}.csv"
    run.out.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["head", "relation", "tail", "label", "kge_score", "decoder_score"])
        for (h, r, t), y, a, b in zip(triples.tolist(), labels.tolist(), kge.tolist(), dec.tolist()):
            w.writerow([store.vocab.entities[h], store.vocab.relations[r], store.vocab.entities[t], y, repr(a),
                        repr(b)])
    logger.info("export-scores: %d rows -> %s", len(triples), out)


COMMANDS = {
    "train-kge": cmd_train_kge,
    "prune": cmd_prune,
    "train-decoder": cmd_train_decoder,
    "eval": cmd_eval,
    "sweep-dim": cmd_sweep_dim,
    "sweep-k": cmd_sweep_k,
    "export-scores": cmd_export_scores,
}


# ---------------------------------------------------------------------------
# SVG


def write_svg(path, series, xlabel, ylabel, log_x=False, size=(480, 320)):
    """Plain polyline chart, one line per series."""
    w, h = size
    pad = 50
    xs = [x for s in series.values() for x in s[0]]
    ys = [y for s in series.values() for y in s[1] if np.isfinite(y)]
    if not xs or not ys:
        return
    tx = np.log10 if log_x else (lambda v: np.asarray(v, dtype=float))
    x0, x1 = float(np.min(tx(xs))), float(np.max(tx(xs)))
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return pad + (float(tx([x])[0]) - x0) / (x1 - x0) * (w - 2 * pad)

    def py(y):
        return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>',
             f'<text x="{w / 2}" y="{h - 10}" text-anchor="middle">{xlabel}</text>',
             f'<text x="15" y="{h / 2}" transform="rotate(-90 15 {h / 2})" text-anchor="middle">{ylabel}</text>',
             f'<text x="{pad - 5}" y="{h - pad}" text-anchor="end" font-size="10">{y0:.3g}</text>',
             f'<text x="{pad - 5}" y="{pad + 4}" text-anchor="end" font-size="10">{y1:.3g}</text>']
    for i, (name, (sx, sy)) in enumerate(series.items()):
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(sx, sy) if np.isfinite(y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        parts.append(f'<text x="{w - pad}" y="{pad + 14 * i}" text-anchor="end" font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="kgcprune", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__doc__.splitlines()[0] if COMMANDS[name].__doc__ else None)
        sp.add_argument("--config", help="key = value file")
        sp.add_argument("--force", action="store_true", help="rerun even if artifacts are up to date")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key, (_, default, hlp) in KEYS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                            help=f"{hlp} (default: {default})" if hlp else f"(default: {default})")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    logger.setLevel(logging.INFO)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in KEYS if getattr(args, k) is not None}
        cfg = resolve_config(file_values, flags)
        validate_config(cfg)
    except FileNotFoundError as exc:
        print(f"kgcprune: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"kgcprune: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](Run(cfg, args.force))
    except StageError as exc:
        print(f"kgcprune: {exc}", file=sys.stderr)
        return exc.code
    except (embed.TrainingDiverged, FloatingPointError) as exc:
        print(f"kgcprune: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (data.DatasetError, embed.EmbeddingFormatError, FileNotFoundError, ValueError) as exc:
        print(f"kgcprune: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
