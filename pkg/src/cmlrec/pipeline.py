"""Staged training/inference pipeline over an artifact directory.

Each stage reads declared artifacts, writes declared artifacts, and records
the SHA-256 of everything it touched in ``manifest.json``. Before a stage
runs, every input is checked against the manifest: a file edited by hand, or
one whose producer consumed inputs that have since been rebuilt, is refused.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import time
import zlib
from dataclasses import asdict
from datetime import date, datetime
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import evaluation
from .data import (
    make_catalog,
    parse_date,
    read_catalog,
    read_transactions,
    split_by_release,
    validate_transactions,
    write_catalog,
    write_transactions,
)
from .embedding import EmbeddingTable, SkipGramEmbedding, embed_movie
from .errors import ArtifactDrift, ConfigError, DataError, MissingArtifact
from .metric import MetricNet, TrainConfig, fit_indexed, forward
from .pairs import PairSet, balance_sample, build_pair_dataset
from .predictor import FeatureTable, PurchaseLogit, build_feature_rows
from .profiles import HistoryMatrix, as_datetime, build_profiles, to_days
from .synth import SynthConfig, generate
from .text import training_sequence

logger = logging.getLogger(__name__)

ARTIFACTS_ENV = "CMLREC_ARTIFACTS"

STAGES = [
    "synth", "ingest", "embed", "pairs", "train-metric", "features",
    "train-predictor", "infer", "eval", "comps", "project",
]

DEFAULT_CONFIG = {
    "seed": 0,
    "paths": {
        "artifacts": "artifacts",
        "catalog": None,
        "transactions": None,
        "ground_truth": None,
        "targets": None,
        "predictions": None,
    },
    "synth": {k: v for k, v in asdict(SynthConfig()).items() if k != "seed"},
    "split": {"holdout_fraction": 0.15},
    "text": {"max_plot_tokens": None},
    "embedding": {
        "dim": 64, "window": 5, "negatives": 5, "epochs": 5,
        "learning_rate": 0.025, "min_learning_rate": 1e-4, "min_count": 2, "batch_size": 128,
    },
    "pairs": {"negative_ratio": 4.0},
    "metric": {
        "hidden_dims": [64], "output_dim": 32, "margin": 1.0, "batch_size": 64,
        "epochs": 10, "learning_rate": 0.05, "init_scale": None, "max_norm": None,
    },
    "profiles": {"delta": 0.005, "lookback_days": 365.0},
    "predictor": {"pos_weight": "balanced", "l2": 1e-4, "learning_rate": 1.0, "epochs": 500,
                  "batch_size": None, "tol": 1e-9},
    "eval": {"threshold": 0.5, "segment_fraction": 0.05, "k": 10, "comps_target": None},
}


# ---------------------------------------------------------------- config


def _merge(base, update, where=""):
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_key(config, dotted: str, value):
    parts = dotted.split(".")
    node = config
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {dotted}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted}")
    node[parts[-1]] = value


def load_config(path=None, overrides: Sequence[str] = (), env: Optional[Mapping[str, str]] = None) -> Dict:
    """Defaults, then the JSON config file, then the environment, then ``key=value`` overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                _merge(config, json.load(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    env = os.environ if env is None else env
    if env.get(ARTIFACTS_ENV):
        config["paths"]["artifacts"] = env[ARTIFACTS_ENV]
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        set_key(config, key.strip(), _parse_value(value.strip()))
    return config


def stage_seed(root: int, stage: str) -> int:
    """Independent per-stage seed derived from the root seed and the stage name."""
    return int(np.random.SeedSequence([int(root), zlib.crc32(stage.encode())]).generate_state(1)[0])


# ---------------------------------------------------------------- artifacts


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class ArtifactStore:
    """Artifact directory plus the manifest of content hashes."""

    def __init__(self, root):
        self.root = os.fspath(root)
        os.makedirs(self.root, exist_ok=True)
        self.manifest_path = os.path.join(self.root, "manifest.json")
        if os.path.exists(self.manifest_path):
            with open(self.manifest_path, encoding="utf-8") as fh:
                self.manifest = json.load(fh)
        else:
            self.manifest = {"artifacts": {}, "stages": {}}

    def path(self, name) -> str:
        return os.path.join(self.root, name)

    def require(self, names: Sequence[str]) -> Dict[str, str]:
        """Check inputs exist and are consistent with the manifest; return their hashes."""
        hashes = {}
        for name in names:
            p = self.path(name)
            if not os.path.exists(p):
                raise MissingArtifact(f"{name} not found in {self.root}")
            digest = sha256(p)
            record = self.manifest["artifacts"].get(name)
            if record is None:
                raise MissingArtifact(f"{name} exists but no stage recorded producing it")
            if record["sha256"] != digest:
                raise ArtifactDrift(f"{name} changed on disk after stage {record['stage']} wrote it")
            producer = self.manifest["stages"].get(record["stage"], {})
            for upstream, seen in producer.get("inputs", {}).items():
                current = self.manifest["artifacts"].get(upstream, {}).get("sha256")
                if current is not None and current != seen:
                    raise ArtifactDrift(
                        f"{name} is stale: {upstream} was rebuilt after stage {record['stage']} ran"
                    )
            hashes[name] = digest
        return hashes

    def record(self, stage: str, inputs: Mapping[str, str], outputs: Sequence[str], external=None):
        out_hashes = {}
        for name in outputs:
            digest = sha256(self.path(name))
            self.manifest["artifacts"][name] = {"sha256": digest, "stage": stage}
            out_hashes[name] = digest
        entry = {"inputs": dict(sorted(inputs.items())), "outputs": dict(sorted(out_hashes.items()))}
        if external:
            entry["external"] = dict(sorted(external.items()))
        self.manifest["stages"][stage] = entry
        tmp = self.manifest_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.manifest_path)


# ---------------------------------------------------------------- file helpers


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_matrix(path, ids: Sequence[str], M: np.ndarray):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["movie_id"] + [f"v{j}" for j in range(M.shape[1])])
        for movie_id, row in zip(ids, M):
            writer.writerow([movie_id] + [repr(float(v)) for v in row])


def read_matrix(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    return [r[0] for r in rows], np.array([[float(v) for v in r[1:]] for r in rows])


def _resolve(config, key, default_name):
    value = config["paths"].get(key)
    if value:
        return value
    return os.path.join(config["paths"]["artifacts"], "data", default_name)


def _split_ids(split):
    return split["train"], split["holdout"], parse_date(split["cutoff"])


def _train_transactions(transactions, cutoff: date):
    limit = as_datetime(cutoff)
    return [t for t in transactions if t.timestamp < limit]


# ---------------------------------------------------------------- stages


def stage_synth(config, store: ArtifactStore):
    cfg = SynthConfig(**config["synth"], seed=stage_seed(config["seed"], "synth"))
    data = generate(cfg)
    catalog_path = _resolve(config, "catalog", "catalog.jsonl")
    tx_path = _resolve(config, "transactions", "transactions.csv")
    gt_path = _resolve(config, "ground_truth", "ground_truth.json")
    for p in (catalog_path, tx_path, gt_path):
        os.makedirs(os.path.dirname(os.path.abspath(p)), exist_ok=True)
    write_catalog(catalog_path, data.catalog)
    write_transactions(tx_path, data.transactions)
    write_json(gt_path, {"movie_genre": data.movie_genre, "customer_affinity": data.customer_affinity})
    return {"movies": len(data.catalog), "transactions": len(data.transactions), "catalog": catalog_path,
            "transactions_path": tx_path}


def stage_ingest(config, store: ArtifactStore):
    catalog_path = _resolve(config, "catalog", "catalog.jsonl")
    tx_path = _resolve(config, "transactions", "transactions.csv")
    for p in (catalog_path, tx_path):
        if not os.path.exists(p):
            raise MissingArtifact(f"input {p} not found")
    catalog = read_catalog(catalog_path)
    transactions = read_transactions(tx_path)
    validate_transactions(transactions, catalog)
    transactions.sort(key=lambda t: (t.timestamp, t.customer_id, t.movie_id))
    train, holdout, cutoff = split_by_release(catalog, config["split"]["holdout_fraction"])
    write_catalog(store.path("catalog.jsonl"), [catalog[m] for m in sorted(catalog)])
    write_transactions(store.path("transactions.csv"), transactions)
    write_json(store.path("split.json"), {"train": train, "holdout": holdout, "cutoff": cutoff.isoformat(),
                                          "holdout_fraction": config["split"]["holdout_fraction"]})
    store.record("ingest", {}, ["catalog.jsonl", "transactions.csv", "split.json"],
                 external={"catalog": sha256(catalog_path), "transactions": sha256(tx_path)})
    return {"movies": len(catalog), "transactions": len(transactions), "train_movies": len(train),
            "holdout_movies": len(holdout), "cutoff": cutoff.isoformat()}


def stage_embed(config, store: ArtifactStore):
    inputs = store.require(["catalog.jsonl"])
    catalog = read_catalog(store.path("catalog.jsonl"))
    ids = sorted(catalog)
    trunc = config["text"]["max_plot_tokens"]
    seqs = [training_sequence(catalog[m], trunc) for m in ids]
    model = SkipGramEmbedding(**config["embedding"], seed=stage_seed(config["seed"], "embed")).fit(seqs)
    table = model.table_
    rows = [embed_movie(s, table, m).e for m, s in zip(ids, seqs)]
    table.save(store.path("embedding.bin"))
    table.save_text(store.path("embedding.txt"))
    write_matrix(store.path("movie_embeddings.csv"), ids, np.vstack(rows))
    store.record("embed", inputs, ["embedding.bin", "embedding.txt", "movie_embeddings.csv"])
    return {"vocab": len(table), "dim": table.dim, "loss": model.loss_history_[-1] if model.loss_history_ else None}


def stage_pairs(config, store: ArtifactStore):
    inputs = store.require(["catalog.jsonl", "transactions.csv", "split.json"])
    catalog = read_catalog(store.path("catalog.jsonl"))
    train, _, cutoff = _split_ids(read_json(store.path("split.json")))
    transactions = _train_transactions(read_transactions(store.path("transactions.csv")), cutoff)
    full = build_pair_dataset(transactions, {m: catalog[m] for m in train})
    sampled = balance_sample(full, config["pairs"]["negative_ratio"], seed=stage_seed(config["seed"], "pairs"))
    sampled.to_csv(store.path("pairs.csv"))
    summary = {"rows_before_sampling": len(full), "positives": full.n_positive,
               "rows": len(sampled), "negative_ratio": config["pairs"]["negative_ratio"]}
    write_json(store.path("pairs_summary.json"), summary)
    store.record("pairs", inputs, ["pairs.csv", "pairs_summary.json"])
    return summary


def stage_train_metric(config, store: ArtifactStore):
    inputs = store.require(["pairs.csv", "movie_embeddings.csv"])
    pairs = PairSet.from_csv(store.path("pairs.csv"))
    ids, E = read_matrix(store.path("movie_embeddings.csv"))
    row = {m: i for i, m in enumerate(ids)}
    missing = [m for m in pairs.movie_ids if m not in row]
    if missing:
        raise DataError(f"pairs reference movies without embeddings: {missing[:5]}")
    remap = np.array([row[m] for m in pairs.movie_ids], dtype=np.int64)
    mc = config["metric"]
    tc = TrainConfig(
        margin=mc["margin"], batch_size=mc["batch_size"], epochs=mc["epochs"],
        learning_rate=mc["learning_rate"], seed=stage_seed(config["seed"], "train-metric"),
        init_scale=mc["init_scale"], hidden_dims=tuple(mc["hidden_dims"]), output_dim=mc["output_dim"],
        max_norm=mc["max_norm"],
    )
    net, history = fit_indexed(E, remap[pairs.movie_a], remap[pairs.movie_b], pairs.label, tc)
    net.save(store.path("metric.bin"))
    write_matrix(store.path("movie_z.csv"), ids, forward(net, E))
    write_json(store.path("metric_log.json"), {"epoch_loss": history, "layer_dims": net.layer_dims})
    store.record("train-metric", inputs, ["metric.bin", "movie_z.csv", "metric_log.json"])
    return {"final_loss": history[-1] if history else None, "layer_dims": net.layer_dims}


def audit_temporal_hygiene(catalog, transactions, features: FeatureTable, pairs: Optional[PairSet] = None):
    """Raise DataError if any pair or feature row could have seen the future.

    Pairs must be ordered by strict release date. Each feature row needs a
    purchase strictly before the target's release, and recency must be
    positive (no purchase at or after release was counted).
    """
    if pairs is not None and len(pairs):
        rel = np.array([catalog[m].release_date.toordinal() for m in pairs.movie_ids])
        bad = rel[pairs.movie_a] >= rel[pairs.movie_b]
        if bad.any():
            raise DataError(f"{int(bad.sum())} pair rows violate release ordering")
    first: Dict[str, datetime] = {}
    for t in transactions:
        if t.customer_id not in first or t.timestamp < first[t.customer_id]:
            first[t.customer_id] = t.timestamp
    releases = [as_datetime(catalog[m].release_date) for m in features.movie_ids]
    for c, m in zip(features.customer, features.movie):
        if not first[features.customer_ids[c]] < releases[m]:
            raise DataError(f"feature row for {features.customer_ids[c]}/{features.movie_ids[m]} "
                            "has no pre-release history")
    if len(features) and (features.R <= 0).any():
        raise DataError("recency computed from a purchase on or after release")


def stage_features(config, store: ArtifactStore):
    inputs = store.require(["catalog.jsonl", "transactions.csv", "split.json", "movie_z.csv", "pairs.csv"])
    catalog = read_catalog(store.path("catalog.jsonl"))
    transactions = read_transactions(store.path("transactions.csv"))
    train, holdout, cutoff = _split_ids(read_json(store.path("split.json")))
    ids, Z = read_matrix(store.path("movie_z.csv"))
    zs = dict(zip(ids, Z))
    pc = config["profiles"]
    train_tx = _train_transactions(transactions, cutoff)
    ftr = build_feature_rows(build_profiles(train_tx), catalog, zs, pc["delta"], pc["lookback_days"], train)
    fte = build_feature_rows(build_profiles(transactions), catalog, zs, pc["delta"], pc["lookback_days"], holdout)
    audit_temporal_hygiene(catalog, train_tx, ftr, PairSet.from_csv(store.path("pairs.csv")))
    audit_temporal_hygiene(catalog, transactions, fte)
    ftr.to_csv(store.path("features_train.csv"))
    fte.to_csv(store.path("features_test.csv"))
    summary = {"train_rows": len(ftr), "test_rows": len(fte), "train_skipped": ftr.skipped,
               "test_skipped": fte.skipped, "train_positive_rate": float(ftr.label.mean()) if len(ftr) else None}
    write_json(store.path("features_summary.json"), summary)
    store.record("features", inputs, ["features_train.csv", "features_test.csv", "features_summary.json"])
    return summary


def _predictor_params(config, **extra):
    return {**config["predictor"], "seed": stage_seed(config["seed"], "train-predictor"), **extra}


def stage_train_predictor(config, store: ArtifactStore):
    inputs = store.require(["features_train.csv"])
    rows = FeatureTable.from_csv(store.path("features_train.csv"))
    deep = PurchaseLogit(**_predictor_params(config)).fit(rows.X, rows.label)
    base = PurchaseLogit(**_predictor_params(config, use_distance=False)).fit(rows.X, rows.label)
    deep.save(store.path("predictor.json"))
    base.save(store.path("baseline.json"))
    store.record("train-predictor", inputs, ["predictor.json", "baseline.json"])
    return {"deep": deep.to_dict(), "baseline": base.to_dict()}


def score_target(model: PurchaseLogit, z_target, release_date, hm: HistoryMatrix, Z, delta, lookback_days):
    """Probability for every customer in ``hm``; cold customers get the model's
    mean-distance fallback and are flagged."""
    ref = to_days(release_date)
    vecs, eligible = hm.customer_vectors(Z, ref, delta)
    F, R = hm.freq_recency(ref, lookback_days)
    phi = np.full(len(hm.customer_ids), np.nan)
    phi[eligible] = np.linalg.norm(vecs[eligible] - z_target, axis=1)
    probs = model.predict_proba(np.column_stack([phi, F, R]))[:, 1]
    return probs, ~eligible


def baseline_score(model: PurchaseLogit, profiles, release_date, lookback_days) -> Dict[str, float]:
    """Frequency/recency-only probabilities for one target release date."""
    if model.beta_ != 0.0:
        raise ConfigError("baseline model must have its distance coefficient frozen at 0")
    hm = HistoryMatrix(profiles, [])
    F, R = hm.freq_recency(to_days(release_date), lookback_days)
    X = np.column_stack([np.zeros(len(F)), F, R])
    return dict(zip(hm.customer_ids, model.predict_proba(X)[:, 1]))


def _scoring_context(config, store):
    catalog = read_catalog(store.path("catalog.jsonl"))
    transactions = read_transactions(store.path("transactions.csv"))
    ids, Z = read_matrix(store.path("movie_z.csv"))
    profiles = build_profiles(transactions)
    return catalog, profiles, ids, Z, HistoryMatrix(profiles, ids)


def stage_infer(config, store: ArtifactStore):
    inputs = store.require(["catalog.jsonl", "transactions.csv", "split.json", "embedding.bin",
                            "metric.bin", "movie_z.csv", "predictor.json"])
    table = EmbeddingTable.load(store.path("embedding.bin"))
    net = MetricNet.load(store.path("metric.bin"))
    model = PurchaseLogit.load(store.path("predictor.json"))
    catalog, profiles, ids, Z, hm = _scoring_context(config, store)
    targets_path = config["paths"].get("targets")
    if targets_path:
        if not os.path.exists(targets_path):
            raise MissingArtifact(f"targets file {targets_path} not found")
        targets = list(read_catalog(targets_path).values())
    else:
        targets = [catalog[m] for m in read_json(store.path("split.json"))["holdout"]]
    pc = config["profiles"]
    trunc = config["text"]["max_plot_tokens"]
    out_path = config["paths"].get("predictions") or store.path("predictions.csv")
    n_cold = 0
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["customer_id", "movie_id", "probability", "cold_flag"])
        for movie in sorted(targets, key=lambda m: m.id):
            e = embed_movie(training_sequence(movie, trunc), table, movie.id).e
            z = forward(net, e)
            probs, cold = score_target(model, z, movie.release_date, hm, Z, pc["delta"], pc["lookback_days"])
            n_cold += int(cold.sum())
            for cust, p, c in zip(hm.customer_ids, probs, cold):
                writer.writerow([cust, movie.id, repr(float(p)), int(c)])
    outputs = ["predictions.csv"] if os.path.abspath(out_path) == os.path.abspath(store.path("predictions.csv")) else []
    store.record("infer", inputs, outputs)
    return {"targets": len(targets), "customers": len(hm.customer_ids), "cold_rows": n_cold, "output": out_path}


def _segments(rows: FeatureTable, deep, base):
    """AUC by frequency quartile (customers grouped by F at the target's release)."""
    out = []
    if not len(rows):
        return out
    edges = np.unique(np.quantile(rows.F, [0.0, 0.25, 0.5, 0.75, 1.0]))
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        mask = (rows.F >= lo) & ((rows.F < hi) if i < len(edges) - 2 else (rows.F <= hi))
        y = rows.label[mask]
        entry = {"segment": f"F_q{i + 1}", "F_range": [float(lo), float(hi)], "rows": int(mask.sum())}
        if len(y) and 0 < y.sum() < len(y):
            entry["auc_deep"] = evaluation.auc(deep[mask], y)
            entry["auc_baseline"] = evaluation.auc(base[mask], y)
        out.append(entry)
    return out


def stage_eval(config, store: ArtifactStore):
    inputs = store.require(["features_train.csv", "features_test.csv", "predictor.json", "baseline.json"])
    deep = PurchaseLogit.load(store.path("predictor.json"))
    base = PurchaseLogit.load(store.path("baseline.json"))
    threshold = config["eval"]["threshold"]
    report = {"auc": {"deep": {}, "baseline": {}}, "gain": {}, "rows": {},
              "precision_recall": {}, "ranking_loss": {}}
    scored = {}
    for split in ("train", "test"):
        rows = FeatureTable.from_csv(store.path(f"features_{split}.csv"))
        report["rows"][split] = {"rows": len(rows), "positives": int(rows.label.sum())}
        p_deep = deep.predict_proba(rows.X)[:, 1]
        p_base = base.predict_proba(rows.X)[:, 1]
        scored[split] = (rows, p_deep, p_base)
        report["auc"]["deep"][split] = evaluation.auc(p_deep, rows.label)
        report["auc"]["baseline"][split] = evaluation.auc(p_base, rows.label)
        report["gain"][split] = report["auc"]["deep"][split] - report["auc"]["baseline"][split]

    rows, p_deep, p_base = scored["test"]
    for name, p in (("deep", p_deep), ("baseline", p_base)):
        pr = evaluation.precision_recall_at_threshold(p, threshold, labels=rows.label)
        report["precision_recall"][name] = {"threshold": threshold, **pr._asdict()}
        per_customer: Dict[str, list] = {}
        for c, s, y in zip(rows.customer, p, rows.label):
            per_customer.setdefault(rows.customer_ids[c], []).append((float(s), int(y)))
        report["ranking_loss"][name] = evaluation.ranking_loss(per_customer)
    report["segments"] = _segments(rows, p_deep, p_base)
    report["coefficients"] = {k: deep.to_dict()[k] for k in ("alpha", "beta", "gamma_F", "gamma_R", "pos_weight")}
    write_json(store.path("metrics.json"), report)
    store.record("eval", inputs, ["metrics.json"])
    return report


def _default_comps_target(transactions, holdout):
    counts = {m: 0 for m in holdout}
    for t in transactions:
        if t.movie_id in counts:
            counts[t.movie_id] += 1
    return min(holdout, key=lambda m: (-counts[m], m))


def stage_comps(config, store: ArtifactStore):
    inputs = store.require(["catalog.jsonl", "transactions.csv", "split.json", "movie_z.csv", "predictor.json"])
    model = PurchaseLogit.load(store.path("predictor.json"))
    catalog, profiles, ids, Z, hm = _scoring_context(config, store)
    zs = dict(zip(ids, Z))
    holdout = read_json(store.path("split.json"))["holdout"]
    ec, pc = config["eval"], config["profiles"]
    transactions = read_transactions(store.path("transactions.csv"))
    target = ec["comps_target"] or _default_comps_target(transactions, holdout)
    if target not in catalog:
        raise ConfigError(f"comps target {target!r} not in catalog")

    def comps_for(movie_id):
        movie = catalog[movie_id]
        probs, _ = score_target(model, zs[movie_id], movie.release_date, hm, Z, pc["delta"], pc["lookback_days"])
        predicted = evaluation.comparable_movies(dict(zip(hm.customer_ids, probs)), profiles, movie_id,
                                                 movie.release_date, ec["segment_fraction"], ec["k"])
        actual = evaluation.actual_comparable_movies(profiles, movie_id, movie.release_date, ec["k"])
        return predicted, actual

    predicted, actual = comps_for(target)
    per_target = {}
    for m in holdout:
        try:
            p, a = comps_for(m)
        except evaluation.EmptySegment:
            continue
        per_target[m] = evaluation.comps_overlap(p, a, ec["k"])
    report = {
        "target": target,
        "k": ec["k"],
        "segment_fraction": ec["segment_fraction"],
        "predicted": [[m, c] for m, c in predicted],
        "actual": [[m, c] for m, c in actual],
        "overlap": evaluation.comps_overlap(predicted, actual, ec["k"]),
        "holdout_overlap": dict(sorted(per_target.items())),
        "holdout_overlap_mean": float(np.mean(list(per_target.values()))) if per_target else None,
    }
    write_json(store.path("comps.json"), report)
    store.record("comps", inputs, ["comps.json"])
    return report


def stage_project(config, store: ArtifactStore):
    inputs = store.require(["movie_z.csv"])
    ids, Z = read_matrix(store.path("movie_z.csv"))
    projection = evaluation.project_2d(dict(zip(ids, Z)))
    gt_path = _resolve(config, "ground_truth", "ground_truth.json")
    groups = read_json(gt_path)["movie_genre"] if os.path.exists(gt_path) else None
    evaluation.write_projection_csv(store.path("projection.csv"), projection, groups)
    evaluation.write_projection_svg(store.path("projection.svg"), projection, groups)
    report = {"movies": len(projection)}
    if groups:
        truth = [groups[m] for m, _, _ in projection]
        k = len(set(truth))
        report["n_clusters"] = k
        report["purity"] = evaluation.cluster_purity([(x, y) for _, x, y in projection], truth, k,
                                                     seed=stage_seed(config["seed"], "project"))
    write_json(store.path("projection.json"), report)
    store.record("project", inputs, ["projection.csv", "projection.svg", "projection.json"])
    return report


_STAGE_FUNCS = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "embed": stage_embed,
    "pairs": stage_pairs,
    "train-metric": stage_train_metric,
    "features": stage_features,
    "train-predictor": stage_train_predictor,
    "infer": stage_infer,
    "eval": stage_eval,
    "comps": stage_comps,
    "project": stage_project,
}


def run_stage(stage: str, config: Mapping) -> Dict:
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}")
    store = ArtifactStore(config["paths"]["artifacts"])
    started = time.perf_counter()
    result = _STAGE_FUNCS[stage](config, store)
    logger.info("stage %s finished in %.1fs", stage, time.perf_counter() - started)
    return result


def run_all(config: Mapping, stages: Sequence[str] = tuple(STAGES)) -> Dict[str, Dict]:
    """Run stages in order; wall-clock times go to ``timings.json``, never the reports."""
    results, timings = {}, {}
    for stage in stages:
        started = time.perf_counter()
        results[stage] = run_stage(stage, config)
        timings[stage] = time.perf_counter() - started
    write_json(os.path.join(config["paths"]["artifacts"], "timings.json"),
               {"seconds": timings, "total": math.fsum(timings.values())})
    return results
