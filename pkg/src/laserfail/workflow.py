"""End-to-end steps shared by the command line and the acceptance suite."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import storage
from .baselines import flatten_features, knn_fit, logreg_fit, rf_fit
from .config import RunConfig
from .degradation import generate_dataset
from .metrics import compare_models, write_reports
from .neural import train
from .pipeline import SplitDataset, prepare

log = logging.getLogger(__name__)

MODEL_KINDS = ("lstm", "knn", "logreg", "rf")


def generate(cfg: RunConfig):
    cfg = cfg.seeded()
    samples = generate_dataset(cfg.generation)
    storage.write_dataset(samples, cfg.generation, cfg.paths.dataset_dir)
    return samples


def preprocess(cfg: RunConfig) -> SplitDataset:
    cfg = cfg.seeded()
    samples, generation = storage.read_dataset(cfg.paths.dataset_dir)
    split = prepare(samples, generation, cfg.split_fractions, cfg.sub_seed("split"), cfg.partial_failure)
    storage.write_splits(split, generation, cfg.paths.dataset_dir, cfg.split_fractions, cfg.partial_failure)
    return split


def fit(kind: str, split: SplitDataset, cfg: RunConfig):
    """Train one model kind; returns ``(model, history or None)``."""
    cfg = cfg.seeded()
    if kind == "lstm":
        return train(split, cfg.network, cfg.training)
    X, y = flatten_features(split.features("train")), split.labels("train")
    b = cfg.baselines
    if kind == "knn":
        return knn_fit(X, y, b.knn_k), None
    if kind == "logreg":
        return logreg_fit(X, y, b.logreg_C, cfg.sub_seed("logreg"), b.logreg_tol, b.logreg_max_iter), None
    if kind == "rf":
        return rf_fit(X, y, b.rf_trees, cfg.sub_seed("forest")), None
    raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def train_and_save(kind: str, cfg: RunConfig, split: SplitDataset | None = None) -> Path:
    split = split if split is not None else storage.read_splits(cfg.paths.dataset_dir)
    start = time.perf_counter()
    model, history = fit(kind, split, cfg)
    seconds = time.perf_counter() - start
    log.info("%s trained in %.1f s", kind, seconds)
    # Timing lives beside the checkpoint so identical runs give identical checkpoints.
    path = Path(cfg.paths.model_dir) / f"{kind}.json"
    storage.atomic_write_text(_timing_path(path), json.dumps({"train_seconds": seconds}) + "\n")
    metadata = {"seed": cfg.seed}
    if history is not None:
        metadata["epochs_run"] = len(history)
        storage.atomic_write_text(Path(cfg.paths.model_dir) / f"{kind}_history.csv", storage.history_csv(history))
    return storage.save_checkpoint(path, kind, model, split.scaler, metadata)


def _timing_path(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.stem + "_timing.json")


def _train_seconds(checkpoint: Path) -> float:
    try:
        return float(json.loads(_timing_path(checkpoint).read_text())["train_seconds"])
    except (OSError, ValueError, KeyError):
        return 0.0


def model_predictor(kind: str, model, scaler):
    """Predictor over a SplitDataset's test windows, using the checkpoint's scaler."""

    def predict(split: SplitDataset):
        from .pipeline import apply_scaler

        feats = apply_scaler(scaler, split.test)
        if kind == "lstm":
            probs = model.predict_proba(feats)
            return np.argmax(probs, axis=1), probs
        flat = flatten_features(feats)
        if kind == "knn":
            return model.predict(flat), None
        probs = model.predict_proba(flat)
        return np.argmax(probs, axis=1), probs

    return predict


def threshold_predictor(detector):
    def predict(split: SplitDataset):
        windows = [w.current for w in split.test]
        return detector.predict(windows, [w.laser.threshold_current for w in split.test]), None

    return predict


def evaluate(cfg: RunConfig, checkpoints=None, include_threshold: bool = False, split: SplitDataset | None = None):
    split = split if split is not None else storage.read_splits(cfg.paths.dataset_dir)
    if checkpoints is None:
        checkpoints = [p for k in MODEL_KINDS if (p := Path(cfg.paths.model_dir) / f"{k}.json").exists()]
    models, train_seconds = [], {}
    for path in checkpoints:
        kind, model, scaler, _ = storage.load_checkpoint(path)
        models.append((kind, model_predictor(kind, model, scaler)))
        train_seconds[kind] = _train_seconds(Path(path))
    if include_threshold:
        models.append(("threshold", threshold_predictor(cfg.threshold)))
    if not models:
        raise FileNotFoundError(f"no checkpoints found in {cfg.paths.model_dir}")
    evaluations = compare_models(models, split)
    for e in evaluations:
        e.row = replace(e.row, seconds=e.row.seconds + train_seconds.get(e.row.model, 0.0))
    write_reports(evaluations, cfg.paths.report_dir)
    return evaluations


def run_all(cfg: RunConfig, kinds=MODEL_KINDS):
    """generate -> preprocess -> train every kind -> evaluate with the threshold row."""
    generate(cfg)
    split = preprocess(cfg)
    paths = []
    for kind in kinds:
        log.info("training %s", kind)
        paths.append(train_and_save(kind, cfg, split))
    return evaluate(cfg, paths, include_threshold=True, split=split)
