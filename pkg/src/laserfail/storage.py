"""On-disk formats: dataset CSV + JSON sidecar, split files, model checkpoints.

All text is UTF-8 with LF line endings; floats are written with ``repr`` so a
read-back reproduces the exact values. Every file is written to a temporary
name first and renamed into place once complete.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .baselines import DecisionTree, KnnModel, LogRegModel, RandomForestModel
from .degradation import (
    DegradationCoefficients,
    DegradationMode,
    DegradationSample,
    GenerationConfig,
    LaserParams,
)
from .fileio import atomic_write_text
from .neural import LstmLayerParams, LstmNetwork, NetworkConfig
from .pipeline import WINDOW, Scaler, SplitDataset, WindowedSample, compress_to_window

CHECKPOINT_FORMAT = "laserfail-checkpoint"
CHECKPOINT_VERSION = 1
DATASET_VERSION = 1

DATASET_COLUMNS = ("sample_id", "mode_code", "P_mW", "I0_mA", "T_K", "lambda_nm", "t_hours", "current_mA")
SPLIT_COLUMNS = DATASET_COLUMNS + ("split_assignment", "mutated")
SPLIT_NAMES = {"train": "train", "validation": "val", "test": "test"}


class CheckpointVersionError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _laser_cells(p: LaserParams) -> list[str]:
    return [repr(p.optical_power), repr(p.threshold_current), repr(p.temperature), repr(p.wavelength)]


# ------------------------------------------------------------------ dataset


def dataset_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_COLUMNS)
    for s in samples:
        head = [str(s.sample_id), str(int(s.mode))] + _laser_cells(s.laser)
        w.writerows(head + [repr(float(t)), repr(float(c))] for t, c in zip(s.times, s.series))
    return buf.getvalue()


def write_dataset(samples, config: GenerationConfig, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    provenance = [
        {
            "sample_id": s.sample_id,
            "mode_code": int(s.mode),
            "coefficients": {
                "beta": s.coefficients.beta,
                "derating_exponent": s.coefficients.derating_exponent,
                "scale_parameter": s.coefficients.scale_parameter,
                "activation_energy": s.coefficients.activation_energy,
            },
            "fault_onset_hours": s.fault_onset,
        }
        for s in samples
    ]
    sidecar = {
        "format_version": DATASET_VERSION,
        "rng_seed": config.rng_seed,
        "generation_config": config.to_dict(),
        "columns": list(DATASET_COLUMNS),
        "samples": provenance,
    }
    csv_path, json_path = directory / "dataset.csv", directory / "dataset.json"
    atomic_write_text(csv_path, dataset_csv(samples))
    atomic_write_text(json_path, _dumps(sidecar))
    return csv_path, json_path


def _load_table(path: Path, columns) -> tuple[list[str], np.ndarray]:
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header == [""]:
            raise DatasetFormatError(f"{path} is empty")
        if tuple(header[: len(columns)]) != tuple(columns):
            raise DatasetFormatError(f"{path} has unexpected columns {header}")
        body = fh.read()
    if not body.strip():
        raise DatasetFormatError(f"{path} has a header but no rows")
    return header, body


def _groups(ids: np.ndarray):
    starts = np.r_[0, np.flatnonzero(np.diff(ids)) + 1]
    ends = np.r_[starts[1:], len(ids)]
    return zip(starts, ends)


def read_dataset(directory) -> tuple[list[DegradationSample], GenerationConfig]:
    directory = Path(directory)
    csv_path, json_path = directory / "dataset.csv", directory / "dataset.json"
    _, body = _load_table(csv_path, DATASET_COLUMNS)
    table = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    if not json_path.exists():
        raise FileNotFoundError(f"missing file: {json_path}")
    sidecar = json.loads(json_path.read_text(encoding="utf-8"))
    config = GenerationConfig.from_dict(sidecar["generation_config"])
    meta = {m["sample_id"]: m for m in sidecar["samples"]}
    samples = []
    for a, b in _groups(table[:, 0]):
        rows = table[a:b]
        sid = int(rows[0, 0])
        m = meta[sid]
        samples.append(
            DegradationSample(
                series=rows[:, 7].copy(),
                times=rows[:, 6].copy(),
                mode=DegradationMode(int(rows[0, 1])),
                laser=LaserParams(*(float(v) for v in rows[0, 2:6])),
                coefficients=DegradationCoefficients(**m["coefficients"]),
                sample_id=sid,
                fault_onset=m["fault_onset_hours"],
            )
        )
    return samples, config


# ------------------------------------------------------------------- splits


def _window_times(config: GenerationConfig, mode: DegradationMode) -> np.ndarray:
    return compress_to_window(config.times_for(mode))


def write_splits(split: SplitDataset, config: GenerationConfig, directory, fractions, partial) -> tuple[Path, Path]:
    directory = Path(directory)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPLIT_COLUMNS)
    windows_meta = []
    times = {m: _window_times(config, m) for m in DegradationMode}
    for part, tag in SPLIT_NAMES.items():
        for win in getattr(split, part):
            head = [str(win.sample_id), str(int(win.label))] + _laser_cells(win.laser)
            tail = [tag, "1" if win.mutated else "0"]
            w.writerows(
                head + [repr(float(t)), repr(float(c))] + tail for t, c in zip(times[win.label], win.current)
            )
            windows_meta.append(
                {"sample_id": win.sample_id, "fault_start": win.fault_start, "fault_fraction": win.fault_fraction}
            )
    sidecar = {
        "format_version": DATASET_VERSION,
        "split_seed": split.split_seed,
        "fractions": list(fractions),
        "partial_failure": {
            "fault_fraction_range": list(partial.fault_fraction_range),
            "rng_seed": partial.rng_seed,
        },
        "scaler": split.scaler.to_dict(),
        "windows": windows_meta,
    }
    csv_path, json_path = directory / "splits.csv", directory / "splits.json"
    atomic_write_text(csv_path, buf.getvalue())
    atomic_write_text(json_path, _dumps(sidecar))
    return csv_path, json_path


def read_splits(directory) -> SplitDataset:
    directory = Path(directory)
    csv_path, json_path = directory / "splits.csv", directory / "splits.json"
    _, body = _load_table(csv_path, SPLIT_COLUMNS)
    reader = csv.reader(io.StringIO(body))
    rows = list(reader)
    tags = [r[8] for r in rows]
    numeric = np.array([[float(v) for v in r[:8]] + [float(r[9])] for r in rows])
    if not json_path.exists():
        raise FileNotFoundError(f"missing file: {json_path}")
    sidecar = json.loads(json_path.read_text(encoding="utf-8"))
    meta = {m["sample_id"]: m for m in sidecar["windows"]}
    parts = {"train": [], "val": [], "test": []}
    starts = np.r_[0, np.flatnonzero(np.diff(numeric[:, 0]) != 0) + 1]
    for a in starts:
        block = numeric[a : a + WINDOW]
        sid = int(block[0, 0])
        m = meta[sid]
        parts[tags[a]].append(
            WindowedSample(
                current=block[:, 7].copy(),
                laser=LaserParams(*(float(v) for v in block[0, 2:6])),
                label=DegradationMode(int(block[0, 1])),
                sample_id=sid,
                fault_start=m["fault_start"],
                mutated=bool(block[0, 8]),
                fault_fraction=m["fault_fraction"],
            )
        )
    return SplitDataset(
        parts["train"], parts["val"], parts["test"], Scaler.from_dict(sidecar["scaler"]), sidecar["split_seed"]
    )


# -------------------------------------------------------------- checkpoints


def _matrix(a: np.ndarray) -> dict:
    a = np.asarray(a)
    return {"shape": list(a.shape), "dtype": str(a.dtype), "data": a.ravel(order="C").tolist()}


def _array(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=d["dtype"]).reshape(d["shape"])


def model_state(kind: str, model) -> tuple[dict, dict]:
    """``(config, params)`` documents for a fitted model."""
    if kind == "lstm":
        params = {name: _matrix(p) for name, p in model.parameters().items()}
        return dict(model.config.__dict__), params
    if kind == "knn":
        return {"k": model.k}, {"X": _matrix(model.X), "y": _matrix(model.y)}
    if kind == "logreg":
        config = {"C": model.C, "converged": model.converged, "iterations": model.iterations}
        return config, {"W": _matrix(model.W), "intercept": _matrix(model.intercept)}
    if kind == "rf":
        trees = [
            {k: _matrix(getattr(t, k)) for k in ("feature", "threshold", "left", "right", "label")}
            for t in model.trees
        ]
        config = {"seed": model.seed, "bootstrap": model.bootstrap, "max_features": model.max_features}
        return config, {"trees": trees}
    raise ValueError(f"unknown model kind {kind!r}")


def model_from_state(kind: str, config: dict, params: dict):
    if kind == "lstm":
        net_config = NetworkConfig(**config)
        layers = [
            LstmLayerParams(_array(params[f"layer{n}.U"]), _array(params[f"layer{n}.W"]), _array(params[f"layer{n}.b"]))
            for n in range(net_config.num_lstm_layers)
        ]
        return LstmNetwork(net_config, layers, _array(params["head.W"]), _array(params["head.b"]))
    if kind == "knn":
        return KnnModel(_array(params["X"]), _array(params["y"]), config["k"])
    if kind == "logreg":
        return LogRegModel(
            _array(params["W"]), _array(params["intercept"]), config["C"], config["converged"], config["iterations"]
        )
    if kind == "rf":
        trees = [DecisionTree(**{k: _array(v) for k, v in t.items()}) for t in params["trees"]]
        return RandomForestModel(trees, config["seed"], config["bootstrap"], config["max_features"])
    raise ValueError(f"unknown model kind {kind!r}")


def checkpoint_document(kind: str, model, scaler: Scaler, metadata: dict | None = None) -> dict:
    config, params = model_state(kind, model)
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_kind": kind,
        "config": config,
        "params": params,
        "scaler": scaler.to_dict(),
        "metadata": metadata or {},
    }


def save_checkpoint(path, kind: str, model, scaler: Scaler, metadata: dict | None = None) -> Path:
    path = Path(path)
    atomic_write_text(path, json.dumps(checkpoint_document(kind, model, scaler, metadata), sort_keys=True) + "\n")
    return path


def load_checkpoint(path):
    """Returns ``(kind, model, scaler, metadata)``; refuses other versions."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointVersionError(f"{path} is not a {CHECKPOINT_FORMAT} document")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path} has checkpoint version {doc.get('version')!r}; this build reads version {CHECKPOINT_VERSION}"
        )
    kind = doc["model_kind"]
    return kind, model_from_state(kind, doc["config"], doc["params"]), Scaler.from_dict(doc["scaler"]), doc["metadata"]


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
    for r in history:
        w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_accuracy)])
    return buf.getvalue()
