"""Run configuration and master-seed fan-out.

A run is described by one YAML document. Every key is optional; missing keys
take the defaults below::

    seed: 20200712                 # master seed, fans out to every consumer
    paths:
      dataset_dir: run/dataset     # dataset.csv, dataset.json, splits.*
      model_dir: run/models        # <kind>.json checkpoints, lstm_history.csv
      report_dir: run/reports      # comparison.csv/.txt, confusion_*, roc_*, pr_*
    generation:                    # GenerationConfig fields (rng_seed is derived)
      samples_per_mode: 1500
      horizon: 400.0
      mode_horizons: {RAPID: 100.0}
      sample_interval: 1.0
      observation_noise_sigma: null  # mA; null = 0.5 % of I0
      coefficients: {GRADUAL: {scale_parameter: {mean: .., std: .., low: .., high: ..}, ...}, ...}
      laser_pool: [{optical_power: .., threshold_current: .., temperature: .., wavelength: ..}, ...]
      sudden_jump_magnitude: {mean: 20.0, std: 2.0, low: 16.0, high: 26.0}
      sudden_onset_time: {low: 160.0, high: 392.0}
    split_fractions: [0.6, 0.2, 0.2]
    partial_failure:
      fault_fraction_range: [0.2, 0.4]
    network: {num_lstm_layers: 2, hidden_dim: 100, input_dim: 5, num_classes: 4}
    training: {epochs: 100, batch_size: 32, learning_rate: 0.001, rho: 0.9,
               epsilon: 1.0e-8, clip_norm: 5.0, patience: 10,
               min_delta: 1.0e-4}   # patience resets only on a drop > min_delta
    baselines: {knn_k: 6, logreg_C: 100.0, logreg_tol: 1.0e-6,
                logreg_max_iter: 5000, rf_trees: 100}
    threshold: {eol_current_increase_fraction: 0.2,
                sudden_jump_step_fraction: 0.1, rapid_crossing_index_bound: 30}
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .baselines import ThresholdDetector
from .degradation import ConfigError, GenerationConfig
from .neural import NetworkConfig, TrainingConfig
from .pipeline import PartialFailureSpec

DEFAULT_SEED = 20200712

SEED_PURPOSES = ("generation", "split", "mutation", "init", "shuffle", "logreg", "forest")


def derive_seed(master_seed: int, purpose: str) -> int:
    """64-bit sub-seed from SHA-256 of ``"<master>:<purpose>"``.

    Hashing per purpose means a new consumer never shifts existing streams.
    """
    digest = hashlib.sha256(f"{int(master_seed)}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Paths:
    dataset_dir: Path = Path("run/dataset")
    model_dir: Path = Path("run/models")
    report_dir: Path = Path("run/reports")

    @classmethod
    def under(cls, root) -> "Paths":
        root = Path(root)
        return cls(root / "dataset", root / "models", root / "reports")


@dataclass(frozen=True)
class BaselineConfig:
    knn_k: int = 6
    logreg_C: float = 100.0
    logreg_tol: float = 1e-6
    logreg_max_iter: int = 5000
    rf_trees: int = 100

    def __post_init__(self):
        if self.knn_k < 1 or self.rf_trees < 1 or self.logreg_C <= 0:
            raise ConfigError("knn_k and rf_trees must be >= 1 and logreg_C > 0")


@dataclass(frozen=True)
class RunConfig:
    seed: int = DEFAULT_SEED
    paths: Paths = Paths()
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    partial_failure: PartialFailureSpec = PartialFailureSpec()
    network: NetworkConfig = NetworkConfig()
    training: TrainingConfig = TrainingConfig()
    baselines: BaselineConfig = BaselineConfig()
    threshold: ThresholdDetector = ThresholdDetector()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        fr = self.split_fractions
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1) > 1e-9:
            raise ConfigError(f"split_fractions must be three shares summing to 1, got {fr}")

    def sub_seed(self, purpose: str) -> int:
        return derive_seed(self.seed, purpose)

    def seeded(self) -> "RunConfig":
        """Copy with every sub-config's seed replaced by its derived sub-seed."""
        return replace(
            self,
            generation=replace(self.generation, rng_seed=self.sub_seed("generation")),
            partial_failure=replace(self.partial_failure, rng_seed=self.sub_seed("mutation")),
            training=replace(
                self.training, init_seed=self.sub_seed("init"), shuffle_seed=self.sub_seed("shuffle")
            ),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "paths": {k: str(v) for k, v in asdict(self.paths).items()},
            "generation": self.generation.to_dict(),
            "split_fractions": list(self.split_fractions),
            "partial_failure": {"fault_fraction_range": list(self.partial_failure.fault_fraction_range)},
            "network": asdict(self.network),
            "training": asdict(self.training),
            "baselines": asdict(self.baselines),
            "threshold": asdict(self.threshold),
        }


def _build(cls, data: Mapping | None, section: str, **fixed):
    data = dict(data or {})
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**{**data, **fixed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def from_mapping(data: Mapping[str, Any] | None) -> RunConfig:
    data = dict(data or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    if "paths" in data:
        kwargs["paths"] = _build(Paths, {k: Path(v) for k, v in (data["paths"] or {}).items()}, "paths")
    if "generation" in data:
        try:
            kwargs["generation"] = GenerationConfig.from_dict(data["generation"] or {})
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid 'generation' section: {exc}") from exc
    if "split_fractions" in data:
        kwargs["split_fractions"] = tuple(float(x) for x in data["split_fractions"])
    if "partial_failure" in data:
        pf = dict(data["partial_failure"] or {})
        if "fault_fraction_range" in pf:
            pf["fault_fraction_range"] = tuple(pf["fault_fraction_range"])
        kwargs["partial_failure"] = _build(PartialFailureSpec, pf, "partial_failure")
    for name, cls in (
        ("network", NetworkConfig),
        ("training", TrainingConfig),
        ("baselines", BaselineConfig),
        ("threshold", ThresholdDetector),
    ):
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    return RunConfig(**kwargs)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return from_mapping(data)
