"""Fixed-length windows, train-fitted scaling, stratified splits and the
partial-failure rewrite of the test split."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .degradation import (
    DegradationCoefficients,
    DegradationMode,
    DegradationSample,
    GenerationConfig,
    LaserParams,
    generate_trajectory,
    sample_rng,
)

WINDOW = 100
N_CHANNELS = 5
CHANNELS = ("current", "threshold_current", "temperature", "optical_power", "wavelength")
CLAMP = (-0.5, 1.5)


@dataclass(frozen=True, eq=False)
class WindowedSample:
    """A 100-step current window with its laser parameters, still in mA.

    ``fault_start`` is the window index where the fault pattern begins (``None``
    for normal operation). ``fault_fraction`` is set only on mutated windows.
    """

    current: np.ndarray
    laser: LaserParams
    label: DegradationMode
    sample_id: int = 0
    fault_start: int | None = None
    mutated: bool = False
    fault_fraction: float | None = None

    def __post_init__(self):
        if self.current.shape != (WINDOW,):
            raise ValueError(f"window must have exactly {WINDOW} steps, got {self.current.shape}")

    def raw_features(self) -> np.ndarray:
        """Unscaled ``(100, 5)`` matrix; static laser parameters repeat per step."""
        p = self.laser
        static = np.array([p.threshold_current, p.temperature, p.optical_power, p.wavelength])
        return np.column_stack([self.current, np.broadcast_to(static, (WINDOW, 4))])


def compress_to_window(series, target_len: int = WINDOW) -> np.ndarray:
    """Resample ``series`` to ``target_len`` points.

    Longer series are averaged over contiguous blocks whose sizes differ by at
    most one; shorter ones are upsampled by nearest-neighbour repetition.
    """
    series = np.asarray(series, dtype=float)
    n = len(series)
    if n == 0:
        raise ValueError("cannot compress an empty series")
    if n == target_len:
        return series.copy()
    if n < target_len:
        return series[(np.arange(target_len) * n) // target_len]
    edges = (np.arange(target_len + 1) * n) // target_len
    sums = np.add.reduceat(series, edges[:-1])
    return sums / np.diff(edges)


def _block_of(raw_index: int, n: int, target_len: int = WINDOW) -> int:
    """Window index whose averaging block (or repeated source) holds ``raw_index``."""
    if n >= target_len:
        edges = (np.arange(target_len + 1) * n) // target_len
        return int(np.searchsorted(edges, raw_index, side="right") - 1)
    return int(math.ceil(raw_index * target_len / n))


def to_window(sample: DegradationSample) -> WindowedSample:
    fault_start = None
    if sample.fault_onset is not None:
        raw = int(np.searchsorted(sample.times, sample.fault_onset, side="left"))
        fault_start = min(_block_of(raw, len(sample.series)), WINDOW - 1)
    return WindowedSample(
        current=compress_to_window(sample.series),
        laser=sample.laser,
        label=sample.mode,
        sample_id=sample.sample_id,
        fault_start=fault_start,
    )


def stack_features(windows: Sequence[WindowedSample]) -> np.ndarray:
    return np.stack([w.raw_features() for w in windows])


def labels_of(windows: Sequence[WindowedSample]) -> np.ndarray:
    return np.array([int(w.label) for w in windows], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-channel min/max fitted on the training windows."""

    minimum: np.ndarray
    maximum: np.ndarray

    def transform(self, features: np.ndarray, clamp: bool = True) -> np.ndarray:
        span = self.maximum - self.minimum
        constant = span <= 0
        scaled = (features - self.minimum) / np.where(constant, 1.0, span)
        scaled = np.where(constant, 0.5, scaled)
        if clamp:
            scaled = np.clip(scaled, *CLAMP)
        return scaled

    def to_dict(self) -> dict:
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist(), "channels": list(CHANNELS)}

    @classmethod
    def from_dict(cls, data: dict) -> "Scaler":
        return cls(np.asarray(data["minimum"], dtype=float), np.asarray(data["maximum"], dtype=float))


def fit_scaler(train_windows: Sequence[WindowedSample]) -> Scaler:
    if len(train_windows) == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    feats = stack_features(train_windows)
    return Scaler(feats.min(axis=(0, 1)), feats.max(axis=(0, 1)))


def apply_scaler(scaler: Scaler, windows) -> np.ndarray:
    """Scaled ``(n, 100, 5)`` features for a window or list of windows."""
    if isinstance(windows, WindowedSample):
        return scaler.transform(windows.raw_features())
    return scaler.transform(stack_features(windows))


@dataclass(frozen=True, eq=False)
class SplitDataset:
    train: list
    validation: list
    test: list
    scaler: Scaler
    split_seed: int

    def features(self, part: str) -> np.ndarray:
        return apply_scaler(self.scaler, getattr(self, part))

    def labels(self, part: str) -> np.ndarray:
        return labels_of(getattr(self, part))


def _split_counts(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    return n_train, n_val, n - n_train - n_val


def split_dataset(windows: Sequence[WindowedSample], fractions=(0.6, 0.2, 0.2), seed: int = 0) -> SplitDataset:
    """Stratified, seeded partition into train/validation/test.

    Within every mode the samples are shuffled and cut at the rounded
    fractions, so each split is within one sample of its exact share.
    """
    if len(fractions) != 3 or not math.isclose(sum(fractions), 1.0) or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative shares summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: tuple[list, list, list] = ([], [], [])
    for mode in DegradationMode:
        members = [w for w in windows if w.label == mode]
        if len(members) < 5:
            raise ValueError(f"need at least 5 samples of {mode.name}, got {len(members)}")
        order = rng.permutation(len(members))
        n_train, n_val, _ = _split_counts(len(members), fractions)
        cuts = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])
        for part, idx in zip(parts, cuts):
            part.extend(members[i] for i in sorted(idx))
    train, val, test = (sorted(p, key=lambda w: w.sample_id) for p in parts)
    return SplitDataset(train, val, test, fit_scaler(train), seed)


@dataclass(frozen=True)
class PartialFailureSpec:
    """Share of a test window that keeps the fault; the rest is normal operation."""

    fault_fraction_range: tuple[float, float] = (0.20, 0.40)
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.fault_fraction_range
        if not 0 < lo <= hi < 1:
            raise ValueError(f"invalid fault fraction range {self.fault_fraction_range}")

    @property
    def normal_prefix_range(self) -> tuple[float, float]:
        lo, hi = self.fault_fraction_range
        return 1 - hi, 1 - lo


NormalSource = Callable[[LaserParams, np.random.Generator], np.ndarray]


def normal_source_from(config: GenerationConfig) -> NormalSource:
    """Normal-operation windows for a given laser, generated like the dataset's."""
    placeholder = DegradationCoefficients(0.0, 0.0, 0.0, 0.0)

    def source(laser: LaserParams, rng: np.random.Generator) -> np.ndarray:
        sample = generate_trajectory(DegradationMode.NORMAL, laser, placeholder, config, rng)
        return compress_to_window(sample.series)

    return source


def _fault_steps(fraction: float) -> int:
    # Guard against 100 * 0.2 landing a hair above 20.
    return int(math.ceil(round(fraction * WINDOW, 9)))


def mutate_to_partial_failure(
    sample: WindowedSample,
    spec: PartialFailureSpec,
    normal_source: NormalSource,
    rng: np.random.Generator,
    fault_fraction: float | None = None,
) -> WindowedSample:
    """Rewrite a fault window as normal operation followed by the fault's onset.

    A fraction ``f`` is drawn from ``spec.fault_fraction_range`` (or forced via
    ``fault_fraction``). The output is ``100 - ceil(100 f)`` steps of freshly
    generated normal operation for the same laser, then the first
    ``ceil(100 f)`` steps of the fault pattern counted from ``fault_start``
    (shifted back if the pattern would run past the window). Normal windows
    pass through unchanged.
    """
    if sample.label == DegradationMode.NORMAL:
        return sample
    f = rng.uniform(*spec.fault_fraction_range) if fault_fraction is None else fault_fraction
    n_fault = _fault_steps(f)
    start = min(sample.fault_start or 0, WINDOW - n_fault)
    prefix = normal_source(sample.laser, rng)[: WINDOW - n_fault]
    current = np.concatenate([prefix, sample.current[start : start + n_fault]])
    return replace(
        sample,
        current=current,
        fault_start=WINDOW - n_fault,
        mutated=True,
        fault_fraction=n_fault / WINDOW,
    )


def mutate_test_split(split: SplitDataset, spec: PartialFailureSpec, normal_source: NormalSource) -> SplitDataset:
    test = [
        mutate_to_partial_failure(w, spec, normal_source, sample_rng(spec.rng_seed, w.sample_id))
        for w in split.test
    ]
    return replace(split, test=test)


def prepare(
    samples: Sequence[DegradationSample],
    generation: GenerationConfig,
    fractions=(0.6, 0.2, 0.2),
    split_seed: int = 0,
    partial: PartialFailureSpec | None = None,
) -> SplitDataset:
    """Window, split and mutate a raw dataset in one go."""
    windows = [to_window(s) for s in samples]
    split = split_dataset(windows, fractions, split_seed)
    partial = partial or PartialFailureSpec()
    return mutate_test_split(split, partial, normal_source_from(generation))
