"""Synthetic laser operating-current trajectories.

The operating current at constant output power grows as

    I(t) = I0 + beta * exp(k * t),   k = P**n * exp(mu0 - Ea / (kB * T))

Gradual and rapid degradation both follow this law and differ only in the
distribution of the scale parameter ``mu0``. Sudden degradation is a flat
trace with an abrupt, sustained current step. Normal operation is flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

BOLTZMANN_EV = 8.617333262e-5  # eV/K

MAX_REDRAWS = 8

MU0_GRADUAL = 6.440
MU0_RAPID = 8.114


class GenerationError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class DegradationMode(IntEnum):
    NORMAL = 0
    GRADUAL = 1
    RAPID = 2
    SUDDEN = 3


@dataclass(frozen=True)
class LaserParams:
    """Datasheet parameters of one laser.

    Units: optical power in mW, threshold current in mA, temperature in K,
    wavelength in nm. Wavelength does not enter the rate law; it is only a
    classifier feature.
    """

    optical_power: float
    threshold_current: float
    temperature: float
    wavelength: float

    def __post_init__(self):
        for name in ("optical_power", "threshold_current", "temperature", "wavelength"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class DegradationCoefficients:
    beta: float  # mA
    derating_exponent: float
    scale_parameter: float
    activation_energy: float  # eV

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta!r}")
        if not self.activation_energy >= 0:
            raise ValueError(f"activation_energy must be >= 0, got {self.activation_energy!r}")


@dataclass(frozen=True)
class NormalDist:
    """Normal distribution truncated to ``[low, high]`` by redrawing."""

    mean: float
    std: float
    low: float = -math.inf
    high: float = math.inf

    def __post_init__(self):
        if not self.std >= 0:
            raise ConfigError(f"standard deviation must be >= 0, got {self.std!r}")
        if self.low > self.high:
            raise ConfigError(f"empty truncation interval [{self.low}, {self.high}]")

    def draw(self, rng: np.random.Generator) -> float:
        for _ in range(MAX_REDRAWS + 1):
            value = float(rng.normal(self.mean, self.std))
            if self.low <= value <= self.high:
                return value
        raise GenerationError(
            f"no draw from N({self.mean}, {self.std}) fell in "
            f"[{self.low}, {self.high}] after {MAX_REDRAWS} redraws"
        )


@dataclass(frozen=True)
class UniformDist:
    low: float
    high: float

    def __post_init__(self):
        if self.low > self.high:
            raise ConfigError(f"empty interval [{self.low}, {self.high}]")

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class CoefficientDistributions:
    beta: NormalDist
    derating_exponent: NormalDist
    scale_parameter: NormalDist
    activation_energy: NormalDist

    def draw(self, rng: np.random.Generator) -> DegradationCoefficients:
        # Physical bounds are enforced on top of any configured truncation.
        beta = replace(self.beta, low=max(self.beta.low, 0.0))
        energy = replace(self.activation_energy, low=max(self.activation_energy.low, 0.0))
        return DegradationCoefficients(
            beta=beta.draw(rng),
            derating_exponent=self.derating_exponent.draw(rng),
            scale_parameter=self.scale_parameter.draw(rng),
            activation_energy=energy.draw(rng),
        )


# 1550 nm DFB-class devices; values typical of vendor datasheets.
DEFAULT_LASER_POOL = (
    LaserParams(10.0, 12.0, 298.15, 1550.0),
    LaserParams(12.0, 12.5, 298.15, 1548.5),
    LaserParams(13.0, 13.0, 300.15, 1551.0),
    LaserParams(14.0, 13.0, 303.15, 1549.0),
    LaserParams(15.0, 13.5, 300.15, 1550.5),
    LaserParams(16.0, 14.0, 298.15, 1552.0),
    LaserParams(18.0, 14.5, 303.15, 1547.5),
    LaserParams(20.0, 15.0, 300.15, 1550.0),
)


def _shared(beta: NormalDist, mu0: NormalDist) -> CoefficientDistributions:
    return CoefficientDistributions(
        beta=beta,
        derating_exponent=NormalDist(0.3, 0.01, 0.28, 0.32),
        scale_parameter=mu0,
        activation_energy=NormalDist(0.35, 0.001, 0.348, 0.352),
    )


GRADUAL_MU0 = NormalDist(MU0_GRADUAL, 0.02, MU0_GRADUAL - 0.05, MU0_GRADUAL + 0.05)
RAPID_MU0 = NormalDist(MU0_RAPID, 0.02, MU0_RAPID - 0.05, MU0_RAPID + 0.05)
# Rapid devices start with a larger non-radiative current than gradual ones.
GRADUAL_BETA = NormalDist(1.8, 0.063, 1.67, 1.93)
RAPID_BETA = NormalDist(4.0, 0.14, 3.72, 4.28)

DEFAULT_COEFFICIENTS = {
    # Normal and sudden traces do not use the rate law; their draws are kept
    # only as a provenance record.
    DegradationMode.NORMAL: _shared(GRADUAL_BETA, GRADUAL_MU0),
    DegradationMode.GRADUAL: _shared(GRADUAL_BETA, GRADUAL_MU0),
    DegradationMode.RAPID: _shared(RAPID_BETA, RAPID_MU0),
    DegradationMode.SUDDEN: _shared(GRADUAL_BETA, GRADUAL_MU0),
}


@dataclass(frozen=True)
class GenerationConfig:
    """Everything needed to reproduce a synthetic dataset.

    ``observation_noise_sigma`` is in mA; ``None`` means 0.5 % of the laser's
    threshold current. ``mode_horizons`` overrides ``horizon`` per mode, so
    rapid degradation can be observed over its own 100 h time scale.
    """

    coefficients: Mapping[DegradationMode, CoefficientDistributions] = field(
        default_factory=lambda: dict(DEFAULT_COEFFICIENTS)
    )
    samples_per_mode: int = 1500
    laser_pool: Sequence[LaserParams] = DEFAULT_LASER_POOL
    horizon: float = 400.0
    mode_horizons: Mapping[DegradationMode, float] = field(
        default_factory=lambda: {DegradationMode.RAPID: 100.0}
    )
    sample_interval: float = 1.0
    observation_noise_sigma: float | None = None
    sudden_jump_magnitude: NormalDist = NormalDist(20.0, 2.0, 16.0, 26.0)
    sudden_onset_time: UniformDist = UniformDist(160.0, 392.0)
    rng_seed: int = 20200712

    def __post_init__(self):
        if self.samples_per_mode <= 0:
            raise ConfigError("samples_per_mode must be positive")
        if not self.sample_interval > 0:
            raise ConfigError("sample_interval must be positive")
        for mode in DegradationMode:
            if self.horizon_for(mode) < self.sample_interval:
                raise ConfigError(f"horizon for {mode.name} is shorter than sample_interval")
            if mode not in self.coefficients:
                raise ConfigError(f"no coefficient distributions for {mode.name}")
        if self.observation_noise_sigma is not None and self.observation_noise_sigma < 0:
            raise ConfigError("observation_noise_sigma must be >= 0")
        if self.sudden_onset_time.high > self.horizon_for(DegradationMode.SUDDEN):
            raise ConfigError("sudden onset distribution extends past the horizon")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")

    def horizon_for(self, mode: DegradationMode) -> float:
        return float(self.mode_horizons.get(DegradationMode(mode), self.horizon))

    def times_for(self, mode: DegradationMode) -> np.ndarray:
        n = int(math.floor(self.horizon_for(mode) / self.sample_interval + 1e-9))
        return self.sample_interval * np.arange(n, dtype=float)

    def noise_sigma(self, laser: LaserParams) -> float:
        if self.observation_noise_sigma is None:
            return 0.005 * laser.threshold_current
        return self.observation_noise_sigma

    def to_dict(self) -> dict:
        def dist(d):
            return {k: getattr(d, k) for k in d.__dataclass_fields__}

        return {
            "coefficients": {
                DegradationMode(m).name: {
                    name: dist(getattr(c, name))
                    for name in ("beta", "derating_exponent", "scale_parameter", "activation_energy")
                }
                for m, c in sorted(self.coefficients.items())
            },
            "samples_per_mode": self.samples_per_mode,
            "laser_pool": [dist(p) for p in self.laser_pool],
            "horizon": self.horizon,
            "mode_horizons": {DegradationMode(m).name: h for m, h in sorted(self.mode_horizons.items())},
            "sample_interval": self.sample_interval,
            "observation_noise_sigma": self.observation_noise_sigma,
            "sudden_jump_magnitude": dist(self.sudden_jump_magnitude),
            "sudden_onset_time": dist(self.sudden_onset_time),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GenerationConfig":
        data = dict(data)
        kwargs = {}
        if "coefficients" in data:
            kwargs["coefficients"] = {
                DegradationMode[m]: CoefficientDistributions(
                    **{name: NormalDist(**d) for name, d in c.items()}
                )
                for m, c in data.pop("coefficients").items()
            }
        if "laser_pool" in data:
            kwargs["laser_pool"] = tuple(LaserParams(**p) for p in data.pop("laser_pool"))
        if "mode_horizons" in data:
            kwargs["mode_horizons"] = {
                DegradationMode[m]: float(h) for m, h in data.pop("mode_horizons").items()
            }
        if "sudden_jump_magnitude" in data:
            kwargs["sudden_jump_magnitude"] = NormalDist(**data.pop("sudden_jump_magnitude"))
        if "sudden_onset_time" in data:
            kwargs["sudden_onset_time"] = UniformDist(**data.pop("sudden_onset_time"))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generation keys: {sorted(unknown)}")
        kwargs.update(data)
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class DegradationSample:
    series: np.ndarray  # mA
    times: np.ndarray  # h
    mode: DegradationMode
    laser: LaserParams
    coefficients: DegradationCoefficients
    sample_id: int = 0
    # Time the fault becomes visible: 0 for rate-law modes, the jump time for
    # sudden failures, None for normal operation.
    fault_onset: float | None = None

    def __post_init__(self):
        if len(self.series) != len(self.times) or len(self.series) < 1:
            raise ValueError("series and times must have equal, non-zero length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.series < 0):
            raise ValueError("currents must be non-negative")


def compute_rate_k(laser: LaserParams, coeffs: DegradationCoefficients) -> float:
    """Degradation rate ``P**n * exp(mu0 - Ea / (kB T))`` in 1/h."""
    exponent = coeffs.scale_parameter - coeffs.activation_energy / (BOLTZMANN_EV * laser.temperature)
    with np.errstate(over="ignore"):
        k = laser.optical_power**coeffs.derating_exponent * np.exp(exponent)
    if not np.isfinite(k) or k <= 0:
        culprit = "scale_parameter" if exponent > 0 else "derating_exponent"
        raise OverflowError(f"rate k is not finite and positive ({k!r}); check {culprit}")
    return float(k)


def current_at(t, threshold_current: float, beta: float, k: float):
    """Operating current ``I0 + beta * exp(k t)`` in mA; ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    with np.errstate(over="ignore"):
        value = threshold_current + beta * np.exp(k * t)
    if not np.all(np.isfinite(value)):
        raise OverflowError(f"current overflows for k={k!r} over the requested times")
    return float(value) if value.ndim == 0 else value


def generate_trajectory(
    mode: DegradationMode,
    laser: LaserParams,
    coeffs: DegradationCoefficients,
    config: GenerationConfig,
    rng: np.random.Generator,
    sample_id: int = 0,
) -> DegradationSample:
    mode = DegradationMode(mode)
    times = config.times_for(mode)
    i0 = laser.threshold_current
    onset = None

    if mode in (DegradationMode.GRADUAL, DegradationMode.RAPID):
        k = compute_rate_k(laser, coeffs)
        clean = current_at(times, i0, coeffs.beta, k)
        onset = 0.0
    elif mode == DegradationMode.SUDDEN:
        onset = config.sudden_onset_time.draw(rng)
        jump = config.sudden_jump_magnitude.draw(rng)
        if not onset < config.horizon_for(mode):
            raise GenerationError(f"sudden onset {onset} h is not before the horizon")
        if jump < 0:
            raise GenerationError(f"negative sudden jump {jump} mA")
        clean = np.where(times >= onset, i0 + jump, i0)
    else:
        clean = np.full(times.shape, i0)

    sigma = config.noise_sigma(laser)
    series = clean + rng.normal(0.0, sigma, size=times.shape) if sigma > 0 else clean.astype(float)
    # Noise must not push a current below zero.
    np.maximum(series, 0.0, out=series)
    return DegradationSample(series, times, mode, laser, coeffs, sample_id, onset)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one sample, so generation order never matters."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate_sample(config: GenerationConfig, index: int) -> DegradationSample:
    mode = DegradationMode(index // config.samples_per_mode)
    rng = sample_rng(config.rng_seed, index)
    laser = config.laser_pool[int(rng.integers(len(config.laser_pool)))]
    coeffs = config.coefficients[mode].draw(rng)
    return generate_trajectory(mode, laser, coeffs, config, rng, sample_id=index)


def generate_dataset(config: GenerationConfig) -> list[DegradationSample]:
    """``samples_per_mode`` samples for each mode, mode-major, ids 0..4n-1."""
    if len(config.laser_pool) == 0:
        raise ConfigError("laser parameter pool is empty")
    total = config.samples_per_mode * len(DegradationMode)
    return [generate_sample(config, i) for i in range(total)]
