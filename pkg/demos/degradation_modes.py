"""Walk through the four degradation modes and what a partial-failure window looks like.

Run with ``python3 demos/degradation_modes.py``. Nothing is written to disk.
"""

import numpy as np

from laserfail.degradation import DegradationMode, GenerationConfig, generate_dataset
from laserfail.pipeline import PartialFailureSpec, mutate_to_partial_failure, normal_source_from, to_window


def first_crossing(times, series, i0, fraction=0.2):
    above = np.flatnonzero(series > (1 + fraction) * i0)
    return times[above[0]] if len(above) else None


def sparkline(values, width=50):
    marks = " .:-=+*#%@"
    v = np.asarray(values, dtype=float)
    v = v[np.linspace(0, len(v) - 1, width).astype(int)]
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    return "".join(marks[int(round(s * (len(marks) - 1)))] for s in scaled)


config = GenerationConfig(samples_per_mode=50)
samples = generate_dataset(config)

print("end-of-life (1.2 x I0) crossing per mode, noisy traces")
for mode in DegradationMode:
    group = [s for s in samples if s.mode == mode]
    hours = [first_crossing(s.times, s.series, s.laser.threshold_current) for s in group]
    crossed = [h for h in hours if h is not None]
    ratio = np.mean([s.series[-1] / s.laser.threshold_current for s in group])
    span = f"{min(crossed):6.0f} .. {max(crossed):6.0f} h" if crossed else "      never      "
    print(f"  {mode.name:<8} horizon {group[0].times[-1] + config.sample_interval:5.0f} h  crossing {span}"
          f"  final I/I0 {ratio:.2f}")

print("\none trace per mode, compressed to 100 steps")
for mode in DegradationMode:
    s = next(s for s in samples if s.mode == mode)
    print(f"  {mode.name:<8} |{sparkline(to_window(s).current)}|")

# A test window keeps only the start of the fault behind a stretch of normal operation.
rng = np.random.default_rng(7)
source = normal_source_from(config)
print("\npartial-failure windows (fault fraction 0.3)")
for mode in (DegradationMode.GRADUAL, DegradationMode.RAPID, DegradationMode.SUDDEN):
    window = to_window(next(s for s in samples if s.mode == mode))
    mutated = mutate_to_partial_failure(window, PartialFailureSpec(), source, rng, fault_fraction=0.3)
    i0 = window.laser.threshold_current
    print(f"  {mode.name:<8} |{sparkline(mutated.current)}|  last step {mutated.current[-1] / i0:.3f} x I0")
