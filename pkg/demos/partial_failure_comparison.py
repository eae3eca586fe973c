"""Small end-to-end comparison: generate, split and mutate, train every model, score.

This is the full pipeline at a fraction of the default size (200 samples per
mode, a 32-unit LSTM, 20 epochs), so it finishes in a few minutes. The
numbers are noisier than a default run. Reports land in ``demo_run/``.

    python3 demos/partial_failure_comparison.py
"""

import logging
from dataclasses import replace

from laserfail.config import Paths, from_mapping
from laserfail.metrics import format_table
from laserfail.workflow import run_all

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = from_mapping(
    {
        "generation": {"samples_per_mode": 200},
        "network": {"hidden_dim": 32},
        "training": {"epochs": 20},
        "baselines": {"rf_trees": 30},
    }
)
cfg = replace(cfg, paths=Paths.under("demo_run"))

evaluations = run_all(cfg)
print()
print(format_table(evaluations))
print("\nper-class confusion matrices and ROC/PR curves are in demo_run/reports/")
