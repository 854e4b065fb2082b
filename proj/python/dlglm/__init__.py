"""Deeply-learned GLMs with missing covariates (C++ core)."""

import json
import os

from ._core import (
    StageError,
    UndefinedMetric,
    __version__,
    auc,
    cohens_kappa,
    imputation_l1,
    impute,
    percent_bias,
    ppv_f1,
    predict,
    prediction_l1,
    simulate,
    simulate_mask,
)
from . import _core


def run(config, out):
    """Run the full pipeline for a config dict (same keys as the CLI's JSON
    config) and return the metrics report as a dict."""
    return json.loads(_core.run_json(json.dumps(config), os.fspath(out)))


def mask_spec(mask):
    """Mechanism parameters of a `simulate_mask` result as a dict."""
    return json.loads(mask["spec"])


__all__ = [
    "StageError",
    "UndefinedMetric",
    "__version__",
    "auc",
    "cohens_kappa",
    "imputation_l1",
    "impute",
    "mask_spec",
    "percent_bias",
    "ppv_f1",
    "predict",
    "prediction_l1",
    "run",
    "simulate",
    "simulate_mask",
]
