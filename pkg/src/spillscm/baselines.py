"""Reference estimators for comparison tables.

The standard synthetic-control fit is the unconstrained least-squares
regression of the treated unit's pretreatment outcomes on the control
outcomes (no intercept, no simplex constraint). The Bayesian variant (BSCM)
is the horseshoe weights chain reused as-is, with effects formed at rho = 0.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import weights_sampler
from .errors import DataValidationError
from .panel import PanelData


@dataclass(frozen=True)
class ScmFit:
    alpha_hat: np.ndarray
    pretreatment_rmse: float


def fit_standard_scm(design, response) -> ScmFit:
    """Least-squares synthetic weights over the pretreatment window.

    Rank-deficient designs (more controls than pretreatment periods, or
    collinear controls) fall back to the minimum-norm solution with a warning.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2 or design.shape[0] == 0:
        raise DataValidationError("pretreatment window is empty")
    if design.shape[0] != response.shape[0]:
        raise DataValidationError("design and response lengths differ")
    alpha_hat, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
    if rank < design.shape[1]:
        warnings.warn(
            f"pretreatment design has rank {rank} < {design.shape[1]}; "
            "returning the minimum-norm weights",
            stacklevel=2,
        )
    resid = response - design @ alpha_hat
    return ScmFit(alpha_hat=alpha_hat, pretreatment_rmse=float(np.sqrt(np.mean(resid**2))))


def scm_effects(fit: ScmFit, panel: PanelData) -> np.ndarray:
    """Naive per-period effect estimates y0_t - alpha_hat' yc_t for t > T0.

    Periods with any missing outcome yield NaN (skipped, not imputed).
    """
    t0 = panel.t0
    est = panel.y0[t0:] - fit.alpha_hat @ panel.yc[:, t0:]
    est = np.where(panel.missing_mask[:, t0:].any(axis=0), np.nan, est)
    return est


def fit_bscm(design, response, config: weights_sampler.ChainConfig, rng=None):
    """Bayesian synthetic control weights: a thin delegation to the horseshoe
    weights chain. Effects for this baseline are computed with rho fixed at 0."""
    return weights_sampler.run_chain(design, response, config, rng=rng)


def write_scm_fit_json(fit: ScmFit, path):
    payload = {
        "alpha_hat": [float(v) for v in fit.alpha_hat],
        "pretreatment_rmse": fit.pretreatment_rmse,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_scm_effects_csv(panel: PanelData, estimates, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("period,estimate\n")
        for period, value in zip(panel.time_labels[panel.t0 :], estimates):
            cell = "" if np.isnan(value) else repr(float(value))
            fh.write(f"{period},{cell}\n")
