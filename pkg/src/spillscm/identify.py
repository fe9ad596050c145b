"""Deterministic identification kernel.

Given synthetic weights alpha and spatial correlation rho, the observed
post-treatment outcomes pin down the counterfactual control outcomes through
the linear system

    (I - rho w alpha' - rho W) yc(0) = (I - rho W) yc - rho w y0,

from which the treatment effect on the treated unit and the spillover effects
on every control follow by subtraction. No estimation happens here; these are
pure functions consumed by the samplers, the Monte Carlo harness, and the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystemError
from .panel import SpatialWeights

RCOND_THRESHOLD = 1e-10


@dataclass(frozen=True)
class StructuralParams:
    """Synthetic weights alpha (length N) and spatial correlation rho."""

    alpha: np.ndarray
    rho: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 1:
            raise ValueError("alpha must be a vector")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rho", float(self.rho))


@dataclass(frozen=True)
class InvertibilityReport:
    condition_number: float
    ok: bool


def system_matrix(params: StructuralParams, weights: SpatialWeights) -> np.ndarray:
    """The matrix I - rho w alpha' - rho W."""
    n = weights.n_controls
    if params.alpha.size != n:
        raise ValueError(f"alpha has length {params.alpha.size}, weights expect {n}")
    rho = params.rho
    return np.eye(n) - rho * np.outer(weights.w, params.alpha) - rho * weights.W


def check_invertibility(
    params: StructuralParams,
    weights: SpatialWeights,
    threshold: float = RCOND_THRESHOLD,
) -> InvertibilityReport:
    """Test whether the identification system is numerically invertible.

    ok is True when the reciprocal condition number (2-norm) exceeds
    ``threshold``.
    """
    mat = system_matrix(params, weights)
    svals = np.linalg.svd(mat, compute_uv=False)
    smax, smin = svals[0], svals[-1]
    if smin == 0.0:
        return InvertibilityReport(condition_number=np.inf, ok=False)
    cond = smax / smin
    return InvertibilityReport(condition_number=float(cond), ok=bool(1.0 / cond > threshold))


def _solve_system(params, weights, yc_t, y0_t, threshold):
    yc_t = np.asarray(yc_t, dtype=float)
    y0_t = np.asarray(y0_t, dtype=float)
    if not (np.isfinite(yc_t).all() and np.isfinite(y0_t).all()):
        raise ValueError("outcomes passed to the identification kernel must be finite")
    report = check_invertibility(params, weights, threshold)
    if not report.ok:
        raise SingularSystemError(
            f"identification system is singular (condition number {report.condition_number:.3e})",
            condition_number=report.condition_number,
        )
    rho = params.rho
    # rhs = (I - rho W) yc - rho w y0; supports a single period (N,) or a
    # block of periods (N, P) solved against one factorization.
    rhs = yc_t - rho * (weights.W @ yc_t)
    if yc_t.ndim == 1:
        rhs = rhs - rho * weights.w * y0_t
    else:
        rhs = rhs - rho * np.outer(weights.w, y0_t)
    return np.linalg.solve(system_matrix(params, weights), rhs)


def counterfactual_controls(
    params: StructuralParams,
    weights: SpatialWeights,
    yc_t,
    y0_t,
    threshold: float = RCOND_THRESHOLD,
) -> np.ndarray:
    """Counterfactual no-treatment control outcomes yc(0) for one period.

    ``yc_t`` may also be an (N, P) block of periods with ``y0_t`` of length P;
    the solve is linear in the observed outcomes either way.
    """
    return _solve_system(params, weights, yc_t, y0_t, threshold)


def treatment_effect(
    params: StructuralParams,
    weights: SpatialWeights,
    yc_t,
    y0_t,
    threshold: float = RCOND_THRESHOLD,
):
    """Effect on the treated unit: y0 - alpha' yc(0)."""
    cf = _solve_system(params, weights, yc_t, y0_t, threshold)
    return y0_t - params.alpha @ cf


def spillover_effects(
    params: StructuralParams,
    weights: SpatialWeights,
    yc_t,
    y0_t,
    threshold: float = RCOND_THRESHOLD,
) -> np.ndarray:
    """Effects on the controls: yc - yc(0)."""
    cf = _solve_system(params, weights, yc_t, y0_t, threshold)
    return yc_t - cf


def standard_scm_gap(alpha, yc_t, y0_t):
    """The naive synthetic-control estimate y0 - alpha' yc.

    Ignores spillovers entirely; with rho = 0 the full identification above
    reduces to exactly this quantity.
    """
    alpha = np.asarray(alpha, dtype=float)
    return y0_t - alpha @ np.asarray(yc_t, dtype=float)
