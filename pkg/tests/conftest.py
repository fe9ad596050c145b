import numpy as np
import pytest

from spillscm import identify
from spillscm.panel import PanelData, SpatialWeights


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_invertible_instance(rng, n=None, rho=None, rcond_min=1e-6):
    """A random structural instance with both solve systems comfortably
    invertible; used by the forward-simulation oracles."""
    while True:
        n_ = n if n is not None else int(rng.integers(4, 17))
        rho_ = rho if rho is not None else float(rng.uniform(-0.8, 0.8))
        w = rng.uniform(0.0, 1.0, size=n_)
        W = rng.uniform(0.0, 1.0, size=(n_, n_))
        np.fill_diagonal(W, 0.0)
        W /= np.maximum(W.sum(axis=1, keepdims=True), 1e-12)
        alpha = rng.normal(0.0, 1.0, size=n_) / np.sqrt(n_)
        weights = SpatialWeights(w=w, W=W)
        params = identify.StructuralParams(alpha=alpha, rho=rho_)
        full = identify.system_matrix(params, weights)
        post = np.eye(n_) - rho_ * W
        ok = (
            1.0 / np.linalg.cond(full) > rcond_min
            and 1.0 / np.linalg.cond(post) > rcond_min
        )
        if ok:
            return params, weights


def forward_simulate(params, weights, rng, n_periods=1, beta=1.0):
    """Generate (y0_obs, yc_obs, true effects) from the structural equations
    with known parameters; the independent oracle behind the identification
    tests."""
    n = weights.n_controls
    full = identify.system_matrix(params, weights)
    post = np.eye(n) - params.rho * weights.W
    x = rng.standard_normal((n, n_periods))
    u = rng.standard_normal((n, n_periods))
    rhs = beta * x + u
    yc0 = np.linalg.solve(full, rhs)
    y00 = params.alpha @ yc0
    tau = 1.0 + rng.standard_normal(n_periods)
    y01 = y00 + tau
    yc1 = np.linalg.solve(post, params.rho * np.outer(weights.w, y01) + rhs)
    return {
        "y0_obs": y01,
        "yc_obs": yc1,
        "true_treatment": tau,
        "true_spillover": yc1 - yc0,
        "yc0": yc0,
        "y00": y00,
    }


def toy_panel(outcomes, t0, covariates=None, mask=None):
    outcomes = np.asarray(outcomes, dtype=float)
    n_units, t_total = outcomes.shape
    if covariates is None:
        covariates = np.zeros((n_units - 1, t_total, 0))
    if mask is None:
        mask = np.isnan(outcomes)
    return PanelData(
        outcomes=outcomes,
        covariates=covariates,
        t0=t0,
        missing_mask=mask,
        unit_labels=tuple(f"u{i}" for i in range(n_units)),
        time_labels=tuple(str(t + 1) for t in range(t_total)),
    )
