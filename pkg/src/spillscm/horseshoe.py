"""Gibbs blocks for the hierarchical horseshoe prior.

The hierarchy places a normal prior on each coefficient with its own local
scale, half-Cauchy priors chained through a global scale up to a fixed
half-Cauchy(0, ``hyper_scale``) hyperprior, and uses the inverse-gamma
auxiliary-variable representation of the half-Cauchy so every update is a
standard inverse-gamma or normal draw.

Inverse-gamma convention: IG(shape a, scale b) has density proportional to
x^(-a-1) exp(-b / x). Draws are taken as 1 / Gamma(shape=a, scale=1/b) on the
precision, so the numpy gamma parameterization never needs the rate form.

The same state/block structure serves two consumers: the synthetic-weight
regression (coef = alpha, noise_var = sigma1^2) and the covariate block of the
spatial model (coef = beta, noise_var = sigma2^2, whose noise update is driven
by the full model residual rather than the regression residual).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

DEFAULT_HYPER_SCALE = 10.0


@dataclass
class HorseshoeState:
    """Current values of one horseshoe hierarchy.

    coef           : coefficient vector (alpha or beta)
    local_scale_sq : per-coefficient variances lambda_i^2
    aux_local      : shared auxiliary nu_lambda for the local scales
    global_scale_sq: tau^2
    aux_global     : nu_tau
    noise_var      : sigma^2 of the regression noise
    aux_noise      : nu_sigma
    """

    coef: np.ndarray
    local_scale_sq: np.ndarray
    aux_local: float = 1.0
    global_scale_sq: float = 1.0
    aux_global: float = 1.0
    noise_var: float = 1.0
    aux_noise: float = 1.0
    hyper_scale: float = DEFAULT_HYPER_SCALE

    def positive_quantities(self) -> dict[str, float]:
        out = {
            "aux_local": self.aux_local,
            "global_scale_sq": self.global_scale_sq,
            "aux_global": self.aux_global,
            "noise_var": self.noise_var,
            "aux_noise": self.aux_noise,
        }
        if self.local_scale_sq.size:
            out["min_local_scale_sq"] = float(self.local_scale_sq.min())
        return out


def init_state(
    n_coef: int,
    response,
    hyper_scale: float = DEFAULT_HYPER_SCALE,
    noise_var: float | None = None,
) -> HorseshoeState:
    """Neutral start: zero coefficients, unit scales, noise at the response
    variance (or the supplied value).

    The auxiliaries tied to the noise variance start at its reciprocal so
    their 1/nu contributions to the first noise update sit at the initialized
    noise scale. Starting them at 1.0 would inject an O(1) term into that
    update and yank the chain to a data-independent noise level on sweep one.
    """
    response = np.asarray(response, dtype=float)
    if noise_var is None:
        noise_var = float(np.var(response, ddof=1)) if response.size > 1 else 1.0
    if not np.isfinite(noise_var) or noise_var <= 0.0:
        noise_var = 1.0
    return HorseshoeState(
        coef=np.zeros(n_coef),
        local_scale_sq=np.ones(n_coef),
        aux_global=1.0 / noise_var,
        noise_var=noise_var,
        aux_noise=1.0 / noise_var,
        hyper_scale=hyper_scale,
    )


# Positivity guard for the inverse-gamma draws. Degenerate inputs (an exact
# pretreatment fit drives the noise variance to zero geometrically) would
# otherwise underflow to 0.0 or overflow to inf and poison every 1/x that
# follows. The bounds also have to stay within the range where conditional
# means remain representable: with a much deeper floor, a local scale can
# reach a state whose escape probability rounds to zero in double precision
# and a genuinely nonzero coefficient stays pinned at zero forever.
IG_FLOOR = 1e-15
IG_CEIL = 1e15


def sample_inverse_gamma(shape: float, scale: float, rng, size=None):
    """Draw from IG(shape, scale) via a gamma draw on the precision, clipped
    into [IG_FLOOR, IG_CEIL]."""
    if size is None and np.ndim(scale) == 0:
        s = float(scale)
        s = IG_FLOOR if s < IG_FLOOR else (IG_CEIL if s > IG_CEIL else s)
        g = rng.gamma(shape, 1.0 / s)
        if g <= 0.0:
            return IG_CEIL
        out = 1.0 / g
        return IG_FLOOR if out < IG_FLOOR else (IG_CEIL if out > IG_CEIL else out)
    scale = np.clip(np.asarray(scale, dtype=float), IG_FLOOR, IG_CEIL)
    with np.errstate(divide="ignore"):
        draw = 1.0 / rng.gamma(shape, 1.0 / scale, size=size)
    return np.clip(draw, IG_FLOOR, IG_CEIL)


def coef_conditional(design, response, state: HorseshoeState):
    """Mean and covariance of the coefficient full conditional.

    The conditional is N(A^-1 X'y, sigma^2 A^-1) with
    A = X'X + sigma^2 diag(1 / lambda_i^2).
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    a_mat = design.T @ design + state.noise_var * np.diag(1.0 / state.local_scale_sq)
    try:
        factor = cho_factor(a_mat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("coefficient conditional matrix is not positive definite") from exc
    mean = cho_solve(factor, design.T @ response)
    cov = state.noise_var * cho_solve(factor, np.eye(a_mat.shape[0]))
    return mean, cov


def sample_coefficients(design, response, state: HorseshoeState, rng) -> np.ndarray:
    """Draw the coefficient block from its normal full conditional."""
    if state.coef.size == 0:
        return state.coef
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    a_mat = design.T @ design + state.noise_var * np.diag(1.0 / state.local_scale_sq)
    try:
        factor = cho_factor(a_mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("coefficient conditional matrix is not positive definite") from exc
    mean = cho_solve(factor, design.T @ response, check_finite=False)
    z = rng.standard_normal(mean.size)
    # cov = sigma^2 A^-1 = sigma^2 L^-T L^-1 for A = L L'
    draw = mean + np.sqrt(state.noise_var) * solve_triangular(
        factor[0].T, z, lower=False, check_finite=False
    )
    state.coef = draw
    return draw


def local_scale_conditional(state: HorseshoeState):
    """(shape, scale vector) for the lambda_i^2 updates: IG(1, coef_i^2/2 + 1/nu_lambda)."""
    return 1.0, state.coef**2 / 2.0 + 1.0 / state.aux_local


def sample_local_scales(state: HorseshoeState, rng) -> np.ndarray:
    if state.coef.size == 0:
        return state.local_scale_sq
    shape, scales = local_scale_conditional(state)
    state.local_scale_sq = np.asarray(sample_inverse_gamma(shape, scales, rng))
    return state.local_scale_sq


def aux_local_conditional(state: HorseshoeState):
    """IG(1, sum_i 1/lambda_i^2 + 1/tau^2) for nu_lambda."""
    return 1.0, float(np.sum(1.0 / state.local_scale_sq)) + 1.0 / state.global_scale_sq


def global_scale_conditional(state: HorseshoeState):
    """IG(1, 1/nu_lambda + 1/nu_tau) for tau^2."""
    return 1.0, 1.0 / state.aux_local + 1.0 / state.aux_global


def aux_global_conditional(state: HorseshoeState):
    """IG(1, 1/tau^2 + 1/sigma^2) for nu_tau."""
    return 1.0, 1.0 / state.global_scale_sq + 1.0 / state.noise_var


def sample_global_and_aux(state: HorseshoeState, rng):
    """Sequential updates of nu_lambda, tau^2, nu_tau (each conditioning on the
    freshly drawn predecessors)."""
    state.aux_local = float(sample_inverse_gamma(*aux_local_conditional(state), rng))
    state.global_scale_sq = float(sample_inverse_gamma(*global_scale_conditional(state), rng))
    state.aux_global = float(sample_inverse_gamma(*aux_global_conditional(state), rng))
    return state.aux_local, state.global_scale_sq, state.aux_global


def noise_conditional(residuals, state: HorseshoeState):
    """(shape, scale) of the noise-variance update.

    Shape grows with the residual count n as 1 + n/2; the scale is
    1/nu_tau + 1/nu_sigma + r'r / 2.
    """
    residuals = np.asarray(residuals, dtype=float)
    shape = 1.0 + residuals.size / 2.0
    scale = 1.0 / state.aux_global + 1.0 / state.aux_noise + 0.5 * float(residuals @ residuals)
    return shape, scale


def aux_noise_conditional(state: HorseshoeState):
    """IG(1, 1/sigma^2 + 1/hyper_scale^2) for nu_sigma."""
    return 1.0, 1.0 / state.noise_var + 1.0 / state.hyper_scale**2


def sample_noise_variance(residuals, state: HorseshoeState, rng) -> float:
    """Draw sigma^2 from its inverse-gamma conditional, then refresh nu_sigma."""
    if not np.all(np.isfinite(residuals)):
        raise ValueError("residual vector passed to the noise update must be finite")
    state.noise_var = float(sample_inverse_gamma(*noise_conditional(residuals, state), rng))
    state.aux_noise = float(sample_inverse_gamma(*aux_noise_conditional(state), rng))
    return state.noise_var
