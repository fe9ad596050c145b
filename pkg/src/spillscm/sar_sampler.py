"""Posterior sampling for the spatial-autoregressive panel model.

Pretreatment control outcomes follow

    yc_t = rho (w y0_t + W yc_t) + X_t beta + eta gamma_t + e_t,

with a horseshoe hierarchy on beta, an AR(1) latent factor term, and a
random-walk Metropolis step for rho whose conditional density is

    p(rho | rest) propto prod_t |det(I - rho W)| exp(-u_t'u_t / (2 sigma2^2)).

Each sweep updates, in order: the beta block, the factor block, the noise
variance sigma2^2, and rho. Only the t <= T0 slices of the panel ever reach
the sweep functions; post-treatment outcomes play no role here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from . import horseshoe
from .errors import DataValidationError, SamplerDivergenceError
from .panel import PanelData, SpatialWeights


@dataclass
class SarConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int | None = None
    # The factor-variance conditional keeps its stated shape (1/2 + T0/2)
    # regardless of the factor dimension, which balances the innovation sum
    # only when p = 1; larger p makes sigma_gamma^2 drift upward geometrically.
    n_factors: int = 1
    metropolis_scale: float = 0.05
    adapt_window: int = 50
    rho_init: float = 0.0
    divergence_bound: float = 1e6
    hyper_scale: float = horseshoe.DEFAULT_HYPER_SCALE

    def validate(self):
        if self.iterations <= self.burn_in:
            raise DataValidationError(
                f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})"
            )
        if self.thin < 1:
            raise DataValidationError("thin must be >= 1")
        if self.n_factors < 1:
            raise DataValidationError("n_factors must be >= 1")
        if self.metropolis_scale <= 0:
            raise DataValidationError("metropolis_scale must be positive")


@dataclass
class FactorState:
    """Latent factor block: factors gamma (T0 x p), loadings eta (N x p),
    AR coefficient, and the variance hierarchy of the loadings."""

    gamma: np.ndarray
    eta: np.ndarray
    phi_gamma: float = 0.0
    sigma_gamma_sq: float = 1.0
    aux_sigma_gamma: float = 1.0
    sigma_eta_sq: float = 1.0
    aux_sigma_eta: float = 1.0
    omega_sq: np.ndarray = None
    aux_omega: np.ndarray = None


@dataclass
class SarState:
    rho: float
    beta: horseshoe.HorseshoeState
    factors: FactorState
    metropolis_scale: float
    accept_count: int = 0
    proposal_count: int = 0


class SarData:
    """Pretreatment slices plus the precomputed pieces the sweeps reuse."""

    def __init__(self, y0, yc, x, weights: SpatialWeights):
        self.y0 = np.asarray(y0, dtype=float)
        self.yc = np.asarray(yc, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.w = weights.w
        self.W = weights.W
        self.n, self.t0 = self.yc.shape
        self.k = self.x.shape[2] if self.x.ndim == 3 else 0
        if self.y0.shape != (self.t0,):
            raise DataValidationError("y0 slice length must match the control slice")
        if self.x.shape[:2] != (self.n, self.t0):
            raise DataValidationError("covariate slice must be (N, T0, k)")
        if not (np.isfinite(self.y0).all() and np.isfinite(self.yc).all() and np.isfinite(self.x).all()):
            raise DataValidationError("pretreatment data must be complete for the spatial chain")
        self.wy0 = np.outer(self.w, self.y0)          # (N, T0)
        self.Wyc = self.W @ self.yc                   # (N, T0)
        self.spatial = self.wy0 + self.Wyc            # multiplies rho everywhere
        # stacked design, time-major with units innermost, matching z.T.reshape(-1)
        self.x_stacked = self.x.transpose(1, 0, 2).reshape(self.t0 * self.n, self.k)
        self.eye = np.eye(self.n)

    def xbeta(self, beta_coef) -> np.ndarray:
        if self.k == 0:
            return np.zeros((self.n, self.t0))
        return self.x @ beta_coef


def sample_beta_block(state: SarState, data: SarData, rng):
    """Refresh the covariate coefficients and their horseshoe scales.

    The regression response is (I - rho W) yc - rho w y0 - eta gamma', stacked
    over the pretreatment periods. With no covariates this is a no-op.
    """
    if data.k == 0:
        return state.beta.coef
    factor_term = state.factors.eta @ state.factors.gamma.T
    z = data.yc - state.rho * data.spatial - factor_term
    response = z.T.reshape(-1)
    horseshoe.sample_coefficients(data.x_stacked, response, state.beta, rng)
    horseshoe.sample_local_scales(state.beta, rng)
    horseshoe.sample_global_and_aux(state.beta, rng)
    return state.beta.coef


def sample_factor_block(state: SarState, data: SarData, rng) -> FactorState:
    """Refresh the AR coefficient, factor innovation variance, the factors
    themselves (regenerated through the AR recursion from gamma_0 = 0), the
    loadings, and the loading variance hierarchy."""
    f = state.factors
    p = f.gamma.shape[1]
    sigma2 = state.beta.noise_var
    hyper_sq = state.beta.hyper_scale**2

    gamma_lag = np.vstack([np.zeros((1, p)), f.gamma[:-1]])
    den = float((gamma_lag * gamma_lag).sum())
    if den <= 0.0:
        raise SamplerDivergenceError("degenerate factor path: sum of squared lags is zero")
    num = float((gamma_lag * f.gamma).sum())
    f.phi_gamma = num / den + np.sqrt(f.sigma_gamma_sq / den) * rng.standard_normal()

    innov = f.gamma - f.phi_gamma * gamma_lag
    f.sigma_gamma_sq = float(
        horseshoe.sample_inverse_gamma(
            0.5 + data.t0 / 2.0,
            1.0 / f.aux_sigma_gamma + 0.5 * float((innov * innov).sum()),
            rng,
        )
    )
    f.aux_sigma_gamma = float(
        horseshoe.sample_inverse_gamma(1.0, 1.0 / f.sigma_gamma_sq + 1.0 / hyper_sq, rng)
    )

    # regenerate the factor path from the refreshed AR parameters
    sd = np.sqrt(f.sigma_gamma_sq)
    shocks = sd * rng.standard_normal((data.t0, p))
    gamma = np.empty((data.t0, p))
    prev = np.zeros(p)
    for t in range(data.t0):
        prev = f.phi_gamma * prev + shocks[t]
        gamma[t] = prev
    f.gamma = gamma

    # loadings: independent normal conditionals sharing the p x p system C;
    # the prior precision is formed with floored/capped products so collapsed
    # loading scales (factors fitting nothing) stay finite
    resid = data.yc - state.rho * data.spatial - data.xbeta(state.beta.coef)
    prior_var = np.maximum(f.sigma_eta_sq * f.omega_sq, horseshoe.IG_FLOOR)
    prior_prec = np.minimum(sigma2 / prior_var, horseshoe.IG_CEIL)
    c_mat = gamma.T @ gamma + np.diag(prior_prec)
    chol_c = cholesky(c_mat, lower=True, check_finite=False)
    means = cho_solve((chol_c, True), (resid @ gamma).T, check_finite=False).T   # (N, p)
    z = rng.standard_normal((data.n, p))
    f.eta = means + np.sqrt(sigma2) * solve_triangular(
        chol_c.T, z.T, lower=False, check_finite=False
    ).T

    quad = float(((f.eta**2) / f.omega_sq[None, :]).sum())
    f.sigma_eta_sq = float(
        horseshoe.sample_inverse_gamma(
            0.5 + p * data.n / 2.0, 1.0 / f.aux_sigma_eta + 0.5 * quad, rng
        )
    )
    f.aux_sigma_eta = float(
        horseshoe.sample_inverse_gamma(1.0, 1.0 / f.sigma_eta_sq + 1.0 / hyper_sq, rng)
    )

    col_quad = (f.eta**2).sum(axis=0) / f.sigma_eta_sq
    f.omega_sq = np.asarray(
        horseshoe.sample_inverse_gamma(0.5 + data.n / 2.0, 1.0 / f.aux_omega + 0.5 * col_quad, rng)
    )
    f.aux_omega = np.asarray(
        horseshoe.sample_inverse_gamma(1.0, 1.0 / f.omega_sq + 1.0 / hyper_sq, rng)
    )
    return f


def sample_noise_block(state: SarState, data: SarData, rng) -> float:
    """Refresh sigma2^2 from the full model residual."""
    resid = (
        data.yc
        - state.rho * data.spatial
        - data.xbeta(state.beta.coef)
        - state.factors.eta @ state.factors.gamma.T
    )
    return horseshoe.sample_noise_variance(resid.ravel(), state.beta, rng)


def _log_posterior_from_base(
    rho: float, base: np.ndarray, data: SarData, sigma2: float, alpha=None
) -> float:
    mat = data.eye - rho * data.W
    if alpha is not None:
        # Jacobian of the outcome system when the treated unit's path is the
        # weighted combination of the controls: the treated feedback term
        # rho w alpha' belongs in the determinant. Without it the density is
        # a pseudo-likelihood whose peak is displaced at strong correlation.
        mat = mat - rho * np.outer(data.w, alpha)
    sign, logabsdet = np.linalg.slogdet(mat)
    if sign == 0 or not np.isfinite(logabsdet):
        return -np.inf
    resid = base - rho * data.spatial
    return data.t0 * logabsdet - 0.5 / sigma2 * float((resid * resid).sum())


def log_posterior_rho(rho: float, state: SarState, data: SarData, alpha=None) -> float:
    """Log conditional density of rho up to a constant; -inf at singular
    systems. The determinant uses a dense LU factorization with sign tracking
    (see the eigenvalue cross-check in the tests). With ``alpha`` given, the
    determinant is |I - rho w alpha' - rho W| (the full system Jacobian used
    by the joint runner); otherwise |I - rho W| as in the standalone chain."""
    base = data.yc - data.xbeta(state.beta.coef) - state.factors.eta @ state.factors.gamma.T
    return _log_posterior_from_base(rho, base, data, state.beta.noise_var, alpha=alpha)


def metropolis_rho_step(state: SarState, data: SarData, rng, alpha=None):
    """Random-walk proposal, accepted with probability min(1, ratio) computed
    in log space. Updates the proposal/acceptance counters."""
    base = data.yc - data.xbeta(state.beta.coef) - state.factors.eta @ state.factors.gamma.T
    lp_current = _log_posterior_from_base(state.rho, base, data, state.beta.noise_var, alpha=alpha)
    proposal = state.rho + state.metropolis_scale * rng.standard_normal()
    lp_proposal = _log_posterior_from_base(proposal, base, data, state.beta.noise_var, alpha=alpha)
    u = rng.uniform()
    if lp_proposal == -np.inf:
        accepted = False
    elif lp_current == -np.inf:
        accepted = True
    else:
        accepted = (lp_proposal - lp_current) > np.log(u)
    state.proposal_count += 1
    if accepted:
        state.accept_count += 1
        state.rho = float(proposal)
    return state.rho, accepted


def adapt_metropolis_scale(state: SarState, window_acceptance: float) -> float:
    """Burn-in-only tuning toward a moderate acceptance rate: grow the step by
    10% when the window rate exceeds 0.6, shrink it by 10% below 0.4."""
    if window_acceptance > 0.6:
        state.metropolis_scale *= 1.1
    elif window_acceptance < 0.4:
        state.metropolis_scale *= 0.9
    return state.metropolis_scale


@dataclass
class SarPosterior:
    rho: np.ndarray
    beta: np.ndarray            # (M, k)
    sigma2_draws: np.ndarray
    phi_gamma: np.ndarray
    sigma_gamma_sq: np.ndarray
    sigma_eta_sq: np.ndarray
    acceptance_rate: float
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.rho.shape[0]

    def to_csv(self, path):
        cols = (
            ["rho"]
            + [f"beta_{j+1:02d}" for j in range(self.beta.shape[1])]
            + ["sigma2_sq", "phi_gamma", "sigma_gamma_sq", "sigma_eta_sq"]
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(self.n_draws):
                vals = (
                    [self.rho[i]]
                    + list(self.beta[i])
                    + [self.sigma2_draws[i], self.phi_gamma[i], self.sigma_gamma_sq[i], self.sigma_eta_sq[i]]
                )
                fh.write(",".join(repr(float(v)) for v in vals) + "\n")

    def summary_json(self, path):
        q = np.quantile(self.rho, [0.025, 0.5, 0.975])
        payload = {
            "n_draws": int(self.n_draws),
            "acceptance_rate": float(self.acceptance_rate),
            "rho": {
                "mean": float(self.rho.mean()),
                "sd": float(self.rho.std(ddof=1)),
                "q025": float(q[0]),
                "median": float(q[1]),
                "q975": float(q[2]),
            },
            "beta_mean": [float(v) for v in self.beta.mean(axis=0)] if self.beta.size else [],
            "sigma2_sq_mean": float(self.sigma2_draws.mean()),
            "meta": self.meta,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def _init_state(data: SarData, config: SarConfig, rng) -> SarState:
    beta_state = horseshoe.init_state(data.k, data.yc.ravel(), hyper_scale=config.hyper_scale)
    p = config.n_factors
    factors = FactorState(
        gamma=rng.standard_normal((data.t0, p)),
        eta=np.zeros((data.n, p)),
        omega_sq=np.ones(p),
        aux_omega=np.ones(p),
    )
    return SarState(
        rho=config.rho_init,
        beta=beta_state,
        factors=factors,
        metropolis_scale=config.metropolis_scale,
    )


def _check_finite(state: SarState, iteration: int):
    f = state.factors
    values = [state.rho, state.beta.noise_var, f.phi_gamma, f.sigma_gamma_sq, f.sigma_eta_sq]
    finite = (
        all(np.isfinite(v) for v in values)
        and np.isfinite(state.beta.coef).all()
        and np.isfinite(f.eta).all()
        and np.isfinite(f.gamma).all()
    )
    if not finite:
        raise SamplerDivergenceError(
            f"spatial chain produced a non-finite state at iteration {iteration}",
            iteration=iteration,
        )


def run_chain(panel: PanelData, weights: SpatialWeights, config: SarConfig, rng=None) -> SarPosterior:
    """Run the Metropolis-within-Gibbs chain on the pretreatment slices."""
    config.validate()
    if weights.n_controls != panel.n_controls:
        raise DataValidationError("weights and panel disagree on the number of controls")
    data = SarData(
        y0=panel.y0[: panel.t0],
        yc=panel.yc[:, : panel.t0],
        x=panel.covariates[:, : panel.t0, :],
        weights=weights,
    )
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    state = _init_state(data, config, rng)

    kept = {key: [] for key in ("rho", "beta", "sigma2", "phi", "sgamma", "seta")}
    window_accepts = 0
    window_proposals = 0
    post_accepts = 0
    post_proposals = 0
    for it in range(1, config.iterations + 1):
        sample_beta_block(state, data, rng)
        sample_factor_block(state, data, rng)
        sample_noise_block(state, data, rng)
        _, accepted = metropolis_rho_step(state, data, rng)
        _check_finite(state, it)
        if abs(state.rho) > config.divergence_bound:
            raise SamplerDivergenceError(
                f"rho diverged at iteration {it}", iteration=it
            )
        if it <= config.burn_in:
            window_accepts += int(accepted)
            window_proposals += 1
            if it % config.adapt_window == 0:
                adapt_metropolis_scale(state, window_accepts / window_proposals)
                window_accepts = 0
                window_proposals = 0
        else:
            post_accepts += int(accepted)
            post_proposals += 1
            if (it - config.burn_in) % config.thin == 0:
                kept["rho"].append(state.rho)
                kept["beta"].append(state.beta.coef.copy())
                kept["sigma2"].append(state.beta.noise_var)
                kept["phi"].append(state.factors.phi_gamma)
                kept["sgamma"].append(state.factors.sigma_gamma_sq)
                kept["seta"].append(state.factors.sigma_eta_sq)

    meta = {
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed,
        "n_factors": config.n_factors,
        "final_metropolis_scale": state.metropolis_scale,
        "n_controls": data.n,
        "t0": data.t0,
        "n_covariates": data.k,
    }
    n_kept = len(kept["rho"])
    return SarPosterior(
        rho=np.asarray(kept["rho"]),
        beta=np.asarray(kept["beta"]).reshape(n_kept, data.k),
        sigma2_draws=np.asarray(kept["sigma2"]),
        phi_gamma=np.asarray(kept["phi"]),
        sigma_gamma_sq=np.asarray(kept["sgamma"]),
        sigma_eta_sq=np.asarray(kept["seta"]),
        acceptance_rate=post_accepts / post_proposals if post_proposals else float("nan"),
        meta=meta,
    )
