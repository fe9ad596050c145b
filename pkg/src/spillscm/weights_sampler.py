"""Gibbs sampler for the synthetic weights.

Regresses the treated unit's pretreatment outcomes on the pretreatment
control outcomes (no intercept) under the horseshoe hierarchy, sweeping the
blocks in the order: coefficients, local scales, shared local auxiliary,
global scale, global auxiliary, noise variance, noise auxiliary.

The weights live in all of R^N; nothing here projects onto a simplex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import horseshoe
from .errors import DataValidationError, SamplerDivergenceError


@dataclass
class ChainConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int | None = None
    divergence_bound: float = 1e6
    hyper_scale: float = horseshoe.DEFAULT_HYPER_SCALE

    def validate(self):
        if self.iterations <= self.burn_in:
            raise DataValidationError(
                f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})"
            )
        if self.thin < 1:
            raise DataValidationError("thin must be >= 1")


@dataclass
class WeightsPosterior:
    """Stored draws of the synthetic weights and the regression noise."""

    draws: np.ndarray          # (M, N)
    sigma1_draws: np.ndarray   # (M,)
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def to_csv(self, path):
        cols = [f"alpha_{i+1:02d}" for i in range(self.draws.shape[1])] + ["sigma1_sq"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for row, s in zip(self.draws, self.sigma1_draws):
                fh.write(",".join(repr(float(v)) for v in row) + f",{float(s)!r}\n")

    def summary_json(self, path):
        q = np.quantile(self.draws, [0.025, 0.5, 0.975], axis=0)
        payload = {
            "n_draws": int(self.n_draws),
            "meta": self.meta,
            "alpha": [
                {
                    "index": i + 1,
                    "mean": float(self.draws[:, i].mean()),
                    "sd": float(self.draws[:, i].std(ddof=1)),
                    "q025": float(q[0, i]),
                    "median": float(q[1, i]),
                    "q975": float(q[2, i]),
                }
                for i in range(self.draws.shape[1])
            ],
            "sigma1_sq_mean": float(self.sigma1_draws.mean()),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def init_weights_state(design, response, hyper_scale=horseshoe.DEFAULT_HYPER_SCALE):
    """Start the hierarchy at the least-squares residual scale.

    Outcome data with strong spatial amplification make the response variance
    orders of magnitude larger than the regression noise, and a chain started
    there spends hundreds of sweeps over-shrunk. The least-squares residual
    variance (floored, since a perfect pretreatment fit gives exactly zero)
    is an equally neutral starting point without the transient.
    """
    coef, *_ = np.linalg.lstsq(design, response, rcond=None)
    resid = response - design @ coef
    noise = max(float(np.mean(resid**2)), 1e-8)
    return horseshoe.init_state(
        design.shape[1], response, hyper_scale=hyper_scale, noise_var=noise
    )


def gibbs_step(state: horseshoe.HorseshoeState, design, response, rng) -> horseshoe.HorseshoeState:
    """One full sweep over every parameter of the hierarchy."""
    horseshoe.sample_coefficients(design, response, state, rng)
    horseshoe.sample_local_scales(state, rng)
    horseshoe.sample_global_and_aux(state, rng)
    residuals = response - design @ state.coef
    horseshoe.sample_noise_variance(residuals, state, rng)
    return state


def run_chain(design, response, config: ChainConfig, rng=None) -> WeightsPosterior:
    """Run the Gibbs chain and keep (iterations - burn_in) / thin draws."""
    config.validate()
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2 or design.shape[0] != response.shape[0]:
        raise DataValidationError("design must be T0 x N with a matching response length")
    if not (np.isfinite(design).all() and np.isfinite(response).all()):
        raise DataValidationError("pretreatment data must be complete for the weights chain")

    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n = design.shape[1]
    state = init_weights_state(design, response, hyper_scale=config.hyper_scale)

    kept_alpha = []
    kept_sigma = []
    for it in range(1, config.iterations + 1):
        gibbs_step(state, design, response, rng)
        if not np.isfinite(state.coef).all() or not np.isfinite(state.noise_var):
            raise SamplerDivergenceError(
                f"non-finite draw at iteration {it}",
                iteration=it,
                state_dump=state.positive_quantities(),
            )
        if np.abs(state.coef).max(initial=0.0) > config.divergence_bound:
            raise SamplerDivergenceError(
                f"weights chain diverged at iteration {it}: |alpha| exceeded "
                f"{config.divergence_bound:g}",
                iteration=it,
                state_dump=state.positive_quantities(),
            )
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            kept_alpha.append(state.coef.copy())
            kept_sigma.append(state.noise_var)

    meta = {
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed,
        "n_controls": n,
        "t0": int(design.shape[0]),
    }
    return WeightsPosterior(
        draws=np.asarray(kept_alpha),
        sigma1_draws=np.asarray(kept_sigma),
        meta=meta,
    )
