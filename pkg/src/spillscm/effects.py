"""Per-draw treatment and spillover effect distributions and their summaries.

For each posterior draw (alpha^(m), rho^(m)) and each computable
post-treatment period, the identification kernel turns observed outcomes into
one treatment-effect draw for the treated unit and one spillover draw per
control. Periods where the treated or any control outcome is missing are
masked rather than propagated as NaN arithmetic. Draws whose identification
system is singular are dropped and counted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import identify
from .errors import DataValidationError, SingularSystemError
from .panel import PanelData, SpatialWeights


def _alpha_matrix(posterior) -> np.ndarray:
    draws = getattr(posterior, "draws", posterior)
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2:
        raise DataValidationError("alpha posterior must be an (M, N) array of draws")
    return draws


def _rho_vector(posterior) -> np.ndarray:
    rho = getattr(posterior, "rho", posterior)
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1:
        raise DataValidationError("rho posterior must be a length-M vector of draws")
    return rho


@dataclass(frozen=True)
class EffectDraws:
    """Effect draws over the post-treatment window.

    treatment : (M, P) with NaN columns at masked periods
    spillover : (M, P, N)
    computable_mask : (P,) True where effects exist
    y0_post / yc_post : observed post-treatment outcomes (NaN where missing),
        kept so summaries can form per-draw counterfactual levels.
    """

    treatment: np.ndarray
    spillover: np.ndarray
    computable_mask: np.ndarray
    periods: tuple[str, ...]
    unit_labels: tuple[str, ...]
    y0_post: np.ndarray
    yc_post: np.ndarray
    n_excluded: int = 0

    @property
    def n_draws(self) -> int:
        return self.treatment.shape[0]

    @property
    def n_periods(self) -> int:
        return self.treatment.shape[1]

    @property
    def n_controls(self) -> int:
        return self.spillover.shape[2]


def effect_draws(
    alpha_posterior,
    rho_posterior,
    panel: PanelData,
    weights: SpatialWeights,
    pairing: str = "aligned",
    pairing_seed: int | None = None,
) -> EffectDraws:
    """Apply the identification kernel draw by draw.

    Draw m of the weights chain is paired with draw m of the spatial chain
    (``pairing='aligned'``, the default). ``pairing='independent'`` shuffles
    the rho draws with a seeded permutation; useful only as a diagnostic for
    how much the index alignment matters.
    """
    alpha = _alpha_matrix(alpha_posterior)
    rho = _rho_vector(rho_posterior)
    if alpha.shape[0] != rho.shape[0]:
        raise DataValidationError(
            f"posterior draw counts differ: {alpha.shape[0]} alpha vs {rho.shape[0]} rho"
        )
    if alpha.shape[1] != panel.n_controls:
        raise DataValidationError("alpha draws and panel disagree on the number of controls")
    if pairing == "independent":
        perm = np.random.default_rng(pairing_seed).permutation(rho.shape[0])
        rho = rho[perm]
    elif pairing != "aligned":
        raise DataValidationError(f"unknown pairing mode {pairing!r}")

    t0 = panel.t0
    y0_post = panel.y0[t0:]
    yc_post = panel.yc[:, t0:]
    periods = panel.time_labels[t0:]
    computable = ~(panel.missing_mask[:, t0:].any(axis=0))
    comp_idx = np.flatnonzero(computable)
    n_post = y0_post.size
    n = panel.n_controls

    yc_c = yc_post[:, comp_idx]
    y0_c = y0_post[comp_idx]

    kept_treat = []
    kept_spill = []
    n_excluded = 0
    for m in range(alpha.shape[0]):
        params = identify.StructuralParams(alpha=alpha[m], rho=rho[m])
        try:
            cf = identify.counterfactual_controls(params, weights, yc_c, y0_c)
        except SingularSystemError:
            n_excluded += 1
            continue
        kept_treat.append(y0_c - alpha[m] @ cf)
        kept_spill.append(yc_c - cf)

    if not kept_treat:
        raise DataValidationError("every posterior draw produced a singular system")

    m_kept = len(kept_treat)
    treatment = np.full((m_kept, n_post), np.nan)
    spillover = np.full((m_kept, n_post, n), np.nan)
    treatment[:, comp_idx] = np.asarray(kept_treat)
    spillover[:, comp_idx, :] = np.transpose(np.asarray(kept_spill), (0, 2, 1))
    return EffectDraws(
        treatment=treatment,
        spillover=spillover,
        computable_mask=computable,
        periods=tuple(periods),
        unit_labels=panel.unit_labels,
        y0_post=y0_post.copy(),
        yc_post=yc_post.copy(),
        n_excluded=n_excluded,
    )


@dataclass(frozen=True)
class EffectSummary:
    """Posterior means and equal-tailed credible bounds per unit and period,
    plus per-unit cumulative losses as a percent of the counterfactual level."""

    unit_labels: tuple[str, ...]
    periods: tuple[str, ...]
    level: float
    computable_mask: np.ndarray
    treatment_mean: np.ndarray     # (P,)
    treatment_lower: np.ndarray
    treatment_upper: np.ndarray
    spillover_mean: np.ndarray     # (N, P)
    spillover_lower: np.ndarray
    spillover_upper: np.ndarray
    cumulative_loss_pct: np.ndarray  # (N+1,), treated first
    n_excluded: int


def summarize(draws: EffectDraws, level: float) -> EffectSummary:
    """Means and equal-tailed intervals at ``level``.

    Quantiles use linear interpolation of order statistics (numpy's default
    rule), fixed here so interval endpoints are reproducible bit for bit.
    Cumulative losses per unit are 100 * sum_t effect / counterfactual level,
    computed per draw over the computable periods and then averaged.
    """
    if not (0.0 < level < 1.0):
        raise DataValidationError(f"credibility level must lie in (0, 1); got {level}")
    if draws.n_draws < 2:
        raise DataValidationError("need at least two retained draws to form quantiles")
    q_lo = (1.0 - level) / 2.0
    q_hi = 1.0 - q_lo
    comp = np.flatnonzero(draws.computable_mask)
    n_post = draws.n_periods
    n = draws.n_controls

    t_mean = np.full(n_post, np.nan)
    t_lo = np.full(n_post, np.nan)
    t_hi = np.full(n_post, np.nan)
    s_mean = np.full((n, n_post), np.nan)
    s_lo = np.full((n, n_post), np.nan)
    s_hi = np.full((n, n_post), np.nan)
    if comp.size:
        tc = draws.treatment[:, comp]
        t_mean[comp] = tc.mean(axis=0)
        t_lo[comp] = np.quantile(tc, q_lo, axis=0, method="linear")
        t_hi[comp] = np.quantile(tc, q_hi, axis=0, method="linear")
        sc = draws.spillover[:, comp, :]
        s_mean[:, comp] = sc.mean(axis=0).T
        s_lo[:, comp] = np.quantile(sc, q_lo, axis=0, method="linear").T
        s_hi[:, comp] = np.quantile(sc, q_hi, axis=0, method="linear").T

    # counterfactual level per draw: observed outcome minus the effect draw.
    # A zero counterfactual level leaves the percent loss undefined (NaN,
    # reported as null downstream).
    loss = np.full(n + 1, np.nan)
    if comp.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            cf_treated = draws.y0_post[comp][None, :] - draws.treatment[:, comp]
            loss[0] = float(np.mean(100.0 * (draws.treatment[:, comp] / cf_treated).sum(axis=1)))
            cf_controls = draws.yc_post[:, comp].T[None, :, :] - draws.spillover[:, comp, :]
            per_draw = 100.0 * (draws.spillover[:, comp, :] / cf_controls).sum(axis=1)  # (M, N)
            loss[1:] = per_draw.mean(axis=0)

    return EffectSummary(
        unit_labels=draws.unit_labels,
        periods=draws.periods,
        level=level,
        computable_mask=draws.computable_mask.copy(),
        treatment_mean=t_mean,
        treatment_lower=t_lo,
        treatment_upper=t_hi,
        spillover_mean=s_mean,
        spillover_lower=s_lo,
        spillover_upper=s_hi,
        cumulative_loss_pct=loss,
        n_excluded=draws.n_excluded,
    )


def _cell(value):
    return None if value is None or not np.isfinite(value) else float(value)


def write_summary_json(summary: EffectSummary, path):
    records = []
    for pi, period in enumerate(summary.periods):
        computable = bool(summary.computable_mask[pi])
        records.append(
            {
                "unit": summary.unit_labels[0],
                "period": period,
                "computable": computable,
                "mean": _cell(summary.treatment_mean[pi]),
                "lower": _cell(summary.treatment_lower[pi]),
                "upper": _cell(summary.treatment_upper[pi]),
            }
        )
        for ci in range(summary.spillover_mean.shape[0]):
            records.append(
                {
                    "unit": summary.unit_labels[ci + 1],
                    "period": period,
                    "computable": computable,
                    "mean": _cell(summary.spillover_mean[ci, pi]),
                    "lower": _cell(summary.spillover_lower[ci, pi]),
                    "upper": _cell(summary.spillover_upper[ci, pi]),
                }
            )
    payload = {
        "level": summary.level,
        "n_excluded_draws": summary.n_excluded,
        "effects": records,
        "cumulative_loss_pct": {
            summary.unit_labels[i]: _cell(summary.cumulative_loss_pct[i])
            for i in range(len(summary.unit_labels))
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_draws_csv(draws: EffectDraws, path):
    """Long-format draws for external plotting: draw, period, unit, effect."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("draw,period,unit,effect\n")
        for m in range(draws.n_draws):
            for pi in np.flatnonzero(draws.computable_mask):
                period = draws.periods[pi]
                fh.write(f"{m},{period},{draws.unit_labels[0]},{float(draws.treatment[m, pi])!r}\n")
                for ci in range(draws.n_controls):
                    fh.write(
                        f"{m},{period},{draws.unit_labels[ci + 1]},{float(draws.spillover[m, pi, ci])!r}\n"
                    )


def write_meta_json(draws: EffectDraws, path):
    payload = {
        "periods": list(draws.periods),
        "unit_labels": list(draws.unit_labels),
        "computable_mask": [bool(v) for v in draws.computable_mask],
        "y0_post": [None if np.isnan(v) else float(v) for v in draws.y0_post],
        "yc_post": [
            [None if np.isnan(v) else float(v) for v in row] for row in draws.yc_post
        ],
        "n_excluded": draws.n_excluded,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def read_draws(draws_path, meta_path) -> EffectDraws:
    """Rebuild :class:`EffectDraws` from the CSV/JSON artifact pair."""
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    periods = tuple(meta["periods"])
    units = tuple(meta["unit_labels"])
    mask = np.asarray(meta["computable_mask"], dtype=bool)
    y0_post = np.asarray([np.nan if v is None else v for v in meta["y0_post"]], dtype=float)
    yc_post = np.asarray(
        [[np.nan if v is None else v for v in row] for row in meta["yc_post"]], dtype=float
    )
    n = len(units) - 1
    period_pos = {p: i for i, p in enumerate(periods)}
    unit_pos = {u: i for i, u in enumerate(units)}

    import pandas as pd

    frame = pd.read_csv(draws_path, dtype={"period": str, "unit": str})
    if frame.empty:
        raise DataValidationError("effect draws artifact is empty")
    n_draws = int(frame["draw"].max()) + 1
    treatment = np.full((n_draws, len(periods)), np.nan)
    spillover = np.full((n_draws, len(periods), n), np.nan)
    rows = frame["draw"].to_numpy()
    cols = frame["period"].map(period_pos).to_numpy()
    units_idx = frame["unit"].map(unit_pos).to_numpy()
    vals = frame["effect"].to_numpy(dtype=float)
    treated_rows = units_idx == 0
    treatment[rows[treated_rows], cols[treated_rows]] = vals[treated_rows]
    ctrl = ~treated_rows
    spillover[rows[ctrl], cols[ctrl], units_idx[ctrl] - 1] = vals[ctrl]
    return EffectDraws(
        treatment=treatment,
        spillover=spillover,
        computable_mask=mask,
        periods=periods,
        unit_labels=units,
        y0_post=y0_post,
        yc_post=yc_post,
        n_excluded=int(meta["n_excluded"]),
    )


def write_plot_bundle_csv(panel: PanelData, summary: EffectSummary, alpha_draws, path):
    """Figure-ready data: observed and synthetic treated paths over the full
    span plus effect paths with bands for every unit."""
    alpha = _alpha_matrix(alpha_draws)
    q_lo = (1.0 - summary.level) / 2.0
    q_hi = 1.0 - q_lo
    t0 = panel.t0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("series,unit,period,value,lower,upper\n")
        treated = panel.unit_labels[0]

        def emit(series, unit, period, value, lower=None, upper=None):
            def fmt(v):
                return "" if v is None or not np.isfinite(v) else repr(float(v))

            fh.write(f"{series},{unit},{period},{fmt(value)},{fmt(lower)},{fmt(upper)}\n")

        for ti, period in enumerate(panel.time_labels):
            emit("observed", treated, period, panel.y0[ti])
        # pretreatment synthetic path: alpha' yc per draw
        fitted = alpha @ panel.yc[:, :t0]
        for ti in range(t0):
            col = fitted[:, ti]
            emit(
                "synthetic",
                treated,
                panel.time_labels[ti],
                col.mean(),
                np.quantile(col, q_lo),
                np.quantile(col, q_hi),
            )
        # post-treatment synthetic = observed minus the effect summary
        for pi, period in enumerate(summary.periods):
            if not summary.computable_mask[pi]:
                emit("synthetic", treated, period, None)
                emit("effect", treated, period, None)
                continue
            y_obs = panel.y0[t0 + pi]
            emit(
                "synthetic",
                treated,
                period,
                y_obs - summary.treatment_mean[pi],
                y_obs - summary.treatment_upper[pi],
                y_obs - summary.treatment_lower[pi],
            )
            emit(
                "effect",
                treated,
                period,
                summary.treatment_mean[pi],
                summary.treatment_lower[pi],
                summary.treatment_upper[pi],
            )
        for ci, unit in enumerate(panel.unit_labels[1:]):
            for pi, period in enumerate(summary.periods):
                if not summary.computable_mask[pi]:
                    emit("effect", unit, period, None)
                    continue
                emit(
                    "effect",
                    unit,
                    period,
                    summary.spillover_mean[ci, pi],
                    summary.spillover_lower[ci, pi],
                    summary.spillover_upper[ci, pi],
                )
