"""Monte Carlo harness: lattice DGP, method fits, and bias/RMSE/coverage.

The data-generating process places the controls on an r x r rook lattice,
row-normalizes the control-to-control weight block (the raw 0/1 lattice makes
I - rho W singular inside the rho grid of interest), keeps the raw 0/1
treated-adjacency vector, and solves the simultaneous outcome system exactly.
Reported bias is mean(estimate - truth), matching the orientation of the
published benchmark tables; RMSE averages squared per-period errors, so
RMSE >= |bias| cell by cell.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, effects, fit, identify, weights_sampler
from .errors import (
    DataValidationError,
    SamplerDivergenceError,
    SingularSystemError,
    SpillScmError,
)
from .panel import PanelData, SpatialWeights

REPORT_COLUMNS = [
    "n_controls",
    "t_total",
    "t0",
    "rho",
    "method",
    "bias",
    "rmse",
    "coverage",
    "mc_se_bias",
    "replications",
    "failures",
]

BENCHMARK_RHO_GRID = (-0.8, -0.3, -0.1, 0.0, 0.1, 0.3, 0.8)
METHODS = ("proposed", "scm", "bscm")
WORKER_ENV_VAR = "SPILLSCM_THREADS"


@dataclass(frozen=True)
class SimScenario:
    n_controls: int = 16
    t_total: int = 30
    t0: int = 20
    rho: float = 0.0
    beta: float = 1.0
    replications: int = 100
    draws: int = 2000
    burn_in: int = 500
    thin: int = 1
    n_factors: int = 1
    level: float = 0.95
    metropolis_scale: float = 0.05
    seed: int = 0

    def validate(self):
        side = int(round(np.sqrt(self.n_controls)))
        if side * side != self.n_controls:
            raise DataValidationError(
                f"n_controls must be a perfect square for the rook lattice; got {self.n_controls}"
            )
        if not (1 <= self.t0 < self.t_total):
            raise DataValidationError("t0 must satisfy 1 <= t0 < t_total")
        if self.replications < 1:
            raise DataValidationError("need at least one replication")


def rook_matrix(side: int) -> np.ndarray:
    """0/1 adjacency of an r x r board under rook moves, units row-major.

    Interior cells touch four neighbors, edges three, corners two.
    """
    if side < 2:
        raise DataValidationError(f"rook board side must be >= 2; got {side}")
    n = side * side
    mat = np.zeros((n, n))
    for i in range(side):
        for j in range(side):
            a = i * side + j
            if i + 1 < side:
                b = (i + 1) * side + j
                mat[a, b] = mat[b, a] = 1.0
            if j + 1 < side:
                b = i * side + (j + 1)
                mat[a, b] = mat[b, a] = 1.0
    return mat


def planted_alpha(n: int) -> np.ndarray:
    """The sparse benchmark weight vector planted by the simulation design:
    0.5, -0.2, 0.4, 0.4 on the first four units, 0.1/6 on units 5..10, zero
    elsewhere."""
    if n < 10:
        raise DataValidationError(f"planted weights need at least 10 controls; got {n}")
    alpha = np.zeros(n)
    alpha[0] = 0.5
    alpha[1] = -0.2
    alpha[2] = alpha[3] = 0.4
    alpha[4:10] = 0.1 / 6.0
    return alpha


def planted_w(n: int) -> np.ndarray:
    """Treated-unit adjacency: 1 on the first four controls, 0 elsewhere."""
    w = np.zeros(n)
    w[:4] = 1.0
    return w


def scenario_weights(n_controls: int) -> SpatialWeights:
    """Lattice weights used by the DGP and handed to the estimators:
    row-normalized W, raw 0/1 w."""
    side = int(round(np.sqrt(n_controls)))
    W = rook_matrix(side)
    W = W / W.sum(axis=1)[:, None]
    return SpatialWeights(w=planted_w(n_controls), W=W, normalized=False)


@dataclass(frozen=True)
class SimDraw:
    panel: PanelData
    weights: SpatialWeights
    true_treatment: np.ndarray      # (P,)
    true_spillover: np.ndarray      # (N, P)
    alpha: np.ndarray
    rho: float


def dgp_draw(scenario: SimScenario, rng) -> SimDraw:
    """One replication of the data-generating process.

    Solves yc(0) = (I - rho w alpha' - rho W)^-1 (X beta + u) with X, u i.i.d.
    standard normal, sets the treated path to alpha' yc(0), adds N(1, 1)
    treatment effects after t0, and re-solves the treated-period system with
    the same (X, u) to get the spilled-over control outcomes.
    """
    scenario.validate()
    n = scenario.n_controls
    t_total, t0 = scenario.t_total, scenario.t0
    weights = scenario_weights(n)
    alpha = planted_alpha(n)
    rho = scenario.rho

    params = identify.StructuralParams(alpha=alpha, rho=rho)
    report = identify.check_invertibility(params, weights)
    if not report.ok:
        raise SingularSystemError(
            f"scenario system is singular at rho={rho} "
            f"(condition number {report.condition_number:.3e})",
            condition_number=report.condition_number,
        )

    a_full = identify.system_matrix(params, weights)
    a_post = np.eye(n) - rho * weights.W

    x = rng.standard_normal((n, t_total))
    u = rng.standard_normal((n, t_total))
    rhs = scenario.beta * x + u
    yc0 = np.linalg.solve(a_full, rhs)
    y00 = alpha @ yc0
    tau = 1.0 + rng.standard_normal(t_total - t0)
    y01_post = y00[t0:] + tau
    yc1_post = np.linalg.solve(a_post, rho * np.outer(weights.w, y01_post) + rhs[:, t0:])

    outcomes = np.empty((n + 1, t_total))
    outcomes[0] = np.concatenate([y00[:t0], y01_post])
    outcomes[1:] = np.concatenate([yc0[:, :t0], yc1_post], axis=1)
    panel = PanelData(
        outcomes=outcomes,
        covariates=x[:, :, None].copy(),
        t0=t0,
        missing_mask=np.zeros_like(outcomes, dtype=bool),
        unit_labels=tuple(f"unit_{i:02d}" for i in range(n + 1)),
        time_labels=tuple(str(t + 1) for t in range(t_total)),
    )
    return SimDraw(
        panel=panel,
        weights=weights,
        true_treatment=tau,
        true_spillover=yc1_post - yc0[:, t0:],
        alpha=alpha,
        rho=rho,
    )


def _replication(scenario: SimScenario, seed_seq, methods):
    """Fit every requested method on one simulated panel.

    Returns per-period error cells (estimate - truth) per method and, for the
    proposed method, coverage indicators of the level-scenario.level interval.
    """
    child = seed_seq.spawn(3)
    draw = dgp_draw(scenario, np.random.default_rng(child[0]))
    panel, weights = draw.panel, draw.weights
    design, response = panel.pretreatment_design()
    truth = draw.true_treatment
    out = {"errors": {}, "coverage": None, "n_excluded": 0}

    if "scm" in methods:
        scm_fit = baselines.fit_standard_scm(design, response)
        est = baselines.scm_effects(scm_fit, panel)
        out["errors"]["scm"] = est - truth

    if "proposed" in methods:
        cfg = fit.FitConfig(
            iterations=scenario.draws,
            burn_in=scenario.burn_in,
            thin=scenario.thin,
            n_factors=scenario.n_factors,
            metropolis_scale=scenario.metropolis_scale,
        )
        result = fit.run_joint_fit(panel, weights, cfg, rng=np.random.default_rng(child[1]))
        weights_post = result.weights_posterior
        eff = effects.effect_draws(weights_post, result.sar_posterior, panel, weights)
        est = eff.treatment.mean(axis=0)
        out["errors"]["proposed"] = est - truth
        q_lo = (1.0 - scenario.level) / 2.0
        lo = np.quantile(eff.treatment, q_lo, axis=0)
        hi = np.quantile(eff.treatment, 1.0 - q_lo, axis=0)
        out["coverage"] = (lo <= truth) & (truth <= hi)
        out["n_excluded"] = eff.n_excluded
    elif "bscm" in methods:
        chain_cfg = weights_sampler.ChainConfig(
            iterations=scenario.draws, burn_in=scenario.burn_in, thin=scenario.thin
        )
        weights_post = weights_sampler.run_chain(
            design, response, chain_cfg, rng=np.random.default_rng(child[2])
        )
    if "bscm" in methods:
        # per-draw effect y0 - alpha'yc is linear in alpha, so the posterior
        # mean effect equals the effect at the posterior mean weights
        alpha_mean = weights_post.mean()
        est = panel.y0[panel.t0 :] - alpha_mean @ panel.yc[:, panel.t0 :]
        out["errors"]["bscm"] = est - truth
    return out


def _replication_task(args):
    index, scenario, seed_seq, methods = args
    try:
        return index, _replication(scenario, seed_seq, methods), None
    except (SpillScmError, np.linalg.LinAlgError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


@dataclass
class MetricsReport:
    scenario: SimScenario
    bias: dict
    rmse: dict
    coverage: float | None
    mc_se_bias: dict
    replications: int
    failures: int
    runtime_s: float
    n_excluded_draws: int = 0
    failure_messages: tuple = ()


def effective_workers(requested: int) -> int:
    cap = os.environ.get(WORKER_ENV_VAR)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            raise DataValidationError(f"{WORKER_ENV_VAR} must be an integer; got {cap!r}")
    return max(1, requested)


def _limit_worker_blas_threads():
    # one BLAS thread per worker process; the matrices are tiny and nested
    # threading just thrashes the cores
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def run_monte_carlo(scenario: SimScenario, methods=METHODS, n_workers: int = 1) -> MetricsReport:
    """Simulate, fit, and aggregate over ``scenario.replications`` draws.

    Per-replication seeds come from spawning the scenario's master seed, and
    aggregation runs over index-sorted results, so reports are identical for
    any worker count.
    """
    scenario.validate()
    methods = tuple(m for m in METHODS if m in methods)
    if not methods:
        raise DataValidationError("no known methods requested")
    started = time.perf_counter()
    master = np.random.SeedSequence(scenario.seed)
    tasks = [
        (i, scenario, seq, methods)
        for i, seq in enumerate(master.spawn(scenario.replications))
    ]
    n_workers = effective_workers(n_workers)
    if n_workers > 1:
        with ProcessPoolExecutor(
            max_workers=n_workers, initializer=_limit_worker_blas_threads
        ) as pool:
            raw = list(pool.map(_replication_task, tasks, chunksize=1))
    else:
        raw = [_replication_task(t) for t in tasks]
    raw.sort(key=lambda item: item[0])

    errors = {m: [] for m in methods}
    cover_cells = []
    failures = []
    n_excluded = 0
    for _, result, failure in raw:
        if failure is not None:
            failures.append(failure)
            continue
        for m in methods:
            errors[m].append(result["errors"][m])
        if result["coverage"] is not None:
            cover_cells.append(result["coverage"])
        n_excluded += result["n_excluded"]

    if not any(errors.values()):
        raise SamplerDivergenceError(
            f"all {scenario.replications} replications failed; first: {failures[0]}"
        )

    bias, rmse, mc_se = {}, {}, {}
    for m in methods:
        cells = np.asarray(errors[m])                     # (R_ok, P)
        finite = np.isfinite(cells)
        bias[m] = float(cells[finite].mean())
        rmse[m] = float(np.sqrt((cells[finite] ** 2).mean()))
        rep_means = np.array([row[np.isfinite(row)].mean() for row in cells])
        mc_se[m] = float(rep_means.std(ddof=1) / np.sqrt(len(rep_means))) if len(rep_means) > 1 else float("nan")
    coverage = float(np.asarray(cover_cells).mean()) if cover_cells else None

    return MetricsReport(
        scenario=scenario,
        bias=bias,
        rmse=rmse,
        coverage=coverage,
        mc_se_bias=mc_se,
        replications=scenario.replications,
        failures=len(failures),
        runtime_s=time.perf_counter() - started,
        n_excluded_draws=n_excluded,
        failure_messages=tuple(failures[:10]),
    )


def write_report_csv(reports, path):
    """Long-format report, one row per (scenario, method)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for rep in reports:
            sc = rep.scenario
            for method in METHODS:
                if method not in rep.bias:
                    continue
                coverage = repr(float(rep.coverage)) if (method == "proposed" and rep.coverage is not None) else ""
                row = [
                    str(sc.n_controls),
                    str(sc.t_total),
                    str(sc.t0),
                    repr(float(sc.rho)),
                    method,
                    repr(float(rep.bias[method])),
                    repr(float(rep.rmse[method])),
                    coverage,
                    repr(float(rep.mc_se_bias[method])),
                    str(rep.replications),
                    str(rep.failures),
                ]
                fh.write(",".join(row) + "\n")


def write_report_json(reports, path):
    payload = []
    for rep in reports:
        sc = rep.scenario
        payload.append(
            {
                "scenario": {
                    "n_controls": sc.n_controls,
                    "t_total": sc.t_total,
                    "t0": sc.t0,
                    "rho": sc.rho,
                    "replications": sc.replications,
                    "draws": sc.draws,
                    "burn_in": sc.burn_in,
                    "seed": sc.seed,
                },
                "bias": rep.bias,
                "rmse": rep.rmse,
                "coverage": rep.coverage,
                "mc_se_bias": rep.mc_se_bias,
                "failures": rep.failures,
                "failure_messages": list(rep.failure_messages),
                "n_excluded_draws": rep.n_excluded_draws,
                "runtime_s": rep.runtime_s,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_table_csvs(reports, table1_path, table2_path):
    """Pivot the reports into benchmark-table shape: bias/RMSE rows per rho
    with one column per (method, N, T0) cell, and a coverage table."""
    combos = sorted({(r.scenario.n_controls, r.scenario.t0) for r in reports})
    rhos = sorted({r.scenario.rho for r in reports})
    by_key = {(r.scenario.n_controls, r.scenario.t0, r.scenario.rho): r for r in reports}

    with open(table1_path, "w", encoding="utf-8") as fh:
        header = ["metric", "rho"]
        for n, t0 in combos:
            for method in METHODS:
                header.append(f"{method}_N{n}_T0{t0}")
        fh.write(",".join(header) + "\n")
        for metric in ("bias", "rmse"):
            for rho in rhos:
                row = [metric, repr(float(rho))]
                for n, t0 in combos:
                    rep = by_key.get((n, t0, rho))
                    for method in METHODS:
                        value = getattr(rep, metric).get(method) if rep else None
                        row.append("" if value is None else repr(float(value)))
                fh.write(",".join(row) + "\n")

    with open(table2_path, "w", encoding="utf-8") as fh:
        header = ["rho"] + [f"N{n}_T0{t0}" for n, t0 in combos]
        fh.write(",".join(header) + "\n")
        for rho in rhos:
            row = [repr(float(rho))]
            for n, t0 in combos:
                rep = by_key.get((n, t0, rho))
                row.append("" if rep is None or rep.coverage is None else repr(float(rep.coverage)))
            fh.write(",".join(row) + "\n")
