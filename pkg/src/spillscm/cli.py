"""Command-line interface.

Subcommands
-----------
fit       estimate weights and the spatial model, then write effect artifacts
simulate  run the Monte Carlo study and write report tables
effects   re-summarize stored effect draws at a new credibility level
baseline  standard and Bayesian synthetic-control reference estimators

Options may come from ``--config FILE`` (flat ``key=value`` lines, keys named
after the long flags) with explicit command-line flags taking precedence.
Everything is offline and seeded: a run manifest makes each invocation
replayable. Exit codes: 0 success, 2 configuration error, 3 data error,
4 sampler divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib.metadata import version as pkg_version
from pathlib import Path

import numpy as np

from . import baselines, effects, fit, panel as panel_mod, simulate, weights_sampler
from .errors import ConfigError, DataValidationError, SamplerDivergenceError, SpillScmError

SCHEMA_VERSION = "spillscm-artifacts-1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def read_config_file(path) -> dict:
    """Flat key=value config; '#' starts a comment line."""
    options = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        options[key.strip().replace("-", "_")] = value.strip()
    return options


RESERVED_CONFIG_KEYS = {"func", "subcommand", "config"}

CONFIG_TYPES = {
    "seed": int,
    "draws": int,
    "burn_in": int,
    "thin": int,
    "factors": int,
    "t0": int,
    "n_controls": int,
    "t_total": int,
    "replications": int,
    "workers": int,
    "level": float,
    "rho": float,
    "normalize_weights": lambda raw: raw.lower() in ("1", "true", "yes", "on"),
}


def merge_config(args: argparse.Namespace, parser_defaults: dict) -> argparse.Namespace:
    """Fill argparse values that were left at their defaults from the config
    file; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    file_options = read_config_file(args.config)
    for key, raw in file_options.items():
        if key in RESERVED_CONFIG_KEYS or not hasattr(args, key):
            raise ConfigError(f"unknown config key '{key}'")
        if getattr(args, key) != parser_defaults.get(key):
            continue  # flag given explicitly
        caster = CONFIG_TYPES.get(key, str)
        try:
            setattr(args, key, caster(raw))
        except ValueError as exc:
            raise ConfigError(f"config key '{key}' has invalid value {raw!r}") from exc
    return args


def _require(args, names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def _positive_int(args, name):
    value = getattr(args, name)
    if value is not None and value < 1:
        raise ConfigError(f"--{name.replace('_', '-')} must be >= 1; got {value}")


def write_manifest(out_dir: Path, command: str, options: dict):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "package_version": _safe_version("spillscm"),
        "numpy_version": np.__version__,
        "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()},
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _safe_version(name):
    try:
        return pkg_version(name)
    except Exception:
        return "unknown"


def _load_panel(args) -> panel_mod.PanelData:
    covs = ()
    if args.covariates:
        covs = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    else:
        import pandas as pd

        head = pd.read_csv(args.panel, nrows=0)
        reserved = {args.unit_col, args.time_col, args.outcome_col, args.treated_col}
        covs = tuple(c for c in head.columns if c not in reserved)
    schema = panel_mod.PanelSchema(
        unit=args.unit_col,
        time=args.time_col,
        outcome=args.outcome_col,
        treated=args.treated_col,
        covariates=covs,
    )
    return panel_mod.load_panel(args.panel, schema, args.t0)


def _load_weights(args, panel: panel_mod.PanelData) -> panel_mod.SpatialWeights:
    sources = [s for s in ("edges", "trade", "weights") if getattr(args, s, None)]
    if len(sources) != 1:
        raise ConfigError("exactly one of --edges, --trade, --weights is required")
    if args.edges:
        edges = panel_mod.load_edge_list(args.edges)
        weights = panel_mod.build_adjacency_weights(edges, panel.n_controls)
    elif args.trade:
        flows = panel_mod.load_trade_matrix(args.trade, panel.unit_labels)
        weights = panel_mod.build_trade_weights(flows)
    else:
        block = panel_mod.load_trade_matrix(args.weights, panel.unit_labels)
        if (block < 0).any():
            raise DataValidationError("weight matrix entries must be nonnegative")
        weights = panel_mod.SpatialWeights(w=block[1:, 0], W=block[1:, 1:], normalized=False)
    if args.normalize_weights and not weights.normalized:
        weights = panel_mod.row_normalize(weights)
    return weights


def _check_paths_exist(args, names):
    for name in names:
        value = getattr(args, name, None)
        if value and not Path(value).exists():
            raise ConfigError(f"--{name.replace('_', '-')} path does not exist: {value}")


def cmd_fit(args) -> int:
    _require(args, ["panel", "t0", "out", "level"])
    _positive_int(args, "t0")
    if not (0.0 < args.level < 1.0):
        raise ConfigError(f"--level must lie in (0, 1); got {args.level}")
    if args.draws <= args.burn_in:
        raise ConfigError("--draws must exceed --burn-in")
    _check_paths_exist(args, ["panel", "edges", "trade", "weights", "config"])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = _load_panel(args)
    weights = _load_weights(args, panel)
    if weights.n_controls != panel.n_controls:
        raise DataValidationError("weights and panel disagree on the number of controls")

    fit_cfg = fit.FitConfig(
        iterations=args.draws,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
        n_factors=args.factors,
    )
    print(f"fit: joint chains ({args.draws} iterations)", file=sys.stderr)
    result = fit.run_joint_fit(panel, weights, fit_cfg)
    weights_post = result.weights_posterior
    sar_post = result.sar_posterior

    print("fit: effects", file=sys.stderr)
    draws = effects.effect_draws(weights_post, sar_post, panel, weights)
    summary = effects.summarize(draws, args.level)

    weights_post.to_csv(out_dir / "weights_posterior.csv")
    weights_post.summary_json(out_dir / "weights_summary.json")
    sar_post.to_csv(out_dir / "sar_posterior.csv")
    sar_post.summary_json(out_dir / "sar_summary.json")
    effects.write_draws_csv(draws, out_dir / "effect_draws.csv")
    effects.write_meta_json(draws, out_dir / "effects_meta.json")
    effects.write_summary_json(summary, out_dir / "effect_summary.json")
    effects.write_plot_bundle_csv(panel, summary, weights_post, out_dir / "plot_bundle.csv")
    write_manifest(out_dir, "fit", vars(args) | {"func": None})
    print(f"fit: artifacts in {out_dir}", file=sys.stderr)
    return EXIT_OK


def cmd_effects(args) -> int:
    _require(args, ["out", "level"])
    if not (0.0 < args.level < 1.0):
        raise ConfigError(f"--level must lie in (0, 1); got {args.level}")
    out_dir = Path(args.out)
    draws_path = out_dir / "effect_draws.csv"
    meta_path = out_dir / "effects_meta.json"
    if not draws_path.exists() or not meta_path.exists():
        raise DataValidationError(
            f"missing effect artifacts in {out_dir}; run `spillscm fit` first"
        )
    draws = effects.read_draws(draws_path, meta_path)
    summary = effects.summarize(draws, args.level)
    effects.write_summary_json(summary, out_dir / "effect_summary.json")
    print(f"effects: re-summarized at level {args.level}", file=sys.stderr)
    return EXIT_OK


def cmd_baseline(args) -> int:
    _require(args, ["panel", "t0", "out", "level"])
    _positive_int(args, "t0")
    if not (0.0 < args.level < 1.0):
        raise ConfigError(f"--level must lie in (0, 1); got {args.level}")
    if args.draws <= args.burn_in:
        raise ConfigError("--draws must exceed --burn-in")
    _check_paths_exist(args, ["panel", "config"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = _load_panel(args)
    design, response = panel.pretreatment_design()

    fit = baselines.fit_standard_scm(design, response)
    estimates = baselines.scm_effects(fit, panel)
    baselines.write_scm_fit_json(fit, out_dir / "scm_fit.json")
    baselines.write_scm_effects_csv(panel, estimates, out_dir / "scm_effects.csv")

    chain_cfg = weights_sampler.ChainConfig(
        iterations=args.draws, burn_in=args.burn_in, thin=args.thin, seed=args.seed
    )
    posterior = baselines.fit_bscm(
        design, response, chain_cfg, rng=np.random.default_rng(np.random.SeedSequence(args.seed))
    )
    posterior.to_csv(out_dir / "bscm_posterior.csv")
    posterior.summary_json(out_dir / "bscm_summary.json")
    # BSCM effect distribution: the weights posterior with no spillover term
    weights = panel_mod.SpatialWeights(
        w=np.zeros(panel.n_controls), W=np.zeros((panel.n_controls, panel.n_controls))
    )
    draws = effects.effect_draws(posterior, np.zeros(posterior.n_draws), panel, weights)
    summary = effects.summarize(draws, args.level)
    effects.write_summary_json(summary, out_dir / "bscm_effect_summary.json")
    write_manifest(out_dir, "baseline", vars(args) | {"func": None})
    print(f"baseline: artifacts in {out_dir}", file=sys.stderr)
    return EXIT_OK


def _grid_scenarios(args):
    base = dict(
        replications=args.replications,
        draws=args.draws,
        burn_in=args.burn_in,
        thin=args.thin,
        n_factors=args.factors,
        level=args.level,
    )
    grid = args.scenario_grid
    if grid is None:
        return [
            simulate.SimScenario(
                n_controls=args.n_controls,
                t_total=args.t_total,
                t0=args.t0,
                rho=args.rho,
                seed=args.seed,
                **base,
            )
        ]
    if grid == "desk":
        return [
            simulate.SimScenario(
                n_controls=16, t_total=30, t0=20, rho=rho, seed=args.seed + 1000 * i, **base
            )
            for i, rho in enumerate(simulate.BENCHMARK_RHO_GRID)
        ]
    if grid == "full":
        # every published-scale cell; long-running (hours to days)
        scenarios = []
        i = 0
        for n in (16, 36, 64):
            for t_total, t0 in ((30, 20), (60, 50)):
                for rho in simulate.BENCHMARK_RHO_GRID:
                    scenarios.append(
                        simulate.SimScenario(
                            n_controls=n,
                            t_total=t_total,
                            t0=t0,
                            rho=rho,
                            seed=args.seed + 1000 * i,
                            **base,
                        )
                    )
                    i += 1
        return scenarios
    grid_path = Path(grid)
    if not grid_path.exists():
        raise ConfigError(f"--scenario-grid must be 'desk', 'full', or a CSV path; got {grid!r}")
    import pandas as pd

    frame = pd.read_csv(grid_path)
    needed = {"n_controls", "t_total", "t0", "rho"}
    if not needed.issubset(frame.columns):
        raise ConfigError(f"scenario grid CSV needs columns {sorted(needed)}")
    scenarios = []
    for i, row in frame.iterrows():
        opts = dict(base)
        if "replications" in frame.columns and not np.isnan(row.get("replications", np.nan)):
            opts["replications"] = int(row["replications"])
        scenarios.append(
            simulate.SimScenario(
                n_controls=int(row["n_controls"]),
                t_total=int(row["t_total"]),
                t0=int(row["t0"]),
                rho=float(row["rho"]),
                seed=args.seed + 1000 * i,
                **opts,
            )
        )
    return scenarios


def cmd_simulate(args) -> int:
    _require(args, ["out"])
    _positive_int(args, "t0")
    _positive_int(args, "replications")
    if args.draws <= args.burn_in:
        raise ConfigError("--draws must exceed --burn-in")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = _grid_scenarios(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    reports = []
    for i, scenario in enumerate(scenarios, start=1):
        print(
            f"simulate: scenario {i}/{len(scenarios)} "
            f"(N={scenario.n_controls}, T0={scenario.t0}, rho={scenario.rho})",
            file=sys.stderr,
        )
        reports.append(simulate.run_monte_carlo(scenario, methods=methods, n_workers=args.workers))
    simulate.write_report_csv(reports, out_dir / "report.csv")
    simulate.write_report_json(reports, out_dir / "report_mcse.json")
    simulate.write_table_csvs(reports, out_dir / "table1.csv", out_dir / "table2.csv")
    write_manifest(out_dir, "simulate", vars(args) | {"func": None})
    print(f"simulate: reports in {out_dir}", file=sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spillscm",
        description="Synthetic control with spatial spillovers",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    subparsers = {}

    def add_common(p, draws=5000, burn_in=1000, level=None):
        p.add_argument("--config", help="flat key=value config file; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--draws", type=int, default=draws, help="total MCMC iterations")
        p.add_argument("--burn-in", dest="burn_in", type=int, default=burn_in)
        p.add_argument("--thin", type=int, default=1)
        p.add_argument("--factors", type=int, default=1, help="latent factor dimension")
        p.add_argument("--level", type=float, default=level, help="credibility level in (0,1)")

    def add_data(p):
        p.add_argument("--panel", help="long-format panel CSV")
        p.add_argument("--t0", type=int, default=None, help="number of pretreatment periods")
        p.add_argument("--edges", help="adjacency edge list, one 'i,j' per line")
        p.add_argument("--trade", help="labelled flow matrix CSV (rows normalized to shares)")
        p.add_argument("--weights", help="labelled raw weight matrix CSV")
        p.add_argument("--normalize-weights", dest="normalize_weights", action="store_true")
        p.add_argument("--unit-col", dest="unit_col", default="unit")
        p.add_argument("--time-col", dest="time_col", default="time")
        p.add_argument("--outcome-col", dest="outcome_col", default="outcome")
        p.add_argument("--treated-col", dest="treated_col", default="treated")
        p.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")

    p_fit = sub.add_parser("fit", help="estimate and write effect artifacts")
    add_common(p_fit)
    add_data(p_fit)
    p_fit.set_defaults(func=cmd_fit)
    subparsers["fit"] = p_fit

    p_sim = sub.add_parser("simulate", help="Monte Carlo study")
    add_common(p_sim, draws=2000, burn_in=500, level=0.95)
    p_sim.add_argument("--scenario-grid", dest="scenario_grid", default=None,
                       help="'desk', 'full', or a scenario CSV path")
    p_sim.add_argument("--rho", type=float, default=0.0)
    p_sim.add_argument("--n-controls", dest="n_controls", type=int, default=16)
    p_sim.add_argument("--t-total", dest="t_total", type=int, default=30)
    p_sim.add_argument("--t0", type=int, default=20)
    p_sim.add_argument("--replications", type=int, default=100)
    p_sim.add_argument("--workers", type=int, default=1,
                       help=f"worker processes (capped by ${simulate.WORKER_ENV_VAR})")
    p_sim.add_argument("--methods", default="proposed,scm,bscm")
    p_sim.set_defaults(func=cmd_simulate)
    subparsers["simulate"] = p_sim

    p_eff = sub.add_parser("effects", help="re-summarize stored draws at a new level")
    p_eff.add_argument("--config", help="flat key=value config file; flags override it")
    p_eff.add_argument("--out", help="directory holding fit artifacts")
    p_eff.add_argument("--level", type=float, default=None)
    p_eff.set_defaults(func=cmd_effects)
    subparsers["effects"] = p_eff

    p_base = sub.add_parser("baseline", help="standard and Bayesian SCM references")
    add_common(p_base)
    add_data(p_base)
    p_base.set_defaults(func=cmd_baseline)
    subparsers["baseline"] = p_base

    return parser, subparsers


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    chosen = subparsers[args.subcommand]
    defaults = {action.dest: action.default for action in chosen._actions}
    try:
        args = merge_config(args, defaults)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataValidationError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerDivergenceError as exc:
        print(f"sampler divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SpillScmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
