"""Acceptance suite.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them all)
and asserts the stated tolerance. The Monte Carlo criteria run at desk scale
and take the longest; everything is deterministic under the pinned seeds.
"""

import json
import time
from importlib.resources import files

import numpy as np
import pytest

from spillscm import cli, fit, horseshoe, identify, simulate, weights_sampler
from spillscm.panel import SpatialWeights

from conftest import forward_simulate, random_invertible_instance

SAMPLE_PANEL = str(files("spillscm") / "data" / "sample_panel.csv")
SAMPLE_TRADE = str(files("spillscm") / "data" / "sample_trade.csv")

RHO_GRID = (-0.8, -0.3, -0.1, 0.0, 0.1, 0.3, 0.8)


def report(criterion, ok, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def test_criterion_01_identification_oracle():
    """Theorems as executable property: forward-simulate, recover effects."""
    rng = np.random.default_rng(20240801)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        params, weights = random_invertible_instance(rng)
        sim = forward_simulate(params, weights, rng)
        eff = identify.treatment_effect(params, weights, sim["yc_obs"][:, 0], sim["y0_obs"][0])
        spill = identify.spillover_effects(params, weights, sim["yc_obs"][:, 0], sim["y0_obs"][0])
        worst = max(
            worst,
            abs(float(eff) - sim["true_treatment"][0]),
            float(np.abs(spill - sim["true_spillover"][:, 0]).max()),
        )
    elapsed = time.perf_counter() - started
    ok = worst < 1e-9 and elapsed < 10.0
    report(1, ok, f"max abs error {worst:.2e} over 1000 instances in {elapsed:.1f}s")


def test_criterion_02_rho_zero_reduction_bitwise():
    rng = np.random.default_rng(7)
    exact = 0
    for _ in range(100):
        n = int(rng.integers(1, 17))
        params = identify.StructuralParams(alpha=rng.normal(size=n), rho=0.0)
        weights = SpatialWeights(
            w=rng.uniform(size=n), W=rng.uniform(size=(n, n)) * (1 - np.eye(n))
        )
        yc = rng.normal(size=n)
        y0 = float(rng.normal())
        full = identify.treatment_effect(params, weights, yc, y0)
        naive = identify.standard_scm_gap(params.alpha, yc, y0)
        exact += int(full == naive)
    report(2, exact == 100, f"{exact}/100 instances bit-identical")


@pytest.fixture(scope="module")
def desk_scale_reports():
    reports = {}
    for i, rho in enumerate(RHO_GRID):
        scenario = simulate.SimScenario(
            n_controls=16,
            t_total=30,
            t0=20,
            rho=rho,
            replications=100,
            draws=2000,
            burn_in=500,
            seed=1000 + i,
        )
        reports[rho] = simulate.run_monte_carlo(scenario, n_workers=2)
    return reports


def test_criterion_03_table1_trend_desk_scale(desk_scale_reports):
    lines = []
    ok = True
    for rho, rep in desk_scale_reports.items():
        lines.append(
            f"rho={rho:+.1f}: proposed {rep.bias['proposed']:+.3f} "
            f"scm {rep.bias['scm']:+.3f} bscm {rep.bias['bscm']:+.3f} "
            f"(failures {rep.failures})"
        )
        ok = ok and abs(rep.bias["proposed"]) <= 0.15
    scm_pos = desk_scale_reports[0.8].bias["scm"]
    scm_neg = desk_scale_reports[-0.8].bias["scm"]
    bscm_pos = desk_scale_reports[0.8].bias["bscm"]
    ok = ok and -3.2 <= scm_pos <= -2.0
    ok = ok and 0.5 <= scm_neg <= 1.3
    ok = ok and -3.2 <= bscm_pos <= -2.0
    report(3, ok, "; ".join(lines))


def test_criterion_04_table2_coverage_desk_scale():
    scenario = simulate.SimScenario(
        n_controls=16,
        t_total=30,
        t0=20,
        rho=-0.8,
        replications=200,
        draws=2000,
        burn_in=500,
        seed=4242,
    )
    rep = simulate.run_monte_carlo(scenario, methods=("proposed",), n_workers=2)
    ok = 0.90 <= rep.coverage <= 0.985
    report(4, ok, f"coverage {rep.coverage:.3f} at rho=-0.8, R=200")


def test_criterion_05_horseshoe_recovery():
    alpha = simulate.planted_alpha(16)
    nonzero = np.abs(alpha) > 0
    passes = 0
    for r in range(100):
        rng = np.random.default_rng(50_000 + r)
        design = np.sqrt(2.0) * rng.standard_normal((50, 16))
        response = design @ alpha + 0.1 * rng.standard_normal(50)
        post = weights_sampler.run_chain(
            design,
            response,
            weights_sampler.ChainConfig(iterations=1200, burn_in=400, seed=r),
        )
        mean = post.mean()
        ok = (
            np.all(np.abs(mean[nonzero] - alpha[nonzero]) < 0.1)
            and np.all(np.abs(mean[~nonzero]) < 0.05)
        )
        passes += int(ok)
    report(5, passes >= 90, f"{passes}/100 replications recovered the planted weights")


def test_criterion_06_rho_posterior_calibration():
    lines = []
    ok = True
    for rho in (0.0, 0.3, 0.8):
        means, accs = [], []
        for r in range(3):
            scenario = simulate.SimScenario(
                n_controls=16, t_total=60, t0=50, rho=rho, seed=660 + r
            )
            draw = simulate.dgp_draw(scenario, np.random.default_rng(660 + r))
            result = fit.run_joint_fit(
                draw.panel,
                draw.weights,
                fit.FitConfig(iterations=2500, burn_in=1000, seed=70 + r),
            )
            means.append(result.sar_posterior.rho.mean())
            accs.append(result.sar_posterior.acceptance_rate)
        err = abs(np.mean(means) - rho)
        acc = float(np.mean(accs))
        lines.append(f"rho={rho}: mean err {err:.3f}, acceptance {acc:.2f}")
        ok = ok and err <= 0.1 and all(0.3 <= a <= 0.7 for a in accs)
    report(6, ok, "; ".join(lines))


def test_criterion_07_log_determinant_cross_check():
    rng = np.random.default_rng(77)
    worst = 0.0
    for side in (2, 3, 4):
        W = simulate.rook_matrix(side)
        W = W / W.sum(axis=1, keepdims=True)
        eigvals = np.linalg.eigvals(W)
        for _ in range(100):
            rho = float(rng.uniform(-0.9, 0.9))
            sign, lu = np.linalg.slogdet(np.eye(side * side) - rho * W)
            assert sign != 0
            eig = float(np.sum(np.log(np.abs(1.0 - rho * eigvals))))
            worst = max(worst, abs(lu - eig))
    report(7, worst < 1e-8, f"max |LU - eigen| = {worst:.2e} over rook boards r=2,3,4")


def test_criterion_08_conjugate_reduction():
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(50):
        n, k = int(rng.integers(5, 40)), int(rng.integers(1, 8))
        design = rng.standard_normal((n, k))
        response = rng.standard_normal(n)
        state = horseshoe.HorseshoeState(
            coef=np.zeros(k),
            local_scale_sq=rng.uniform(0.05, 10.0, size=k),
            noise_var=float(rng.uniform(0.1, 5.0)),
        )
        mean, _ = horseshoe.coef_conditional(design, response, state)
        ridge = np.linalg.inv(
            design.T @ design + state.noise_var * np.diag(1.0 / state.local_scale_sq)
        ) @ (design.T @ response)
        worst = max(worst, float(np.abs(mean - ridge).max()))
    report(8, worst < 1e-10, f"max |conditional mean - ridge| = {worst:.2e} over 50 problems")


def test_criterion_09_bundled_sample_end_to_end(tmp_path):
    out = tmp_path / "sample_fit"
    code = cli.main(
        [
            "fit",
            "--panel", SAMPLE_PANEL,
            "--trade", SAMPLE_TRADE,
            "--t0", "11",
            "--draws", "600",
            "--burn-in", "200",
            "--seed", "12",
            "--level", "0.95",
            "--out", str(out),
        ]
    )
    summary = json.loads((out / "effect_summary.json").read_text())
    treated = [r for r in summary["effects"] if r["unit"] == "u00"]
    masked = [r["period"] for r in treated if not r["computable"]]
    computable = [r for r in treated if r["computable"]]
    ok = (
        code == 0
        and masked == ["2011"]
        and len(computable) == 4
        and all(r["mean"] is not None and r["lower"] < r["upper"] for r in computable)
    )
    report(9, ok, f"exit {code}, masked periods {masked}, {len(computable)} computable periods")


def test_criterion_10_simulate_determinism(tmp_path):
    def run(out):
        return cli.main(
            [
                "simulate",
                "--rho", "0.3",
                "--n-controls", "16",
                "--t-total", "25",
                "--t0", "20",
                "--replications", "4",
                "--draws", "300",
                "--burn-in", "100",
                "--seed", "77",
                "--workers", "2",
                "--out", str(out),
            ]
        )

    assert run(tmp_path / "a") == 0
    assert run(tmp_path / "b") == 0
    identical = all(
        (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("report.csv", "table1.csv", "table2.csv")
    )
    report(10, identical, "repeated cmd_simulate runs produced byte-identical report CSVs")
