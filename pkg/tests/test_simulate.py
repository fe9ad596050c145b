from collections import Counter

import numpy as np
import pytest

from spillscm import identify, simulate
from spillscm.errors import DataValidationError
from spillscm.simulate import (
    REPORT_COLUMNS,
    SimScenario,
    dgp_draw,
    planted_alpha,
    rook_matrix,
    run_monte_carlo,
)


def test_rook_two_by_two():
    W = rook_matrix(2)
    expected = np.array(
        [
            [0, 1, 1, 0],
            [1, 0, 0, 1],
            [1, 0, 0, 1],
            [0, 1, 1, 0],
        ],
        dtype=float,
    )
    np.testing.assert_array_equal(W, expected)
    np.testing.assert_array_equal(W.sum(axis=1), [2, 2, 2, 2])


def test_rook_degree_histogram_four_by_four():
    W = rook_matrix(4)
    degrees = Counter(int(d) for d in W.sum(axis=1))
    assert degrees == {2: 4, 3: 8, 4: 4}


def test_rook_symmetry_and_validation():
    W = rook_matrix(8)
    np.testing.assert_array_equal(W, W.T)
    with pytest.raises(DataValidationError):
        rook_matrix(1)


def test_planted_alpha_values():
    alpha = planted_alpha(16)
    assert alpha[0] == 0.5
    assert alpha[1] == -0.2
    assert alpha[2] == alpha[3] == 0.4
    np.testing.assert_allclose(alpha[4:10], 0.1 / 6)
    np.testing.assert_array_equal(alpha[10:], 0.0)
    assert alpha.sum() == pytest.approx(1.2)
    with pytest.raises(DataValidationError):
        planted_alpha(9)


def test_dgp_zero_rho_no_spillover(rng):
    sc = SimScenario(n_controls=16, t_total=30, t0=20, rho=0.0)
    draw = dgp_draw(sc, rng)
    np.testing.assert_allclose(draw.true_spillover, 0.0, atol=1e-12)


def test_dgp_identification_round_trip(rng):
    sc = SimScenario(n_controls=16, t_total=30, t0=20, rho=0.6)
    draw = dgp_draw(sc, rng)
    params = identify.StructuralParams(alpha=draw.alpha, rho=draw.rho)
    y0_post = draw.panel.y0[20:]
    yc_post = draw.panel.yc[:, 20:]
    eff = identify.treatment_effect(params, draw.weights, yc_post, y0_post)
    np.testing.assert_allclose(eff, draw.true_treatment, atol=1e-10)
    spill = identify.spillover_effects(params, draw.weights, yc_post, y0_post)
    np.testing.assert_allclose(spill, draw.true_spillover, atol=1e-10)


def test_dgp_mean_effect_is_one(rng):
    sc = SimScenario(n_controls=16, t_total=25, t0=20, rho=0.3)
    taus = np.concatenate([dgp_draw(sc, rng).true_treatment for _ in range(2000)])
    assert taus.mean() == pytest.approx(1.0, abs=0.05)


def test_dgp_perfect_pretreatment_fit(rng):
    sc = SimScenario(n_controls=16, t_total=30, t0=20, rho=0.4)
    draw = dgp_draw(sc, rng)
    fitted = draw.alpha @ draw.panel.yc[:, :20]
    np.testing.assert_allclose(fitted, draw.panel.y0[:20], atol=1e-10)


def test_scenario_validation():
    with pytest.raises(DataValidationError, match="square"):
        SimScenario(n_controls=12).validate()
    with pytest.raises(DataValidationError, match="t0"):
        SimScenario(t0=40, t_total=30).validate()


def small_scenario(**kw):
    base = dict(
        n_controls=16,
        t_total=25,
        t0=20,
        rho=0.1,
        replications=3,
        draws=250,
        burn_in=100,
        seed=5,
    )
    base.update(kw)
    return SimScenario(**base)


def test_monte_carlo_deterministic_and_metrics():
    a = run_monte_carlo(small_scenario(), methods=("proposed", "scm", "bscm"))
    b = run_monte_carlo(small_scenario(), methods=("proposed", "scm", "bscm"))
    assert a.bias == b.bias
    assert a.rmse == b.rmse
    assert a.coverage == b.coverage
    for m, bias in a.bias.items():
        assert a.rmse[m] >= abs(bias)
    assert a.failures == 0


def test_monte_carlo_workers_agree():
    serial = run_monte_carlo(small_scenario(replications=4), methods=("proposed", "scm"))
    parallel = run_monte_carlo(
        small_scenario(replications=4), methods=("proposed", "scm"), n_workers=2
    )
    assert serial.bias == parallel.bias
    assert serial.coverage == parallel.coverage


def test_effective_workers_env_cap(monkeypatch):
    monkeypatch.setenv(simulate.WORKER_ENV_VAR, "1")
    assert simulate.effective_workers(8) == 1
    monkeypatch.setenv(simulate.WORKER_ENV_VAR, "potato")
    with pytest.raises(DataValidationError):
        simulate.effective_workers(2)
    monkeypatch.delenv(simulate.WORKER_ENV_VAR)
    assert simulate.effective_workers(3) == 3


def test_scm_bias_monotone_in_spillover_strength():
    # SCM-only runs are cheap; |bias| grows with |rho| on each side
    biases = {}
    for rho in (-0.8, -0.3, -0.1, 0.0, 0.1, 0.3, 0.8):
        sc = SimScenario(
            n_controls=16, t_total=30, t0=20, rho=rho, replications=150, seed=3
        )
        biases[rho] = run_monte_carlo(sc, methods=("scm",)).bias["scm"]
    tol = 0.05
    assert abs(biases[0.1]) <= abs(biases[0.3]) + tol <= abs(biases[0.8]) + 2 * tol
    assert abs(biases[-0.1]) <= abs(biases[-0.3]) + tol <= abs(biases[-0.8]) + 2 * tol
    assert abs(biases[0.0]) < 0.1


def test_report_writers_and_schema(tmp_path):
    report = run_monte_carlo(small_scenario(), methods=("proposed", "scm", "bscm"))
    simulate.write_report_csv([report], tmp_path / "report.csv")
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 4       # three methods
    simulate.write_report_json([report], tmp_path / "report.json")
    simulate.write_table_csvs([report], tmp_path / "t1.csv", tmp_path / "t2.csv")
    t1 = (tmp_path / "t1.csv").read_text().splitlines()
    assert t1[0].startswith("metric,rho")
    t2 = (tmp_path / "t2.csv").read_text().splitlines()
    assert t2[0].startswith("rho,")
