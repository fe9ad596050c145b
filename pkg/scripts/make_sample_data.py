"""Regenerate the bundled sample panel and trade matrix.

The sample mimics a country-panel application: one treated unit and eight
controls observed over 2000-2015 with treatment starting in 2011, trade-share
spatial weights, two covariates, and a deliberately missing treated outcome
in 2011 (the first post-treatment year) to exercise the masked-period path.

Run from the repository root:  python scripts/make_sample_data.py
"""

from pathlib import Path

import numpy as np

from spillscm import identify
from spillscm.panel import build_trade_weights

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "spillscm" / "data"

N = 8
YEARS = list(range(2000, 2016))
T0 = 11                      # 2000..2010 pretreatment
RHO = 0.25
BETA = np.array([1.5, -0.5])
SEED = 20240

UNITS = ["u%02d" % i for i in range(N + 1)]   # u00 treated


def main():
    rng = np.random.default_rng(SEED)
    t_total = len(YEARS)

    flows = rng.lognormal(mean=1.0, sigma=0.8, size=(N + 1, N + 1))
    flows = (flows + flows.T) / 2.0
    np.fill_diagonal(flows, 0.0)
    flows = np.round(flows, 3)
    weights = build_trade_weights(flows)

    alpha = np.array([0.45, 0.30, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0])
    params = identify.StructuralParams(alpha=alpha, rho=RHO)
    a_full = identify.system_matrix(params, weights)
    a_post = np.eye(N) - RHO * weights.W

    # index-level outcomes: a persistent exports-share covariate around 10
    # carries the level, a small inflation-like covariate varies around it
    x = np.empty((N, t_total, 2))
    ar = rng.standard_normal(N)
    for t in range(t_total):
        ar = 0.7 * ar + 0.3 * rng.standard_normal(N)
        x[:, t, 0] = 5.0 + ar
    x[:, :, 1] = 2.0 + 0.5 * rng.standard_normal((N, t_total))
    u = 0.8 * rng.standard_normal((N, t_total))
    rhs = x @ BETA + u
    yc0 = np.linalg.solve(a_full, rhs)
    y00 = alpha @ yc0
    effect = np.array([-0.9, -1.2, -0.8, -1.1, -0.6])      # 2011..2015
    y01_post = y00[T0:] + effect
    yc1_post = np.linalg.solve(a_post, RHO * np.outer(weights.w, y01_post) + rhs[:, T0:])

    outcomes = np.empty((N + 1, t_total))
    outcomes[0] = np.concatenate([y00[:T0], y01_post])
    outcomes[1:] = np.concatenate([yc0[:, :T0], yc1_post], axis=1)
    outcomes = np.round(outcomes, 4)
    outcomes[0, T0] = np.nan     # 2011 treated outcome unavailable

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    panel_path = OUT_DIR / "sample_panel.csv"
    with open(panel_path, "w", encoding="utf-8") as fh:
        fh.write("unit,time,outcome,treated,exports_share,inflation\n")
        for ui, unit in enumerate(UNITS):
            for ti, year in enumerate(YEARS):
                out = "" if np.isnan(outcomes[ui, ti]) else f"{outcomes[ui, ti]:.4f}"
                if ui == 0:
                    cov = ","
                else:
                    cov = f"{x[ui - 1, ti, 0]:.4f},{x[ui - 1, ti, 1]:.4f}"
                fh.write(f"{unit},{year},{out},{int(ui == 0)},{cov}\n")

    trade_path = OUT_DIR / "sample_trade.csv"
    with open(trade_path, "w", encoding="utf-8") as fh:
        fh.write("," + ",".join(UNITS) + "\n")
        for i, unit in enumerate(UNITS):
            fh.write(unit + "," + ",".join(f"{v:.3f}" for v in flows[i]) + "\n")

    print(f"wrote {panel_path}")
    print(f"wrote {trade_path}")


if __name__ == "__main__":
    main()
