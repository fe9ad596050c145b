"""Desk-scale benchmark run: the N=16, T0=20 grid at R=100, M=2000.

Writes the same report files as `spillscm simulate --scenario-grid desk` and
prints a compact comparison table. Expect roughly 10-30 minutes depending on
cores; set SPILLSCM_THREADS to cap the worker pool.

Usage: python scripts/run_desk_scale.py [outdir]
"""

import sys
from pathlib import Path

from spillscm import simulate

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("desk_scale_out")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    reports = []
    for i, rho in enumerate(simulate.BENCHMARK_RHO_GRID):
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
        print(f"[{i + 1}/7] rho={rho:+.1f} ...", flush=True)
        rep = simulate.run_monte_carlo(scenario, n_workers=2)
        reports.append(rep)
        print(
            f"    proposed {rep.bias['proposed']:+.3f} (rmse {rep.rmse['proposed']:.3f})  "
            f"scm {rep.bias['scm']:+.3f}  bscm {rep.bias['bscm']:+.3f}  "
            f"coverage {rep.coverage:.3f}  [{rep.runtime_s:.0f}s]",
            flush=True,
        )
    simulate.write_report_csv(reports, OUT / "report.csv")
    simulate.write_report_json(reports, OUT / "report_mcse.json")
    simulate.write_table_csvs(reports, OUT / "table1.csv", OUT / "table2.csv")
    print(f"reports in {OUT}/")


if __name__ == "__main__":
    main()
