"""Full published-scale benchmark grid.

Runs every (N, T0, rho) cell at R=1000 replications with M=5000 draws, which
is a multi-day job on a laptop; use the desk-scale script (or the `desk`
scenario grid in the CLI) for anything interactive. Worker count comes from
the SPILLSCM_THREADS environment variable (default 2 here).

Usage: python scripts/run_full_grid.py [outdir]
"""

import os
import sys
from pathlib import Path

from spillscm import simulate

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("full_grid_out")
WORKERS = int(os.environ.get(simulate.WORKER_ENV_VAR, "2"))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    reports = []
    index = 0
    for n in (16, 36, 64):
        for t_total, t0 in ((30, 20), (60, 50)):
            for rho in simulate.BENCHMARK_RHO_GRID:
                scenario = simulate.SimScenario(
                    n_controls=n,
                    t_total=t_total,
                    t0=t0,
                    rho=rho,
                    replications=1000,
                    draws=5000,
                    burn_in=1000,
                    seed=10_000 + index,
                )
                index += 1
                print(f"[{index}/42] N={n} T0={t0} rho={rho:+.1f} ...", flush=True)
                rep = simulate.run_monte_carlo(scenario, n_workers=WORKERS)
                reports.append(rep)
                print(
                    f"    proposed {rep.bias['proposed']:+.3f}  scm {rep.bias['scm']:+.3f}  "
                    f"bscm {rep.bias['bscm']:+.3f}  coverage {rep.coverage:.3f}  "
                    f"failures {rep.failures}  [{rep.runtime_s:.0f}s]",
                    flush=True,
                )
                # write incrementally so partial grids are usable
                simulate.write_report_csv(reports, OUT / "report.csv")
                simulate.write_report_json(reports, OUT / "report_mcse.json")
                simulate.write_table_csvs(reports, OUT / "table1.csv", OUT / "table2.csv")
    print(f"reports in {OUT}/")


if __name__ == "__main__":
    main()
