"""Plan the table crossing with and without height freedom and compare.

Run with ``python3 demos/plan_under_table.py [out_dir]``. Writes both
trajectories as CSV and prints total time, clearance and the torso height
while the torso is beneath the table top.
"""

import sys
from pathlib import Path

from quadcrawl.planner import audit_trajectory, plan, plan_2d, write_trajectory
from quadcrawl.scenario import paper_scenario


def main(out_dir="demo_out"):
    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    sc = paper_scenario()
    table = sc.world.obstacles[0]
    for name, solver in (("3d", plan), ("2d", plan_2d)):
        rep = solver(sc.start, sc.goal, sc.world)
        X = rep.trajectory.states
        lo, hi = table.min_corner, table.max_corner
        under = (X[:, 0] >= lo[0]) & (X[:, 0] <= hi[0]) & (X[:, 1] >= lo[1]) & (X[:, 1] <= hi[1])
        audit = audit_trajectory(rep.trajectory, sc.world)
        write_trajectory(rep.trajectory, out / f"plan_{name}.csv")
        z_under = f"{X[under, 2].max():.3f}" if under.any() else "n/a (went around)"
        print(
            f"{name}: status={rep.solver_status} T={rep.trajectory.total_time:.3f}s "
            f"min_clearance={audit['min_clearance']:.3f} max|y|={abs(X[:, 1]).max():.3f} z_under_table={z_under}"
        )


if __name__ == "__main__":
    main(*sys.argv[1:])
