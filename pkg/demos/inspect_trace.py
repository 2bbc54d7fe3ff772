"""Summarize a rollout trace written by ``quadcrawl rollout``.

Run with ``python3 demos/inspect_trace.py demo_out/trace.csv``. Prints the
torso height profile across the table span, contact force extremes and the
torque range, all read back from the CSV.
"""

import sys

import numpy as np

from quadcrawl.sim import TRACE_HEADER


def main(path):
    T = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    col = {name: i for i, name in enumerate(TRACE_HEADER)}
    x, z = T[:, col["x"]], T[:, col["z"]]
    print(f"ticks={len(T)} final x={x[-1]:.3f} y={T[-1, col['y']]:.3f} min clearance={T[:, col['clearance']].min():.3f}")
    for lo in np.arange(0.0, 3.0, 0.25):
        mask = (x >= lo) & (x < lo + 0.25)
        if mask.any():
            print(f"  x in [{lo:.2f}, {lo + 0.25:.2f}): z max {z[mask].max():.3f} min {z[mask].min():.3f}")
    fz = T[:, [col[f"{leg}_fz"] for leg in ("fl", "fr", "rl", "rr")]]
    tau = T[:, col["tau0"] : col["tau0"] + 12]
    print(f"vertical force per foot: max {fz.max():.1f} N, total mean {fz.sum(axis=1).mean():.1f} N")
    print(f"joint torque range: [{tau.min():.2f}, {tau.max():.2f}] N m")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "demo_out/trace.csv")
