"""Particle bridges of the figure-1 instance: empirical W1 to the flow against N."""
import argparse
import time

import numpy as np

from bridgelab import marginals
from bridgelab.emit import emit_series
from bridgelab.experiments import hot_gas
from bridgelab.grid import Grid
from bridgelab.kernels import ReferenceProcess
from bridgelab.solver import SchrodingerProblem, sinkhorn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/hot_gas_script")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--replicates", type=int, default=16)
    args = ap.parse_args()
    t0 = time.perf_counter()
    g = Grid(-6.0, 6.0, 1601)
    mu = marginals.gaussian(g, 0.0, 0.25)
    sol = sinkhorn(SchrodingerProblem(ReferenceProcess.ou(g, 1.0), mu, mu))
    run = hot_gas(sol, seed=args.seed, n_replicates=args.replicates)
    print(f"median W1 per N: {dict(zip(run.n_particles, (round(float(d), 5) for d in run.median_distances)))}")
    print(f"log-log slope: {run.slope:.4f}; mixture cross-check: {max(run.mixture_errors.values()):.2e}")
    rows = [[N, t, r, run.distances[a, b, r]] for a, N in enumerate(run.n_particles)
            for b, t in enumerate(run.t_samples) for r in range(run.n_replicates)]
    p = emit_series("hot_gas_distances", ["n_particles", "t", "replicate", "w1"], rows, args.out,
                    {"script": "hot_gas", "seed": args.seed, "replicates": args.replicates}, time.perf_counter() - t0)
    print(f"wrote {p}")


if __name__ == "__main__":
    main()
