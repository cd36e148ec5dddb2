"""Entropy along the OU bridge between N(0, 0.25) and itself, with the lambda-bounds.

Writes entropy_bound.csv (+ .meta.json, .svg) to the output directory.
"""
import argparse
import math
import time

import numpy as np

from bridgelab import marginals
from bridgelab.diagnostics import bound_verification, max_admissible_lambda
from bridgelab.emit import emit_series, write_svg
from bridgelab.flow import propagate_many
from bridgelab.grid import Grid
from bridgelab.kernels import ReferenceProcess
from bridgelab.solver import SchrodingerProblem, sinkhorn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/figure1_script")
    ap.add_argument("--n", type=int, default=1601)
    args = ap.parse_args()
    t0 = time.perf_counter()
    g = Grid(-6.0, 6.0, args.n)
    ts = np.linspace(0.0, 1.0, 41)
    cols, table = ["t"], [list(ts)]
    for alpha, lam in ((1.0, 1.0), (2.0, 2.0)):
        proc = ReferenceProcess.ou(g, alpha)
        mu = marginals.gaussian(g, 0.0, 0.25)
        sol = sinkhorn(SchrodingerProblem(proc, mu, mu))
        flow = propagate_many(sol, ts)
        v = bound_verification(sol, flow, lam)
        best, _ = max_admissible_lambda(sol, flow)
        print(f"alpha={alpha:g}: cost={sol.cost:.10f} bound(lambda={lam:g}) holds={v.holds} "
              f"min margin={v.min_margin:.3e} largest admissible lambda on the 0.1-grid={best}")
        cols += [f"entropy_alpha_{alpha:g}", f"rhs_alpha_{alpha:g}_lambda_{lam:g}"]
        table += [list(v.entropies), list(v.rhs)]
    cfg = {"script": "figure1", "n_points": args.n}
    wall = time.perf_counter() - t0
    rows = list(zip(*table))
    p = emit_series("entropy_bound", cols, rows, args.out, cfg, wall)
    series = {c: [r[k] for r in rows] for k, c in enumerate(cols) if k}
    top = max(v for s in series.values() for v in s if math.isfinite(v))
    write_svg(p.with_suffix(".svg"), ts, series, (0, 1), (0, 1.05 * top), cfg, "entropy and bounds")
    print(f"wrote {p}")


if __name__ == "__main__":
    main()
