"""Brownian noise ladder between N(-1, 0.25) and N(1, 0.25): eps T^eps against W2^2 / 2."""
import argparse
import time

from bridgelab import marginals
from bridgelab.emit import emit_series
from bridgelab.experiments import DEFAULT_EPSILONS, small_noise_sweep
from bridgelab.grid import Grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/small_noise_script")
    ap.add_argument("--n", type=int, default=1201)
    args = ap.parse_args()
    t0 = time.perf_counter()
    g = Grid(-6.0, 6.0, args.n)
    rep = small_noise_sweep(marginals.gaussian(g, -1.0, 0.25), marginals.gaussian(g, 1.0, 0.25),
                            DEFAULT_EPSILONS, t_samples=(0.25, 0.5, 0.75))
    for e, s, it, r in zip(rep.epsilons, rep.scaled_costs, rep.iterations, rep.relative_errors):
        print(f"eps={e:<5g} eps*T={s:.6f} rel.err={r:.2e} iterations={it}")
    cols = ["epsilon", "cost", "scaled_cost", "w2_half_sq", "iterations", "w1_t0.25", "w1_t0.5", "w1_t0.75"]
    p = emit_series("small_noise", cols, rep.rows(), args.out, {"script": "small_noise", "n_points": args.n},
                    time.perf_counter() - t0)
    print(f"wrote {p}")


if __name__ == "__main__":
    main()
