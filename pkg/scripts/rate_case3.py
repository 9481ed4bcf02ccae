"""Empirical convergence rate of SPQO on case 3 (strongly convex quantile surface).

Fits the log-log slope of the ensemble mean ||theta_k - theta*|| over a window
of iterations; the theory bound is O(k^-1/4), so any slope at or below -0.25
is consistent with it.
"""

import argparse

import numpy as np

from qopt import harness
from qopt.stats import empirical_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--budget", type=int, default=300_000)
    ap.add_argument("--phi", type=float, default=0.6)
    ap.add_argument("--algorithm", default="spqo")
    ap.add_argument("--window", nargs=2, type=int, default=(1000, 100_000))
    args = ap.parse_args()

    cfg = harness.config_from_dict({
        "problem": "case3", "noise": "normal", "algorithm": args.algorithm, "phi": args.phi,
        "eval_budget": args.budget, "runs": args.runs, "trace_stride": 100,
    })
    traces, s = harness.run_experiment(cfg, write=False)
    star = np.asarray(s.extra["optimum"]["theta"])
    slope = empirical_rate(traces, star, tuple(args.window))
    err = np.mean([np.linalg.norm(t.theta - star, axis=1) for t in traces], axis=0)
    k = traces[0].k
    for target in np.geomspace(max(1, args.window[0]), args.window[1], 6):
        i = int(np.abs(k - target).argmin())
        print(f"k={k[i]:>7d}  mean error {err[i]:.4g}")
    print(f"slope {slope:.3f} over k in {list(args.window)}, final mean quantile {s.mean_final:.3f}")


if __name__ == "__main__":
    main()
