"""Run every algorithm on the six test cases and print a results table.

    python3 scripts/run_benchmarks.py --noise normal --out results/benchmarks
    python3 scripts/run_benchmarks.py --noise cauchy --cases 1 2 --runs 10

Budgets: 3e4 for case 1, 3e5 for cases 2-4, 1e6 for 5-6.
The full grid takes a while on one core; ``--cases`` and ``--runs`` trim it.
"""

import argparse
from pathlib import Path

from qopt import harness
from qopt.cli import format_table, load_summaries

BUDGETS = {1: 30_000, 2: 300_000, 3: 300_000, 4: 300_000, 5: 1_000_000, 6: 1_000_000}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", choices=("normal", "cauchy"), default="normal")
    ap.add_argument("--cases", nargs="+", type=int, default=sorted(BUDGETS))
    ap.add_argument("--algorithms", nargs="+", default=list(harness.ALGORITHMS))
    ap.add_argument("--phis", nargs="+", type=float, default=[0.6, 0.95])
    ap.add_argument("--runs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/benchmarks"))
    args = ap.parse_args()

    for case in args.cases:
        for phi in args.phis:
            for alg in args.algorithms:
                cfg = harness.config_from_dict({
                    "problem": f"case{case}", "noise": args.noise, "algorithm": alg, "phi": phi,
                    "eval_budget": BUDGETS[case], "runs": args.runs, "base_seed": args.seed,
                })
                cfg.out = str(args.out / cfg.label)
                _, s = harness.run_experiment(cfg)
                print(f"{cfg.label:<32} {s.mean_final:10.4f}  (se {s.stderr_final:.2e})", flush=True)
    print()
    print(format_table(load_summaries(args.out)))


if __name__ == "__main__":
    main()
