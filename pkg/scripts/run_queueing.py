"""Queueing example: every algorithm at budget 1800 for phi = 0.5 and 0.95."""

import argparse
from pathlib import Path

from qopt import harness
from qopt.cli import format_table, load_summaries


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=int, default=1800)
    ap.add_argument("--out", type=Path, default=Path("results/queueing"))
    args = ap.parse_args()

    for phi in (0.5, 0.95):
        for alg in harness.ALGORITHMS:
            cfg = harness.config_from_dict({
                "problem": "mm1", "algorithm": alg, "phi": phi, "eval_budget": args.budget,
                "runs": args.runs, "base_seed": args.seed,
            })
            cfg.out = str(args.out / cfg.label)
            _, s = harness.run_experiment(cfg)
            opt = s.extra["optimum"]["value"]
            print(f"{cfg.label:<24} {s.mean_final:.4f} (se {s.stderr_final:.1e})  optimum {opt:.4f}  "
                  f"iterations {s.extra['iterations'][0]}", flush=True)
    print()
    print(format_table(load_summaries(args.out)))


if __name__ == "__main__":
    main()
