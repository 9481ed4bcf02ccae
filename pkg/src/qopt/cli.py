"""Command line entry point: ``qopt run|table|rate|list-problems``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .problems import CASE_DIMS, KNOWN_OPTIMA, Mm1Config, make_case, mm1_optimum
from .stats import empirical_rate

ALGO_ORDER = ("spqo", "spqo-crn", "sdqo", "sdqo-crn", "qg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qopt", description="Quantile optimization of noisy black boxes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a replicated experiment from a JSON config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--out", type=Path, help="output directory")

    table = sub.add_parser("table", help="aggregate summary.json files into a results table")
    table.add_argument("--dir", required=True, type=Path)
    table.add_argument("--format", choices=("md", "csv"), default="md")

    rate = sub.add_parser("rate", help="fit the log-log decay slope of the mean parameter error")
    rate.add_argument("--dir", required=True, type=Path)
    rate.add_argument("--theta-star", help="comma-separated optimum; defaults to the known one")
    rate.add_argument("--window", nargs=2, type=int, default=(1000, 100_000), metavar=("K_LO", "K_HI"))

    sub.add_parser("list-problems", help="list benchmark problems and their optima")
    return p


def _fmt_q(v: float) -> str:
    return f"{v:g}"


def list_problems(out=None):
    out = out or sys.stdout
    for case, d in CASE_DIMS.items():
        box = make_case(case).box.describe()
        optima = " ".join(
            f"q*({noise},{phi:g})={_fmt_q(KNOWN_OPTIMA[case, noise, phi])}"
            for noise in ("normal", "cauchy")
            for phi in (0.6, 0.95)
        )
        print(f"case{case} d={d} box={box} {optima}", file=out)
    cfg = Mm1Config()
    costs = " ".join(f"cost*({phi:g})={mm1_optimum(cfg, phi)[1]:.2f}" for phi in (0.5, 0.95))
    print(f"mm1 d={cfg.dim} box={cfg.box.describe()} {costs}", file=out)


def _stderr_fmt(se: float) -> str:
    if se != se:
        return "-"
    return f"{se:.2f}" if se >= 1 else f"{se:.1e}"


def load_summaries(root: Path) -> list[dict]:
    found = []
    for path in sorted(root.rglob("summary.json")):
        with open(path, encoding="utf-8") as fh:
            found.append(json.load(fh))
    return found


def format_table(summaries: list[dict], fmt: str = "md") -> str:
    """Rows = problems, columns = algorithms, one block per (noise, phi)."""
    groups: dict = {}
    algos = set()
    for s in summaries:
        cfg = s.get("config", {})
        key = (cfg.get("noise") or "-", s["phi"])
        row = cfg.get("problem", s["problem"])
        groups.setdefault(key, {}).setdefault(row, {})[s["algorithm"]] = s
        algos.add(s["algorithm"])
    cols = [a for a in ALGO_ORDER if a in algos] + sorted(algos - set(ALGO_ORDER))

    def cell(s):
        return f"{s['mean_final']:.2f} ({_stderr_fmt(s['stderr_final'])})" if s else ""

    def row_key(name):
        return (0, int(name[4:])) if name.startswith("case") else (1, name)

    lines = []
    for (noise, phi) in sorted(groups):
        rows = groups[noise, phi]
        if fmt == "csv":
            if not lines:
                lines.append(",".join(["noise", "phi", "problem"] + cols))
            for name in sorted(rows, key=row_key):
                lines.append(",".join([noise, f"{phi:g}", name]
                                      + [f'"{cell(rows[name].get(a))}"' for a in cols]))
            continue
        lines.append(f"### noise={noise}, phi={phi:g}")
        lines.append("")
        lines.append("| problem | " + " | ".join(cols) + " |")
        lines.append("|---" * (len(cols) + 1) + "|")
        for name in sorted(rows, key=row_key):
            lines.append(f"| {name} | " + " | ".join(cell(rows[name].get(a)) for a in cols) + " |")
        lines.append("")
    return "\n".join(lines)


def rate_command(directory: Path, theta_star: str | None, window) -> float:
    paths = sorted(directory.glob("*_run*.csv"))
    if not paths:
        raise FileNotFoundError(f"no trace files in {directory}")
    traces = [harness.read_trace(p) for p in paths]
    if theta_star:
        star = np.array([float(x) for x in theta_star.split(",")])
    else:
        summary = json.loads((directory / "summary.json").read_text())
        star = np.asarray(summary["optimum"]["theta"])
    return empirical_rate(traces, star, tuple(window))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-problems":
        list_problems()
        return 0
    if args.command == "run":
        if not args.config.is_file():
            parser.print_usage(sys.stderr)
            print(f"qopt: error: config file not found: {args.config}", file=sys.stderr)
            return 2
        try:
            cfg = harness.load_config(args.config)
            if args.runs is not None:
                cfg.runs = args.runs
            if args.seed is not None:
                cfg.base_seed = args.seed
            if args.out is not None:
                cfg.out = str(args.out)
            harness.validate(cfg)
        except harness.ConfigError as exc:
            print(f"qopt: config error: {exc}", file=sys.stderr)
            return 2
        try:
            _, summary = harness.run_experiment(cfg)
        except Exception as exc:  # noqa: BLE001 - report and map to exit 1
            logging.getLogger("qopt").exception("run failed")
            print(f"qopt: run failed: {exc}", file=sys.stderr)
            return 1
        print(f"{cfg.label}: mean {summary.mean_final:.4f} "
              f"(stderr {summary.stderr_final:.2e}) over {summary.runs} runs -> {cfg.out}")
        return 0
    if args.command == "table":
        summaries = load_summaries(args.dir)
        if not summaries:
            print(f"qopt: no summary.json under {args.dir}", file=sys.stderr)
            return 1
        print(format_table(summaries, args.format))
        return 0
    if args.command == "rate":
        try:
            slope = rate_command(args.dir, args.theta_star, args.window)
        except (OSError, ValueError, KeyError) as exc:
            print(f"qopt: rate failed: {exc}", file=sys.stderr)
            return 1
        print(f"slope {slope:.4f}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
