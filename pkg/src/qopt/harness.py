"""Replicated experiments: config ingestion, seeded runs, trace/summary files."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimators import CrnMode, TrackerState
from .optimizers import (
    QgConfig,
    RunTrace,
    qg_iterations,
    run_qg,
    run_sdqo_batch,
    run_spqo_batch,
)
from .problems import (
    CASE_DIMS,
    FeasibleBox,
    Mm1Config,
    QuadraticPenalty,
    case_optimum,
    make_case,
    make_mm1,
    mm1_optimum,
)
from .schedules import GainSchedule, max_iterations, paper_recipe
from .stats import ExperimentSummary, mean_curve, summarize

log = logging.getLogger(__name__)

ALGORITHMS = ("spqo", "spqo-crn", "sdqo", "sdqo-crn", "qg")
PROBLEMS = tuple(f"case{i}" for i in CASE_DIMS) + ("mm1",)
TRACE_ROWS_TARGET = 2000
INCOMPLETE_MARKER = "INCOMPLETE"

_TOP_KEYS = {
    "problem", "noise", "mm1", "algorithm", "phi", "eval_budget", "runs", "base_seed",
    "schedule", "trace_stride", "out", "qg", "q_bounds",
}
_MM1_KEYS = {"lambda", "v", "c1", "c2", "A", "vartheta", "warmup", "box"}
_QG_KEYS = {"rho0", "upsilon_exp", "sample_exp", "jitter"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str
    algorithm: str
    phi: float
    eval_budget: int
    noise: str | None = None
    mm1: dict | None = None
    runs: int = 40
    base_seed: int = 0
    schedule: dict | None = None
    trace_stride: int | None = None
    out: str = "results"
    qg: dict | None = None
    q_bounds: tuple = (-1e9, 1e9)

    # resolved by load/validate
    evals_per_iter: object = field(default=None, init=False)
    max_iter: int = field(default=0, init=False)

    @property
    def label(self) -> str:
        prob = self.problem if self.noise is None else f"{self.problem}-{self.noise}"
        return f"{prob}_{self.algorithm}_phi{self.phi:g}"

    @property
    def dim(self) -> int:
        if self.problem == "mm1":
            return len((self.mm1 or {}).get("v", Mm1Config().v))
        return CASE_DIMS[int(self.problem[4:])]

    def gain_schedule(self) -> GainSchedule | None:
        if self.algorithm == "qg":
            return None
        base = paper_recipe(self.eval_budget, self.evals_per_iter)
        return base.replace(**self.schedule) if self.schedule else base

    def qg_config(self) -> QgConfig:
        return QgConfig(**(self.qg or {}))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("evals_per_iter", "max_iter")}
        d["q_bounds"] = list(self.q_bounds)
        return d

    def hash(self) -> str:
        """Digest of everything that shapes a single run (not ``runs`` or ``out``)."""
        d = self.to_dict()
        d.pop("runs")
        d.pop("out")
        d["schedule"] = None if self.algorithm == "qg" else self.gain_schedule().to_dict()
        d["trace_stride"] = self.trace_stride
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _require(cfg.problem in PROBLEMS, f"problem must be one of {', '.join(PROBLEMS)}")
    _require(cfg.algorithm in ALGORITHMS, f"algorithm must be one of {', '.join(ALGORITHMS)}")
    _require(isinstance(cfg.phi, (int, float)) and 0.0 < cfg.phi < 1.0, "phi must lie in (0,1)")
    _require(isinstance(cfg.eval_budget, int) and cfg.eval_budget > 0,
             "eval_budget must be a positive integer")
    _require(isinstance(cfg.runs, int) and cfg.runs >= 1, "runs must be a positive integer")
    _require(isinstance(cfg.base_seed, int) and 0 <= cfg.base_seed < 2**64,
             "base_seed must be an unsigned 64-bit integer")
    if cfg.problem == "mm1":
        _require(cfg.noise is None, "noise does not apply to the mm1 problem")
        unknown = set(cfg.mm1 or {}) - _MM1_KEYS
        _require(not unknown, f"unknown mm1 fields: {sorted(unknown)}")
    else:
        _require(cfg.noise in ("normal", "cauchy"), "noise must be 'normal' or 'cauchy'")
        _require(cfg.mm1 is None, "mm1 block only applies to problem 'mm1'")
    if cfg.qg is not None:
        unknown = set(cfg.qg) - _QG_KEYS
        _require(not unknown, f"unknown qg fields: {sorted(unknown)}")
    if cfg.q_bounds is not None:
        _require(len(cfg.q_bounds) == 2 and cfg.q_bounds[0] < cfg.q_bounds[1],
                 "q_bounds must be [lo, hi] with lo < hi")
        cfg.q_bounds = tuple(float(x) for x in cfg.q_bounds)

    d = cfg.dim
    try:
        if cfg.algorithm == "qg":
            qgc = cfg.qg_config()
            cfg.evals_per_iter = "2d*n_k"
            _require(cfg.eval_budget >= 2 * d * qgc.sample_size(1),
                     "eval_budget too small for one QG iteration")
            cfg.max_iter = qg_iterations(qgc, d, cfg.eval_budget)
        else:
            cfg.evals_per_iter = 3 if cfg.algorithm.startswith("spqo") else 2 * d + 1
            cfg.max_iter = max_iterations(cfg.eval_budget, cfg.evals_per_iter)
            cfg.gain_schedule()
        if cfg.problem == "mm1":
            build_problem(cfg)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.trace_stride is None:
        cfg.trace_stride = max(1, cfg.max_iter // TRACE_ROWS_TARGET)
    _require(isinstance(cfg.trace_stride, int) and cfg.trace_stride >= 1,
             "trace_stride must be a positive integer")
    return cfg


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    missing = {"problem", "algorithm", "phi", "eval_budget"} - set(data)
    if missing:
        raise ConfigError(f"missing config fields: {sorted(missing)}")
    return validate(ExperimentConfig(**data))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def _mm1_config(block: dict | None) -> Mm1Config:
    block = dict(block or {})
    base = Mm1Config()
    pen = base.penalty
    v = np.asarray(block.get("v", base.v), dtype=float)
    d = v.size
    A = np.asarray(block.get("A", pen.A), dtype=float)
    if A.ndim == 1:
        A = A.reshape(d, d)
    penalty = QuadraticPenalty(
        c1=float(block.get("c1", pen.c1)),
        c2=float(block.get("c2", pen.c2)),
        A=A,
        vartheta=np.asarray(block.get("vartheta", pen.vartheta), dtype=float),
    )
    lo, hi = block.get("box", (1.0, 20.0))
    return Mm1Config(
        lam=float(block.get("lambda", base.lam)),
        v=v,
        warmup=int(block.get("warmup", base.warmup)),
        penalty=penalty,
        box=FeasibleBox.cube(lo, hi, d),
    )


def build_problem(cfg: ExperimentConfig):
    if cfg.problem == "mm1":
        return make_mm1(_mm1_config(cfg.mm1))
    return make_case(int(cfg.problem[4:]), cfg.noise)


def run_seeds(base_seed: int, runs) -> list:
    """Per-run seeds; run ``j`` depends only on ``(base_seed, j)``."""
    return [np.random.SeedSequence(base_seed, spawn_key=(j,)) for j in runs]


def _execute(cfg: ExperimentConfig, run_ids) -> list[RunTrace]:
    problem = build_problem(cfg)
    penalty = problem.meta["mm1"].penalty if cfg.problem == "mm1" else None
    seeds = run_seeds(cfg.base_seed, run_ids)
    if cfg.algorithm == "qg":
        return [
            run_qg(problem, cfg.qg_config(), cfg.phi, None, cfg.eval_budget, s, penalty,
                   cfg.trace_stride)
            for s in seeds
        ]
    crn = CrnMode.COMMON if cfg.algorithm.endswith("-crn") else CrnMode.INDEPENDENT
    runner = run_spqo_batch if cfg.algorithm.startswith("spqo") else run_sdqo_batch
    return runner(problem, cfg.gain_schedule(), cfg.phi, None, cfg.eval_budget, crn, seeds,
                  penalty, cfg.trace_stride, cfg.q_bounds)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QOPT_THREADS", "1")))
    except ValueError:
        return 1


def _fmt(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def write_trace(path, trace: RunTrace, cfg: ExperimentConfig, run_id: int):
    d = trace.theta.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(
            f"# config_hash={cfg.hash()} base_seed={cfg.base_seed} run={run_id} "
            f"algorithm={cfg.algorithm} problem={trace.label} phi={cfg.phi!r}\n"
        )
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "evals"] + [f"theta_{i}" for i in range(d)]
                   + ["q_est", "true_q", "wall_nanos"])
        for i in range(trace.k.size):
            w.writerow(
                [int(trace.k[i]), int(trace.evals[i])]
                + [_fmt(x) for x in trace.theta[i]]
                + [_fmt(trace.q_est[i]), _fmt(trace.true_q[i]), int(trace.wall_nanos[i])]
            )


def read_trace(path) -> RunTrace:
    """Load a trace CSV back into a :class:`RunTrace` (final state from the last row)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        meta = dict(tok.split("=", 1) for tok in header.lstrip("# ").split())
        rows = list(csv.reader(fh))
    names, body = rows[0], np.array(rows[1:], dtype=float)
    col = {n: i for i, n in enumerate(names)}
    theta_cols = [i for n, i in col.items() if n.startswith("theta_")]
    theta = body[:, theta_cols]
    q = body[:, col["q_est"]]
    final = TrackerState(theta[-1].copy(), float(q[-1]), np.full(theta.shape[1], np.nan),
                         int(body[-1, 0]) + 1, int(body[-1, 1]))
    return RunTrace(
        label=meta.get("problem", path.stem),
        algorithm=meta.get("algorithm", ""),
        seed=int(meta.get("run", -1)),
        k=body[:, col["k"]].astype(np.int64),
        evals=body[:, col["evals"]].astype(np.int64),
        theta=theta,
        q_est=q,
        true_q=body[:, col["true_q"]],
        wall_nanos=body[:, col["wall_nanos"]].astype(np.int64),
        final=final,
        meta=meta,
    )


def run_experiment(cfg: ExperimentConfig, write: bool = True):
    """Run every replication, write traces and ``summary.json``, return both."""
    run_ids = list(range(cfg.runs))
    outdir = Path(cfg.out)
    marker = outdir / INCOMPLETE_MARKER
    if write:
        outdir.mkdir(parents=True, exist_ok=True)
        marker.write_text("run in progress or aborted\n")

    n_workers = min(_threads(), cfg.runs)
    log.info("%s: %d runs, budget %d, %d worker(s)", cfg.label, cfg.runs, cfg.eval_budget, n_workers)
    if n_workers > 1:
        chunks = [run_ids[i::n_workers] for i in range(n_workers)]
        with ProcessPoolExecutor(n_workers) as pool:
            parts = list(pool.map(_execute, [cfg] * n_workers, chunks))
        by_id = {j: t for chunk, part in zip(chunks, parts) for j, t in zip(chunk, part)}
        traces = [by_id[j] for j in run_ids]
    else:
        traces = _execute(cfg, run_ids)

    finals = [t.final_true for t in traces]
    problem_label = cfg.label.split("_")[0]
    if cfg.runs >= 2:
        summary = summarize(finals, traces, cfg.algorithm, problem_label, cfg.phi)
    else:
        # a single run has no standard error
        summary = ExperimentSummary(cfg.algorithm, problem_label, cfg.phi, 1, finals[0],
                                    float("nan"), mean_curve(traces), [traces[0].total_evals])
    summary.extra.update(
        {
            "config": cfg.to_dict(),
            "config_hash": cfg.hash(),
            "eval_budget": cfg.eval_budget,
            "evals_per_iter": cfg.evals_per_iter,
            "iterations": [t.iterations for t in traces],
            "finals": finals,
            "final_theta": [t.final.theta.tolist() for t in traces],
            "optimum": _optimum(cfg),
            "complete": True,
        }
    )
    if write:
        for j, t in zip(run_ids, traces):
            write_trace(outdir / f"{cfg.label}_run{j}.csv", t, cfg, j)
        (outdir / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
        marker.unlink()
    return traces, summary


def _optimum(cfg: ExperimentConfig) -> dict:
    if cfg.problem == "mm1":
        theta, cost = mm1_optimum(_mm1_config(cfg.mm1), cfg.phi)
        return {"theta": theta.tolist(), "value": cost}
    theta, q = case_optimum(int(cfg.problem[4:]), cfg.noise, cfg.phi)
    return {"theta": theta.tolist(), "value": q}
