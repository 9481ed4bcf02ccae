"""Order statistics, replication summaries and empirical rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def order_statistic_quantile(sample, phi: float, axis: int = -1):
    """The ``ceil(n * phi)``-th smallest element (1-based), no interpolation."""
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0,1), got {phi!r}")
    sample = np.asarray(sample, dtype=float)
    n = sample.shape[axis] if sample.ndim else 0
    if n == 0:
        raise ValueError("order statistic of an empty sample")
    idx = max(1, math.ceil(n * phi)) - 1
    return np.take(np.sort(sample, axis=axis), idx, axis=axis)


@dataclass
class ExperimentSummary:
    algorithm: str
    problem: str
    phi: float
    runs: int
    mean_final: float
    stderr_final: float
    mean_trace: list = field(default_factory=list)
    total_evals: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "problem": self.problem,
            "phi": self.phi,
            "runs": self.runs,
            "mean_final": self.mean_final,
            "stderr_final": self.stderr_final,
            "total_evals": list(self.total_evals),
            "mean_trace": [list(p) for p in self.mean_trace],
            **self.extra,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSummary":
        known = {"algorithm", "problem", "phi", "runs", "mean_final", "stderr_final",
                 "mean_trace", "total_evals"}
        return cls(
            algorithm=data["algorithm"],
            problem=data["problem"],
            phi=data["phi"],
            runs=data["runs"],
            mean_final=data["mean_final"],
            stderr_final=data["stderr_final"],
            mean_trace=[tuple(p) for p in data.get("mean_trace", [])],
            total_evals=list(data.get("total_evals", [])),
            extra={k: v for k, v in data.items() if k not in known},
        )


def mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("standard error needs at least 2 runs")
    # sorting makes the float sum independent of run order
    values = np.sort(values)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def mean_curve(traces, n_grid: int = 200):
    """Pointwise mean of true-value curves on a shared evaluation grid."""
    if not traces:
        return []
    hi = min(int(t.evals[-1]) for t in traces)
    lo = max(int(t.evals[0]) for t in traces)
    grid = np.unique(np.linspace(lo, hi, n_grid).round().astype(np.int64))
    curves = np.sort(
        np.stack([np.interp(grid, t.evals, t.true_q) for t in traces]), axis=0
    )
    return [(int(g), float(v)) for g, v in zip(grid, curves.mean(axis=0))]


def summarize(finals, traces=(), algorithm: str = "", problem: str = "", phi: float = float("nan"),
              n_grid: int = 200) -> ExperimentSummary:
    mean, se = mean_stderr(finals)
    return ExperimentSummary(
        algorithm=algorithm,
        problem=problem,
        phi=phi,
        runs=len(finals),
        mean_final=mean,
        stderr_final=se,
        mean_trace=mean_curve(list(traces), n_grid),
        total_evals=[int(t.evals[-1]) for t in traces],
    )


def empirical_rate(traces, theta_star, window, n_points: int = 25) -> float:
    """Least-squares slope of log MAE(k) against log k over ``window``.

    MAE(k) is the ensemble mean of ``||theta_k - theta*||``.  Abscissae are
    log-spaced in the window and snapped to the recorded iterations.
    """
    k_lo, k_hi = window
    if not k_lo < k_hi or k_lo < 1:
        raise ValueError(f"degenerate window {window!r}")
    if len(traces) == 0:
        raise ValueError("empty trace ensemble")
    k = np.asarray(traces[0].k)
    for t in traces[1:]:
        if not np.array_equal(t.k, k):
            raise ValueError("traces must share the recorded iteration grid")
    if k_hi > k[-1]:
        raise ValueError(f"window end {k_hi} exceeds trace length {k[-1]}")
    err = np.mean(
        [np.linalg.norm(t.theta - np.asarray(theta_star), axis=1) for t in traces], axis=0
    )
    targets = np.geomspace(k_lo, k_hi, n_points)
    inside = np.flatnonzero((k >= k_lo) & (k <= k_hi) & (k > 0))
    if inside.size < 2:
        raise ValueError("fewer than two recorded iterations inside the window")
    kk = k[inside]
    pick = np.unique(inside[np.abs(np.log(kk)[None, :] - np.log(targets)[:, None]).argmin(axis=1)])
    if pick.size < 2:
        raise ValueError("window too narrow for the recorded stride")
    slope, _ = np.polyfit(np.log(k[pick]), np.log(err[pick]), 1)
    return float(slope)
