"""SPQO, SDQO and the order-statistics QG baseline.

Replications run in lockstep: the state of ``R`` independent runs is held in
``(R, ...)`` arrays and advanced together.  Every run owns its own
``numpy.random.Generator`` and consumes it in a fixed block layout, so a
run's trajectory depends only on its seed, never on which other runs share
the batch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .estimators import (
    CrnMode,
    TrackerState,
    draw_direction,
    quantile_step,
    sd_indicator_difference,
    sd_points,
    sd_update,
    sp_indicator_difference,
    sp_update,
)
from .problems import BlackBoxProblem, FeasibleBox, QuadraticPenalty
from .schedules import GainSchedule, adaptive_perturbation, gains_at
from .stats import order_statistic_quantile

DEFAULT_Q_BOUNDS = (-1e9, 1e9)
# floats of pre-drawn randomness per run and refill
_BLOCK_FLOATS = 1 << 16
_NAN1 = np.array([np.nan])
QG_JITTER_MODES = ("shared", "split", "per_sample")

Gains = Union[GainSchedule, Callable[[int], tuple]]


def project_box(theta, box: FeasibleBox):
    """Euclidean projection onto a box (componentwise clamp)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != box.dim:
        raise ValueError(f"theta has dimension {theta.shape[-1]}, box has {box.dim}")
    return np.minimum(box.upper, np.maximum(box.lower, theta))


@dataclass(frozen=True)
class QgConfig:
    rho0: float = 1.0
    upsilon_exp: float = 0.501
    sample_exp: float = 2.003
    # off-coordinate jitter: one draw per coordinate shared by the +/- points
    # ("shared"), separate draws for the two points ("split"), or a fresh draw
    # for every output in the sample ("per_sample")
    jitter: str = "split"

    def __post_init__(self):
        if self.jitter not in QG_JITTER_MODES:
            raise ValueError(f"jitter must be one of {QG_JITTER_MODES}, got {self.jitter!r}")

    def rho(self, k: int) -> float:
        return self.rho0 / k

    def upsilon(self, k: int) -> float:
        return 1.0 / k**self.upsilon_exp

    def sample_size(self, k: int) -> int:
        return math.ceil(k**self.sample_exp)


@dataclass
class RunTrace:
    """Recorded iterates of one run.

    Row ``i`` holds the state after ``k[i]`` completed iterations; row 0 is
    the initial point.  ``true_q`` is the true objective at ``theta`` (the
    quantile, or the full cost for penalized problems) and ``q_est`` is NaN
    for algorithms that keep no running quantile estimate.
    """

    label: str
    algorithm: str
    seed: object
    k: np.ndarray
    evals: np.ndarray
    theta: np.ndarray
    q_est: np.ndarray
    true_q: np.ndarray
    wall_nanos: np.ndarray
    final: TrackerState
    evals_per_iter: object = None
    meta: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return int(self.k[-1])

    @property
    def total_evals(self) -> int:
        return int(self.evals[-1])

    @property
    def final_true(self) -> float:
        return float(self.true_q[-1])

    @property
    def dim(self) -> int:
        return self.theta.shape[1]


def _gains(schedule: Gains, k: int):
    if isinstance(schedule, GainSchedule):
        return gains_at(schedule, k)
    return schedule(k)


def _init_states(problem, init, rngs):
    R, d = len(rngs), problem.dim
    if init is None or init.theta is None:
        theta = np.stack([problem.box.uniform(rng) for rng in rngs])
    else:
        theta = np.broadcast_to(np.asarray(init.theta, dtype=float), (R, d)).copy()
    if theta.shape[-1] != d:
        raise ValueError(f"initial theta has dimension {theta.shape[-1]}, problem has {d}")
    if not problem.box.contains(theta):
        raise ValueError("initial theta must lie inside the feasible box")
    q = np.zeros(R) if init is None else np.broadcast_to(np.asarray(init.q, float), (R,)).copy()
    D = np.zeros((R, d)) if init is None else np.broadcast_to(np.asarray(init.D, float), (R, d)).copy()
    return theta, q, D


class _Recorder:
    def __init__(self, problem, phi, stride):
        self.problem, self.phi, self.stride = problem, phi, max(1, int(stride))
        self.k, self.evals, self.theta, self.q, self.true, self.wall = [], [], [], [], [], []
        self.t0 = time.perf_counter_ns()

    def __call__(self, k, evals, theta, q):
        self.k.append(k)
        self.evals.append(evals)
        self.theta.append(np.array(theta))
        self.q.append(np.array(q, dtype=float))
        self.true.append(np.asarray(self.problem.true_value(theta, self.phi), dtype=float))
        self.wall.append(time.perf_counter_ns() - self.t0)

    def maybe(self, k, evals, theta, q):
        if k % self.stride == 0:
            self(k, evals, theta, q)

    def finish(self, k, evals, theta, q):
        if self.k[-1] != k:
            self(k, evals, theta, q)

    def traces(self, algorithm, seeds, finals, evals_per_iter, meta=None):
        k = np.asarray(self.k, dtype=np.int64)
        ev = np.asarray(self.evals, dtype=np.int64)
        theta = np.stack(self.theta, axis=1)
        q = np.stack(self.q, axis=1)
        true = np.stack(self.true, axis=1)
        wall = np.asarray(self.wall, dtype=np.int64)
        out = []
        for r, seed in enumerate(seeds):
            out.append(
                RunTrace(
                    label=self.problem.label,
                    algorithm=algorithm,
                    seed=seed,
                    k=k,
                    evals=ev if ev.ndim == 1 else ev[r],
                    theta=theta[r],
                    q_est=q[r],
                    true_q=true[r],
                    wall_nanos=wall,
                    final=finals[r],
                    evals_per_iter=evals_per_iter,
                    meta=dict(meta or {}),
                )
            )
        return out


def _check_common(problem, phi, eval_budget, per_iter, penalty):
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0,1), got {phi!r}")
    if eval_budget < per_iter:
        raise ValueError(
            f"eval_budget={eval_budget} is below the {per_iter} evaluations of one iteration"
        )
    if penalty is not None and penalty.vartheta.size != problem.dim:
        raise ValueError("penalty dimension does not match the problem")


def _run_fd_batch(
    kind,
    problem: BlackBoxProblem,
    schedule: Gains,
    phi: float,
    init: TrackerState | None,
    eval_budget: int,
    crn,
    seeds: Sequence,
    penalty: QuadraticPenalty | None = None,
    trace_stride: int = 1,
    q_bounds=DEFAULT_Q_BOUNDS,
):
    crn = CrnMode(crn)
    d = problem.dim
    sp = kind == "spqo"
    per_iter = 3 if sp else 2 * d + 1
    _check_common(problem, phi, eval_budget, per_iter, penalty)
    n_iter = eval_budget // per_iter
    rngs = [np.random.default_rng(s) for s in seeds]
    R = len(rngs)
    theta, q, D = _init_states(problem, init, rngs)
    box = problem.box
    n_rows = 3 if sp else 1 + 2 * d
    block = int(min(1024, max(1, _BLOCK_FLOATS // (n_rows * problem.n_inputs + d))))
    U = np.empty((R, block, n_rows, problem.n_inputs))
    delta_blk = np.empty((R, block, d))

    rec = _Recorder(problem, phi, trace_stride)
    evals = 0
    rec(0, evals, theta, q)
    for k in range(1, n_iter + 1):
        j = (k - 1) % block
        if j == 0:
            for r, rng in enumerate(rngs):
                U[r] = rng.random((block, n_rows, problem.n_inputs))
                if sp:
                    delta_blk[r] = draw_direction(rng, d, size=block)
            if crn is CrnMode.COMMON:
                U[:, :, 2:] = U[:, :, 1:2]
        alpha_k, beta_k, gamma_k, c_k = _gains(schedule, k)
        c_bar = adaptive_perturbation(c_k, D)
        if sp:
            delta = delta_blk[:, j]
            step = c_bar[:, None] * delta
            pts = np.stack([theta, theta + step, theta - step], axis=1)
            y = problem(pts, U[:, j])
            diff = sp_indicator_difference(
                y[:, 1], y[:, 2], q, c_bar, np.sum(D * delta, axis=-1)
            )
            D_next = sp_update(D, beta_k, c_bar, delta, diff)
        else:
            pts = np.concatenate([theta[:, None, :], sd_points(theta, c_bar)], axis=1)
            y = problem(pts, U[:, j])
            v = sd_indicator_difference(y[:, 1:], q, c_bar, D)
            D_next = sd_update(D, beta_k, c_bar, v)
        q_next = quantile_step(q, gamma_k, phi, y[:, 0])
        direction = D if penalty is None else penalty.direction(D, theta)
        theta = project_box(theta - alpha_k * direction, box)
        q = np.clip(q_next, q_bounds[0], q_bounds[1])
        D = D_next
        evals += per_iter
        rec.maybe(k, evals, theta, q)
    rec.finish(n_iter, evals, theta, q)

    algorithm = kind + ("-crn" if crn is CrnMode.COMMON else "")
    finals = [TrackerState(theta[r].copy(), float(q[r]), D[r].copy(), n_iter + 1, evals) for r in range(R)]
    return rec.traces(algorithm, list(seeds), finals, per_iter, {"phi": phi})


def run_spqo_batch(problem, schedule, phi, init=None, eval_budget=30_000, crn="independent",
                   seeds=(0,), penalty=None, trace_stride=1, q_bounds=DEFAULT_Q_BOUNDS):
    """SPQO for several seeds at once; returns one :class:`RunTrace` per seed."""
    return _run_fd_batch("spqo", problem, schedule, phi, init, eval_budget, crn, seeds,
                         penalty, trace_stride, q_bounds)


def run_sdqo_batch(problem, schedule, phi, init=None, eval_budget=30_000, crn="independent",
                   seeds=(0,), penalty=None, trace_stride=1, q_bounds=DEFAULT_Q_BOUNDS):
    return _run_fd_batch("sdqo", problem, schedule, phi, init, eval_budget, crn, seeds,
                         penalty, trace_stride, q_bounds)


def run_spqo(problem, schedule, phi, init=None, eval_budget=30_000, crn="independent",
             seed=0, trace_stride=1, q_bounds=DEFAULT_Q_BOUNDS) -> RunTrace:
    """Simultaneous-perturbation quantile optimization.

    Each iteration spends three evaluations: one at ``theta_k`` for the
    quantile tracker and two at ``theta_k +/- c_bar * Delta`` for the
    gradient tracker.  The parameter step uses the gradient estimate from
    before the current update, then projects onto the box.
    """
    return run_spqo_batch(problem, schedule, phi, init, eval_budget, crn, [seed],
                          None, trace_stride, q_bounds)[0]


def run_sdqo(problem, schedule, phi, init=None, eval_budget=30_000, crn="independent",
             seed=0, trace_stride=1, q_bounds=DEFAULT_Q_BOUNDS) -> RunTrace:
    """Coordinate-wise variant of :func:`run_spqo`; ``2d + 1`` evaluations per iteration."""
    return run_sdqo_batch(problem, schedule, phi, init, eval_budget, crn, [seed],
                          None, trace_stride, q_bounds)[0]


def run_spqo_penalized(problem, penalty, schedule, phi, init=None, eval_budget=1800,
                       crn="common", seed=0, trace_stride=1) -> RunTrace:
    """SPQO minimizing ``c1 * quantile + penalty``; only the parameter step changes."""
    return run_spqo_batch(problem, schedule, phi, init, eval_budget, crn, [seed],
                          penalty, trace_stride)[0]


def run_sdqo_penalized(problem, penalty, schedule, phi, init=None, eval_budget=1800,
                       crn="common", seed=0, trace_stride=1) -> RunTrace:
    return run_sdqo_batch(problem, schedule, phi, init, eval_budget, crn, [seed],
                          penalty, trace_stride)[0]


def qg_iterations(cfg: QgConfig, dim: int, eval_budget: int) -> int:
    """Number of QG iterations that fit in the budget."""
    spent, k = 0, 0
    while spent + 2 * dim * cfg.sample_size(k + 1) <= eval_budget:
        k += 1
        spent += 2 * dim * cfg.sample_size(k)
    return k


def run_qg(problem: BlackBoxProblem, cfg: QgConfig | None, phi: float, theta0=None,
           eval_budget: int = 30_000, seed=0, penalty: QuadraticPenalty | None = None,
           trace_stride: int = 1) -> RunTrace:
    """Projected quasi-gradient descent with order-statistic quantile estimates.

    At iteration ``k`` and for each coordinate ``i``, the other coordinates
    are jittered uniformly within ``upsilon_k`` (see ``QgConfig.jitter``),
    ``n_k`` outputs are drawn at ``theta_i +/- upsilon_k`` and the
    ``ceil(n_k * phi)``-th order statistics are differenced.
    """
    cfg = cfg or QgConfig()
    d = problem.dim
    _check_common(problem, phi, eval_budget, 2 * d * cfg.sample_size(1), penalty)
    rng = np.random.default_rng(seed)
    theta = problem.box.uniform(rng) if theta0 is None else np.array(theta0, dtype=float)
    if theta.shape != (d,) or not problem.box.contains(theta):
        raise ValueError("theta0 must be a feasible point of the problem's dimension")
    n_iter = qg_iterations(cfg, d, eval_budget)
    rec = _Recorder(problem, phi, trace_stride)
    evals = 0
    rec(0, evals, theta[None], _NAN1)
    eye = np.eye(d, dtype=bool)
    for k in range(1, n_iter + 1):
        n, ups = cfg.sample_size(k), cfg.upsilon(k)
        jshape = {"shared": (d, 1, 1, d), "split": (d, 2, 1, d), "per_sample": (d, 2, n, d)}[cfg.jitter]
        jitter = theta + ups * (2.0 * rng.random(jshape) - 1.0)
        base = np.where(eye[:, None, None, :], theta, jitter)
        pts = base + ups * np.stack([np.eye(d), -np.eye(d)], axis=1)[:, :, None, :]
        u = rng.random((d, 2, n, problem.n_inputs))
        y = problem(np.broadcast_to(pts, (d, 2, n, d)), u)
        qhat = order_statistic_quantile(y, phi, axis=-1)
        grad = (qhat[:, 0] - qhat[:, 1]) / (2.0 * ups)
        direction = grad if penalty is None else penalty.direction(grad, theta)
        theta = project_box(theta - cfg.rho(k) * direction, problem.box)
        evals += 2 * d * n
        rec.maybe(k, evals, theta[None], _NAN1)
    rec.finish(n_iter, evals, theta[None], _NAN1)
    final = TrackerState(theta.copy(), float("nan"), np.full(d, np.nan), n_iter + 1, evals)
    return rec.traces("qg", [seed], [final], "2d*n_k", {"phi": phi})[0]
