"""Noisy black-box benchmark problems.

Every problem draws its output from a fixed number of input uniforms per
evaluation (``n_inputs``); the sampler maps ``(theta, u) -> y`` and is
monotone in each uniform.  Feeding two evaluations the same ``u`` is how
common random numbers are realized throughout the package.
"""

from __future__ import annotations

import enum
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

# smallest uniform handed to an inverse CDF; Generator.random() can return 0.0
_U_FLOOR = 2.0**-54

CASE_DIMS = {1: 2, 2: 10, 3: 20, 4: 20, 5: 5, 6: 5}

# Optimal quantile values as tabulated for the 24 benchmark scenarios,
# keyed by (case, noise, phi).
KNOWN_OPTIMA = {
    (1, "normal", 0.6): 10.0, (1, "normal", 0.95): 10.0,
    (1, "cauchy", 0.6): 10.0, (1, "cauchy", 0.95): 10.0,
    (2, "normal", 0.6): 0.25, (2, "normal", 0.95): 1.64,
    (2, "cauchy", 0.6): 0.32, (2, "cauchy", 0.95): 6.31,
    (3, "normal", 0.6): -717.25, (3, "normal", 0.95): -715.86,
    (3, "cauchy", 0.6): -717.18, (3, "cauchy", 0.95): -711.19,
    (4, "normal", 0.6): -49.29, (4, "normal", 0.95): -45.32,
    (4, "cauchy", 0.6): -49.08, (4, "cauchy", 0.95): -34.62,
    (5, "normal", 0.6): 0.25, (5, "normal", 0.95): 1.64,
    (5, "cauchy", 0.6): 0.32, (5, "cauchy", 0.95): 6.31,
    (6, "normal", 0.6): 0.25, (6, "normal", 0.95): 1.64,
    (6, "cauchy", 0.6): 0.32, (6, "cauchy", 0.95): 6.31,
}


def open_unit(u):
    """Push exact zeros off the boundary so inverse CDFs stay finite."""
    return np.maximum(u, _U_FLOOR)


class NoiseKind(str, enum.Enum):
    NORMAL = "normal"
    CAUCHY = "cauchy"

    def ppf(self, u):
        u = open_unit(np.asarray(u, dtype=float))
        if self is NoiseKind.NORMAL:
            return special.ndtri(u)
        return np.tan(np.pi * (u - 0.5))


def noise_quantile(kind, phi: float) -> float:
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0,1), got {phi!r}")
    kind = NoiseKind(kind)
    if kind is NoiseKind.NORMAL:
        return float(special.ndtri(phi))
    return math.tan(math.pi * (phi - 0.5))


@dataclass(frozen=True)
class FeasibleBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).copy()
        hi = np.asarray(self.upper, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("box needs lower < upper in every coordinate")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "FeasibleBox":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, theta, atol: float = 0.0) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol))

    def uniform(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else tuple(np.atleast_1d(size)) + (self.dim,)
        return self.lower + (self.upper - self.lower) * rng.random(shape)

    def describe(self) -> str:
        if np.all(self.lower == self.lower[0]) and np.all(self.upper == self.upper[0]):
            return f"[{self.lower[0]:g},{self.upper[0]:g}]"
        return "[" + ";".join(f"{a:g},{b:g}" for a, b in zip(self.lower, self.upper)) + "]"


Sampler = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BlackBoxProblem:
    """A sampling oracle ``Y(theta)`` on a box.

    ``sampler(theta, u)`` takes ``theta`` of shape ``(..., dim)`` and input
    uniforms ``u`` of shape ``(..., n_inputs)`` and returns outputs of shape
    ``(...)``.  ``true_quantile(theta, phi)`` broadcasts the same way.
    ``objective`` (optional) overrides what the harness reports as the true
    value at an iterate; it defaults to the true quantile.
    """

    label: str
    dim: int
    box: FeasibleBox
    n_inputs: int
    sampler: Sampler
    true_quantile: Optional[Callable] = None
    objective: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, theta, u):
        return self.sampler(theta, u)

    def sample(self, theta, rng: np.random.Generator, size=None) -> np.ndarray:
        """Draw fresh outputs at ``theta`` (``size`` replicates per point)."""
        theta = np.asarray(theta, dtype=float)
        lead = theta.shape[:-1] if size is None else tuple(np.atleast_1d(size)) + theta.shape[:-1]
        u = rng.random(lead + (self.n_inputs,))
        return self.sampler(np.broadcast_to(theta, lead + (self.dim,)), u)

    def true_value(self, theta, phi: float):
        if self.objective is not None:
            return self.objective(theta, phi)
        if self.true_quantile is None:
            return np.full(np.shape(theta)[:-1], np.nan)
        return self.true_quantile(theta, phi)


# ---------------------------------------------------------------------------
# Synthetic cases.  Each output is scale(theta) * X + shift(theta) with
# scale >= 0 on the whole space, so the phi-quantile is scale * z_phi + shift.


def _idx(d):
    return np.arange(1, d + 1, dtype=float)


def _scale1(t):
    a, b = t[..., 0], t[..., 1]
    return 2.6 * (a * a + b * b) - 4.8 * a * b


def _shift1(t):
    return np.full(t.shape[:-1], 10.0)


def _scale2(t):
    return np.sum((t - _idx(t.shape[-1])) ** 2, axis=-1) + 1.0


def _unit(t):
    return np.ones(t.shape[:-1])


def _zero(t):
    return np.zeros(t.shape[:-1])


def _shift3(t):
    return np.sum((t - _idx(t.shape[-1])) * t, axis=-1)


def _scale4(t):
    return np.mean((t - 1.0) ** 2, axis=-1)


def _shift4(t):
    t2 = t * t
    return np.mean(t2 * t2 - 16.0 * t2 + 5.0 * t, axis=-1)


def _scale5(t):
    r = np.sqrt(np.mean(t * t, axis=-1))
    return -10.0 * np.exp(-0.2 * r) - np.exp(np.mean(np.cos(np.pi * t), axis=-1)) + 11.0 + math.e


def _shift6(t):
    s = t - 0.9
    terms = (
        0.4 * np.sin(0.2 * np.pi * s) ** 2
        + 0.3 * np.sin(0.4 * np.pi * s) ** 2
        + 0.001 * s * s
    )
    return np.mean(terms, axis=-1)


_CASES = {
    1: (_scale1, _shift1),
    2: (_scale2, _zero),
    3: (_unit, _shift3),
    4: (_scale4, _shift4),
    5: (_scale5, _zero),
    6: (_unit, _shift6),
}


def _case_box(case_id: int) -> FeasibleBox:
    d = CASE_DIMS[case_id]
    if case_id == 1:
        return FeasibleBox.cube(-2, 2, d)
    if case_id == 2:
        return FeasibleBox(_idx(d) - 1.0, _idx(d) + 1.0)
    lo, hi = {3: (-20, 20), 4: (1, 4), 5: (-5, 5), 6: (-10, 10)}[case_id]
    return FeasibleBox.cube(lo, hi, d)


def make_case(case_id: int, noise="normal") -> BlackBoxProblem:
    if case_id not in _CASES:
        raise ValueError(f"unknown case id {case_id!r}; expected 1..6")
    noise = NoiseKind(noise)
    scale, shift = _CASES[case_id]

    def sampler(theta, u):
        theta = np.asarray(theta, dtype=float)
        x = noise.ppf(np.asarray(u)[..., 0])
        return scale(theta) * x + shift(theta)

    def true_quantile(theta, phi):
        theta = np.asarray(theta, dtype=float)
        return scale(theta) * noise_quantile(noise, phi) + shift(theta)

    return BlackBoxProblem(
        label=f"case{case_id}-{noise.value}",
        dim=CASE_DIMS[case_id],
        box=_case_box(case_id),
        n_inputs=1,
        sampler=sampler,
        true_quantile=true_quantile,
        meta={"case": case_id, "noise": noise.value, "scale": scale, "shift": shift},
    )


@functools.lru_cache(maxsize=None)
def _case4_minimizer(z: float) -> tuple:
    d = CASE_DIMS[4]

    def f(t):
        return z * _scale4(t) + _shift4(t)

    def grad(t):
        return (2.0 * z * (t - 1.0) + 4.0 * t**3 - 32.0 * t + 5.0) / d

    bounds = [(1.0, 4.0)] * d
    best = None
    for start in np.linspace(1.0, 4.0, 7):
        res = optimize.minimize(f, np.full(d, start), jac=grad, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    return tuple(best.x)


def case_optimum(case_id: int, noise, phi: float):
    """Representative minimizer and the optimal quantile it attains.

    Case 1 is minimized on the whole diagonal; the origin is reported.
    """
    noise = NoiseKind(noise)
    d = CASE_DIMS[case_id]
    if case_id == 1:
        theta = np.zeros(d)
    elif case_id == 2:
        theta = _idx(d)
    elif case_id == 3:
        theta = _idx(d) / 2.0
    elif case_id == 4:
        theta = np.array(_case4_minimizer(noise_quantile(noise, phi)))
    elif case_id == 5:
        theta = np.zeros(d)
    elif case_id == 6:
        theta = np.full(d, 0.9)
    else:
        raise ValueError(f"unknown case id {case_id!r}")
    q = float(make_case(case_id, noise).true_quantile(theta, phi))
    return theta, q


# ---------------------------------------------------------------------------
# M/M/1 queue


@dataclass(frozen=True)
class QuadraticPenalty:
    """Cost ``c1 * quantile + c2 * (theta - vartheta)' A (theta - vartheta)``."""

    c1: float
    c2: float
    A: np.ndarray
    vartheta: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        vt = np.asarray(self.vartheta, dtype=float)
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("penalty coefficients must be nonnegative")
        if A.shape != (vt.size, vt.size):
            raise ValueError("A must be d x d with d = len(vartheta)")
        if not np.allclose(A, A.T, atol=1e-12, rtol=0):
            raise ValueError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("A must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "vartheta", vt)

    def value(self, theta):
        diff = np.asarray(theta, dtype=float) - self.vartheta
        return self.c2 * np.einsum("...i,ij,...j->...", diff, self.A, diff)

    def gradient(self, theta):
        diff = np.asarray(theta, dtype=float) - self.vartheta
        # row-wise product; keeps each replication's arithmetic independent of batch size
        return 2.0 * self.c2 * np.sum(diff[..., None, :] * self.A, axis=-1)

    def direction(self, D, theta):
        """Descent direction ``c1 * D + grad(penalty)``."""
        return self.c1 * D + self.gradient(theta)


@dataclass(frozen=True)
class Mm1Config:
    lam: float = 1.0
    v: tuple = (0.1, 0.2, 0.3, 0.4)
    warmup: int = 1000
    penalty: QuadraticPenalty = None
    box: FeasibleBox = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if not np.all(v > 0):
            raise ValueError("v must be strictly positive")
        if self.lam <= 0:
            raise ValueError("arrival rate must be positive")
        if self.warmup < 1:
            raise ValueError("warmup must be a positive integer")
        object.__setattr__(self, "v", v)
        if self.penalty is None:
            object.__setattr__(self, "penalty", default_mm1_penalty())
        if self.box is None:
            object.__setattr__(self, "box", FeasibleBox.cube(1, 20, v.size))

    @property
    def dim(self) -> int:
        return self.v.size

    def service_rate(self, theta):
        load = np.asarray(theta, dtype=float) @ self.v
        if np.any(load <= 0):
            raise ValueError("unstable queue: v'theta must be positive so that mu(theta) > lambda")
        return 1.0 / load + self.lam


def default_mm1_penalty() -> QuadraticPenalty:
    A = np.array(
        [[10.0, 2.0, 1.0, 2.0],
         [2.0, 9.0, 2.0, 4.0],
         [1.0, 2.0, 8.0, 0.0],
         [2.0, 4.0, 0.0, 7.0]]
    )
    return QuadraticPenalty(c1=0.1, c2=0.02, A=A, vartheta=np.array([7.0, 8.0, 9.0, 10.0]))


def lindley_sojourn(interarrivals, services):
    """Sojourn time of the last customer of a FCFS queue started empty.

    ``interarrivals[..., n]`` is the gap before customer ``n`` (entry 0 is
    unused).  Uses the closed form of the recursion
    ``T[n] = max(0, T[n-1] - A[n]) + S[n]``: the waiting time is a reflected
    random walk, so ``W_N = P_N - min(0, min_n P_n)`` with partial sums of
    ``S[n-1] - A[n]``.
    """
    services = np.asarray(services, dtype=float)
    steps = services[..., :-1] - np.asarray(interarrivals, dtype=float)[..., 1:]
    if steps.shape[-1] == 0:
        return services[..., -1]
    walk = np.cumsum(steps, axis=-1)
    wait = walk[..., -1] - np.minimum(0.0, np.min(walk, axis=-1))
    return wait + services[..., -1]


def mm1_sojourn_sample(cfg: Mm1Config, theta, u):
    """Sojourn time of customer ``cfg.warmup``; ``u`` holds 2*warmup uniforms.

    The first half drives interarrival times, the second half service times,
    both by inverse CDF so outputs are monotone in every uniform.
    """
    u = open_unit(np.asarray(u, dtype=float))
    n = cfg.warmup
    mu = cfg.service_rate(theta)
    neg_log = -np.log1p(-u)
    inter = neg_log[..., :n] / cfg.lam
    serv = neg_log[..., n:2 * n] / np.asarray(mu)[..., None]
    return lindley_sojourn(inter, serv)


def mm1_quantile(cfg: Mm1Config, theta, phi: float):
    """Steady-state sojourn quantile: Exp(mu - lambda) with mu - lambda = 1/v'theta."""
    cfg.service_rate(theta)
    return -math.log1p(-phi) * (np.asarray(theta, dtype=float) @ cfg.v)


def mm1_true_cost(cfg: Mm1Config, theta, phi: float):
    return cfg.penalty.c1 * mm1_quantile(cfg, theta, phi) + cfg.penalty.value(theta)


def mm1_cost_gradient(cfg: Mm1Config, theta, phi: float):
    return -cfg.penalty.c1 * math.log1p(-phi) * cfg.v + cfg.penalty.gradient(theta)


def mm1_optimum(cfg: Mm1Config, phi: float):
    p = cfg.penalty
    x = np.linalg.solve(p.A, cfg.v)
    theta = p.vartheta + (p.c1 / (2.0 * p.c2)) * math.log1p(-phi) * x
    if not cfg.box.contains(theta):
        warnings.warn("unconstrained optimum lies outside the box; clamping", RuntimeWarning)
        theta = np.clip(theta, cfg.box.lower, cfg.box.upper)
    return theta, float(mm1_true_cost(cfg, theta, phi))


# upper bound of c_1 = 0.5 * (2R / (1 + R))**0.125 under the default gains
RECIPE_MAX_PERTURBATION = 0.5 * 2.0**0.125


def make_mm1(cfg: Mm1Config | None = None) -> BlackBoxProblem:
    cfg = cfg or Mm1Config()
    # perturbed points leave the box by at most c_1 per coordinate
    if cfg.v @ (cfg.box.lower - RECIPE_MAX_PERTURBATION) <= 0:
        raise ValueError("box too close to the unstable region for perturbed evaluations")
    return BlackBoxProblem(
        label="mm1",
        dim=cfg.dim,
        box=cfg.box,
        n_inputs=2 * cfg.warmup,
        sampler=lambda theta, u: mm1_sojourn_sample(cfg, theta, u),
        true_quantile=lambda theta, phi: mm1_quantile(cfg, theta, phi),
        objective=lambda theta, phi: mm1_true_cost(cfg, theta, phi),
        meta={"mm1": cfg},
    )
