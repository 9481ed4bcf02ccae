"""Gain sequences for the three-timescale quantile optimizers.

All four sequences are power laws in the iteration index ``k >= 1``::

    alpha_k = a / k**alpha          (parameter step)
    beta_k  = b / (k + R)**beta     (gradient-tracker step)
    gamma_k = r / k**gamma          (quantile-tracker step)
    c_k     = c / (k + R)**tau      (perturbation size)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

# serialized key -> dataclass field
_FIELD_NAMES = {
    "a": "a",
    "alpha": "alpha_exp",
    "b": "b",
    "beta": "beta_exp",
    "r": "r",
    "gamma": "gamma_exp",
    "c": "c",
    "tau": "tau_exp",
    "shift_R": "shift",
}

KAPPA_BETA = 0.05
KAPPA_C = 0.5


@dataclass(frozen=True)
class GainSchedule:
    a: float
    alpha_exp: float
    b: float
    beta_exp: float
    r: float
    gamma_exp: float
    c: float
    tau_exp: float
    shift: int = 0

    def __post_init__(self):
        for name in ("a", "b", "r", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("alpha_exp", "beta_exp", "gamma_exp", "tau_exp"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v!r}")
        if int(self.shift) != self.shift or self.shift < 0:
            raise ValueError(f"shift must be a nonnegative integer, got {self.shift!r}")

    @property
    def timescales_ordered(self) -> bool:
        """True when alpha_k = o(gamma_k) and gamma_k = o(beta_k)."""
        return self.alpha_exp > self.gamma_exp > self.beta_exp

    @property
    def theory_compliant(self) -> bool:
        """Square-summability of beta_k / c_k plus the timescale ordering."""
        return 2.0 * (self.beta_exp - self.tau_exp) > 1.0 and self.timescales_ordered

    def to_dict(self) -> dict:
        raw = asdict(self)
        return {key: raw[field] for key, field in _FIELD_NAMES.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "GainSchedule":
        unknown = set(data) - set(_FIELD_NAMES)
        if unknown:
            raise ValueError(f"unknown schedule fields: {sorted(unknown)}")
        missing = set(_FIELD_NAMES) - set(data)
        if missing:
            raise ValueError(f"missing schedule fields: {sorted(missing)}")
        return cls(**{_FIELD_NAMES[key]: value for key, value in data.items()})

    def replace(self, **overrides) -> "GainSchedule":
        """Copy with serialized-name overrides, e.g. ``replace(alpha=0.9)``."""
        merged = self.to_dict()
        merged.update(overrides)
        return GainSchedule.from_dict(merged)


def gains_at(s: GainSchedule, k):
    """Return ``(alpha_k, beta_k, gamma_k, c_k)`` at iteration ``k >= 1``.

    ``k`` may be an integer or an integer array; the result broadcasts.
    """
    if np.any(np.asarray(k) < 1):
        raise ValueError("iteration index starts at k=1")
    kf = np.asarray(k, dtype=float) if not isinstance(k, int) else float(k)
    shifted = kf + s.shift
    return (
        s.a / kf**s.alpha_exp,
        s.b / shifted**s.beta_exp,
        s.r / kf**s.gamma_exp,
        s.c / shifted**s.tau_exp,
    )


def max_iterations(eval_budget: int, evals_per_iter: int) -> int:
    if evals_per_iter < 1:
        raise ValueError("evals_per_iter must be positive")
    if eval_budget < evals_per_iter:
        raise ValueError(
            f"eval_budget={eval_budget} cannot pay for one iteration "
            f"({evals_per_iter} evaluations)"
        )
    return eval_budget // evals_per_iter


def paper_recipe(eval_budget: int, evals_per_iter: int, dim: int | None = None) -> GainSchedule:
    """Default gains used for every benchmark.

    The shift R is 10% of the iteration count (rounded half up, at least 1);
    ``b`` and ``c`` are chosen so that beta_k and c_k stay above 0.05 and 0.5
    during the first R iterations, and the quantile gain numerator is R itself.
    ``dim`` is accepted for call-site symmetry; the recipe does not depend on it.
    """
    n_iter = max_iterations(eval_budget, evals_per_iter)
    shift = max(1, math.floor(0.1 * n_iter + 0.5))
    beta_exp, tau_exp = 0.74, 0.125
    return GainSchedule(
        a=2.0,
        alpha_exp=0.99,
        b=KAPPA_BETA * (2 * shift) ** beta_exp,
        beta_exp=beta_exp,
        r=float(shift),
        gamma_exp=0.75,
        c=KAPPA_C * (2 * shift) ** tau_exp,
        tau_exp=tau_exp,
        shift=shift,
    )


def adaptive_perturbation(c_k, D):
    """Shrink ``c_k`` by ``max(1, ||D|| / sqrt(d))``.

    ``D`` has shape ``(..., d)``; the result has the leading shape of ``D``.
    Keeps the quantile-side perturbation ``c * D.Delta`` of order ``c_k``.
    """
    D = np.asarray(D, dtype=float)
    d = D.shape[-1]
    scale = np.maximum(1.0, np.sqrt(np.sum(D * D, axis=-1)) / math.sqrt(d))
    return c_k / scale
