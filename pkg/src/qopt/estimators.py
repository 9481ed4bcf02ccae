"""Coupled quantile / quantile-gradient trackers.

The quantile tracker is a Robbins-Monro recursion on ``P(Y <= q) = phi``.
The gradient trackers solve a second root-finding problem whose solution is
``-grad_theta F(q; theta) / f(q; theta)``: both ``theta`` and the quantile
estimate are perturbed together (``q +/- c * D.Delta``) and only indicator
functions of the outputs enter the update, so every component of ``D`` moves
by exactly ``0`` or ``+/- beta / (2c)`` per step.

All functions accept a leading batch shape, so one call can advance many
independent replications at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .problems import BlackBoxProblem


class CrnMode(str, enum.Enum):
    INDEPENDENT = "independent"
    COMMON = "common"


@dataclass
class TrackerState:
    theta: np.ndarray
    q: np.ndarray | float
    D: np.ndarray
    k: int = 1
    evals: int = 0

    def copy(self) -> "TrackerState":
        return TrackerState(
            np.array(self.theta, dtype=float),
            np.array(self.q, dtype=float),
            np.array(self.D, dtype=float),
            self.k,
            self.evals,
        )


def quantile_step(q, gamma_k, phi, y):
    """``q + gamma_k * (phi - 1{y <= q})``; ties fire the indicator."""
    return q + gamma_k * (phi - (y <= q))


def draw_direction(rng: np.random.Generator, d: int, size=None) -> np.ndarray:
    """Rademacher direction(s): i.i.d. +/-1 components."""
    shape = (d,) if size is None else tuple(np.atleast_1d(size)) + (d,)
    return 2.0 * rng.integers(0, 2, size=shape) - 1.0


def sp_indicator_difference(y_plus, y_minus, q, c_bar, d_dot_delta):
    """``-1{Y+ <= q + c D.Delta} + 1{Y- <= q - c D.Delta}`` in {-1, 0, 1}."""
    shift = c_bar * d_dot_delta
    return np.asarray(y_minus <= q - shift, dtype=float) - (y_plus <= q + shift)


def sp_update(D, beta_k, c_bar, delta, diff):
    # dividing by a +/-1 direction is multiplying by it
    return D + (beta_k * diff / (2.0 * c_bar))[..., None] * delta


def sp_points(theta, c_bar, delta):
    """Perturbed points ``theta + c_bar*delta`` and ``theta - c_bar*delta``."""
    step = np.asarray(c_bar)[..., None] * delta
    return theta + step, theta - step


def sp_gradient_step(
    state: TrackerState,
    beta_k: float,
    c_bar,
    delta,
    problem: BlackBoxProblem,
    inputs,
    crn=CrnMode.INDEPENDENT,
):
    """One simultaneous-perturbation update of the gradient tracker.

    ``inputs`` has shape ``(..., 2, n_inputs)``: row 0 drives the plus
    evaluation and row 1 the minus evaluation.  Under ``CrnMode.COMMON`` row 0
    drives both.  Returns ``(D_next, 2)``.
    """
    crn = CrnMode(crn)
    theta, q, D = state.theta, np.asarray(state.q, dtype=float), state.D
    inputs = np.asarray(inputs)
    plus, minus = sp_points(theta, c_bar, delta)
    u_plus = inputs[..., 0, :]
    u_minus = u_plus if crn is CrnMode.COMMON else inputs[..., 1, :]
    y_plus = problem(plus, u_plus)
    y_minus = problem(minus, u_minus)
    d_dot_delta = np.sum(D * delta, axis=-1)
    diff = sp_indicator_difference(y_plus, y_minus, q, c_bar, d_dot_delta)
    return sp_update(D, beta_k, c_bar, delta, diff), 2


def sd_points(theta, c_tilde):
    """Stack of ``2d`` points: ``theta + c e_i`` (rows 0..d-1) then ``theta - c e_i``."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    offsets = np.asarray(c_tilde)[..., None, None] * np.eye(d)
    base = theta[..., None, :]
    return np.concatenate([base + offsets, base - offsets], axis=-2)


def sd_indicator_difference(y, q, c_tilde, D):
    """Per-coordinate ``-I_i^+ + I_i^-`` from the ``2d`` stacked outputs ``y``."""
    d = D.shape[-1]
    q = np.asarray(q)[..., None]
    shift = np.asarray(c_tilde)[..., None] * D
    return np.asarray(y[..., d:] <= q - shift, dtype=float) - (y[..., :d] <= q + shift)


def sd_update(D, beta_k, c_tilde, v):
    return D + (beta_k / (2.0 * np.asarray(c_tilde)))[..., None] * v


def sd_gradient_step(
    state: TrackerState,
    beta_k: float,
    c_tilde,
    problem: BlackBoxProblem,
    inputs,
    crn=CrnMode.INDEPENDENT,
):
    """One coordinate-wise symmetric-difference update of the gradient tracker.

    ``inputs`` has shape ``(..., 2d, n_inputs)`` in the stacking order of
    :func:`sd_points`.  Under ``CrnMode.COMMON`` the first row drives all
    ``2d`` evaluations of the iteration.  Returns ``(D_next, 2d)``.
    """
    crn = CrnMode(crn)
    D = np.asarray(state.D, dtype=float)
    d = D.shape[-1]
    inputs = np.asarray(inputs)
    pts = sd_points(state.theta, c_tilde)
    if crn is CrnMode.COMMON:
        inputs = np.broadcast_to(inputs[..., :1, :], inputs.shape[:-2] + (2 * d, inputs.shape[-1]))
    y = problem(pts, inputs)
    v = sd_indicator_difference(y, state.q, c_tilde, D)
    return sd_update(D, beta_k, c_tilde, v), 2 * d
