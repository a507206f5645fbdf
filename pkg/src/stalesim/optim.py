"""Optimizer kernels shared by every training protocol.

Covers the local momentum update U, the stale-gradient correction
g~ = g + lambda * g (.) g (.) D with its dynamic lambda rule, piecewise-linear
warm-up/decay schedules (learning rate and weight decay share one shape),
and plateau detection used to stop the warm-up early.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import VectorLengthError
from .vecmath import ParamVector, hadamard, l2_norm

__all__ = [
    "MomentumState",
    "CompensationConfig",
    "Schedule",
    "momentum_update",
    "compensate",
    "compensate_with_term",
    "pseudo_hessian_term",
    "dynamic_lambda",
    "schedule_value",
    "theoretical_lr",
    "apply_weight_decay",
    "detect_plateau",
    "stop_warmup",
]

# Below this, the correction term is identically zero and lambda is defined as 0.
DEGENERATE_NORM = 1e-300


class MomentumState:
    """Per-worker momentum buffer with its current step settings.

    ``eta`` is rewritten by the schedule before every update; ``velocity``
    is replaced on every call to :func:`momentum_update`.
    """

    def __init__(self, dimension: int, eta: float, mu: float):
        if not 0.0 <= mu < 1.0:
            raise ValueError("mu must lie in [0, 1)")
        if eta < 0.0 or not np.isfinite(eta):
            raise ValueError("eta must be finite and >= 0")
        self.velocity = ParamVector(np.zeros(int(dimension)))
        self.eta = float(eta)
        self.mu = float(mu)

    @property
    def dimension(self) -> int:
        return len(self.velocity)

    def copy(self) -> "MomentumState":
        out = MomentumState(self.dimension, self.eta, self.mu)
        out.velocity = self.velocity.copy()
        return out


def momentum_update(state: MomentumState, gradient: ParamVector) -> ParamVector:
    """v <- mu v + g; returns the weight update -eta v. Mutates ``state``."""
    if len(gradient) != state.dimension:
        raise VectorLengthError(
            f"gradient length {len(gradient)} != velocity length {state.dimension}"
        )
    v = state.mu * state.velocity.values + gradient.values
    state.velocity = gradient.with_values(v)
    return gradient.with_values(-state.eta * v)


@dataclass(frozen=True)
class CompensationConfig:
    """Variance control for the stale-gradient correction."""

    lambda0: float = 0.2
    enabled: bool = True
    exact_hessian: bool = False  # test hook: curvature term H.D instead of g(.)g(.)D

    def __post_init__(self):
        if not np.isfinite(self.lambda0) or self.lambda0 < 0.0:
            raise ValueError("lambda0 must be finite and >= 0")


def compensate(gradient: ParamVector, distance: ParamVector, lambda_i: float) -> ParamVector:
    """g~[k] = g[k] + lambda_i g[k]^2 D[k].

    lambda_i == 0 short-circuits to an exact copy, so a zero correction can
    never perturb the gradient (not even a signed zero).
    """
    if not np.isfinite(lambda_i) or lambda_i < 0.0:
        raise ValueError("lambda_i must be finite and >= 0")
    if len(gradient) != len(distance):
        raise VectorLengthError("gradient and distance lengths differ")
    if lambda_i == 0.0:
        return gradient.copy()
    g = gradient.values
    return gradient.with_values(g + lambda_i * (g * g * distance.values))


def compensate_with_term(
    gradient: ParamVector, correction_term: ParamVector, lambda_i: float
) -> ParamVector:
    """g~ = g + lambda_i * term, for externally supplied curvature terms H.D."""
    if not np.isfinite(lambda_i) or lambda_i < 0.0:
        raise ValueError("lambda_i must be finite and >= 0")
    if len(gradient) != len(correction_term):
        raise VectorLengthError("gradient and correction term lengths differ")
    if lambda_i == 0.0:
        return gradient.copy()
    return gradient.with_values(gradient.values + lambda_i * correction_term.values)


def pseudo_hessian_term(gradient: ParamVector, distance: ParamVector) -> ParamVector:
    """The curvature surrogate g (.) g (.) D."""
    return hadamard(hadamard(gradient, gradient), distance)


def dynamic_lambda(
    config: CompensationConfig, gradient: ParamVector, distance: ParamVector
) -> float:
    """lambda_i = lambda0 ||g|| / ||g (.) g (.) D||, or 0 when degenerate.

    A denominator below 1e-300 means the correction term is (numerically)
    the zero vector, so any finite lambda yields the same corrected
    gradient; 0 is returned to keep arithmetic finite.
    """
    denom = l2_norm(pseudo_hessian_term(gradient, distance))
    if denom < DEGENERATE_NORM:
        return 0.0
    return config.lambda0 * l2_norm(gradient) / denom


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear trajectory over iterations.

    Ramps start_value -> peak_value over [0, warmup_end_iteration], then
    peak_value -> end_value over [warmup_end_iteration, total_iterations].
    A zero-length warm-up means the trajectory opens at the peak.
    """

    total_iterations: int
    warmup_end_iteration: int
    peak_value: float
    start_value: float = 0.0
    end_value: float = 0.0

    def __post_init__(self):
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if not 0 <= self.warmup_end_iteration <= self.total_iterations:
            raise ValueError("warmup_end_iteration must lie in [0, total_iterations]")
        for name in ("peak_value", "start_value", "end_value"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0")

    def scaled_to_peak(self, new_peak: float) -> "Schedule":
        """Same shape, all three values rescaled so the peak is ``new_peak``."""
        if self.peak_value == 0.0:
            if new_peak != 0.0:
                raise ValueError("cannot rescale a zero-peak schedule to a nonzero peak")
            factor = 0.0
        else:
            factor = new_peak / self.peak_value
        return Schedule(
            self.total_iterations,
            self.warmup_end_iteration,
            new_peak,
            self.start_value * factor,
            self.end_value * factor,
        )


def schedule_value(schedule: Schedule, iteration: int) -> float:
    """Value at an iteration; knots (0, warmup end, total) are hit exactly."""
    it = int(iteration)
    if it < 0 or it > schedule.total_iterations:
        raise ValueError(
            f"iteration {it} outside [0, {schedule.total_iterations}]"
        )
    we = schedule.warmup_end_iteration
    if it == we:
        return schedule.peak_value
    if it < we:
        if it == 0:
            return schedule.start_value
        span = schedule.peak_value - schedule.start_value
        return schedule.start_value + span * (it / we)
    if it == schedule.total_iterations:
        return schedule.end_value
    span = schedule.end_value - schedule.peak_value
    return schedule.peak_value + span * ((it - we) / (schedule.total_iterations - we))


def theoretical_lr(n_workers: int, eta_single_node: float) -> float:
    """Worker-count-scaled learning rate: N times the single-node rate."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    if eta_single_node <= 0.0:
        raise ValueError("eta_single_node must be > 0")
    return n_workers * eta_single_node


def apply_weight_decay(
    gradient: ParamVector,
    weights: ParamVector,
    decay_value: float,
    excluded_groups: Iterable[int] = (),
) -> ParamVector:
    """g[k] + decay * w[k] for every element whose group is not excluded."""
    if decay_value < 0.0 or not np.isfinite(decay_value):
        raise ValueError("decay_value must be finite and >= 0")
    if len(gradient) != len(weights):
        raise VectorLengthError("gradient and weights lengths differ")
    if decay_value == 0.0:
        return gradient.copy()
    excluded = np.asarray(sorted(set(int(g) for g in excluded_groups)), dtype=np.int32)
    out = gradient.values + decay_value * weights.values
    if excluded.size:
        keep = np.isin(gradient.group_ids, excluded)
        out = np.where(keep, gradient.values, out)
    return gradient.with_values(out)


def detect_plateau(
    loss_history: Sequence[float],
    window_epochs: int,
    current_epoch: int,
    threshold: float = 0.005,
) -> bool:
    """True when the last window's mean loss stopped improving.

    Compares the mean loss of the most recent ``window_epochs`` epochs
    against the mean of the window before it; a plateau is declared when
    the recent mean is not lower by more than ``threshold`` (relative).
    Until two full windows of history exist there is nothing to compare,
    so the answer is False.
    """
    if window_epochs < 1:
        raise ValueError("window_epochs must be >= 1")
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")
    if current_epoch < window_epochs:
        return False
    if len(loss_history) < current_epoch:
        raise ValueError(
            f"history has {len(loss_history)} epochs but {current_epoch} completed"
        )
    if current_epoch < 2 * window_epochs:
        return False
    w = window_epochs
    recent = float(np.mean(loss_history[current_epoch - w : current_epoch]))
    previous = float(np.mean(loss_history[current_epoch - 2 * w : current_epoch - w]))
    return recent >= previous * (1.0 - threshold)


def stop_warmup(schedule: Schedule, at_iteration: int) -> Schedule:
    """Freeze the warm-up at the value reached and decay to the end from there.

    The rebuilt schedule agrees with the original on [0, at_iteration]
    (same two endpoints, both linear), so the value sequence seen by a run
    that switches schedules at ``at_iteration`` is continuous.
    """
    if at_iteration >= schedule.warmup_end_iteration:
        return schedule
    reached = schedule_value(schedule, at_iteration)
    return Schedule(
        schedule.total_iterations,
        at_iteration,
        reached,
        schedule.start_value,
        schedule.end_value,
    )
