"""Learning-rate schedulers driven by the agreement of consecutive updates.

The base rule raises the rate by eta times the dot product of the current
and previous update directions (agreement -> larger steps, opposition ->
smaller steps). The revertible variant additionally watches the sign of
that dot product: when it flips relative to the previous step, the previous
rate increment is judged biased and undone, both on the rate and on the
weight displacement it caused, before the current step proceeds.
"""

from __future__ import annotations

import enum

import numpy as np

from .core import GradientEstimate, ParamVector, ScheduleState, StepOutcome, dot


class SchedulerKind(enum.Enum):
    PLAIN = "plain"
    DBD = "dbd"
    RDBD = "rdbd"


def _check_dims(state: ScheduleState, x: ParamVector, g: GradientEstimate):
    if g.dim != x.dim:
        raise ValueError(f"gradient dim {g.dim} != vector dim {x.dim}")
    if state.prev_update.size != x.dim:
        raise ValueError(
            f"state prev_update dim {state.prev_update.size} != vector dim {x.dim}")


def plain_step(x: ParamVector, g: GradientEstimate, alpha: float) -> np.ndarray:
    """Unscheduled descent step x - alpha * g."""
    if g.dim != x.dim:
        raise ValueError(f"gradient dim {g.dim} != vector dim {x.dim}")
    return x.values - alpha * g.values


def dbd_step(state: ScheduleState, x: ParamVector, g: GradientEstimate) -> StepOutcome:
    """One delta-bar-delta step.

    h_t = <g_t, g_{t-1}>; the rate moves by eta * h_t (then clamps), the
    weights descend at the new rate, and the state advances. Mutates
    `state` in place; the caller commits new_values to the vector.
    """
    _check_dims(state, x, g)
    h_t = dot(g.values, state.prev_update)
    new_alpha = state.clamp(state.alpha + state.eta * h_t)
    new_values = x.values - new_alpha * g.values

    state.alpha = new_alpha
    state.prev_update = g.values.copy()
    state.prev_dot = h_t
    state.step += 1
    return StepOutcome(new_values=new_values, new_alpha=new_alpha,
                       reverted=False, h_t=h_t)


def rdbd_step(state: ScheduleState, x: ParamVector, g: GradientEstimate,
              prev_x_snapshot=None) -> StepOutcome:
    """One revertible delta-bar-delta step.

    If the current dot product h_t disagrees in sign with the previous one
    (h_t * h_{t-1} < 0), the previous rate increment eta*h_{t-1} is undone:
    the weights get the correction +eta*h_{t-1}*g_{t-1} and the rate drops
    by eta*h_{t-1}. The step then proceeds as dbd_step from the corrected
    point. g must be the update computed at the current (un-reverted)
    weights.

    prev_x_snapshot, when given, is the weight vector as it stood right
    after the previous step; in a sequential run it equals x.values and may
    be omitted.
    """
    _check_dims(state, x, g)
    base = x.values if prev_x_snapshot is None else np.asarray(
        prev_x_snapshot, dtype=np.float64)
    if base.size != x.dim:
        raise ValueError("prev_x_snapshot dimension mismatch")

    h_t = dot(g.values, state.prev_update)
    reverted = h_t * state.prev_dot < 0.0
    alpha = state.alpha
    if reverted:
        base = base + state.eta * state.prev_dot * state.prev_update
        alpha = alpha - state.eta * state.prev_dot

    new_alpha = state.clamp(alpha + state.eta * h_t)
    new_values = base - new_alpha * g.values

    state.alpha = new_alpha
    state.prev_update = g.values.copy()
    state.prev_dot = h_t
    state.step += 1
    return StepOutcome(new_values=new_values, new_alpha=new_alpha,
                       reverted=reverted, h_t=h_t)


def revert_exactness_check(before, after_step_then_revert, eta, h_prev,
                           g_prev, rel_tol=1e-12) -> bool:
    """Verify that a revert undid the previous rate increment exactly.

    `before` is the (x, alpha) pair recorded right after the step that
    applied the eta*h_prev increment; `after_step_then_revert` is the pair
    after the revert. True iff the rate dropped by exactly eta*h_prev
    (restoring its pre-increment value) and the weights received exactly
    +eta*h_prev*g_prev, both to rel_tol relative tolerance.
    """
    x_before, alpha_before = before
    x_after, alpha_after = after_step_then_revert
    x_before = np.asarray(x_before, dtype=np.float64)
    x_after = np.asarray(x_after, dtype=np.float64)
    g_prev = np.asarray(g_prev, dtype=np.float64)

    expected_alpha = alpha_before - eta * h_prev
    alpha_scale = max(1.0, abs(alpha_before), abs(expected_alpha))
    if abs(alpha_after - expected_alpha) > rel_tol * alpha_scale:
        return False

    correction = x_after - x_before
    expected = eta * h_prev * g_prev
    scale = max(1.0, float(np.max(np.abs(x_before))),
                float(np.max(np.abs(expected))))
    return bool(np.all(np.abs(correction - expected) <= rel_tol * scale))
