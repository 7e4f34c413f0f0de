"""Blend dead-reckoned relative motion with sparse absolute pose fixes.

Relative motion is composed onto the current pose in its body frame, so a
heading correction from a fix also re-aims every later increment. A fix
pulls the pose toward itself by ``alpha * confidence`` (linear for
position, slerp for orientation).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ahrs
from .errors import StaleFixError, ValidationError

log = logging.getLogger(__name__)

JITTER_DISTANCE = 2.0
JITTER_CONFIDENCE = 0.5


@dataclass(frozen=True)
class PoseFix:
    t: float
    position: np.ndarray
    orientation: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", ahrs.normalize(self.orientation))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"fix confidence must lie in [0, 1], got {self.confidence}")
        if not (math.isfinite(self.t) and np.isfinite(self.position).all()):
            raise ValidationError("fix fields must be finite")


@dataclass(frozen=True)
class FusionState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: ahrs.IDENTITY.copy())
    last_fix_time: float = -math.inf
    alpha: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", ahrs.normalize(self.orientation))


def apply_motion(state: FusionState, delta_position, delta_orientation) -> FusionState:
    """Compose a body-frame displacement and rotation onto the current pose."""
    dq = ahrs.normalize(delta_orientation)
    dp = np.asarray(delta_position, dtype=float)
    position = state.position + ahrs.rotate(state.orientation, dp)
    orientation = ahrs.normalize(ahrs.multiply(state.orientation, dq))
    return replace(state, position=position, orientation=orientation)


def relative_motion(q_prev, p_prev, q_next, p_next):
    """Body-frame increment taking pose ``prev`` to pose ``next``."""
    dp = ahrs.to_matrix(q_prev).T @ (np.asarray(p_next, dtype=float) - np.asarray(p_prev, dtype=float))
    dq = ahrs.multiply(ahrs.conjugate(q_prev), q_next)
    return dp, ahrs.normalize(dq)


def apply_fix(state: FusionState, fix: PoseFix) -> FusionState:
    if fix.t < state.last_fix_time:
        raise StaleFixError(f"fix at t={fix.t} is older than the last accepted fix at t={state.last_fix_time}")
    jump = float(np.linalg.norm(fix.position - state.position))
    if jump > JITTER_DISTANCE and fix.confidence < JITTER_CONFIDENCE:
        log.warning("ignoring low-confidence fix at t=%.3f: %.2f m jump (confidence %.2f)", fix.t, jump,
                    fix.confidence)
        return state
    w = state.alpha * fix.confidence
    if w == 0.0:
        return replace(state, last_fix_time=fix.t)
    if w >= 1.0:
        return replace(state, position=fix.position.copy(), orientation=fix.orientation.copy(),
                       last_fix_time=fix.t)
    position = (1.0 - w) * state.position + w * fix.position
    orientation = ahrs.slerp(state.orientation, fix.orientation, w)
    return replace(state, position=position, orientation=orientation, last_fix_time=fix.t)
