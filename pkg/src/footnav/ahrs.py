"""Quaternion algebra and gyro/accelerometer orientation filters.

Conventions
-----------
Quaternions are numpy arrays ``[w, x, y, z]`` (Hamilton product). A
quaternion ``q`` rotates body-frame vectors into the earth frame::

    v_earth = q * v_body * conj(q)

Earth frame is z-up; a sensor at rest therefore measures ``(0, 0, g)``
when level. Gyro rates are body-frame and the kinematics are
``q_dot = 0.5 * q * (0, omega)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import cos, sin, sqrt

import numpy as np

from .errors import ValidationError

GRAVITY = 9.80665
IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# Upper bound on the largest eigenvalue of J^T J for the accelerometer
# objective; caps the Madgwick step so it never overshoots the minimum.
_MADGWICK_LIPSCHITZ = 24.0


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float))
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float))
        if self.accel.shape != (3,) or self.gyro.shape != (3,):
            raise ValidationError("accel and gyro must be 3-vectors")
        if not (np.isfinite(self.t) and np.isfinite(self.accel).all() and np.isfinite(self.gyro).all()):
            raise ValidationError(f"non-finite IMU sample at t={self.t}")


@dataclass(frozen=True)
class AhrsState:
    """Filter state. ``kp``/``ki`` drive Mahony, ``beta`` drives Madgwick."""

    q: np.ndarray = field(default_factory=lambda: IDENTITY.copy())
    integral_error: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kp: float = 0.5
    ki: float = 0.0
    beta: float = 0.1
    g: float = GRAVITY

    def __post_init__(self):
        if min(self.kp, self.ki, self.beta) < 0:
            raise ValidationError("filter gains must be non-negative")

    def with_gains(self, **gains) -> "AhrsState":
        return replace(self, **gains)


def normalize(q):
    q = np.asarray(q, dtype=float)
    n = sqrt(float(q @ q))
    if n == 0.0 or not np.isfinite(n):
        raise ValidationError("cannot normalize a zero or non-finite quaternion")
    return q / n


def multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def to_matrix(q):
    """Rotation matrix R with ``v_earth = R @ v_body``."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotate(q, v):
    """Rotate body vector ``v`` into the earth frame."""
    return to_matrix(q) @ np.asarray(v, dtype=float)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return IDENTITY.copy()
    axis = axis / n
    return np.concatenate(([cos(angle / 2)], sin(angle / 2) * axis))


def from_yaw(yaw):
    return np.array([cos(yaw / 2), 0.0, 0.0, sin(yaw / 2)])


def yaw_of(q):
    w, x, y, z = q
    return float(np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z)))


def rotation_vector(q):
    """Axis-angle vector of ``q`` (shortest rotation)."""
    q = normalize(q)
    if q[0] < 0:
        q = -q
    s = sqrt(float(q[1:] @ q[1:]))
    if s < 1e-300:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(s, q[0])
    return q[1:] / s * angle


def angle_between(a, b):
    """Rotation angle (rad) separating two orientations."""
    d = abs(float(np.dot(normalize(a), normalize(b))))
    return 2.0 * np.arccos(min(1.0, d))


def slerp(a, b, frac):
    a = normalize(a)
    b = normalize(b)
    if frac <= 0.0:
        return a
    if frac >= 1.0:
        return b
    d = float(a @ b)
    if d < 0.0:
        b, d = -b, -d
    if d > 0.9995:
        return normalize(a + frac * (b - a))
    theta = np.arccos(d)
    s = sin(theta)
    return normalize((sin((1 - frac) * theta) * a + sin(frac * theta) * b) / s)


def tilt_from_accel(accel):
    """Level orientation (zero yaw) that maps the measured gravity onto +z."""
    a = np.asarray(accel, dtype=float)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValidationError("zero accelerometer vector gives no tilt")
    a = a / n
    # rotation taking body vector a onto earth z
    axis = np.cross(a, [0.0, 0.0, 1.0])
    s = np.linalg.norm(axis)
    c = a[2]
    if s < 1e-12:
        return IDENTITY.copy() if c > 0 else np.array([0.0, 1.0, 0.0, 0.0])
    return from_axis_angle(axis, np.arctan2(s, c))


def _check_finite(*arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise ValidationError("non-finite input")


def quat_integrate_gyro(q, gyro, dt):
    """Advance ``q`` by the body rotation ``gyro * dt`` (exact for constant rate)."""
    gyro = np.asarray(gyro, dtype=float)
    _check_finite(q, gyro, dt)
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    return _integrate(q, gyro, dt)


def _integrate(q, gyro, dt):
    wx, wy, wz = gyro
    rate = sqrt(wx * wx + wy * wy + wz * wz)
    if rate == 0.0:
        return normalize(q)
    half = 0.5 * rate * dt
    k = sin(half) / rate
    return normalize(multiply(q, (cos(half), k * wx, k * wy, k * wz)))


def earth_accel(q, accel, g=GRAVITY):
    """Body specific force rotated to earth frame with gravity removed."""
    out = rotate(q, accel)
    out[2] -= g
    return out


def gravity_direction(q):
    """Earth z-axis expressed in the body frame (third row of R)."""
    w, x, y, z = q
    return np.array([2 * (x * z - w * y), 2 * (w * x + y * z), w * w - x * x - y * y + z * z])


def _usable(accel, g):
    n = sqrt(float(accel @ accel))
    return 0.5 * g <= n <= 1.5 * g, n


def _mahony_step(q, integral, gyro, accel, dt, kp, ki, g):
    usable, n = _usable(accel, g)
    if usable and (kp > 0 or ki > 0):
        ax, ay, az = accel / n
        vx, vy, vz = gravity_direction(q)
        err = np.array([ay * vz - az * vy, az * vx - ax * vz, ax * vy - ay * vx])
        if ki > 0:
            integral = integral + ki * err * dt
        gyro = gyro + kp * err + integral
    return _integrate(q, gyro, dt), integral


def _madgwick_step(q, gyro, accel, dt, beta, g):
    q_gyro = _integrate(q, gyro, dt)
    usable, n = _usable(accel, g)
    if not usable or beta == 0:
        return q_gyro
    ax, ay, az = accel / n
    q0, q1, q2, q3 = q
    f = np.array([
        2 * (q1 * q3 - q0 * q2) - ax,
        2 * (q0 * q1 + q2 * q3) - ay,
        2 * (0.5 - q1 * q1 - q2 * q2) - az,
    ])
    jac = np.array([
        [-2 * q2, 2 * q3, -2 * q0, 2 * q1],
        [2 * q1, 2 * q0, 2 * q3, 2 * q2],
        [0.0, -4 * q1, -4 * q2, 0.0],
    ])
    step = jac.T @ f
    size = sqrt(float(step @ step))
    if size == 0.0:
        return q_gyro
    # normalised gradient step of length beta*dt, shortened near the minimum
    length = min(beta * dt, size / _MADGWICK_LIPSCHITZ)
    return normalize(q_gyro - step * (length / size))


def _validated(sample, dt):
    gyro = np.asarray(sample.gyro, dtype=float)
    accel = np.asarray(sample.accel, dtype=float)
    _check_finite(gyro, accel, dt)
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    return gyro, accel


def mahony_update(state: AhrsState, sample: ImuSample, dt: float) -> AhrsState:
    """Proportional-integral correction of the gyro rate toward measured gravity."""
    gyro, accel = _validated(sample, dt)
    q, integral = _mahony_step(state.q, state.integral_error, gyro, accel, dt, state.kp, state.ki, state.g)
    return replace(state, q=q, integral_error=integral)


def madgwick_update(state: AhrsState, sample: ImuSample, dt: float) -> AhrsState:
    gyro, accel = _validated(sample, dt)
    return replace(state, q=_madgwick_step(state.q, gyro, accel, dt, state.beta, state.g))


FILTERS = {"mahony": mahony_update, "madgwick": madgwick_update}
