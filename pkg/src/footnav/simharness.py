"""Ground-truth walks, synthetic IMU streams and scoring.

The gait model alternates stance (foot fixed) with swing arcs between
footfalls. Horizontal motion and yaw follow a minimum-jerk profile and the
foot lifts along ``64 s^3 (1-s)^3`` so velocity and acceleration vanish at
both ends of every swing.

Noise is drawn from ``numpy.random.default_rng(seed)`` (PCG64): first an
``(N, 3)`` block of standard normals for the accelerometer, then one for
the gyroscope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ahrs
from .ahrs import ImuSample
from .deadreckon import Trajectory
from .errors import ValidationError


@dataclass(frozen=True)
class Scenario:
    kind: str = "corridor"
    length: float = 10.0
    radius: float = 1.0
    step_rise: float = 0.17
    steps_per_turn: int = 12
    n_steps: int = 12
    points: tuple = ()
    cadence: float = 0.6
    stance_fraction: float = 0.5
    stride: float = 0.5
    lift: float = 0.1
    start_dwell: float = 1.0
    end_dwell: float = 1.0
    start_heading: float = 0.0

    def __post_init__(self):
        if self.kind not in ("corridor", "spiral_staircase", "waypoint_walk"):
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if not 0 < self.stance_fraction < 1:
            raise ValidationError("stance_fraction must lie in (0, 1)")
        for name in ("cadence", "stride"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.lift < 0 or self.start_dwell < 0 or self.end_dwell < 0:
            raise ValidationError("lift and dwell times must be non-negative")
        if self.kind == "corridor" and not self.length > 0:
            raise ValidationError("corridor length must be positive")
        if self.kind == "spiral_staircase":
            if not (self.radius > 0 and self.step_rise >= 0 and self.steps_per_turn > 0 and self.n_steps > 0):
                raise ValidationError("staircase needs radius > 0, step_rise >= 0, steps_per_turn > 0, n_steps > 0")
        if self.kind == "waypoint_walk" and len(self.points) < 2:
            raise ValidationError("waypoint_walk needs at least two points")

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
        doc = dict(doc)
        if "points" in doc:
            doc["points"] = tuple(tuple(float(c) for c in p) for p in doc["points"])
        return cls(**doc)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["points"] = [list(p) for p in self.points]
        return out

    @property
    def swing_time(self):
        return (1.0 - self.stance_fraction) / self.cadence

    @property
    def stance_time(self):
        return self.stance_fraction / self.cadence


@dataclass(frozen=True)
class NoiseModel:
    accel_sigma: float = 0.0
    gyro_sigma: float = 0.0
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    seed: int = 7

    def __post_init__(self):
        if self.accel_sigma < 0 or self.gyro_sigma < 0:
            raise ValidationError("noise sigmas must be non-negative")


# Representative consumer-grade MEMS errors used by the reference fixtures.
FIXTURE_NOISE = NoiseModel(
    accel_sigma=0.02,
    gyro_sigma=0.002,
    accel_bias=(0.01, -0.008, 0.005),
    gyro_bias=(2e-4, -1e-4, 1.5e-4),
    seed=7,
)


def footfalls(scenario: Scenario):
    """Footfall positions (K, 3) and foot headings (K,) in walking order."""
    s = scenario
    if s.kind == "corridor":
        n = max(1, math.ceil(s.length / s.stride - 1e-9))
        c, h = math.cos(s.start_heading), math.sin(s.start_heading)
        d = np.linspace(0.0, s.length, n + 1)
        pts = np.stack([d * c, d * h, np.zeros_like(d)], axis=1)
        return pts, np.full(n + 1, s.start_heading)
    if s.kind == "spiral_staircase":
        k = np.arange(s.n_steps + 1)
        theta = -math.pi / 2 + s.start_heading + k * (2 * math.pi / s.steps_per_turn)
        center = s.radius * np.array([-math.sin(s.start_heading), math.cos(s.start_heading)])
        pts = np.stack([center[0] + s.radius * np.cos(theta), center[1] + s.radius * np.sin(theta),
                        k * s.step_rise], axis=1)
        return pts, theta + math.pi / 2
    pts3 = [np.array(list(p) + [0.0] * (3 - len(p)), dtype=float) for p in s.points]
    out, heads = [pts3[0]], []
    for a, b in zip(pts3[:-1], pts3[1:]):
        leg = b - a
        dist = float(np.linalg.norm(leg[:2]))
        if dist == 0.0:
            continue
        n = max(1, math.ceil(dist / s.stride - 1e-9))
        heading = math.atan2(leg[1], leg[0])
        for j in range(1, n + 1):
            out.append(a + leg * (j / n))
            heads.append(heading)
    if not heads:
        raise ValidationError("waypoint_walk points are all coincident")
    heads = np.unwrap(np.array([heads[0]] + heads))
    return np.array(out), heads


def _min_jerk(s):
    return s * s * s * (10 - 15 * s + 6 * s * s)


def gen_trajectory(scenario: Scenario, rate: float = 100.0) -> Trajectory:
    if rate < 50:
        raise ValidationError("rate must be at least 50 Hz")
    feet, heads = footfalls(scenario)
    t_sw, t_st = scenario.swing_time, scenario.stance_time
    n_steps = len(feet) - 1
    total = scenario.start_dwell + n_steps * (t_sw + t_st) + scenario.end_dwell
    n = int(math.floor(total * rate + 1e-9)) + 1
    t = np.arange(n) / rate

    pos = np.repeat(feet[:1], n, axis=0)
    yaw = np.full(n, heads[0])
    cycle = t_sw + t_st
    rel = t - scenario.start_dwell
    k = np.floor(rel / cycle).astype(int)
    phase = rel - k * cycle
    boundaries = []
    for step in range(n_steps):
        sel = k == step
        tau = np.clip(phase[sel] / t_sw, 0.0, 1.0)
        m = _min_jerk(tau)[:, None]
        pos[sel] = feet[step] + (feet[step + 1] - feet[step]) * m
        pos[sel, 2] += scenario.lift * 64 * (tau * (1 - tau)) ** 3
        yaw[sel] = heads[step] + (heads[step + 1] - heads[step]) * m[:, 0]
        landed = np.nonzero(sel & (phase >= t_sw))[0]
        if len(landed):
            boundaries.append(int(landed[0]))
    after = k >= n_steps
    pos[after] = feet[-1]
    yaw[after] = heads[-1]
    quats = np.array([ahrs.from_yaw(y) for y in yaw])
    return Trajectory(t, pos, quats, boundaries)


def synth_imu(trajectory: Trajectory, noise: NoiseModel = NoiseModel(), rate: float | None = None,
              g: float = ahrs.GRAVITY) -> list[ImuSample]:
    """Accelerometer and gyro readings that reproduce ``trajectory`` when integrated."""
    t = trajectory.timestamps
    pos = trajectory.positions
    quats = trajectory.orientations
    if len(t) < 3:
        raise ValidationError("trajectory too short to differentiate")
    native = (len(t) - 1) / (t[-1] - t[0])
    if rate is not None:
        ratio = native / rate
        stride = int(round(ratio))
        if stride < 1 or abs(ratio - stride) > 1e-6:
            raise ValidationError(f"trajectory rate {native:.6g} Hz is not an integer multiple of {rate} Hz")
        t, pos, quats = t[::stride], pos[::stride], quats[::stride]
    dt = float(t[1] - t[0])
    padded = np.vstack([pos[:1], pos, pos[-1:]])
    lin = (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / (dt * dt)
    specific = lin + np.array([0.0, 0.0, g])
    accel = np.array([ahrs.to_matrix(q).T @ f for q, f in zip(quats, specific)])
    gyro = np.zeros_like(accel)
    for i in range(1, len(t)):
        rel = ahrs.multiply(ahrs.conjugate(quats[i - 1]), quats[i])
        gyro[i] = ahrs.rotation_vector(rel) / (t[i] - t[i - 1])

    rng = np.random.default_rng(noise.seed)
    accel_noise = rng.standard_normal(accel.shape)
    gyro_noise = rng.standard_normal(gyro.shape)
    accel = accel + np.asarray(noise.accel_bias, dtype=float) + noise.accel_sigma * accel_noise
    gyro = gyro + np.asarray(noise.gyro_bias, dtype=float) + noise.gyro_sigma * gyro_noise
    return [ImuSample(float(t[i]), accel[i], gyro[i]) for i in range(len(t))]


def evaluate(estimate: Trajectory, truth: Trajectory) -> dict:
    """RMSE, endpoint error and path-length ratio against linearly interpolated truth."""
    te, tt = estimate.timestamps, truth.timestamps
    lo, hi = max(te[0], tt[0]), min(te[-1], tt[-1])
    if lo > hi:
        raise ValidationError("estimate and truth time ranges do not overlap")
    sel = (te >= lo) & (te <= hi)
    est = estimate.positions[sel]
    ref = np.stack([np.interp(te[sel], tt, truth.positions[:, a]) for a in range(3)], axis=1)
    err = np.linalg.norm(est - ref, axis=1)
    est_len = float(np.linalg.norm(np.diff(est, axis=0), axis=1).sum())
    ref_len = float(np.linalg.norm(np.diff(ref, axis=0), axis=1).sum())
    if ref_len == 0.0:
        ratio = 1.0 if est_len == 0.0 else math.inf
    else:
        ratio = est_len / ref_len
    return {
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "endpoint_error": float(err[-1]),
        "path_length_ratio": ratio,
    }


def _disc_hits_box(a, b, lo, hi, radius) -> bool:
    from .planner import segment_box_distance

    return segment_box_distance(a, b, lo, hi) < radius


def walk_and_score(obstacles, plan, walker_radius: float, scenario: Scenario = Scenario(),
                   agent_height: float = 1.8, step_clearance: float = 0.15) -> dict:
    """Sweep a disc along the plan polyline and count obstacles it touches.

    Each obstacle whose vertical extent meets ``(step_clearance, agent_height)``
    is counted at most once. Walking speed is ``cadence * stride``.
    """
    if walker_radius < 0:
        raise ValidationError("walker_radius must be non-negative")
    pts = [np.asarray(w, dtype=float)[:2] for w in plan.waypoints]
    if len(pts) == 1:
        pts = pts * 2
    hit = set()
    for i, box in enumerate(obstacles):
        if box.max[2] <= step_clearance or box.min[2] >= agent_height:
            continue
        lo, hi = np.asarray(box.min[:2]), np.asarray(box.max[:2])
        if any(_disc_hits_box(a, b, lo, hi, walker_radius) for a, b in zip(pts[:-1], pts[1:])):
            hit.add(i)
    speed = scenario.cadence * scenario.stride
    length = float(sum(np.linalg.norm(b - a) for a, b in zip(pts[:-1], pts[1:])))
    return {"collisions": len(hit), "traversal_time": length / speed, "mean_speed": speed if length else 0.0}


def random_room(rng, size=(8.0, 8.0), n_obstacles: int = 10, footprint=(0.3, 1.2), labels=None):
    """Axis-aligned box obstacles scattered in a rectangular room (walls excluded).

    Boxes are aligned to 5 cm so voxelized footprints match exactly.
    """
    from .voxelmap import ObstacleBox, classify_height

    labels = labels or ("chair", "table", "cabinet", "plant", "lamp", "box")
    boxes = []
    for _ in range(n_obstacles):
        w, d = rng.uniform(*footprint, size=2)
        x = rng.uniform(0.5, size[0] - 0.5 - w)
        y = rng.uniform(0.5, size[1] - 0.5 - d)
        z0 = 0.0 if rng.random() < 0.8 else float(rng.uniform(0.9, 1.4))
        z1 = z0 + float(rng.uniform(0.3, 1.5))
        lo = np.round(np.array([x, y, z0]) / 0.05) * 0.05
        hi = np.round(np.array([x + w, y + d, z1]) / 0.05) * 0.05
        hi = np.maximum(hi, lo + 0.05)
        box = ObstacleBox(tuple(lo), tuple(hi), "ground", str(labels[rng.integers(len(labels))]), 1)
        boxes.append(ObstacleBox(box.min, box.max, classify_height(box), box.label, 1))
    return boxes


def box_cloud(boxes, spacing: float = 0.05):
    """Surface-free solid sampling: one point at every voxel centre inside each box."""
    pts, labels = [], []
    for box in boxes:
        lo, hi = np.asarray(box.min), np.asarray(box.max)
        axes = [np.arange(lo[k] + spacing / 2, hi[k] - 1e-9, spacing) for k in range(3)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        pts.append(grid)
        labels.extend([box.label] * len(grid))
    if not pts:
        return np.zeros((0, 3)), []
    return np.vstack(pts), labels


def demo_room(seed: int = 7):
    """Labelled 6 m x 4 m room with an open door leaf, furniture and a hanging lamp.

    Wall pieces are separated by one empty voxel so each stays a straight box.
    """
    from .voxelmap import ObstacleBox

    boxes = [
        ObstacleBox((0.0, 0.0, 0.0), (6.0, 0.1, 2.4), label="wall"),
        ObstacleBox((0.0, 3.9, 0.0), (6.0, 4.0, 2.4), label="wall"),
        ObstacleBox((5.9, 0.15, 0.0), (6.0, 1.5, 2.4), label="wall"),
        ObstacleBox((5.9, 2.5, 0.0), (6.0, 3.85, 2.4), label="wall"),
        ObstacleBox((5.3, 1.4, 0.0), (5.85, 1.45, 2.0), label="door"),
        ObstacleBox((1.5, 2.8, 0.0), (2.7, 3.6, 0.75), label="table"),
        ObstacleBox((1.8, 2.3, 0.0), (2.2, 2.7, 0.45), label="chair"),
        ObstacleBox((3.5, 0.4, 0.0), (3.9, 0.8, 0.45), label="chair"),
        ObstacleBox((3.2, 1.8, 1.6), (3.6, 2.2, 1.9), label="lamp"),
        ObstacleBox((4.5, 3.3, 0.0), (5.3, 3.8, 1.2), label="cabinet"),
        ObstacleBox((0.6, 0.6, 0.0), (0.9, 0.9, 0.3), label="box"),
    ]
    rng = np.random.default_rng(seed)
    pts, labels = box_cloud(boxes)
    pts = pts + rng.uniform(-0.01, 0.01, size=pts.shape)
    return pts, labels


def fixes_from_truth(truth: Trajectory, rate: float = 1.0, position_sigma: float = 0.05,
                     yaw_sigma: float = 0.02, confidence: float = 0.9, seed: int = 11, start: float = 0.5):
    """Absolute pose fixes sampled from ground truth with Gaussian position and yaw noise."""
    from .fusion import PoseFix

    if not rate > 0:
        raise ValidationError("fix rate must be positive")
    rng = np.random.default_rng(seed)
    times = np.arange(truth.timestamps[0] + start, truth.timestamps[-1] + 1e-9, 1.0 / rate)
    fixes = []
    for t in times:
        i = int(np.searchsorted(truth.timestamps, t))
        i = min(i, len(truth) - 1)
        pos = truth.positions[i] + position_sigma * rng.standard_normal(3) * np.array([1.0, 1.0, 0.0])
        q = ahrs.multiply(ahrs.from_yaw(yaw_sigma * rng.standard_normal()), truth.orientations[i])
        fixes.append(PoseFix(float(truth.timestamps[i]), pos, q, confidence))
    return fixes


def static_trajectory(duration: float = 10.0, rate: float = 100.0, position=(0.0, 0.0, 0.0),
                      orientation=ahrs.IDENTITY) -> Trajectory:
    """A foot resting at one pose for ``duration`` seconds."""
    if not duration > 0 or rate < 50:
        raise ValidationError("need duration > 0 and rate >= 50 Hz")
    n = int(math.floor(duration * rate + 1e-9)) + 1
    t = np.arange(n) / rate
    return Trajectory(t, np.tile(np.asarray(position, float), (n, 1)),
                      np.tile(ahrs.normalize(orientation), (n, 1)))
