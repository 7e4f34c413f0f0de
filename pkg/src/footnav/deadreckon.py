"""Foot-mounted strapdown dead reckoning with zero-velocity updates.

The accelerometer magnitude is band-passed (first-order bilinear high-pass
then low-pass) and the foot is declared stationary wherever the result
stays below ``stance_threshold`` for at least ``min_stance_duration``.
Each swing between two stances is integrated from rest, the residual
velocity at the next footfall is removed as a linear ramp and the
position is re-integrated. Position is frozen during stance.

The same per-sample machinery drives :func:`run_offline` and
:class:`OnlineTracker`, so both produce bit-identical trajectories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from math import pi, sqrt, tan

import numpy as np

from . import ahrs
from .ahrs import ImuSample
from .errors import NoStanceError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackerConfig:
    sample_rate: float = 100.0
    hp_cutoff: float = 0.1
    lp_cutoff: float = 5.0
    stance_threshold: float = 0.05 * ahrs.GRAVITY
    min_stance_duration: float = 0.1
    g: float = ahrs.GRAVITY
    init_duration: float = 0.5
    stance_guard: float = 0.05
    filter: str = "mahony"
    kp: float = 0.5
    ki: float = 0.0
    beta: float = 0.1

    def __post_init__(self):
        if not (0 < self.hp_cutoff < self.lp_cutoff < self.sample_rate / 2):
            raise ValidationError(
                "cutoffs must satisfy 0 < hp_cutoff < lp_cutoff < sample_rate/2 "
                f"(got {self.hp_cutoff}, {self.lp_cutoff}, rate {self.sample_rate})"
            )
        if not self.stance_threshold > 0:
            raise ValidationError("stance_threshold must be positive")
        if not self.min_stance_duration > 0:
            raise ValidationError("min_stance_duration must be positive")
        if not self.g > 0:
            raise ValidationError("g must be positive")
        if self.stance_guard < 0:
            raise ValidationError("stance_guard must be non-negative")
        if self.init_duration < 0:
            raise ValidationError("init_duration must be non-negative")
        if self.filter not in ahrs.FILTERS:
            raise ValidationError(f"unknown filter {self.filter!r}; choose from {sorted(ahrs.FILTERS)}")
        if min(self.kp, self.ki, self.beta) < 0:
            raise ValidationError("filter gains must be non-negative")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def min_stance_samples(self) -> int:
        return max(1, int(round(self.min_stance_duration * self.sample_rate)))

    @property
    def guard_samples(self) -> int:
        return int(round(self.stance_guard * self.sample_rate))

    @property
    def init_samples(self) -> int:
        return max(1, int(round(self.init_duration * self.sample_rate)))


@dataclass
class StepSegment:
    """One swing, from the last stance sample to the first sample of the next stance.

    ``corrected_positions`` are relative to ``origin`` (the frozen stance
    position the swing starts from). Partial swings at the stream edges are
    left uncorrected and carry ``corrected=False``.
    """

    start_idx: int
    end_idx: int
    t: np.ndarray
    raw_velocity: np.ndarray
    corrected_velocity: np.ndarray
    corrected_positions: np.ndarray
    residual_velocity: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    corrected: bool = False

    def __len__(self):
        return self.end_idx - self.start_idx + 1

    @property
    def end_position(self):
        return self.origin + self.corrected_positions[-1]


@dataclass
class Trajectory:
    timestamps: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    step_boundaries: list = field(default_factory=list)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.orientations = np.asarray(self.orientations, dtype=float).reshape(-1, 4)
        n = len(self.timestamps)
        if len(self.positions) != n or len(self.orientations) != n:
            raise ValidationError("trajectory fields must have equal lengths")
        if n > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValidationError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    def path_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())


# --- band-pass stance detection -------------------------------------------


class BandpassFilter:
    """Cascaded first-order high-pass and low-pass (bilinear, prewarped).

    State starts as if the input had been constant at its first value
    forever, so a static start yields zero output immediately.
    """

    def __init__(self, cfg: TrackerConfig):
        self.hp_b, self.hp_a = _first_order(cfg.hp_cutoff, cfg.sample_rate, highpass=True)
        self.lp_b, self.lp_a = _first_order(cfg.lp_cutoff, cfg.sample_rate, highpass=False)
        self._primed = False
        self._x1 = self._hp1 = self._lp1 = 0.0

    def step(self, x: float) -> float:
        if not self._primed:
            self._x1 = x
            self._primed = True
        hp = self.hp_b[0] * x + self.hp_b[1] * self._x1 - self.hp_a * self._hp1
        lp = self.lp_b[0] * hp + self.lp_b[1] * self._hp1 - self.lp_a * self._lp1
        self._x1, self._hp1, self._lp1 = x, hp, lp
        return lp


def _first_order(cutoff, rate, highpass):
    k = tan(pi * cutoff / rate)
    a1 = (k - 1.0) / (k + 1.0)
    if highpass:
        b = (1.0 / (1.0 + k), -1.0 / (1.0 + k))
    else:
        b = (k / (1.0 + k), k / (1.0 + k))
    return b, a1


def transfer_gain(cfg: TrackerConfig, freq: float) -> float:
    """|H(e^{jw})| of the band-pass cascade at ``freq`` Hz."""
    z = np.exp(1j * 2 * pi * freq / cfg.sample_rate)
    gain = 1.0 + 0j
    for highpass, cutoff in ((True, cfg.hp_cutoff), (False, cfg.lp_cutoff)):
        b, a1 = _first_order(cutoff, cfg.sample_rate, highpass)
        gain *= (b[0] + b[1] / z) / (1.0 + a1 / z)
    return float(abs(gain))


def _as_arrays(samples):
    if isinstance(samples, tuple) and len(samples) == 3:
        t, acc, gyr = (np.asarray(a, dtype=float) for a in samples)
        return t, acc.reshape(-1, 3), gyr.reshape(-1, 3)
    samples = list(samples)
    if not samples:
        return np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))
    t = np.array([s.t for s in samples], dtype=float)
    acc = np.array([s.accel for s in samples], dtype=float)
    gyr = np.array([s.gyro for s in samples], dtype=float)
    return t, acc, gyr


def _check_gap(t_prev, t_cur, idx, cfg):
    gap = t_cur - t_prev
    if not gap > 0:
        raise ValidationError(f"timestamps not increasing at sample {idx} (t={t_cur!r} after {t_prev!r})")
    if abs(gap - cfg.dt) > 0.01 * cfg.dt:
        raise ValidationError(
            f"non-uniform sampling at sample {idx}: gap {gap:.6g} s between t={t_prev!r} and t={t_cur!r}, "
            f"expected {cfg.dt:.6g} s"
        )


def validate_stream(t, acc, gyr, cfg):
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(acc)) and np.all(np.isfinite(gyr))):
        raise ValidationError("IMU stream contains non-finite values")
    for i in range(1, len(t)):
        _check_gap(t[i - 1], t[i], i, cfg)


def bandpass_magnitude(samples, cfg: TrackerConfig) -> np.ndarray:
    t, acc, gyr = _as_arrays(samples)
    if len(t) < 2:
        raise ValidationError("band-pass needs at least 2 samples")
    validate_stream(t, acc, gyr, cfg)
    filt = BandpassFilter(cfg)
    mags = np.sqrt(np.einsum("ij,ij->i", acc, acc)) - cfg.g
    return np.array([abs(filt.step(float(m))) for m in mags])


def detect_stance(filtered, cfg: TrackerConfig) -> list[tuple[int, int]]:
    """Inclusive ``(start, end)`` index runs below threshold of sufficient length."""
    filtered = np.asarray(filtered, dtype=float)
    quiet = filtered < cfg.stance_threshold
    need = cfg.min_stance_samples
    out = []
    i, n = 0, len(quiet)
    while i < n:
        if not quiet[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and quiet[j + 1]:
            j += 1
        if j - i + 1 >= need:
            out.append((i, j))
        i = j + 1
    return out


# --- integration and zero-velocity correction ------------------------------


def _trapz(values, t):
    """Cumulative trapezoidal integral of an (L, 3) series starting at zero."""
    out = np.zeros_like(values)
    acc = np.zeros(3)
    for i in range(1, len(values)):
        acc = acc + (values[i - 1] + values[i]) * (0.5 * (t[i] - t[i - 1]))
        out[i] = acc
    return out


def integrate_segment(samples, orientations, start, end, cfg: TrackerConfig):
    """Velocity and position over ``[start, end]`` from rest at the origin."""
    t, acc, _ = _as_arrays(samples)
    orientations = np.asarray(orientations, dtype=float)
    if not (0 <= start < end < len(t)) or len(orientations) != len(t):
        raise IndexError(f"segment [{start}, {end}] outside stream of {len(t)} samples")
    earth = np.array([ahrs.earth_accel(orientations[i], acc[i], cfg.g) for i in range(start, end + 1)])
    return _integrate_earth(earth, t[start:end + 1])


def _integrate_earth(earth, t):
    v = _trapz(earth, t)
    p = _trapz(v, t)
    return v, p


def zupt_correct(segment: StepSegment) -> StepSegment:
    """Remove the residual end velocity as a linear ramp and re-integrate position."""
    t = segment.t
    duration = t[-1] - t[0]
    if not duration > 0:
        raise ValidationError("segment duration must be positive")
    residual = segment.raw_velocity[-1]
    ramp = ((t - t[0]) / duration)[:, None] * residual[None, :]
    v = segment.raw_velocity - ramp
    v[-1] = 0.0
    p = _trapz(v, t)
    return replace(segment, corrected_velocity=v, corrected_positions=p, residual_velocity=residual.copy(),
                   corrected=True)


def _make_segment(earth, t, start, origin, correct):
    v, p = _integrate_earth(earth, t)
    seg = StepSegment(
        start_idx=start,
        end_idx=start + len(t) - 1,
        t=np.array(t, dtype=float),
        raw_velocity=v,
        corrected_velocity=v.copy(),
        corrected_positions=p,
        residual_velocity=v[-1].copy(),
        origin=np.array(origin, dtype=float),
        corrected=False,
    )
    return zupt_correct(seg) if correct else seg


# --- shared per-sample front end -----------------------------------------


class _FrontEnd:
    """Causal per-sample processing: band-pass, quiet flag, orientation, earth accel."""

    def __init__(self, cfg: TrackerConfig, q0):
        self.cfg = cfg
        self.filt = BandpassFilter(cfg)
        self.q = np.asarray(q0, dtype=float)
        self.integral = np.zeros(3)
        self.t_prev = None
        self.quiet_run = 0

    def step(self, t, acc, gyr):
        cfg = self.cfg
        m = sqrt(float(acc @ acc)) - cfg.g
        level = abs(self.filt.step(m))
        quiet = level < cfg.stance_threshold
        self.quiet_run = self.quiet_run + 1 if quiet else 0
        if self.t_prev is not None:
            # accelerometer feedback only inside a confirmed stance and while the
            # unfiltered magnitude agrees with gravity (the band-pass lags swing onset)
            still = self.quiet_run >= cfg.min_stance_samples and abs(m) < cfg.stance_threshold
            dt = t - self.t_prev
            if cfg.filter == "mahony":
                kp, ki = (cfg.kp, cfg.ki) if still else (0.0, 0.0)
                self.q, self.integral = ahrs._mahony_step(self.q, self.integral, gyr, acc, dt, kp, ki, cfg.g)
            else:
                self.q = ahrs._madgwick_step(self.q, gyr, acc, dt, cfg.beta if still else 0.0, cfg.g)
        self.t_prev = t
        return level, quiet, self.q, ahrs.earth_accel(self.q, acc, cfg.g)


def initial_orientation(acc_window):
    return ahrs.tilt_from_accel(np.mean(np.asarray(acc_window, dtype=float), axis=0))


# --- offline ---------------------------------------------------------------


def run_offline(samples, cfg: TrackerConfig, zupt: bool = True) -> Trajectory:
    t, acc, gyr = _as_arrays(samples)
    if len(t) < 2:
        raise ValidationError("need at least 2 samples")
    validate_stream(t, acc, gyr, cfg)
    n = len(t)
    front = _FrontEnd(cfg, initial_orientation(acc[: cfg.init_samples]))
    levels = np.empty(n)
    quats = np.empty((n, 4))
    earth = np.empty((n, 3))
    for i in range(n):
        levels[i], _, quats[i], earth[i] = front.step(t[i], acc[i], gyr[i])

    stances = detect_stance(levels, cfg)
    if zupt and not stances:
        raise NoStanceError(
            "no stationary interval detected; try raising stance_threshold "
            f"(now {cfg.stance_threshold:.4g} m/s^2) or lowering min_stance_duration"
        )
    if not zupt:
        _, p = _integrate_earth(earth, t)
        return Trajectory(t, p, quats, [s for s, _ in stances])

    positions = np.zeros((n, 3))
    boundaries = []
    cursor = np.zeros(3)
    prev_end = None
    for s, e in stances:
        if prev_end is None:
            if s > 0:
                seg = _make_segment(earth[: s + 1], t[: s + 1], 0, cursor, correct=False)
                positions[: s + 1] = seg.origin + seg.corrected_positions
                cursor = positions[s].copy()
        else:
            seg = _make_segment(earth[prev_end: s + 1], t[prev_end: s + 1], prev_end, cursor, correct=True)
            positions[prev_end: s + 1] = seg.origin + seg.corrected_positions
            cursor = positions[s].copy()
            boundaries.append(s)
        positions[s: e + 1] = cursor
        # the foot starts moving a few samples before the detector notices
        prev_end = e if e == n - 1 else max(s, e - cfg.guard_samples)
    if prev_end < n - 1:
        seg = _make_segment(earth[prev_end:], t[prev_end:], prev_end, cursor, correct=False)
        positions[prev_end:] = seg.origin + seg.corrected_positions
    return Trajectory(t, positions, quats, boundaries)


# --- online ----------------------------------------------------------------


@dataclass
class ProvisionalPose:
    idx: int
    t: float
    position: np.ndarray
    orientation: np.ndarray
    in_stance: bool


@dataclass
class StepCompleted:
    segment: StepSegment


@dataclass
class StanceConfirmed:
    """Samples ``start_idx .. confirmed_idx`` are stationary at ``position``."""

    start_idx: int
    confirmed_idx: int
    position: np.ndarray


class OnlineTracker:
    """Streaming tracker that corrects each swing as soon as the next stance is confirmed.

    Memory is bounded by the samples of the current swing plus the pending
    quiet run; stance samples are dropped as they arrive.
    """

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self._n = 0
        self._t_last = None
        self._init = []  # (t, acc, gyr) until the orientation window is full
        self._front = None
        # buffered swing samples: index, t, earth accel
        self._buf_t = []
        self._buf_e = []
        self._seg_start = 0
        self._cursor = np.zeros(3)
        self._in_stance = False
        self._seen_stance = False
        self._run_start = None
        self._run_len = 0
        self._stance_start = 0
        self._v = np.zeros(3)
        self._p = np.zeros(3)
        self.steps = 0

    @property
    def seen_stance(self) -> bool:
        return self._seen_stance

    @property
    def buffered(self) -> int:
        return len(self._buf_t) + len(self._init)

    def push(self, sample: ImuSample) -> list:
        t = float(sample.t)
        acc = np.asarray(sample.accel, dtype=float)
        gyr = np.asarray(sample.gyro, dtype=float)
        if not (np.isfinite(t) and np.all(np.isfinite(acc)) and np.all(np.isfinite(gyr))):
            raise ValidationError("non-finite IMU sample")
        if self._t_last is not None:
            _check_gap(self._t_last, t, self._n, self.cfg)
        self._t_last = t
        self._n += 1
        if self._front is None:
            self._init.append((t, acc, gyr))
            if len(self._init) < self.cfg.init_samples:
                return []
            return self._drain_init()
        return self._process(self._n - 1, t, acc, gyr)

    def finish(self) -> list:
        events = []
        if self._front is None and self._init:
            events.extend(self._drain_init())
        if self._buf_t and not self._in_stance and len(self._buf_t) > 1:
            seg = _make_segment(np.array(self._buf_e), np.array(self._buf_t), self._seg_start, self._cursor,
                                correct=False)
            events.append(StepCompleted(seg))
        self._buf_t, self._buf_e = [], []
        return events

    def _drain_init(self):
        window = self._init
        self._init = []
        self._front = _FrontEnd(self.cfg, initial_orientation([a for _, a, _ in window]))
        events = []
        base = self._n - len(window)
        for k, (t, acc, gyr) in enumerate(window):
            events.extend(self._process(base + k, t, acc, gyr))
        return events

    def _process(self, idx, t, acc, gyr):
        cfg = self.cfg
        _, quiet, q, e = self._front.step(t, acc, gyr)
        events = []
        if self._in_stance:
            if quiet:
                self._keep_stance_tail(idx, t, e)
                return [ProvisionalPose(idx, t, self._cursor.copy(), q, True)]
            self._in_stance = False
            self._run_start, self._run_len = None, 0
            # restart the provisional integration at the guarded swing start
            self._v = np.zeros(3)
            self._p = np.zeros(3)
            for i in range(1, len(self._buf_t)):
                self._advance(self._buf_t[i - 1], self._buf_e[i - 1], self._buf_t[i], self._buf_e[i])

        if self._buf_t:
            self._advance(self._buf_t[-1], self._buf_e[-1], t, e)
        self._buf_t.append(t)
        self._buf_e.append(e)

        if quiet:
            if self._run_start is None:
                self._run_start, self._run_len = idx, 0
            self._run_len += 1
        else:
            self._run_start, self._run_len = None, 0

        if self._run_len >= cfg.min_stance_samples:
            s = self._run_start
            k = s - self._seg_start + 1
            if s > self._seg_start:
                seg = _make_segment(np.array(self._buf_e[:k]), np.array(self._buf_t[:k]), self._seg_start,
                                    self._cursor, correct=self._seen_stance)
                self._cursor = seg.end_position.copy()
                events.append(StepCompleted(seg))
                if seg.corrected:
                    self.steps += 1
            events.append(StanceConfirmed(s, idx, self._cursor.copy()))
            self._seen_stance = True
            self._in_stance = True
            self._stance_start = s
            tail_t, tail_e = self._buf_t[k - 1:], self._buf_e[k - 1:]
            self._buf_t, self._buf_e = [], []
            for i, (tt, ee) in enumerate(zip(tail_t, tail_e)):
                self._keep_stance_tail(s + i, tt, ee)
            events.append(ProvisionalPose(idx, t, self._cursor.copy(), q, True))
            return events

        events.append(ProvisionalPose(idx, t, self._cursor + self._p, q, False))
        return events

    def _keep_stance_tail(self, idx, t, e):
        self._buf_t.append(t)
        self._buf_e.append(e)
        keep = min(self.cfg.guard_samples + 1, idx - self._stance_start + 1)
        if len(self._buf_t) > keep:
            del self._buf_t[:-keep]
            del self._buf_e[:-keep]
        self._seg_start = idx - len(self._buf_t) + 1

    def _advance(self, t0, e0, t1, e1):
        dt = t1 - t0
        v_new = self._v + (e0 + e1) * (0.5 * dt)
        self._p = self._p + (self._v + v_new) * (0.5 * dt)
        self._v = v_new


def online_tracker_push(tracker: OnlineTracker, sample: ImuSample) -> list:
    return tracker.push(sample)


def run_online(samples, cfg: TrackerConfig) -> Trajectory:
    """Feed a stream through :class:`OnlineTracker` and stitch its events into a trajectory."""
    tracker = OnlineTracker(cfg)
    ts, pos, quats, boundaries = [], [], [], []

    def apply(events):
        for ev in events:
            if isinstance(ev, ProvisionalPose):
                ts.append(ev.t)
                pos.append(ev.position)
                quats.append(ev.orientation)
            elif isinstance(ev, StanceConfirmed):
                for k in range(ev.start_idx, min(ev.confirmed_idx, len(pos) - 1) + 1):
                    pos[k] = ev.position
            else:
                seg = ev.segment
                absolute = seg.origin + seg.corrected_positions
                for k in range(len(seg)):
                    pos[seg.start_idx + k] = absolute[k]
                if seg.corrected:
                    boundaries.append(seg.end_idx)

    t, acc, gyr = _as_arrays(samples)
    for i in range(len(t)):
        apply(tracker.push(ImuSample(t[i], acc[i], gyr[i])))
    apply(tracker.finish())
    if not tracker.seen_stance:
        raise NoStanceError(
            "no stationary interval detected; try raising stance_threshold "
            f"(now {cfg.stance_threshold:.4g} m/s^2) or lowering min_stance_duration"
        )
    return Trajectory(ts, pos, quats, boundaries)
