import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal
from scipy.integrate import cumulative_trapezoid

from footnav import ahrs
from footnav import simharness as sh
from footnav.ahrs import GRAVITY, ImuSample
from footnav.deadreckon import (
    OnlineTracker,
    StepCompleted,
    TrackerConfig,
    _make_segment,
    bandpass_magnitude,
    detect_stance,
    integrate_segment,
    run_offline,
    run_online,
    transfer_gain,
    zupt_correct,
)
from footnav.errors import NoStanceError, ValidationError


def stream(accel_fn, seconds, rate=100.0):
    t = np.arange(int(seconds * rate)) / rate
    return [ImuSample(float(ti), accel_fn(ti), (0.0, 0.0, 0.0)) for ti in t]


def steady_amplitude(series, rate, settle):
    return float(np.max(np.abs(series[int(settle * rate):])))


# --- band-pass -----------------------------------------------------------------


def test_constant_gravity_is_rejected(cfg):
    out = bandpass_magnitude(stream(lambda t: (0.0, 0.0, 9.81), 60.0), cfg)
    assert np.all(out[int(5 / cfg.hp_cutoff * cfg.sample_rate):] < 1e-3)


@pytest.mark.parametrize("freq", [2.0, 40.0])
def test_sinusoid_gain_matches_transfer_function(cfg, freq):
    out = bandpass_magnitude(stream(lambda t: (0.0, 0.0, GRAVITY + math.sin(2 * math.pi * freq * t)), 60.0), cfg)
    # independent design: first-order Butterworth sections from scipy
    hp = signal.butter(1, cfg.hp_cutoff, "highpass", fs=cfg.sample_rate)
    lp = signal.butter(1, cfg.lp_cutoff, "lowpass", fs=cfg.sample_rate)
    _, h1 = signal.freqz(*hp, worN=[freq], fs=cfg.sample_rate)
    _, h2 = signal.freqz(*lp, worN=[freq], fs=cfg.sample_rate)
    oracle = abs(h1[0] * h2[0])
    assert transfer_gain(cfg, freq) == pytest.approx(oracle, rel=1e-9)
    assert steady_amplitude(out, cfg.sample_rate, 50.0) == pytest.approx(oracle, rel=0.15)


def test_bandpass_input_validation(cfg):
    with pytest.raises(ValidationError):
        bandpass_magnitude([], cfg)
    with pytest.raises(ValidationError):
        bandpass_magnitude(stream(lambda t: (0, 0, 9.8), 0.01), cfg)
    samples = stream(lambda t: (0, 0, 9.8), 1.0)
    samples[50] = ImuSample(samples[50].t + 0.004, samples[50].accel, samples[50].gyro)
    with pytest.raises(ValidationError, match="sample 50"):
        bandpass_magnitude(samples, cfg)


def test_config_validation():
    with pytest.raises(ValidationError):
        TrackerConfig(hp_cutoff=6.0)
    with pytest.raises(ValidationError):
        TrackerConfig(lp_cutoff=60.0)
    with pytest.raises(ValidationError):
        TrackerConfig(stance_threshold=0.0)
    with pytest.raises(ValidationError):
        TrackerConfig(filter="kalman")


# --- stance detection ---------------------------------------------------------


def test_all_quiet_is_one_interval(cfg):
    assert detect_stance(np.zeros(200), cfg) == [(0, 199)]


def test_quiet_loud_quiet(cfg):
    sig = np.concatenate([np.zeros(50), np.ones(70), np.zeros(50)])
    assert detect_stance(sig, cfg) == [(0, 49), (120, 169)]


def test_empty_and_short_runs(cfg):
    assert detect_stance(np.zeros(0), cfg) == []
    sig = np.ones(100)
    sig[40:49] = 0.0  # nine quiet samples is one short of the minimum
    assert detect_stance(sig, cfg) == []


@settings(max_examples=60)
@given(st.lists(st.booleans(), min_size=0, max_size=300))
def test_stance_intervals_are_maximal_quiet_runs(bits):
    cfg = TrackerConfig()
    sig = np.where(np.array(bits, dtype=bool), 0.0, 1.0)
    runs = detect_stance(sig, cfg)
    for (s, e), nxt in zip(runs, runs[1:] + [None]):
        assert e - s + 1 >= cfg.min_stance_samples
        assert np.all(sig[s:e + 1] < cfg.stance_threshold)
        assert s == 0 or sig[s - 1] >= cfg.stance_threshold
        assert e == len(sig) - 1 or sig[e + 1] >= cfg.stance_threshold
        if nxt is not None:
            assert nxt[0] > e + 1


# --- integration --------------------------------------------------------------


def _level_stream(earth_accel_fn, t):
    return [ImuSample(float(ti), np.asarray(earth_accel_fn(ti)) + [0, 0, GRAVITY], (0, 0, 0)) for ti in t]


def test_zero_accel_integrates_to_zero(cfg):
    t = np.arange(100) / 100
    samples = _level_stream(lambda _: (0.0, 0.0, 0.0), t)
    v, p = integrate_segment(samples, np.tile(ahrs.IDENTITY, (100, 1)), 0, 99, cfg)
    assert np.abs(v).max() < 1e-12 and np.abs(p).max() < 1e-12


def test_constant_accel_kinematics(cfg):
    a = np.array([0.3, -0.2, 0.1])
    t = np.arange(101) / 100
    samples = _level_stream(lambda _: a, t)
    v, p = integrate_segment(samples, np.tile(ahrs.IDENTITY, (101, 1)), 0, 100, cfg)
    assert np.allclose(v[-1], a * 1.0, rtol=0.005)
    assert np.allclose(p[-1], 0.5 * a * 1.0, rtol=0.005)


def test_smooth_accel_against_oversampled_integration(cfg):
    def accel(t):
        return np.array([math.sin(3 * t) + 0.5 * math.cos(7 * t), math.cos(2 * t), 0.3 * math.sin(11 * t) + 0.2])

    t = np.arange(151) / 100
    samples = _level_stream(accel, t)
    _, p = integrate_segment(samples, np.tile(ahrs.IDENTITY, (151, 1)), 0, 150, cfg)
    fine = np.linspace(0, 1.5, 150 * 100 + 1)
    a_fine = np.array([accel(x) for x in fine])
    v_ref = cumulative_trapezoid(a_fine, fine, axis=0, initial=0)
    p_ref = cumulative_trapezoid(v_ref, fine, axis=0, initial=0)[-1]
    assert np.linalg.norm(p[-1] - p_ref) < 0.01 * np.linalg.norm(p_ref)


def test_integrate_segment_bounds(cfg):
    samples = _level_stream(lambda _: (0, 0, 0), np.arange(10) / 100)
    with pytest.raises(IndexError):
        integrate_segment(samples, np.tile(ahrs.IDENTITY, (10, 1)), 5, 10, cfg)


# --- zero-velocity correction -------------------------------------------------


def _swing_accel(t, duration):
    """Min-jerk displacement of 0.5 m along x: a(t) = d^2/dt^2 of 0.5*(10s^3-15s^4+6s^5)."""
    s = t / duration
    return np.stack([0.5 * (60 * s - 180 * s ** 2 + 120 * s ** 3) / duration ** 2, 0 * s, 0 * s], axis=1)


def test_zero_residual_is_identity():
    t = np.arange(41) / 100
    seg = _make_segment(_swing_accel(t, 0.4), t, 0, np.zeros(3), correct=False)
    seg.raw_velocity[-1] = 0.0
    out = zupt_correct(seg)
    assert np.array_equal(out.corrected_velocity, seg.raw_velocity)
    assert np.allclose(out.corrected_positions, seg.corrected_positions, atol=1e-15)


def test_constant_bias_removal_closed_form():
    # raw velocity b*t, ramp b*T*(t/T): the ramp integrates to b*T^2/2 exactly
    b, duration = np.array([0.02, -0.01, 0.005]), 0.6
    t = np.arange(61) / 100
    earth = np.tile(b, (61, 1))
    raw = _make_segment(earth, t, 0, np.zeros(3), correct=False)
    fixed = zupt_correct(raw)
    expected = raw.corrected_positions[-1] - b * duration ** 2 / 2
    assert np.abs(fixed.corrected_positions[-1] - expected).max() < 1e-9


def test_corrected_segments_end_at_rest(staircase, cfg):
    _, _, samples = staircase
    tracker = OnlineTracker(cfg)
    ends = []
    for s in samples:
        ends += [ev.segment for ev in tracker.push(s) if isinstance(ev, StepCompleted) and ev.segment.corrected]
    assert len(ends) == 60
    for seg in ends:
        assert np.array_equal(seg.corrected_velocity[-1], np.zeros(3))
        assert len(seg.t) == len(seg) == seg.end_idx - seg.start_idx + 1


@settings(max_examples=40)
@given(bias=st.floats(1e-4, 0.5), duration=st.sampled_from([0.3, 0.4, 0.6, 0.8]),
       axis=st.sampled_from([0, 1, 2]))
def test_correction_beats_raw_for_any_bias(bias, duration, axis):
    n = int(round(duration * 100))
    t = np.arange(n + 1) / 100
    true = _make_segment(_swing_accel(t, duration), t, 0, np.zeros(3), correct=False).corrected_positions[-1]
    biased = _swing_accel(t, duration)
    biased[:, axis] += bias
    raw = _make_segment(biased, t, 0, np.zeros(3), correct=False)
    fixed = zupt_correct(raw)
    assert np.linalg.norm(fixed.corrected_positions[-1] - true) < np.linalg.norm(raw.corrected_positions[-1] - true)


# --- offline tracking -----------------------------------------------------------


def test_static_stream_stays_put(cfg):
    truth = sh.static_trajectory(10.0)
    samples = sh.synth_imu(truth, sh.NoiseModel(accel_sigma=0.02, seed=3))
    traj = run_offline(samples, cfg)
    assert np.linalg.norm(traj.positions[-1] - traj.positions[0]) < 1e-3
    assert traj.step_boundaries == []


def test_staircase_rmse_and_compensation_contrast(staircase, cfg):
    _, truth, samples = staircase
    good = sh.evaluate(run_offline(samples, cfg), truth)
    raw = sh.evaluate(run_offline(samples, cfg, zupt=False), truth)
    assert good["rmse"] < 0.5
    assert raw["endpoint_error"] >= 100 * good["endpoint_error"]


def test_no_stance_raises_with_hint(cfg):
    samples = stream(lambda t: (0.0, 0.0, GRAVITY + 3.0 * math.sin(2 * math.pi * 1.5 * t)), 5.0)
    with pytest.raises(NoStanceError, match="stance_threshold"):
        run_offline(samples, cfg)
    with pytest.raises(NoStanceError):
        run_online(samples, cfg)


def test_offline_is_deterministic(corridor, cfg):
    _, _, samples = corridor
    a, b = run_offline(samples, cfg), run_offline(samples, cfg)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.orientations, b.orientations)


def test_madgwick_front_end_tracks_too(corridor):
    _, truth, samples = corridor
    traj = run_offline(samples, TrackerConfig(filter="madgwick"))
    assert sh.evaluate(traj, truth)["rmse"] < 0.1


# --- online tracking ------------------------------------------------------------


@pytest.mark.parametrize("name", ["corridor", "staircase"])
def test_online_equals_offline(name, cfg, request):
    _, _, samples = request.getfixturevalue(name)
    off, on = run_offline(samples, cfg), run_online(samples, cfg)
    assert np.abs(off.positions - on.positions).max() <= 1e-9
    assert np.array_equal(off.orientations, on.orientations)
    assert off.step_boundaries == on.step_boundaries


def test_static_stream_emits_no_steps(cfg):
    tracker = OnlineTracker(cfg)
    events = []
    for s in sh.synth_imu(sh.static_trajectory(5.0), sh.NoiseModel(accel_sigma=0.02)):
        events += tracker.push(s)
    events += tracker.finish()
    assert not any(isinstance(ev, StepCompleted) for ev in events)


def test_step_latency_after_footfall(cfg):
    truth = sh.gen_trajectory(sh.Scenario(kind="corridor", length=1.0))
    samples = sh.synth_imu(truth)
    tracker = OnlineTracker(cfg)
    emitted = []
    for i, s in enumerate(samples):
        if any(isinstance(ev, StepCompleted) and ev.segment.corrected for ev in tracker.push(s)):
            emitted.append(i)
    assert len(emitted) == len(truth.step_boundaries) == 2
    for landed, at in zip(truth.step_boundaries, emitted):
        assert at - landed <= cfg.min_stance_samples + 2


def test_out_of_order_sample_leaves_state_unchanged(corridor, cfg):
    _, _, samples = corridor
    ref = OnlineTracker(cfg)
    tracker = OnlineTracker(cfg)
    ref_events, events = [], []
    for i, s in enumerate(samples[:400]):
        if i == 250:
            with pytest.raises(ValidationError):
                tracker.push(ImuSample(samples[200].t, s.accel, s.gyro))
        ref_events += ref.push(s)
        events += tracker.push(s)
    assert len(ref_events) == len(events)
    assert all(np.array_equal(a.position, b.position) for a, b in zip(ref_events, events) if hasattr(a, "position"))


def test_online_memory_is_bounded_by_step_length(cfg):
    peaks = []
    for length in (3.0, 12.0):
        samples = sh.synth_imu(sh.gen_trajectory(sh.Scenario(kind="corridor", length=length)))
        tracker = OnlineTracker(cfg)
        peak = 0
        for s in samples:
            tracker.push(s)
            peak = max(peak, tracker.buffered)
        peaks.append(peak)
    scenario = sh.Scenario()
    step_samples = round((scenario.swing_time + scenario.stance_time) * cfg.sample_rate)
    assert peaks[0] == peaks[1]
    assert peaks[1] <= max(step_samples, cfg.init_samples)
