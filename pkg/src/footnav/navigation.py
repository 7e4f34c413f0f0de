"""Closed-loop navigation: online dead reckoning, pose-fix fusion, planning and a transcript."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ahrs, fusion, planner
from .config import AppConfig
from .deadreckon import OnlineTracker, ProvisionalPose, StanceConfirmed, StepCompleted, Trajectory
from .errors import NoPathError, ValidationError
from .voxelmap import ObstacleBox, connected_components, sparse_conv, voxelize


@dataclass
class MapBundle:
    grid: object
    obstacles: list
    costmap: planner.Costmap


def build_map(points, labels, cfg: AppConfig, kernel=None, bounds=None) -> MapBundle:
    """Voxelize, optionally filter with a convolution, extract boxes and project a costmap.

    With a kernel, only sites whose first output channel is positive stay
    occupied.
    """
    grid = voxelize(points, cfg.voxel_size, labels=labels)
    if kernel is not None and len(grid):
        out = sparse_conv(grid, kernel)
        keep = out.features[:, 0] > 0
        labels_kept = None if grid.label_counts is None else tuple(
            c for c, k in zip(grid.label_counts, keep) if k)
        grid = type(grid)(grid.voxel_size, grid.origin, grid.coords[keep], grid.features[keep], labels_kept)
    boxes = connected_components(grid, cfg.connectivity, cfg.thresholds)
    costmap = planner.project_occupancy(grid, cfg.agent_height, cfg.agent_radius, cfg.step_clearance, bounds,
                                        cfg.inflation_radius)
    return MapBundle(grid, boxes, costmap)


@dataclass
class NavigationResult:
    transcript: list = field(default_factory=list)  # (t, text)
    trajectory: Trajectory | None = None
    plans: list = field(default_factory=list)
    goal: np.ndarray | None = None
    target: ObstacleBox | None = None
    arrived: bool = False
    fixes_used: int = 0
    fixes_ignored: int = 0

    def transcript_text(self) -> str:
        return "".join(f"{t:9.2f}s  {text}\n" for t, text in self.transcript)


class _DeadReckoning:
    """Stitches tracker events into a per-sample pose history."""

    def __init__(self):
        self.t, self.pos, self.quat = [], [], []

    def apply(self, events):
        for ev in events:
            if isinstance(ev, ProvisionalPose):
                self.t.append(ev.t)
                self.pos.append(np.asarray(ev.position, dtype=float))
                self.quat.append(ev.orientation)
            elif isinstance(ev, StanceConfirmed):
                for k in range(ev.start_idx, min(ev.confirmed_idx, len(self.pos) - 1) + 1):
                    self.pos[k] = ev.position
            elif isinstance(ev, StepCompleted):
                seg = ev.segment
                absolute = seg.origin + seg.corrected_positions
                for k in range(len(seg)):
                    self.pos[seg.start_idx + k] = absolute[k]

    @property
    def ready(self):
        return bool(self.pos)

    def latest(self):
        return self.pos[-1].copy(), self.quat[-1].copy()


def _plan_from(costmap, position, heading, goal, obstacles, cfg):
    start = position[:2]
    if not costmap.contains(start):
        raise NoPathError(f"current position {tuple(map(float, start))} is outside the map")
    cell = costmap.cell_of(start)
    if not costmap.traversable[cell]:
        start = planner.nearest_traversable(costmap, start)
    try:
        return planner.plan_path(costmap, start, goal, heading, obstacles)
    except ValidationError as exc:
        raise NoPathError(str(exc)) from None


def run_navigation(samples, fixes, bundle: MapBundle, cfg: AppConfig, goal=None, find: str | None = None,
                   ) -> NavigationResult:
    """Stream IMU samples and fixes (time ordered) through tracking, fusion and planning.

    Planning starts at the first fix. A new plan is made whenever a fix
    leaves the fused position more than ``agent_radius + cell_size`` from
    the current route.
    """
    if (goal is None) == (find is None):
        raise ValidationError("give exactly one of goal or find")
    costmap, obstacles = bundle.costmap, bundle.obstacles
    result = NavigationResult()
    if find is not None:
        planner.find_object(obstacles, find, (0.0, 0.0))  # fail fast on unknown labels
    else:
        result.goal = np.asarray(goal, dtype=float)[:2]

    samples = list(samples)
    tracker = OnlineTracker(cfg.tracker())
    dr = _DeadReckoning()
    fixes = list(fixes)
    next_fix = 0
    state = anchor = plan = None
    out_t, out_p, out_q = [], [], []
    corridor = cfg.agent_radius + costmap.cell_size

    def say(t, lines):
        result.transcript.extend((t, line) for line in lines)

    def make_plan(t, reason=None):
        nonlocal plan
        heading = ahrs.yaw_of(state.orientation)
        plan = _plan_from(costmap, state.position, heading, result.goal, obstacles, cfg)
        result.plans.append((t, plan))
        if reason:
            say(t, [reason])
        say(t, plan.instructions)

    def preview():
        cur = dr.latest()
        dp, dq = fusion.relative_motion(anchor[1], anchor[0], cur[1], cur[0])
        return fusion.apply_motion(state, dp, dq), cur

    def consume_fixes(t):
        nonlocal state, anchor, next_fix
        while next_fix < len(fixes) and fixes[next_fix].t <= t and dr.ready:
            fix = fixes[next_fix]
            next_fix += 1
            if state is None:
                state = fusion.FusionState(fix.position, fix.orientation, fix.t, cfg.alpha)
                anchor = dr.latest()
                result.fixes_used += 1
                if find is not None:
                    result.target = planner.find_object(obstacles, find, state.position[:2])
                    result.goal = planner.approach_point(costmap, result.target)
                    say(fix.t, [f"heading to {result.target.label}"])
                make_plan(fix.t)
                continue
            state, anchor = preview()
            before = state
            state = fusion.apply_fix(state, fix)
            if state is before:
                result.fixes_ignored += 1
            else:
                result.fixes_used += 1
            if not result.arrived and planner.distance_to_polyline(state.position[:2], plan.waypoints) > corridor:
                make_plan(fix.t, "off route, replanning")

    def record(t):
        if state is None or not dr.ready:
            return
        pose, _ = preview()
        if out_t and t <= out_t[-1]:
            return
        out_t.append(t)
        out_p.append(pose.position)
        out_q.append(pose.orientation)
        if not result.arrived and np.linalg.norm(pose.position[:2] - result.goal) <= cfg.arrival_radius:
            result.arrived = True
            name = result.target.label if result.target is not None else "destination"
            say(t, [f"arrived at {name}"])

    for sample in samples:
        dr.apply(tracker.push(sample))
        consume_fixes(sample.t)
        record(sample.t)
    dr.apply(tracker.finish())
    if state is None:
        raise ValidationError("no pose fix overlaps the IMU stream; cannot anchor the map frame")
    # final pose after the last step correction
    pose, _ = preview()
    if out_t:
        out_p[-1], out_q[-1] = pose.position, pose.orientation
    gap = float(np.linalg.norm(pose.position[:2] - result.goal))
    if not result.arrived and gap <= cfg.arrival_radius:
        result.arrived = True
        say(out_t[-1], [f"arrived at {result.target.label if result.target is not None else 'destination'}"])
    elif not result.arrived:
        say(out_t[-1] if out_t else 0.0, [f"stream ended {gap:.1f} meters from the destination"])
    result.trajectory = Trajectory(out_t, out_p, out_q)
    return result
