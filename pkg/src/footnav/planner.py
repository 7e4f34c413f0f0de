"""Traversability costmaps, grid A* and spoken-style navigation instructions.

Path costs are kept exactly. Every 8-connected step costs
``cell_size/254 * (254 + c) * (1 or sqrt 2)``, so a path cost is
``cell_size/254 * (A + sqrt(2) B)`` for integers A and B. Relaxations compare
those pairs exactly; the heap only orders candidates by a float key, and any
node reached more cheaply later is re-expanded. The optimum pair is unique
because sqrt(2) is irrational.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import NoPathError, NotFoundError, ValidationError
from .voxelmap import ObstacleBox, SparseVoxelGrid

FREE = 0
BLOCKED = 255
MAX_INFLATED = 254
SQRT2 = math.sqrt(2.0)
TURN_STEP_DEG = 15
WARNING_DISTANCE = 1.0
# distances are multiples of cell_size; absorb their rounding at band edges
_DIST_EPS = 1e-9

# (dx, dy) in lexicographic order; diagonals flagged for the sqrt(2) term
_MOVES = tuple((dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0))


def inflation_cost(distance, inflation_radius):
    """Linear decay from 254 next to an obstacle to 1 at the inflation radius."""
    d = np.asarray(distance, dtype=float)
    if inflation_radius <= 0:
        return np.zeros(d.shape, dtype=np.uint8)
    frac = np.clip(1.0 - d / inflation_radius, 0.0, 1.0)
    cost = 1 + np.floor(253 * frac + _DIST_EPS)
    return np.where(d <= inflation_radius + _DIST_EPS, cost, FREE).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Costmap:
    """Cell ``(ix, iy)`` covers ``origin + [ix, ix+1) * cell_size`` in x (same in y)."""

    cell_size: float
    origin: np.ndarray
    blocked: np.ndarray
    agent_radius: float = 0.3
    inflation_radius: float | None = None
    distance: np.ndarray = field(default=None, repr=False)
    cost: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        blocked = np.asarray(self.blocked, dtype=bool)
        if blocked.ndim != 2 or min(blocked.shape) < 1:
            raise ValidationError("costmap dimensions must be positive")
        if not self.cell_size > 0 or self.agent_radius < 0:
            raise ValidationError("cell_size must be positive and agent_radius non-negative")
        radius = self.agent_radius if self.inflation_radius is None else self.inflation_radius
        if radius < 0:
            raise ValidationError("inflation_radius must be non-negative")
        if blocked.any():
            dist = distance_transform_edt(~blocked) * self.cell_size
        else:
            dist = np.full(blocked.shape, np.inf)
        cost = np.where(blocked, BLOCKED, inflation_cost(dist, radius)).astype(np.uint8)
        for name, value in (("blocked", blocked), ("distance", dist), ("cost", cost)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(2))
        object.__setattr__(self, "inflation_radius", float(radius))

    @property
    def width(self) -> int:
        return self.blocked.shape[0]

    @property
    def height(self) -> int:
        return self.blocked.shape[1]

    @property
    def traversable(self) -> np.ndarray:
        """Cells whose centre keeps at least agent_radius from every blocked centre."""
        return ~self.blocked & (self.distance >= self.agent_radius - _DIST_EPS)

    def cell_of(self, xy) -> tuple[int, int]:
        x, y = (np.asarray(xy, dtype=float) - self.origin) / self.cell_size
        ix, iy = math.floor(x), math.floor(y)
        if not (0 <= ix < self.width and 0 <= iy < self.height):
            raise ValidationError(f"point {tuple(float(v) for v in xy)} lies outside the costmap")
        return ix, iy

    def center(self, cell) -> np.ndarray:
        return self.origin + (np.asarray(cell, dtype=float) + 0.5) * self.cell_size

    def contains(self, xy) -> bool:
        x, y = (np.asarray(xy, dtype=float) - self.origin) / self.cell_size
        return 0 <= x < self.width and 0 <= y < self.height


def project_occupancy(grid: SparseVoxelGrid, agent_height: float, agent_radius: float,
                      step_clearance: float = 0.15, bounds=None, inflation_radius: float | None = None) -> Costmap:
    """Flatten voxels intersecting ``(step_clearance, agent_height)`` into blocked columns.

    ``bounds`` is ``(xmin, ymin, xmax, ymax)`` in metres; by default the
    occupied footprint padded by one metre. Cells align with the voxel grid.
    """
    if not agent_height > step_clearance >= 0:
        raise ValidationError("need agent_height > step_clearance >= 0")
    vs = grid.voxel_size
    ox, oy, oz = grid.origin
    z_lo = oz + grid.coords[:, 2] * vs
    in_band = (z_lo < agent_height) & (z_lo + vs > step_clearance)
    cols = grid.coords[in_band, :2]

    if bounds is None:
        if len(grid):
            lo = grid.origin[:2] + grid.coords[:, :2].min(axis=0) * vs - 1.0
            hi = grid.origin[:2] + (grid.coords[:, :2].max(axis=0) + 1) * vs + 1.0
        else:
            lo, hi = grid.origin[:2], grid.origin[:2] + 1.0
        bounds = (lo[0], lo[1], hi[0], hi[1])
    xmin, ymin, xmax, ymax = bounds
    if not (xmax > xmin and ymax > ymin):
        raise ValidationError("bounds must have positive extent")
    i0 = math.floor((xmin - ox) / vs + 1e-9)
    j0 = math.floor((ymin - oy) / vs + 1e-9)
    i1 = math.ceil((xmax - ox) / vs - 1e-9)
    j1 = math.ceil((ymax - oy) / vs - 1e-9)
    blocked = np.zeros((i1 - i0, j1 - j0), dtype=bool)
    local = cols - (i0, j0)
    keep = (local[:, 0] >= 0) & (local[:, 0] < blocked.shape[0]) & (local[:, 1] >= 0) & (local[:, 1] < blocked.shape[1])
    blocked[local[keep, 0], local[keep, 1]] = True
    origin = (ox + i0 * vs, oy + j0 * vs)
    return Costmap(vs, origin, blocked, agent_radius, inflation_radius)


# --- search ------------------------------------------------------------------


def exact_less(a, b) -> bool:
    """``a < b`` for pairs representing ``A + sqrt(2) B`` exactly."""
    da, db = a[0] - b[0], a[1] - b[1]
    if da <= 0 and db <= 0:
        return da < 0 or db < 0
    if da >= 0 and db >= 0:
        return False
    # opposite signs: compare da^2 against 2 db^2
    if da < 0:
        return da * da > 2 * db * db
    return 2 * db * db > da * da


def pair_value(pair, cell_size) -> float:
    return cell_size / MAX_INFLATED * (pair[0] + SQRT2 * pair[1])


def _octile(dx, dy):
    dx, dy = abs(dx), abs(dy)
    return (max(dx, dy) - min(dx, dy)) + SQRT2 * min(dx, dy)


def grid_search(costmap: Costmap, start, goal, heuristic: bool = True):
    """Cheapest 8-connected cell path; returns (cells, exact cost pair).

    Diagonal moves require both orthogonal neighbours traversable.
    """
    ok = costmap.traversable
    cost = costmap.cost.astype(np.int64)
    nx, ny = ok.shape
    start, goal = tuple(start), tuple(goal)
    best = {start: (0, 0)}
    parent = {start: None}
    gx, gy = goal
    # h is scaled like the pair values: step multiplier is at least 254/254
    h0 = _octile(start[0] - gx, start[1] - gy) * MAX_INFLATED if heuristic else 0.0
    heap = [(h0, start)]
    while heap:
        f, node = heapq.heappop(heap)
        g = best[node]
        gval = g[0] + SQRT2 * g[1]
        hval = _octile(node[0] - gx, node[1] - gy) * MAX_INFLATED if heuristic else 0.0
        if f > gval + hval + 1e-9 * (1 + gval):
            continue  # stale entry
        if node == goal:
            break
        x, y = node
        for dx, dy in _MOVES:
            u, v = x + dx, y + dy
            if not (0 <= u < nx and 0 <= v < ny) or not ok[u, v]:
                continue
            diagonal = dx != 0 and dy != 0
            if diagonal and not (ok[x + dx, y] and ok[x, y + dy]):
                continue
            w = MAX_INFLATED + int(cost[u, v])
            cand = (g[0], g[1] + w) if diagonal else (g[0] + w, g[1])
            old = best.get((u, v))
            if old is None or exact_less(cand, old):
                best[(u, v)] = cand
                parent[(u, v)] = node
                h = _octile(u - gx, v - gy) * MAX_INFLATED if heuristic else 0.0
                heapq.heappush(heap, (cand[0] + SQRT2 * cand[1] + h, (u, v)))
    if goal not in best:
        raise NoPathError(f"goal cell {goal} is unreachable from {start}")
    cells = [goal]
    while parent[cells[-1]] is not None:
        cells.append(parent[cells[-1]])
    return cells[::-1], best[goal]


def simplify(cells) -> list:
    """Keep endpoints and cells where the move direction changes."""
    if len(cells) <= 2:
        return list(cells)
    out = [cells[0]]
    for a, b, c in zip(cells[:-2], cells[1:-1], cells[2:]):
        if (b[0] - a[0], b[1] - a[1]) != (c[0] - b[0], c[1] - b[1]):
            out.append(b)
    out.append(cells[-1])
    return out


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass(frozen=True)
class NavPlan:
    waypoints: tuple
    total_length: float
    instructions: tuple = ()
    nearby_obstacles: tuple = ()
    cells: tuple = ()
    cost: float = 0.0

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValidationError("a plan needs at least one waypoint")
        if abs(self.total_length - polyline_length(self.waypoints)) > 1e-6:
            raise ValidationError("total_length disagrees with the waypoint polyline")

    def to_dict(self):
        return {
            "waypoints": [list(map(float, w)) for w in self.waypoints],
            "total_length": self.total_length,
            "cost": self.cost,
            "instructions": list(self.instructions),
            "warnings": [{"box": b.to_dict(), "lateral_offset": off} for b, off in self.nearby_obstacles],
        }


def plan_path(costmap: Costmap, start, goal, heading: float = 0.0, obstacles=()) -> NavPlan:
    """Plan between two points; waypoints are cell centres at direction changes."""
    cells = []
    for name, xy in (("start", start), ("goal", goal)):
        cell = costmap.cell_of(xy)
        if costmap.blocked[cell]:
            raise ValidationError(f"{name} {tuple(map(float, xy))} lies in a blocked cell")
        if not costmap.traversable[cell]:
            raise ValidationError(f"{name} {tuple(map(float, xy))} is closer than agent_radius to an obstacle")
        cells.append(cell)
    path, pair = grid_search(costmap, cells[0], cells[1])
    waypoints = tuple(tuple(costmap.center(c)) for c in simplify(path))
    plan = NavPlan(waypoints, polyline_length(waypoints), cells=tuple(path),
                   cost=pair_value(pair, costmap.cell_size))
    return with_instructions(plan, heading, obstacles)


# --- instructions ------------------------------------------------------------


def _wrap(angle):
    return (angle + math.pi) % (2 * math.pi) - math.pi


def round_turn(angle_rad) -> int:
    """Signed turn in whole degrees, rounded to the nearest 15 (left positive)."""
    deg = math.degrees(_wrap(angle_rad))
    return int(TURN_STEP_DEG * round(deg / TURN_STEP_DEG))


def segment_box_distance(a, b, lo, hi) -> float:
    """Euclidean distance between segment ab and an axis-aligned rectangle."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if _segment_hits_box(a, b, lo, hi):
        return 0.0
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    d = min(float(np.linalg.norm(p - np.clip(p, lo, hi))) for p in (a, b))
    return min(d, min(_point_segment_distance(c, a, b) for c in corners))


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + s * ab)))


def _segment_hits_box(a, b, lo, hi):
    """Slab test for the closed segment against the closed rectangle."""
    t0, t1 = 0.0, 1.0
    d = b - a
    for k in range(2):
        if d[k] == 0:
            if a[k] < lo[k] or a[k] > hi[k]:
                return False
            continue
        u, v = (lo[k] - a[k]) / d[k], (hi[k] - a[k]) / d[k]
        t0, t1 = max(t0, min(u, v)), min(t1, max(u, v))
        if t0 > t1:
            return False
    return True


def lateral_offset(a, b, box: ObstacleBox):
    """Signed distance (left positive) from leg ab to the box footprint, or None.

    None when the footprint lies entirely behind the start or beyond the end
    of the leg.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    length = float(np.linalg.norm(d))
    if length == 0:
        return None
    u = d / length
    n = np.array([-u[1], u[0]])
    lo, hi = np.asarray(box.min[:2]), np.asarray(box.max[:2])
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]]) - a
    along = corners @ u
    if along.max() < 0 or along.min() > length:
        return None
    dist = segment_box_distance(a, b, lo, hi)
    side = 1.0 if float((np.asarray(box.center[:2]) - a) @ n) >= 0 else -1.0
    return side * dist


def generate_instructions(plan: NavPlan, heading: float, obstacles=(), agent_height: float | None = None):
    """Instruction lines and (box, lateral offset) warnings for a plan.

    Execution is simulated as the user would perform it: each turn is rounded
    to 15 degrees and each distance to 0.1 m, and the next leg is aimed from
    where that leaves the user, so rounding does not accumulate.
    """
    pts = [np.asarray(w, dtype=float) for w in plan.waypoints]
    if not pts:
        raise ValidationError("plan has no waypoints")
    boxes = [b for b in obstacles if agent_height is None or b.min[2] < agent_height]
    lines, nearby = [], []
    pos, facing = pts[0].copy(), float(heading)
    for a, b in zip(pts[:-1], pts[1:]):
        to_go = b - pos
        if float(np.linalg.norm(to_go)) < 0.05:
            continue
        turn = round_turn(math.atan2(to_go[1], to_go[0]) - facing)
        if turn:
            lines.append(f"turn {'left' if turn > 0 else 'right'} {abs(turn)} degrees")
            facing = _wrap(facing + math.radians(turn))
        direction = np.array([math.cos(facing), math.sin(facing)])
        dist = round(float(to_go @ direction), 1)
        if dist <= 0:
            continue
        pos = pos + dist * direction
        text = f"walk forward {dist:.1f} meters"
        hits = []
        for box in boxes:
            off = lateral_offset(a, b, box)
            if off is not None and abs(off) <= WARNING_DISTANCE:
                along = float((np.asarray(box.center[:2]) - a) @ (b - a))
                hits.append((along, box.center, box, off))
        hits.sort(key=lambda h: (h[0], h[1]))
        said = []
        for _, _, box, off in hits:
            phrase = f"obstacle at {box.height_class} level on your {'left' if off >= 0 else 'right'}"
            if phrase not in said:
                said.append(phrase)
            nearby.append((box, off))
        text = ", ".join([text, *said])
        lines.append(text)
    return lines, nearby


def with_instructions(plan: NavPlan, heading: float, obstacles=(), agent_height=None) -> NavPlan:
    lines, nearby = generate_instructions(plan, heading, obstacles, agent_height)
    return NavPlan(plan.waypoints, plan.total_length, tuple(lines), tuple(nearby), plan.cells, plan.cost)


def execute_instructions(lines, start, heading):
    """Perfect execution of instruction text; returns the final position."""
    pos, facing = np.asarray(start, dtype=float).copy(), float(heading)
    for line in lines:
        words = line.split(",")[0].split()
        if words[0] == "turn":
            sign = 1 if words[1] == "left" else -1
            facing = _wrap(facing + sign * math.radians(int(words[2])))
        elif words[0] == "walk":
            pos = pos + float(words[2]) * np.array([math.cos(facing), math.sin(facing)])
    return pos


def find_object(obstacles, label: str, origin) -> ObstacleBox:
    origin = np.asarray(origin, dtype=float)[:2]
    want = label.casefold()
    matches = [b for b in obstacles if b.label is not None and b.label.casefold() == want]
    if not matches:
        raise NotFoundError(label, sorted({b.label for b in obstacles if b.label is not None}))
    return min(matches, key=lambda b: (float(np.linalg.norm(np.asarray(b.center[:2]) - origin)), b.center))


def nearest_traversable(costmap: Costmap, xy) -> np.ndarray:
    """Centre of the traversable cell closest to ``xy`` (ties in cell order)."""
    ok = np.argwhere(costmap.traversable)
    if not len(ok):
        raise NoPathError("costmap has no traversable cell")
    centres = costmap.origin + (ok + 0.5) * costmap.cell_size
    d2 = ((centres - np.asarray(xy, dtype=float)[:2]) ** 2).sum(axis=1)
    return centres[int(np.argmin(d2))]


def approach_point(costmap: Costmap, box: ObstacleBox) -> np.ndarray:
    """Where to stand to reach ``box``: the traversable cell nearest its footprint centre."""
    return nearest_traversable(costmap, box.center[:2])


def distance_to_polyline(xy, waypoints) -> float:
    p = np.asarray(xy, dtype=float)[:2]
    pts = [np.asarray(w, dtype=float) for w in waypoints]
    if len(pts) == 1:
        return float(np.linalg.norm(p - pts[0]))
    return min(_point_segment_distance(p, a, b) for a, b in zip(pts[:-1], pts[1:]))
