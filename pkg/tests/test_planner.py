import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from footnav.errors import NoPathError, NotFoundError, ValidationError
from footnav.formats import costmap_pgm
from footnav.planner import (BLOCKED, MAX_INFLATED, Costmap, NavPlan, execute_instructions, find_object,
                             generate_instructions, grid_search, inflation_cost, lateral_offset, pair_value,
                             plan_path, project_occupancy, round_turn, segment_box_distance)
from footnav.voxelmap import ObstacleBox, SparseVoxelGrid, voxelize
from oracles import brute_distance, dijkstra_pairs, random_blocked


def open_map(nx=80, ny=40, cs=0.1):
    # origin offset half a cell so integer-decimetre points are cell centres
    return Costmap(cs, (-0.05 - 1.0, -0.05 - 2.0), np.zeros((nx, ny), bool), agent_radius=0.3)


def csgraph_cost(costmap, start, goal):
    """Float-weighted shortest path through scipy; second independent route."""
    ok = costmap.traversable
    w = MAX_INFLATED + costmap.cost.astype(float)
    nx, ny = ok.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if (dx, dy) == (0, 0):
                continue
            for x in range(max(0, -dx), nx - max(0, dx)):
                for y in range(max(0, -dy), ny - max(0, dy)):
                    u, v = x + dx, y + dy
                    if not (ok[x, y] and ok[u, v]):
                        continue
                    if dx and dy and not (ok[u, y] and ok[x, v]):
                        continue
                    rows.append(idx[x, y])
                    cols.append(idx[u, v])
                    vals.append(w[u, v] * math.hypot(dx, dy))
    graph = coo_matrix((vals, (rows, cols)), shape=(nx * ny, nx * ny)).tocsr()
    d = dijkstra(graph, indices=idx[start])
    return d[idx[goal]] * costmap.cell_size / MAX_INFLATED


# --- costmap -------------------------------------------------------------------


def test_empty_grid_is_all_free():
    grid = voxelize(np.zeros((0, 3)))
    cm = project_occupancy(grid, 1.8, 0.3)
    assert (cm.cost == 0).all() and cm.traversable.all()


def test_lamp_above_head_leaves_floor_free():
    lamp = SparseVoxelGrid.from_cells({(i, j, k): [1.0] for i in range(4) for j in range(4) for k in (40, 41)}, 0.05)
    cm = project_occupancy(lamp, 1.8, 0.3)
    assert not cm.blocked.any()


def test_step_clearance_ignores_floor_texture():
    floor = SparseVoxelGrid.from_cells({(i, 0, 0): [1.0] for i in range(5)}, 0.05)
    assert not project_occupancy(floor, 1.8, 0.3, step_clearance=0.15).blocked.any()
    assert project_occupancy(floor, 1.8, 0.3, step_clearance=0.0).blocked.any()
    with pytest.raises(ValidationError):
        project_occupancy(floor, 0.1, 0.3, step_clearance=0.15)


def test_wall_inflation_against_brute_force():
    cs = 0.05
    wall = SparseVoxelGrid.from_cells({(20, j, k): [1.0] for j in range(-10, 30) for k in range(0, 30)}, cs)
    cm = project_occupancy(wall, 1.8, 0.3, bounds=(0.0, 0.0, 2.0, 1.0))
    ref = brute_distance(cm.blocked, cs)
    # blocked column sits at x in [1.0, 1.05)
    assert cm.blocked[cm.cell_of((1.02, 0.5))] and cm.blocked.sum() == cm.height
    for (ix, iy), d in np.ndenumerate(ref):
        if cm.blocked[ix, iy]:
            assert cm.cost[ix, iy] == BLOCKED
        elif d <= 0.3 + 1e-9:
            assert cm.cost[ix, iy] == 1 + math.floor(253 * (1 - d / 0.3) + 1e-9)
            assert 1 <= cm.cost[ix, iy] <= MAX_INFLATED
        else:
            assert cm.cost[ix, iy] == 0
    inflated_x = {ix for (ix, iy), c in np.ndenumerate(cm.cost) if 0 < c < BLOCKED}
    assert min(inflated_x) == 20 - 6 and max(inflated_x) == 20 + 6  # 0.3 m each side


def test_inflation_cost_profile():
    assert inflation_cost(0.0, 0.3) == MAX_INFLATED
    assert inflation_cost(0.3, 0.3) == 1
    assert inflation_cost(0.31, 0.3) == 0


# --- plan_path -------------------------------------------------------------------


def test_straight_path_on_empty_map():
    plan = plan_path(open_map(), (0.0, 0.0), (5.0, 0.0))
    assert plan.total_length == pytest.approx(5.0, abs=1e-9)
    assert len(plan.waypoints) == 2
    assert plan.instructions == ("walk forward 5.0 meters",)


def test_path_through_gap_matches_both_dijkstras():
    blocked = np.zeros((60, 60), bool)
    blocked[30, :] = True
    blocked[30, 40:50] = False  # 1 m gap at 10 cm cells
    cm = Costmap(0.1, (0.0, 0.0), blocked, agent_radius=0.3)
    start, goal = cm.cell_of((1.0, 1.0)), cm.cell_of((5.0, 1.0))
    cells, pair = grid_search(cm, start, goal)
    assert any(c[0] == 30 and 40 <= c[1] < 50 for c in cells)
    assert pair == dijkstra_pairs(MAX_INFLATED + cm.cost.astype(np.int64), cm.traversable, start, goal)
    assert pair_value(pair, 0.1) == pytest.approx(csgraph_cost(cm, start, goal), abs=1e-9)


def test_enclosed_goal_has_no_path():
    blocked = np.zeros((40, 40), bool)
    blocked[15:26, 15] = blocked[15:26, 25] = blocked[15, 15:26] = blocked[25, 15:26] = True
    cm = Costmap(0.1, (0.0, 0.0), blocked, agent_radius=0.0)
    with pytest.raises(NoPathError):
        plan_path(cm, (0.5, 0.5), (2.05, 2.05))


def test_blocked_or_outside_endpoint_rejected():
    blocked = np.zeros((40, 40), bool)
    blocked[20, 20] = True
    cm = Costmap(0.1, (0.0, 0.0), blocked, agent_radius=0.3)
    for goal in ((2.05, 2.05), (2.15, 2.05), (9.0, 0.5)):
        with pytest.raises(ValidationError):
            plan_path(cm, (0.5, 0.5), goal)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), radius=st.sampled_from([0.0, 0.1, 0.2]))
def test_astar_equals_dijkstra_and_stays_clear(seed, radius):
    rng = np.random.default_rng(seed)
    blocked = random_blocked(rng, 40)
    cm = Costmap(0.1, (0.0, 0.0), blocked, agent_radius=radius, inflation_radius=0.4)
    free = np.argwhere(cm.traversable)
    if len(free) < 2:
        return
    start, goal = (tuple(int(v) for v in free[i]) for i in rng.choice(len(free), 2, replace=False))
    ref = dijkstra_pairs(MAX_INFLATED + cm.cost.astype(np.int64), cm.traversable, start, goal)
    if ref is None:
        with pytest.raises(NoPathError):
            grid_search(cm, start, goal)
        return
    cells, pair = grid_search(cm, start, goal)
    assert pair == ref
    dist = brute_distance(blocked, 0.1)
    for (x0, y0), (x1, y1) in zip(cells[:-1], cells[1:]):
        assert max(abs(x1 - x0), abs(y1 - y0)) == 1
        assert not blocked[x1, y1] and dist[x1, y1] >= radius - 1e-9
        if x0 != x1 and y0 != y1:
            assert not blocked[x1, y0] and not blocked[x0, y1]


def test_plans_are_deterministic():
    blocked = random_blocked(np.random.default_rng(5), 48)
    cm = Costmap(0.1, (0.0, 0.0), blocked, agent_radius=0.1)
    free = np.argwhere(cm.traversable)
    a, b = cm.center(free[0]), cm.center(free[-1])
    assert plan_path(cm, a, b).to_dict() == plan_path(cm, a, b).to_dict()


def test_navplan_length_invariant():
    with pytest.raises(ValidationError):
        NavPlan(((0.0, 0.0), (3.0, 4.0)), 4.0)


# --- instructions ----------------------------------------------------------------


def test_single_leg_instruction():
    lines, _ = generate_instructions(NavPlan(((0.0, 0.0), (3.0, 0.0)), 3.0), 0.0)
    assert lines == ["walk forward 3.0 meters"]


def test_left_turn_instruction():
    lines, _ = generate_instructions(NavPlan(((0.0, 0.0), (0.0, 2.0)), 2.0), 0.0)
    assert lines == ["turn left 90 degrees", "walk forward 2.0 meters"]


def test_right_turn_rounds_to_fifteen_degrees():
    assert round_turn(math.radians(-52.0)) == -45
    assert round_turn(math.radians(181.0)) == -180
    lines, _ = generate_instructions(NavPlan(((0.0, 0.0), (2.0, -2.0)), math.hypot(2, 2)), 0.0)
    assert lines[0] == "turn right 45 degrees"


def test_head_level_box_on_the_right_is_announced():
    head = ObstacleBox((1.0, -0.7, 1.6), (1.2, -0.5, 1.9), "head", "shelf")
    far = ObstacleBox((1.0, 1.5, 0.0), (1.2, 1.7, 0.3), "ground")
    lines, nearby = generate_instructions(NavPlan(((0.0, 0.0), (3.0, 0.0)), 3.0), 0.0, [head, far])
    assert lines == ["walk forward 3.0 meters, obstacle at head level on your right"]
    assert nearby == [(head, pytest.approx(-0.5))]


def test_boxes_beyond_the_leg_are_not_announced():
    behind = ObstacleBox((-1.0, 0.2, 0.0), (-0.5, 0.4, 0.5), "body")
    assert generate_instructions(NavPlan(((0.0, 0.0), (3.0, 0.0)), 3.0), 0.0, [behind])[1] == []


def _sampled_distance(a, b, lo, hi, n=400):
    t = np.linspace(0, 1, n)[:, None]
    seg = a + t * (b - a)
    u = np.linspace(0, 1, n)
    edges = np.concatenate([
        np.column_stack([lo[0] + u * (hi[0] - lo[0]), np.full(n, lo[1])]),
        np.column_stack([lo[0] + u * (hi[0] - lo[0]), np.full(n, hi[1])]),
        np.column_stack([np.full(n, lo[0]), lo[1] + u * (hi[1] - lo[1])]),
        np.column_stack([np.full(n, hi[0]), lo[1] + u * (hi[1] - lo[1])]),
    ])
    inside = np.all((seg >= lo) & (seg <= hi), axis=1).any()
    if inside:
        return 0.0
    return float(np.min(np.linalg.norm(seg[:, None, :] - edges[None, :, :], axis=2)))


@settings(max_examples=60, deadline=None)
@given(pts=st.lists(st.floats(-3, 3), min_size=6, max_size=6), size=st.tuples(st.floats(0.05, 1.5), st.floats(0.05, 1.5)))
def test_segment_box_distance_matches_dense_sampling(pts, size):
    a, b, lo = np.array(pts[:2]), np.array(pts[2:4]), np.array(pts[4:])
    hi = lo + size
    got = segment_box_distance(a, b, lo, hi)
    ref = _sampled_distance(a, b, lo, hi)
    step = max(np.linalg.norm(b - a), *size) / 399
    assert got <= ref + 1e-9
    assert ref <= got + step  # sampling only overestimates, by at most one sample spacing
    off = lateral_offset(a, b, ObstacleBox((*lo, 0.0), (*hi, 1.0)))
    if off is not None:
        assert abs(off) == pytest.approx(got)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), heading_step=st.integers(0, 23))
def test_instruction_round_trip_within_one_cell(seed, heading_step):
    rng = np.random.default_rng(seed)
    blocked = random_blocked(rng, 50, n_rects=5)
    cm = Costmap(0.1, (0.0, 0.0), blocked, agent_radius=0.1)
    free = np.argwhere(cm.traversable)
    if len(free) < 2:
        return
    i, j = rng.choice(len(free), 2, replace=False)
    heading = math.radians(15 * heading_step)
    try:
        plan = plan_path(cm, cm.center(free[i]), cm.center(free[j]), heading)
    except NoPathError:
        return
    end = execute_instructions(plan.instructions, plan.waypoints[0], heading)
    assert np.linalg.norm(end - plan.waypoints[-1]) <= cm.cell_size


# --- find_object -----------------------------------------------------------------


def test_find_object_examples():
    door = ObstacleBox((5, 1, 0), (5.1, 2, 2), "head", "door")
    near = ObstacleBox((1, 0, 0), (1.2, 0.2, 0.9), "body", "chair")
    far = ObstacleBox((3, 0, 0), (3.2, 0.2, 0.9), "body", "Chair")
    assert find_object([door], "door", (0, 0)) is door
    assert find_object([far, near, door], "CHAIR", (0.1, 0.1)) is near
    with pytest.raises(NotFoundError) as err:
        find_object([door, near], "sofa", (0, 0))
    assert err.value.available == ["chair", "door"]


def test_find_object_tie_breaks_by_centre():
    a = ObstacleBox((1, 0, 0), (1.2, 0.2, 1), "body", "box")
    b = ObstacleBox((-1.2, 0, 0), (-1, 0.2, 1), "body", "box")
    assert find_object([a, b], "box", (0.0, 0.1)) is b


def test_pgm_top_row_is_largest_y():
    blocked = np.zeros((3, 2), bool)
    blocked[0, 1] = True  # x = 0, top y
    data = costmap_pgm(Costmap(1.0, (0, 0), blocked, agent_radius=0.0))
    header, pixels = data[:11], data[11:]
    assert header == b"P5\n3 2\n255\n"
    assert pixels[0] == BLOCKED and pixels[3] == 0
