"""File formats: IMU/trajectory/fix CSV, point clouds, kernels, obstacles, costmap PGM.

Every writer returns text or bytes; :func:`atomic_write` puts them on disk
through a temporary file and a rename, so a failed command leaves no
partial output. Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .ahrs import ImuSample
from .deadreckon import Trajectory
from .errors import FormatError
from .fusion import PoseFix
from .planner import Costmap
from .voxelmap import ConvKernel, ObstacleBox

IMU_HEADER = ("t", "ax", "ay", "az", "gx", "gy", "gz")
TRAJECTORY_HEADER = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz")
FIX_HEADER = TRAJECTORY_HEADER + ("confidence",)

FRAME = {"name": "earth", "axes": "right-handed, z up", "units": "m, s, rad", "quaternion": "w,x,y,z body-to-earth"}


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode() if isinstance(data, str) else bytes(data)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    return repr(float(x))


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _read_table(path, header):
    """Rows of floats from a headed CSV; errors carry the offending line number."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(path, None, f"cannot read file ({exc.strerror})") from exc
    reader = csv.reader(io.StringIO(text))
    got = next(reader, None)
    if got is None or tuple(c.strip() for c in got) != header:
        raise FormatError(path, 1, f"expected header {','.join(header)}")
    rows = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(path, line, f"expected {len(header)} fields, found {len(row)}")
        try:
            values = [float(c) for c in row]
        except ValueError:
            raise FormatError(path, line, f"non-numeric field in {row!r}") from None
        if not all(math.isfinite(v) for v in values):
            raise FormatError(path, line, "non-finite value")
        rows.append((line, values))
    return rows


def read_imu_csv(path) -> list[ImuSample]:
    rows = _read_table(path, IMU_HEADER)
    out, t_prev = [], None
    for line, v in rows:
        if t_prev is not None and not v[0] > t_prev:
            raise FormatError(path, line, f"timestamp {v[0]!r} does not increase")
        t_prev = v[0]
        out.append(ImuSample(v[0], v[1:4], v[4:7]))
    return out


def imu_csv(samples) -> str:
    return _rows_to_csv(IMU_HEADER, ([s.t, *s.accel, *s.gyro] for s in samples))


def trajectory_csv(traj: Trajectory) -> str:
    return _rows_to_csv(TRAJECTORY_HEADER, (
        [t, *p, *q] for t, p, q in zip(traj.timestamps, traj.positions, traj.orientations)))


def read_trajectory_csv(path) -> Trajectory:
    rows = _read_table(path, TRAJECTORY_HEADER)
    if not rows:
        raise FormatError(path, None, "trajectory file has no rows")
    arr = np.array([v for _, v in rows])
    return Trajectory(arr[:, 0], arr[:, 1:4], arr[:, 4:8])


def trajectory_json(traj: Trajectory, **extra) -> str:
    doc = {
        "frame": FRAME,
        **extra,
        "step_boundaries": [int(i) for i in traj.step_boundaries],
        "timestamps": traj.timestamps.tolist(),
        "positions": traj.positions.tolist(),
        "orientations": traj.orientations.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def read_fixes_csv(path) -> list[PoseFix]:
    out = []
    for line, v in _read_table(path, FIX_HEADER):
        try:
            out.append(PoseFix(v[0], v[1:4], v[4:8], v[8]))
        except ValueError as exc:
            raise FormatError(path, line, str(exc)) from None
    return out


def fixes_csv(fixes) -> str:
    return _rows_to_csv(FIX_HEADER, ([f.t, *f.position, *f.orientation, f.confidence] for f in fixes))


# --- point clouds ------------------------------------------------------------


def read_point_cloud(path):
    """``(points, labels)``; binary when the suffix is ``.bin``, else ASCII ``x y z [label]``.

    ``labels`` is None when no line carries one.
    """
    path = Path(path)
    if path.suffix.lower() == ".bin":
        raw = path.read_bytes()
        if len(raw) % 12:
            raise FormatError(path, None, f"binary cloud size {len(raw)} is not a multiple of 12 bytes")
        pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 3).astype(float)
        if not np.isfinite(pts).all():
            raise FormatError(path, None, "non-finite coordinate")
        return pts, None
    pts, labels = [], []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) not in (3, 4):
            raise FormatError(path, line_no, f"expected 'x y z [label]', found {len(parts)} fields")
        try:
            xyz = [float(p) for p in parts[:3]]
        except ValueError:
            raise FormatError(path, line_no, "non-numeric coordinate") from None
        if not all(math.isfinite(v) for v in xyz):
            raise FormatError(path, line_no, "non-finite coordinate")
        pts.append(xyz)
        labels.append(parts[3] if len(parts) == 4 else None)
    arr = np.array(pts, dtype=float).reshape(-1, 3)
    return arr, (labels if any(lab is not None for lab in labels) else None)


def point_cloud_ascii(points, labels=None) -> str:
    lines = []
    for i, p in enumerate(np.asarray(points, dtype=float)):
        row = " ".join(_fmt(v) for v in p)
        if labels is not None and labels[i] is not None:
            row += f" {labels[i]}"
        lines.append(row)
    return "\n".join(lines) + ("\n" if lines else "")


def point_cloud_binary(points) -> bytes:
    return np.asarray(points, dtype="<f4").reshape(-1, 3).tobytes()


# --- kernels, obstacles, costmaps ---------------------------------------------


def load_kernel(path) -> ConvKernel:
    try:
        doc = json.loads(Path(path).read_text())
        k, c_in, c_out = int(doc["k"]), int(doc["c_in"]), int(doc["c_out"])
        weights = np.asarray(doc["weights"], dtype=float)
        bias = np.asarray(doc["bias"], dtype=float)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, None, f"invalid kernel document ({exc})") from None
    if weights.size != k ** 3 * c_in * c_out or bias.size != c_out:
        raise FormatError(path, None, f"kernel needs {k ** 3 * c_in * c_out} weights and {c_out} biases")
    return ConvKernel(k, c_in, c_out, weights, bias)


def kernel_json(kernel: ConvKernel) -> str:
    return json.dumps({"k": kernel.k, "c_in": kernel.c_in, "c_out": kernel.c_out,
                       "weights": kernel.weights.reshape(-1).tolist(), "bias": kernel.bias.tolist()}) + "\n"


def obstacles_json(boxes, **header) -> str:
    doc = {"frame": FRAME, **header, "obstacles": [b.to_dict() for b in boxes]}
    return json.dumps(doc, indent=1) + "\n"


def read_obstacles(path) -> list[ObstacleBox]:
    try:
        doc = json.loads(Path(path).read_text())
        items = doc["obstacles"] if isinstance(doc, dict) else doc
        return [ObstacleBox.from_dict(d) for d in items]
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, None, f"invalid obstacle document ({exc})") from None


def costmap_pgm(costmap: Costmap) -> bytes:
    """Binary PGM, top row = largest y, 0 free through 255 blocked."""
    img = np.ascontiguousarray(costmap.cost.T[::-1])
    header = f"P5\n{costmap.width} {costmap.height}\n255\n".encode()
    return header + img.astype(np.uint8).tobytes()


def read_pgm(path) -> np.ndarray:
    """Pixel rows of a binary PGM as written by :func:`costmap_pgm`."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(path, 1, "not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)


def costmap_json(costmap: Costmap) -> str:
    return json.dumps({"frame": FRAME, "cell_size": costmap.cell_size, "origin": costmap.origin.tolist(),
                       "width": costmap.width, "height": costmap.height,
                       "agent_radius": costmap.agent_radius,
                       "inflation_radius": costmap.inflation_radius}, indent=1) + "\n"


def plan_json(plan, **header) -> str:
    return json.dumps({"frame": FRAME, **header, **plan.to_dict()}, indent=1) + "\n"
