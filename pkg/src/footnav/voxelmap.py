"""Sparse voxel grids, submanifold sparse convolution and obstacle extraction.

Occupied voxels are kept as a sorted coordinate array plus a feature
matrix; a Python dict from packed integer coordinates to row numbers is the
hash map every neighbourhood query goes through, so empty space is never
visited.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _graph_components

from .errors import ValidationError

HEIGHT_CLASSES = ("ground", "body", "head")
DEFAULT_THRESHOLDS = (0.4, 1.5)
DEFAULT_VOXEL_SIZE = 0.05

_BITS = 21
_OFFSET = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1


def pack(coords) -> np.ndarray:
    """Pack integer (x, y, z) rows into one int64 key each (range +-2**20)."""
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3) + _OFFSET
    if c.size and (c.min() < 0 or c.max() > _MASK):
        raise ValidationError("voxel coordinates exceed the packable range of +-2**20")
    return (c[:, 0] << (2 * _BITS)) | (c[:, 1] << _BITS) | c[:, 2]


@dataclass(frozen=True, eq=False)
class SparseVoxelGrid:
    voxel_size: float
    origin: np.ndarray
    coords: np.ndarray
    features: np.ndarray
    label_counts: tuple | None = None
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValidationError("voxel_size must be positive")
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2 or len(feats) != len(coords):
            raise ValidationError("features must be an (n, C) array aligned with coords")
        order = np.lexsort(coords.T[::-1])
        coords, feats = coords[order], feats[order]
        if len(coords) > 1 and np.any(np.all(coords[1:] == coords[:-1], axis=1)):
            raise ValidationError("duplicate voxel coordinates")
        labels = self.label_counts
        if labels is not None:
            labels = tuple(labels[i] for i in order)
        coords.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "label_counts", labels)
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(pack(coords).tolist())})

    @classmethod
    def from_cells(cls, cells: dict, voxel_size: float, origin=(0.0, 0.0, 0.0), channels: int | None = None):
        """Build from ``{(i, j, k): features}``; all-zero cells are dropped."""
        items = [(tuple(int(c) for c in k), np.asarray(v, dtype=float).reshape(-1)) for k, v in cells.items()]
        if channels is None:
            channels = len(items[0][1]) if items else 1
        if any(len(v) != channels for _, v in items):
            raise ValidationError(f"every feature vector must have length {channels}")
        items = [(k, v) for k, v in items if np.any(v != 0)]
        coords = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, 3)
        feats = np.array([v for _, v in items], dtype=float).reshape(-1, channels)
        return cls(voxel_size, np.asarray(origin, dtype=float), coords, feats)

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return len(self.coords)

    @property
    def cells(self) -> dict:
        return {tuple(c): f for c, f in zip(self.coords.tolist(), self.features)}

    def lookup(self, coords) -> np.ndarray:
        """Row index for each coordinate, -1 where the voxel is empty."""
        get = self._index.get
        return np.array([get(k, -1) for k in pack(coords).tolist()], dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, SparseVoxelGrid):
            return NotImplemented
        return (self.voxel_size == other.voxel_size
                and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.coords, other.coords)
                and np.array_equal(self.features, other.features)
                and self.label_counts == other.label_counts)

    def voxel_min_corner(self, coords):
        return self.origin + np.asarray(coords, dtype=float) * self.voxel_size


def voxelize(points, voxel_size: float = DEFAULT_VOXEL_SIZE, origin=(0.0, 0.0, 0.0), labels=None) -> SparseVoxelGrid:
    """Bin points into voxels with features ``(count, mean offset x, y, z)``.

    Points are sorted before accumulation so the result does not depend on
    input order.
    """
    if not voxel_size > 0:
        raise ValidationError("voxel_size must be positive")
    origin = np.asarray(origin, dtype=float).reshape(3)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if not np.isfinite(pts).all():
        raise ValidationError("point cloud contains non-finite coordinates")
    if labels is not None and len(labels) != len(pts):
        raise ValidationError("labels must align with points")
    if len(pts) == 0:
        return SparseVoxelGrid(voxel_size, origin, np.zeros((0, 3), np.int64), np.zeros((0, 4)))

    coords = np.floor((pts - origin) / voxel_size).astype(np.int64)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], coords[:, 2], coords[:, 1], coords[:, 0]))
    coords, pts = coords[order], pts[order]
    offsets = pts - origin - coords * voxel_size
    starts = np.concatenate(([0], np.nonzero(np.any(coords[1:] != coords[:-1], axis=1))[0] + 1))
    counts = np.diff(np.append(starts, len(pts)))
    means = np.add.reduceat(offsets, starts, axis=0) / counts[:, None]
    feats = np.column_stack([counts.astype(float), means])

    label_counts = None
    if labels is not None:
        lab = [labels[i] for i in order]
        bounds = np.append(starts, len(pts))
        label_counts = tuple(
            tuple(sorted(Counter(x for x in lab[a:b] if x is not None).items())) for a, b in zip(bounds[:-1], bounds[1:])
        )
    return SparseVoxelGrid(voxel_size, origin, coords[starts], feats, label_counts)


# --- convolution -------------------------------------------------------------


def kernel_offsets(k: int) -> np.ndarray:
    """Offsets of a k^3 footprint, x slowest then y then z."""
    r = k // 2
    return np.array(list(itertools.product(range(-r, r + 1), repeat=3)), dtype=np.int64)


@dataclass(frozen=True)
class ConvKernel:
    k: int
    c_in: int
    c_out: int
    weights: np.ndarray  # (k^3, c_in, c_out) in kernel_offsets order
    bias: np.ndarray

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValidationError("kernel size must be a positive odd integer")
        w = np.asarray(self.weights, dtype=float).reshape(self.k ** 3, self.c_in, self.c_out)
        b = np.asarray(self.bias, dtype=float).reshape(self.c_out)
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("kernel weights must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def identity(cls, channels: int) -> "ConvKernel":
        return cls(1, channels, channels, np.eye(channels)[None], np.zeros(channels))


@dataclass
class ConvStats:
    """Work counters: hash probes issued and neighbour rows actually gathered."""

    lookups: int = 0
    gathers: int = 0


def sparse_conv(grid: SparseVoxelGrid, kernel: ConvKernel, stats: ConvStats | None = None) -> SparseVoxelGrid:
    """Submanifold convolution: outputs only at the input's active sites.

    ``out[p] = bias + sum_o W[o]^T in[p + o]`` over active neighbours.
    The output keeps the input's active set even if a site's result is
    exactly zero.
    """
    if kernel.c_in != grid.channels:
        raise ValidationError(f"kernel expects {kernel.c_in} input channels, grid has {grid.channels}")
    n = len(grid)
    out = np.tile(kernel.bias, (n, 1))
    if n:
        for o, off in enumerate(kernel_offsets(kernel.k)):
            rows = grid.lookup(grid.coords + off)
            hit = rows >= 0
            if stats is not None:
                stats.lookups += n
                stats.gathers += int(hit.sum())
            if hit.any():
                out[hit] += grid.features[rows[hit]] @ kernel.weights[o]
    return SparseVoxelGrid(grid.voxel_size, grid.origin, grid.coords, out, grid.label_counts)


# --- obstacle extraction -----------------------------------------------------


@dataclass(frozen=True)
class ObstacleBox:
    min: tuple
    max: tuple
    height_class: str = "ground"
    label: str | None = None
    voxel_count: int = 1

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
            raise ValidationError("box min must not exceed max")
        if self.voxel_count < 1:
            raise ValidationError("voxel_count must be at least 1")
        if self.height_class not in HEIGHT_CLASSES:
            raise ValidationError(f"unknown height class {self.height_class!r}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self):
        return tuple((a + b) / 2 for a, b in zip(self.min, self.max))

    def to_dict(self):
        return {"min": list(self.min), "max": list(self.max), "height_class": self.height_class,
                "label": self.label, "voxel_count": self.voxel_count}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["min"]), tuple(d["max"]), d.get("height_class", "ground"), d.get("label"),
                   int(d.get("voxel_count", 1)))


def classify_height(box: ObstacleBox, thresholds=DEFAULT_THRESHOLDS) -> str:
    ground_max, body_max = thresholds
    if not 0 < ground_max < body_max:
        raise ValidationError("height thresholds must satisfy 0 < ground_max < body_max")
    top = box.max[2]
    if top <= ground_max:
        return "ground"
    if top <= body_max:
        return "body"
    return "head"


def neighbour_offsets(connectivity: int) -> np.ndarray:
    if connectivity not in (6, 26):
        raise ValidationError("connectivity must be 6 or 26")
    offs = kernel_offsets(3)
    offs = offs[np.any(offs != 0, axis=1)]
    if connectivity == 6:
        offs = offs[np.abs(offs).sum(axis=1) == 1]
    return offs


def component_labels(grid: SparseVoxelGrid, connectivity: int = 26) -> np.ndarray:
    """Component id per occupied voxel (rows of ``grid.coords``)."""
    n = len(grid)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    src, dst = [], []
    for off in neighbour_offsets(connectivity):
        if tuple(off) <= (0, 0, 0):
            continue  # each undirected edge once
        rows = grid.lookup(grid.coords + off)
        hit = np.nonzero(rows >= 0)[0]
        src.append(hit)
        dst.append(rows[hit])
    src = np.concatenate(src) if src else np.zeros(0, np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, np.int64)
    adj = coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
    _, comp = _graph_components(adj, directed=False)
    return comp.astype(np.int64)


def _majority(counter: Counter):
    if not counter:
        return None
    best = max(counter.values())
    return min(label for label, c in counter.items() if c == best)


def connected_components(grid: SparseVoxelGrid, connectivity: int = 26,
                         thresholds=DEFAULT_THRESHOLDS) -> list[ObstacleBox]:
    comp = component_labels(grid, connectivity)
    boxes = []
    for cid in np.unique(comp):
        rows = np.nonzero(comp == cid)[0]
        c = grid.coords[rows]
        lo = grid.voxel_min_corner(c.min(axis=0))
        hi = grid.voxel_min_corner(c.max(axis=0) + 1)
        label = None
        if grid.label_counts is not None:
            tally = Counter()
            for r in rows:
                tally.update(dict(grid.label_counts[r]))
            label = _majority(tally)
        box = ObstacleBox(tuple(lo), tuple(hi), "ground", label, len(rows))
        boxes.append(ObstacleBox(box.min, box.max, classify_height(box, thresholds), label, len(rows)))
    boxes.sort(key=lambda b: (b.min, b.max))
    return boxes
