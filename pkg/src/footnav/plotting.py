"""Matplotlib figures written to PNG files.

Uses the Agg backend and strips the ``Software`` PNG chunk so repeated runs
produce identical bytes.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .formats import atomic_write  # noqa: E402

_CLASS_COLORS = {"ground": "tab:green", "body": "tab:orange", "head": "tab:red"}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def plot_trajectory(path, estimate, truth=None, title="trajectory"):
    """Top view and height profile of one or two trajectories."""
    fig, (top, side) = plt.subplots(1, 2, figsize=(10, 4.5))
    for traj, name, style in ((truth, "truth", "k--"), (estimate, "estimate", "tab:blue")):
        if traj is None:
            continue
        p = traj.positions
        top.plot(p[:, 0], p[:, 1], style, lw=1.2, label=name)
        side.plot(traj.timestamps, p[:, 2], style, lw=1.2, label=name)
    bounds = estimate.step_boundaries
    if len(bounds):
        p = estimate.positions[bounds]
        top.plot(p[:, 0], p[:, 1], "o", ms=3, color="tab:blue", label="footfalls")
    top.set_aspect("equal", adjustable="datalim")
    top.set_xlabel("x [m]")
    top.set_ylabel("y [m]")
    side.set_xlabel("t [s]")
    side.set_ylabel("z [m]")
    top.legend(loc="best", fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def plot_costmap(path, costmap, obstacles=(), plan=None, trajectory=None, title="costmap"):
    """Costmap image with obstacle footprints, planned route and walked track."""
    fig, ax = plt.subplots(figsize=(7, 6))
    x0, y0 = costmap.origin
    extent = (x0, x0 + costmap.width * costmap.cell_size, y0, y0 + costmap.height * costmap.cell_size)
    ax.imshow(costmap.cost.T, origin="lower", extent=extent, cmap="Greys", vmin=0, vmax=255,
              interpolation="nearest")
    for box in obstacles:
        (ax_, ay_, _), (bx, by, _) = box.min, box.max
        ax.add_patch(matplotlib.patches.Rectangle((ax_, ay_), bx - ax_, by - ay_, fill=False, lw=1,
                                                  edgecolor=_CLASS_COLORS[box.height_class]))
        if box.label:
            ax.annotate(box.label, (bx, by), fontsize=7)
    if plan is not None:
        w = np.asarray(plan.waypoints)
        ax.plot(w[:, 0], w[:, 1], "-o", color="tab:blue", ms=3, lw=1.5, label="plan")
    if trajectory is not None:
        p = trajectory.positions
        ax.plot(p[:, 0], p[:, 1], color="tab:purple", lw=1, label="walked")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if plan is not None or trajectory is not None:
        ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
