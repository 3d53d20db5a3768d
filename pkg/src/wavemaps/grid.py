"""Nested radial meshes concentric at the origin.

Level ``k`` has spacing ``h_0 / 2^k`` and covers ``[0, R_0 / 2^k]``, so every
level carries the same number of intervals. Both ``r = 0`` and the outer end
point are nodes. Values on a newly created level are filled by cubic
interpolation from its parent; :func:`sample` uses the same interpolant.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SNAPSHOT_COLUMNS = ("level", "r", "u", "v")


class DepthExhausted(RuntimeError):
    """Raised when refinement is requested beyond the configured maximum depth."""


@dataclass
class MeshLevel:
    index: int
    spacing: float
    extent: float
    intervals: int
    radii: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.radii = np.arange(self.intervals + 1, dtype=float) * self.spacing

    @property
    def points(self):
        return self.intervals + 1


@dataclass
class GridHierarchy:
    levels: list
    max_depth: int = 20

    @property
    def finest(self):
        return len(self.levels) - 1

    @property
    def outer_radius(self):
        return self.levels[0].extent

    @property
    def base_spacing(self):
        return self.levels[0].spacing

    def level_for(self, r):
        """Index of the finest level whose extent contains ``r``."""
        for k in range(self.finest, -1, -1):
            if r <= self.levels[k].extent:
                return k
        raise ValueError(f"radius {r!r} outside the domain [0, {self.outer_radius}]")


@dataclass
class FieldState:
    """``u`` and ``v = u_t`` on every level of ``grid``.

    ``times[k]`` is the time level ``k`` has reached. During subcycling a
    parent runs ahead of its children; all levels agree at the end of a
    coarse step. ``u_inf`` is the asymptotic value the outgoing-wave condition
    is imposed relative to (a multiple of pi).
    """

    grid: GridHierarchy
    u: list
    v: list
    times: list
    dt0: float
    u_inf: float = 0.0
    steps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.steps:
            self.steps = [0] * len(self.u)

    @property
    def time(self):
        return self.times[-1]

    @property
    def dt(self):
        return [self.dt0 / 2 ** k for k in range(len(self.u))]

    def copy(self):
        return FieldState(self.grid, [a.copy() for a in self.u], [a.copy() for a in self.v],
                          list(self.times), self.dt0, self.u_inf, list(self.steps))

    def view(self, start):
        """State restricted to levels ``start .. finest`` (arrays shared, not copied).

        Level ``start`` becomes the outermost level of the view, so quadratures
        over the view stop at its extent.
        """
        if start == 0:
            return self
        grid = GridHierarchy(self.grid.levels[start:], self.grid.max_depth)
        return FieldState(grid, self.u[start:], self.v[start:], self.times[start:],
                          self.dt0 / 2 ** start, self.u_inf, self.steps[start:])


def build_uniform(outer_radius, base_points, max_depth=20):
    """Single-level hierarchy with ``base_points`` intervals on ``[0, outer_radius]``."""
    if not outer_radius > 0:
        raise ValueError(f"outer_radius must be positive, got {outer_radius!r}")
    if int(base_points) != base_points or base_points < 16:
        raise ValueError(f"base_points must be an integer >= 16, got {base_points!r}")
    if base_points % 2:
        raise ValueError("base_points must be even so refined levels share nodes")
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    base_points = int(base_points)
    level = MeshLevel(0, outer_radius / base_points, float(outer_radius), base_points)
    return GridHierarchy([level], int(max_depth))


def zero_state(grid, dt0, u_inf=0.0):
    u = [np.zeros(lv.points) for lv in grid.levels]
    v = [np.zeros(lv.points) for lv in grid.levels]
    return FieldState(grid, u, v, [0.0] * len(u), dt0, u_inf)


def state_from_profiles(grid, dt0, u_func, v_func=None):
    """Sample analytic ``u_func``/``v_func`` on every level and enforce ``u(0) = v(0) = 0``."""
    u, v = [], []
    for lv in grid.levels:
        uk = np.array(u_func(lv.radii), dtype=float)
        vk = np.zeros(lv.points) if v_func is None else np.array(v_func(lv.radii), dtype=float)
        uk[0] = 0.0
        vk[0] = 0.0
        u.append(uk)
        v.append(vk)
    u_inf = np.pi * np.round(u[0][-1] / np.pi)
    return FieldState(grid, u, v, [0.0] * len(u), dt0, float(u_inf))


def midpoint_cubic(values):
    """Cubic interpolant at the midpoints of consecutive nodes.

    Returns ``len(values) - 1`` values. The first cell uses the one-sided
    stencil through nodes 0..3, the last cell through the final four nodes,
    so cubic polynomials are reproduced exactly everywhere.
    """
    f = np.asarray(values, dtype=float)
    out = np.empty(f.size - 1)
    out[1:-1] = (-f[:-3] + 9.0 * f[1:-2] + 9.0 * f[2:-1] - f[3:]) / 16.0
    out[0] = (5.0 * f[0] + 15.0 * f[1] - 5.0 * f[2] + f[3]) / 16.0
    out[-1] = (f[-4] - 5.0 * f[-3] + 15.0 * f[-2] + 5.0 * f[-1]) / 16.0
    return out


def prolong(parent_values, parent_nodes):
    """Values on a level with half the spacing covering ``parent_nodes`` intervals.

    Even fine nodes are copied from the parent; odd nodes come from
    :func:`midpoint_cubic` evaluated on the parent. One extra parent node
    beyond the covered range is used when available so the last cell keeps
    a centred stencil.
    """
    m = parent_nodes
    stencil = parent_values[:m + 2] if parent_values.size > m + 1 else parent_values[:m + 1]
    mids = midpoint_cubic(stencil)[:m]
    fine = np.empty(2 * m + 1)
    fine[0::2] = parent_values[:m + 1]
    fine[1::2] = mids
    return fine


def refine(hierarchy, state):
    """Add a level covering the inner half of the finest level at half its spacing.

    Returns a new ``(hierarchy, state)`` pair; the inputs are not modified and
    the data on existing levels is carried over unchanged.

    Raises
    ------
    DepthExhausted
        If the hierarchy already has ``max_depth`` refined levels.
    """
    if state.grid is not hierarchy:
        raise ValueError("state does not live on the given hierarchy")
    if hierarchy.finest >= hierarchy.max_depth:
        raise DepthExhausted(f"maximum refinement depth {hierarchy.max_depth} reached")
    parent = hierarchy.levels[-1]
    half = parent.intervals // 2
    child = MeshLevel(parent.index + 1, parent.spacing / 2.0, parent.extent / 2.0,
                      parent.intervals)
    grid = GridHierarchy(list(hierarchy.levels) + [child], hierarchy.max_depth)
    u_new = prolong(state.u[-1], half)
    v_new = prolong(state.v[-1], half)
    u_new[0] = 0.0
    v_new[0] = 0.0
    new_state = FieldState(grid, [a.copy() for a in state.u] + [u_new],
                           [a.copy() for a in state.v] + [v_new],
                           list(state.times) + [state.times[-1]], state.dt0, state.u_inf,
                           list(state.steps) + [0])
    return grid, new_state


def lagrange4(values, spacing, r):
    """Four-point Lagrange interpolation of nodal ``values`` at radii ``r``."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n = values.size - 1
    x = r / spacing
    base = np.clip(np.floor(x).astype(int) - 1, 0, n - 3)
    s = x - base
    w0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0
    w1 = s * (s - 2.0) * (s - 3.0) / 2.0
    w2 = -s * (s - 1.0) * (s - 3.0) / 2.0
    w3 = s * (s - 1.0) * (s - 2.0) / 6.0
    return (w0 * values[base] + w1 * values[base + 1] + w2 * values[base + 2]
            + w3 * values[base + 3])


def sample(state, r):
    """Interpolate ``(u, v)`` at radius ``r`` on the finest level containing it.

    ``r`` may be a scalar or an array; arrays are split across levels.
    """
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    grid = state.grid
    if np.any(r < 0) or np.any(r > grid.outer_radius):
        raise ValueError(f"radius outside the domain [0, {grid.outer_radius}]")
    u = np.empty_like(r)
    v = np.empty_like(r)
    todo = np.ones(r.shape, dtype=bool)
    for k in range(grid.finest, -1, -1):
        lv = grid.levels[k]
        sel = todo & (r <= lv.extent)
        if np.any(sel):
            u[sel] = lagrange4(state.u[k], lv.spacing, r[sel])
            v[sel] = lagrange4(state.v[k], lv.spacing, r[sel])
            todo &= ~sel
    if scalar:
        return float(u[0]), float(v[0])
    return u, v


def _with_suffix(path, suffix):
    # appended rather than substituted, so names such as ``t_1.250000`` survive
    return path.parent / (path.name + suffix)


def write_snapshot(state, path, config_hash=""):
    """Write ``<path>.csv`` (columns level, r, u, v) and ``<path>.json`` header.

    Floats are written with ``repr`` so :func:`read_snapshot` restores the
    state bit for bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = state.grid
    header = {
        "config_hash": config_hash,
        "time": state.time,
        "times": list(state.times),
        "dt0": state.dt0,
        "u_inf": state.u_inf,
        "steps": list(state.steps),
        "max_depth": grid.max_depth,
        "spacings": [lv.spacing for lv in grid.levels],
        "extents": [lv.extent for lv in grid.levels],
        "intervals": [lv.intervals for lv in grid.levels],
    }
    with open(_with_suffix(path, ".json"), "w") as fh:
        json.dump(header, fh, indent=2)
        fh.write("\n")
    with open(_with_suffix(path, ".csv"), "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_COLUMNS)
        for k, lv in enumerate(grid.levels):
            for r, u, v in zip(lv.radii, state.u[k], state.v[k]):
                writer.writerow((k, repr(float(r)), repr(float(u)), repr(float(v))))


def read_snapshot(path):
    path = Path(path)
    with open(_with_suffix(path, ".json")) as fh:
        header = json.load(fh)
    levels = [MeshLevel(k, h, ext, n) for k, (h, ext, n) in
              enumerate(zip(header["spacings"], header["extents"], header["intervals"]))]
    grid = GridHierarchy(levels, header["max_depth"])
    u = [np.empty(lv.points) for lv in levels]
    v = [np.empty(lv.points) for lv in levels]
    with open(_with_suffix(path, ".csv"), newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        if tuple(next(rows)) != SNAPSHOT_COLUMNS:
            raise ValueError(f"{path}: unexpected snapshot columns")
        counters = [0] * len(levels)
        for row in rows:
            k = int(row[0])
            i = counters[k]
            u[k][i] = float(row[2])
            v[k][i] = float(row[3])
            counters[k] += 1
    return FieldState(grid, u, v, header["times"], header["dt0"], header["u_inf"],
                      header["steps"])
