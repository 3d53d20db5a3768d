"""Measured quantities along an evolution.

Everything here reads a :class:`~wavemaps.grid.FieldState` without modifying
it. Quadratures are composite trapezoid rules where each radial interval is
integrated on the finest level covering it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .analytic import static_solution
from .evolver import central_gradient
from .grid import sample

SERIES_SCHEMA = "wavemaps.diagnostics/1"
SERIES_COLUMNS = ("t", "depth", "u_r_center", "lambda", "sign", "E_total",
                  "E_K_lightcone", "E_P_lightcone", "profile_error", "refined")
ETA_POINTS = 64
ETA_REFERENCE = 10.0


class ScaleUndefined(ValueError):
    """Central gradient too small to define a scale factor."""


class LightconeEnergies(NamedTuple):
    kinetic: float
    potential: float
    empty: bool = False


def center_gradient(state):
    lv = state.grid.levels[-1]
    return central_gradient(state.u[-1], lv.spacing)


def scale_factor(state, floor=1e-8):
    """Scale ``lambda = 2 / |u_r(t, 0)|`` and the sign of the tracked ``u_S`` multiple.

    ``u ~ sign * u_S(r / lambda)`` has ``u_r(0) = 2 sign / lambda``.

    Raises
    ------
    ScaleUndefined
        If ``|u_r(0)|`` does not exceed ``floor``.
    """
    grad = center_gradient(state)
    if not abs(grad) > floor:
        raise ScaleUndefined(f"|u_r(0)| = {abs(grad):.3e} below floor {floor:.1e}")
    return 2.0 / abs(grad), (1 if grad > 0 else -1)


def _densities(u, v, h):
    """Energy integrands including the ``r`` weight.

    Returns nodal ``v^2 r`` and ``sin^2 u / r`` and, per interval, the
    gradient term ``r_{i+1/2} ((u_{i+1} - u_i) / h)^2``. Placing the gradient
    on half-integer radii matches the flux-form stencil, for which this sum
    is the conserved energy of the semi-discrete system.
    """
    r = np.arange(u.size) * h
    kin = v * v * r
    pot = np.zeros_like(u)
    pot[1:] = np.sin(u[1:]) ** 2 / r[1:]
    r_mid = r[:-1] + 0.5 * h
    grad = r_mid * (np.diff(u) / h) ** 2
    return kin, pot, grad


def _trapezoid(f, h):
    if f.size < 2:
        return 0.0
    return h * (f.sum() - 0.5 * (f[0] + f[-1]))


def _pieces(state):
    """Yield ``(k, first_node, h)`` for the part of each level not covered by a finer one."""
    levels = state.grid.levels
    for k, lv in enumerate(levels):
        first = lv.intervals // 2 if k < len(levels) - 1 else 0
        yield k, first, lv.spacing


def _integrate(state, radius=None):
    e_kin = 0.0
    e_pot = 0.0
    for k, first, h in _pieces(state):
        kin, pot, grad = _densities(state.u[k], state.v[k], h)
        last = kin.size - 1
        frac = 0.0
        if radius is not None:
            if radius <= first * h:
                continue
            x = radius / h
            last = min(int(math.floor(x)), last)
            frac = x - last
        e_kin += _trapezoid(kin[first:last + 1], h)
        e_pot += _trapezoid(pot[first:last + 1], h) + h * grad[first:last].sum()
        if last < kin.size - 1 and frac > 0:
            # partial cell [r_last, radius]: nodal integrands linear inside it,
            # the gradient term constant
            for f, is_kin in ((kin, True), (pot, False)):
                f_end = f[last] + frac * (f[last + 1] - f[last])
                piece = 0.5 * frac * h * (f[last] + f_end)
                if is_kin:
                    e_kin += piece
                else:
                    e_pot += piece
            e_pot += frac * h * grad[last]
    return math.pi * e_kin, math.pi * e_pot


def total_energy(state):
    """``pi * int (v^2 + u_r^2 + sin^2 u / r^2) r dr`` over the whole hierarchy."""
    e_kin, e_pot = _integrate(state)
    return e_kin + e_pot


def energy_split(state):
    """``(kinetic, potential)`` parts of :func:`total_energy`."""
    return _integrate(state)


def energy_inside(state, radius):
    """Total energy inside ``r < radius``."""
    e_kin, e_pot = _integrate(state, min(radius, state.grid.outer_radius))
    return e_kin + e_pot


def lightcone_energies(state, t_est):
    """Kinetic and potential energy inside the backward light cone ``r < T - t``.

    The radius is clipped to the outer radius of ``state``. If ``t >= T`` the
    range is empty and ``(0, 0, empty=True)`` is returned.
    """
    radius = t_est - state.time
    if not radius > 0:
        return LightconeEnergies(0.0, 0.0, True)
    radius = min(radius, state.grid.outer_radius)
    e_kin, e_pot = _integrate(state, radius)
    return LightconeEnergies(e_kin, e_pot, False)


def eta_grid(state, lam, eta_max=ETA_REFERENCE, points=ETA_POINTS):
    """Logarithmic grid starting at ``h_finest / lam`` with a fixed ratio.

    The ratio is chosen so that ``points`` nodes reach ``ETA_REFERENCE``; grids
    for different ``eta_max`` are therefore nested.
    """
    eta_min = state.grid.levels[-1].spacing / lam
    if eta_min >= ETA_REFERENCE:
        return np.array([eta_max])
    ratio = (ETA_REFERENCE / eta_min) ** (1.0 / (points - 1))
    n = int(math.floor(math.log(eta_max / eta_min) / math.log(ratio) + 1e-9)) + 1
    return eta_min * ratio ** np.arange(max(n, 1))


def profile_collapse_error(state, lam, sign, eta_max=ETA_REFERENCE):
    """Sup-norm distance between ``u(t, lam * eta)`` and ``sign * u_S(eta)``."""
    if lam * eta_max > state.grid.outer_radius:
        raise ValueError("lam * eta_max lies outside the domain")
    eta = eta_grid(state, lam, eta_max)
    u, _ = sample(state, lam * eta)
    return float(np.max(np.abs(u - static_solution(eta, 1.0, sign))))


def rate_ratio(series, t_est):
    """``(t, lambda / (T - t))`` for every sample with a defined scale factor."""
    t, lam = series.scale_tail()
    if np.any(t >= t_est):
        raise ValueError("T_est must exceed every sample time")
    return t, lam / (t_est - t)


@dataclass
class DiagnosticsSeries:
    """Column store of diagnostic samples, one row per sample time."""

    columns: dict = field(default_factory=lambda: {c: [] for c in SERIES_COLUMNS})

    def __len__(self):
        return len(self.columns["t"])

    def append(self, **row):
        t = row["t"]
        if len(self) and not t > self.columns["t"][-1]:
            raise ValueError(f"sample time {t!r} does not increase")
        for c in SERIES_COLUMNS:
            self.columns[c].append(row.get(c, math.nan))

    def pop(self):
        return {c: self.columns[c].pop() for c in SERIES_COLUMNS}

    def array(self, name):
        return np.asarray(self.columns[name], dtype=float)

    @property
    def t(self):
        return self.array("t")

    @property
    def lam(self):
        return self.array("lambda")

    def scale_tail(self):
        """``(t, lambda)`` restricted to samples where lambda is defined."""
        t, lam = self.t, self.lam
        ok = np.isfinite(lam)
        return t[ok], lam[ok]

    def to_csv(self, path, config_hash=""):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema={SERIES_SCHEMA} config_hash={config_hash}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SERIES_COLUMNS)
            for i in range(len(self)):
                writer.writerow([_fmt(self.columns[c][i]) for c in SERIES_COLUMNS])

    @classmethod
    def from_csv(cls, path):
        series = cls()
        with open(path, newline="") as fh:
            rows = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(rows)
            missing = [c for c in ("t", "lambda") if c not in header]
            if missing:
                raise ValueError(f"{path}: missing columns {missing}")
            for row in rows:
                record = {name: float(value) for name, value in zip(header, row)
                          if name in SERIES_COLUMNS}
                series.append(**record)
        return series


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))
