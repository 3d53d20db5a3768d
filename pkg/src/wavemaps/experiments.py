"""Experiment protocols: single-run classification, critical-amplitude
bisection, power-law fits of the scale factor and self-convergence tests."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import analytic, diagnostics
from .diagnostics import DiagnosticsSeries, ScaleUndefined
from .evolver import Evolver, NumericalBlowupOfScheme, StopEvolution
from .grid import build_uniform, state_from_profiles

log = logging.getLogger(__name__)

DISPERSAL = "dispersal"
BLOWUP = "blowup"
INCONCLUSIVE = "inconclusive"


class InsufficientDecade(ValueError):
    """The monotone tail of lambda spans less than one decade."""


class PreconditionError(ValueError):
    pass


class BisectionAborted(RuntimeError):
    def __init__(self, message, probe=None, brackets=()):
        super().__init__(message)
        self.probe = probe
        self.brackets = list(brackets)


@dataclass
class PowerLawFit:
    T: float
    alpha: float
    lambda_window: tuple
    residual: float
    samples: int
    log_prefactor: float = math.nan

    def to_dict(self):
        return {"T": self.T, "alpha": self.alpha, "lambda_window": list(self.lambda_window),
                "residual": self.residual, "samples": self.samples,
                "log_prefactor": self.log_prefactor}


@dataclass
class RunOutcome:
    kind: str
    reason: str
    t_final: float
    depth: int
    diagnostics: DiagnosticsSeries
    t_bounce: float = math.nan
    lambda_min: float = math.nan
    T_est: float = math.nan
    fit: PowerLawFit = None
    lambda_last: float = math.nan
    overshoot_time: float = math.nan
    initial_energy: float = math.nan
    refinements: list = field(default_factory=list)
    lambda_first_refinement: float = math.nan
    profiles: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @property
    def overshoot(self):
        return not math.isnan(self.overshoot_time)

    def summary(self):
        d = {"kind": self.kind, "reason": self.reason, "t_final": self.t_final,
             "depth": self.depth, "t_bounce": self.t_bounce, "lambda_min": self.lambda_min,
             "T_est": self.T_est, "lambda_last": self.lambda_last,
             "overshoot": self.overshoot, "overshoot_time": self.overshoot_time,
             "initial_energy": self.initial_energy,
             "refinements": [[t, k] for t, k in self.refinements],
             "fit": self.fit.to_dict() if self.fit else None}
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in d.items()}


def initial_state(config):
    grid = build_uniform(config.outer_radius, config.base_points, config.max_depth)
    if config.initial == "pulse":
        family = analytic.InitialDataFamily(config.amplitude, config.radius, config.delta)
        return state_from_profiles(grid, config.dt0, family.profile, family.momentum)
    if config.initial == "static":
        return state_from_profiles(grid, config.dt0, lambda r: analytic.static_solution(
            r, config.static_lambda, config.static_sign))
    return state_from_profiles(grid, config.dt0, lambda r: config.linear_slope * r)


class _Monitor:
    """Sync hook: records diagnostics and decides when the run is over."""

    def __init__(self, config, record_profiles=False):
        self.config = config
        self.series = DiagnosticsSeries()
        self.record_profiles = record_profiles
        self.profiles = []
        self.snapshots = []
        self.pending_snapshots = sorted(config.snapshot_times)
        self.lam_min = math.inf
        self.t_min = math.nan
        self.above_since = None
        self.lam_last = math.nan
        self.lam_first_refinement = math.nan
        self.shrinking = False
        self.overshoot_time = math.nan
        self.kind = None
        self.reason = ""

    def stop(self, kind, reason):
        self.kind = kind
        self.reason = reason
        raise StopEvolution(reason)

    def __call__(self, evolver, k):
        state = evolver.state
        cfg = self.config
        u = state.u[k]
        if math.isnan(self.overshoot_time) and (u.max() > math.pi or u.min() < -math.pi):
            self.overshoot_time = state.times[k]
        if k == 0:
            self.take_snapshots(state)
        finest = state.grid.finest
        if k == finest or (evolver.last_refined and k == finest - 1):
            self._finest_sync(evolver)
        if k == 0 and state.steps[0] % cfg.diag_cadence == 0:
            self._sample(evolver, 0, refined=False)

    def take_snapshots(self, state):
        """Copy ``state`` for every requested time it has reached (first sync at or after it)."""
        while self.pending_snapshots and state.times[0] >= self.pending_snapshots[0] - 1e-12:
            self.pending_snapshots.pop(0)
            if not self.snapshots or self.snapshots[-1].times[0] != state.times[0]:
                self.snapshots.append(state.copy())

    def _finest_sync(self, evolver):
        state = evolver.state
        cfg = self.config
        t = state.time
        refined = evolver.last_refined
        try:
            lam, sign = diagnostics.scale_factor(state, cfg.scale_floor)
        except ScaleUndefined:
            lam, sign = math.inf, 0
        if refined and math.isnan(self.lam_first_refinement):
            self.lam_first_refinement = lam
        self.shrinking = lam < self.lam_last
        self.lam_last = lam
        if lam < self.lam_min:
            self.lam_min = lam
            self.t_min = t
            self.above_since = None
        elif lam > cfg.growth_factor * self.lam_min:
            if self.above_since is None:
                self.above_since = t
        else:
            self.above_since = None
        if refined or state.steps[-1] % cfg.diag_cadence == 0 or evolver.depth_exhausted:
            self._sample(evolver, state.grid.finest, refined)
        if evolver.depth_exhausted:
            if not math.isnan(self.overshoot_time) and self.shrinking:
                self.stop(BLOWUP, "maximum depth reached with overshoot")
            self.stop(INCONCLUSIVE, "maximum depth reached without overshoot"
                      if math.isnan(self.overshoot_time) else
                      "maximum depth reached while not shrinking")
        if lam <= cfg.blowup_threshold and not math.isnan(self.overshoot_time):
            self.stop(BLOWUP, "scale factor below threshold with overshoot")
        if (self.above_since is not None
                and t - self.above_since >= cfg.bounce_persistence * self.lam_min):
            self.stop(DISPERSAL, "scale factor grew after its minimum")

    def _sample(self, evolver, sync_level, refined):
        state = evolver.state
        cfg = self.config
        t = state.times[sync_level]
        if len(self.series) and not t > self.series.columns["t"][-1]:
            refined = refined or bool(self.series.pop()["refined"])
        view = state.view(sync_level)
        grad = diagnostics.center_gradient(state)
        row = {"t": t, "depth": state.grid.finest, "u_r_center": grad, "refined": int(refined)}
        if abs(grad) > cfg.scale_floor:
            lam, sign = 2.0 / abs(grad), (1 if grad > 0 else -1)
            row["lambda"] = lam
            row["sign"] = sign
            if lam * cfg.eta_max <= view.grid.outer_radius:
                row["profile_error"] = diagnostics.profile_collapse_error(
                    view, lam, sign, cfg.eta_max)
            if self.record_profiles and refined:
                self.profiles.append(_rescaled_profile(view, lam, sign, cfg.eta_max))
        else:
            row["sign"] = 0
        if sync_level == 0:
            row["E_total"] = diagnostics.total_energy(state)
        if cfg.t_est is not None and t < cfg.t_est:
            radius = cfg.t_est - t
            if radius <= view.grid.outer_radius:
                e = diagnostics.lightcone_energies(view, cfg.t_est)
                row["E_K_lightcone"] = e.kinetic
                row["E_P_lightcone"] = e.potential
        self.series.append(**row)


def _rescaled_profile(state, lam, sign, eta_max):
    eta = diagnostics.eta_grid(state, lam, min(eta_max * 10, state.grid.outer_radius / lam))
    u, v = diagnostics.sample(state, lam * eta)
    return {"t": state.time, "lambda": lam, "sign": sign, "eta": eta, "u": u, "lambda_v": lam * v}


def run(config, record_profiles=False):
    """Evolve ``config`` with refinement and classify the result."""
    state = initial_state(config)
    e0 = diagnostics.total_energy(state)
    series_zero = DiagnosticsSeries()
    if e0 == 0.0:
        series_zero.append(t=0.0, depth=0, u_r_center=0.0, sign=0, E_total=0.0, refined=0)
        return RunOutcome(DISPERSAL, "zero initial energy", 0.0, 0, series_zero,
                          lambda_min=math.inf, initial_energy=0.0)
    monitor = _Monitor(config, record_profiles)
    evolver = Evolver(state, config.scheme, auto_refine=True, on_sync=monitor)
    monitor._sample(evolver, 0, refined=False)
    monitor.take_snapshots(state)
    try:
        finished = evolver.run_until(config.t_max)
    except NumericalBlowupOfScheme as exc:
        monitor.kind, monitor.reason = INCONCLUSIVE, f"scheme failure: {exc}"
    else:
        if finished:
            monitor.kind, monitor.reason = INCONCLUSIVE, "t_max reached"
    state = evolver.state
    outcome = RunOutcome(monitor.kind, monitor.reason, state.time, state.grid.finest,
                         monitor.series, lambda_last=monitor.lam_last,
                         overshoot_time=monitor.overshoot_time, initial_energy=e0,
                         refinements=list(evolver.refinements),
                         lambda_first_refinement=monitor.lam_first_refinement,
                         profiles=monitor.profiles, snapshots=monitor.snapshots)
    if outcome.kind == DISPERSAL:
        outcome.t_bounce = monitor.t_min
        outcome.lambda_min = monitor.lam_min
    elif outcome.kind == BLOWUP:
        outcome.lambda_min = monitor.lam_min
        try:
            outcome.fit = fit_power_law(monitor.series, *fit_window(config, outcome))
            outcome.T_est = outcome.fit.T
        except InsufficientDecade as exc:
            log.warning("power-law fit skipped: %s", exc)
            outcome.T_est = _linear_extrapolation(monitor.series)
    return outcome


def fit_window(config, outcome):
    upper = config.fit_lambda_max
    if upper is None:
        upper = 0.1 * outcome.lambda_first_refinement
    return upper, config.fit_lambda_min


def _linear_extrapolation(series):
    t, lam = series.scale_tail()
    if t.size < 2 or lam[-1] >= lam[-2]:
        return math.nan
    slope = (lam[-1] - lam[-2]) / (t[-1] - t[-2])
    return float(t[-1] - lam[-1] / slope)


def run_with_lightcone(config, record_profiles=False):
    """Blowup run followed by a rerun with the fitted ``T`` as ``t_est``.

    The evolution is deterministic, so the rerun follows the same trajectory
    and only adds light-cone energies to the diagnostics.
    """
    first = run(config, record_profiles)
    if first.kind != BLOWUP or not math.isfinite(first.T_est) or config.t_est is not None:
        return first
    second = run(config.replace(t_est=first.T_est), record_profiles)
    second.T_est = first.T_est
    return second


def monotone_tail(t, lam, lambda_max=None, lambda_min=None):
    """Final strictly decreasing stretch of ``lam`` with ``lambda_min <= lam <= lambda_max``."""
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    ok = np.isfinite(lam)
    t, lam = t[ok], lam[ok]
    if lam.size == 0:
        return t, lam
    start = lam.size - 1
    while start > 0 and lam[start - 1] > lam[start]:
        start -= 1
    t, lam = t[start:], lam[start:]
    keep = np.ones(lam.size, dtype=bool)
    if lambda_max is not None:
        keep &= lam <= lambda_max
    if lambda_min is not None:
        keep &= lam >= lambda_min
    return t[keep], lam[keep]


def _loglog_fit(t, lam, T):
    x = np.log(T - t)
    y = np.log(lam)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return coef, float(np.sqrt(np.mean(resid * resid)))


def fit_power_law(series, lambda_max=None, lambda_min=None, span=2.0, grid_points=200):
    """Fit ``lambda ~ (T - t)^alpha`` to the monotone tail of ``series``.

    ``T`` is scanned on ``(t_last, t_last + span * lambda_last]`` with
    logarithmically spaced offsets, then polished by golden-section search on
    the bracket around the best grid point. If the minimum sits at the upper
    end of the scan the span is doubled (up to eight times).

    Raises
    ------
    InsufficientDecade
        If the fitted window covers less than one decade of lambda.
    """
    if isinstance(series, DiagnosticsSeries):
        t, lam = series.scale_tail()
    else:
        t, lam = (np.asarray(a, dtype=float) for a in series)
    t, lam = monotone_tail(t, lam, lambda_max, lambda_min)
    if lam.size < 4 or lam[0] / lam[-1] < 10.0:
        decades = math.log10(lam[0] / lam[-1]) if lam.size > 1 else 0.0
        raise InsufficientDecade(f"monotone tail spans {decades:.2f} decades "
                                 f"over {lam.size} samples")
    t_last, lam_last = t[-1], lam[-1]

    def objective(log_offset):
        return _loglog_fit(t, lam, t_last + math.exp(log_offset))[1]

    lo = math.log(lam_last * 1e-4)
    for _ in range(9):
        hi = math.log(span * lam_last)
        offsets = np.linspace(lo, hi, grid_points)
        values = np.array([objective(x) for x in offsets])
        best = int(np.argmin(values))
        if best < grid_points - 1:
            break
        span *= 2.0
    if 0 < best < grid_points - 1:
        res = minimize_scalar(objective, bracket=(offsets[best - 1], offsets[best],
                                                  offsets[best + 1]),
                              method="golden", tol=1e-12)
        x_best = res.x if res.fun <= values[best] else offsets[best]
    else:
        x_best = offsets[best]
    T = t_last + math.exp(x_best)
    coef, resid = _loglog_fit(t, lam, T)
    return PowerLawFit(float(T), float(coef[0]), (float(lam[-1]), float(lam[0])), resid,
                       int(lam.size), float(coef[1]))


@dataclass
class BisectionResult:
    lo: float
    hi: float
    probes: list
    brackets: list
    resolution: dict

    def to_dict(self):
        return {"bracket": [self.lo, self.hi], "probes": self.probes,
                "brackets": [list(b) for b in self.brackets], "resolution": self.resolution}


def _probe(args):
    runner, config = args
    outcome = runner(config)
    return {"amplitude": config.amplitude, "kind": outcome.kind, "reason": outcome.reason,
            "lambda_min": _finite(outcome.lambda_min), "T_est": _finite(outcome.T_est),
            "t_bounce": _finite(outcome.t_bounce), "depth": outcome.depth}


def _finite(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


def bisect_critical_amplitude(lo, hi, tol, template, runner=run, jobs=1, check_ends=True):
    """Shrink ``[lo, hi]`` around the threshold amplitude separating dispersal
    from blowup.

    With ``jobs > 1`` each round probes ``jobs`` interior amplitudes in
    parallel processes and keeps the sub-interval between the largest
    dispersing and the smallest blowing-up probe.

    Raises
    ------
    PreconditionError
        If ``lo`` does not disperse or ``hi`` does not blow up.
    BisectionAborted
        If a probe is inconclusive or outcomes are not ordered in amplitude.
    """
    if not lo < hi:
        raise PreconditionError(f"need lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise PreconditionError("tol must be positive")
    probes = []
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None

    def evaluate(amplitudes):
        tasks = [(runner, template.replace(amplitude=float(a))) for a in amplitudes]
        results = list(pool.map(_probe, tasks)) if pool else [_probe(x) for x in tasks]
        probes.extend(results)
        return results

    try:
        if check_ends:
            lo_res, hi_res = evaluate([lo, hi])
            if lo_res["kind"] != DISPERSAL:
                raise PreconditionError(f"lower amplitude {lo} gave {lo_res['kind']}, "
                                        "expected dispersal")
            if hi_res["kind"] != BLOWUP:
                raise PreconditionError(f"upper amplitude {hi} gave {hi_res['kind']}, "
                                        "expected blowup")
        brackets = [(lo, hi)]
        while hi - lo > tol:
            k = max(jobs, 1)
            amps = [lo + (hi - lo) * (i + 1) / (k + 1) for i in range(k)]
            results = evaluate(amps)
            for res in results:
                if res["kind"] == INCONCLUSIVE:
                    raise BisectionAborted(f"probe A={res['amplitude']} inconclusive: "
                                           f"{res['reason']}", res, brackets)
            kinds = [res["kind"] for res in results]
            first_blowup = kinds.index(BLOWUP) if BLOWUP in kinds else len(kinds)
            if any(kind == DISPERSAL for kind in kinds[first_blowup:]):
                raise BisectionAborted("outcomes not monotone in amplitude", results,
                                       brackets)
            new_lo = amps[first_blowup - 1] if first_blowup > 0 else lo
            new_hi = amps[first_blowup] if first_blowup < len(amps) else hi
            lo, hi = new_lo, new_hi
            brackets.append((lo, hi))
            log.info("bracket [%.7f, %.7f]", lo, hi)
    finally:
        if pool:
            pool.shutdown()
    resolution = {"base_points": template.base_points, "outer_radius": template.outer_radius,
                  "max_depth": template.max_depth, "tolerance": template.tolerance,
                  "courant": template.courant}
    return BisectionResult(lo, hi, probes, brackets, resolution)


@dataclass
class ConvergenceResult:
    order: float
    differences: tuple
    resolutions: tuple
    flagged: bool
    reason: str = ""

    def to_dict(self):
        return {"order": _finite(self.order), "differences": list(self.differences),
                "resolutions": list(self.resolutions), "flagged": self.flagged,
                "reason": self.reason}


def evolve_fixed(config, t_end):
    """Evolve without refinement to ``t_end`` and return the final state."""
    state = initial_state(config.replace(max_depth=0))
    evolver = Evolver(state, config.scheme, auto_refine=False)
    steps = t_end / config.dt0
    if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
        raise ValueError(f"t_end={t_end} is not a multiple of dt0={config.dt0}")
    evolver.run_steps(int(round(steps)))
    return evolver.state


def convergence_study(config, t_end=1.0, resolutions=None):
    """Self-convergence order from three runs with spacing ``h, h/2, h/4``.

    The order is ``log2(|u_h - u_{h/2}| / |u_{h/2} - u_{h/4}|)`` with discrete
    L2 norms over the nodes shared by all three grids.
    """
    if resolutions is None:
        n = config.base_points
        resolutions = (n, 2 * n, 4 * n)
    if len(resolutions) != 3 or resolutions[1] != 2 * resolutions[0] \
            or resolutions[2] != 2 * resolutions[1]:
        raise ValueError("resolutions must be (N, 2N, 4N)")
    u = [evolve_fixed(config.replace(base_points=n), t_end).u[0] for n in resolutions]
    h = config.outer_radius / resolutions[0]
    d1 = u[0] - u[1][::2]
    d2 = u[1][::2] - u[2][::4]
    n1 = float(np.sqrt(h * np.sum(d1 * d1)))
    n2 = float(np.sqrt(h * np.sum(d2 * d2)))
    scale = max(float(np.max(np.abs(u[2]))), 1.0)
    if n1 <= 1e-13 * scale and n2 <= 1e-13 * scale:
        return ConvergenceResult(math.nan, (n1, n2), tuple(resolutions), True,
                                 "differences at roundoff level")
    if not n2 < n1:
        return ConvergenceResult(math.nan, (n1, n2), tuple(resolutions), True,
                                 "differences do not decrease")
    return ConvergenceResult(math.log2(n1 / n2), (n1, n2), tuple(resolutions), False)
