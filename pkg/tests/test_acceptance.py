"""Acceptance criteria 1-10.

Every test records exactly one line ``criterion N PASS|FAIL: ...``. Under
pytest the lines are repeated in a summary section at the end of the run;
``python3 tests/test_acceptance.py`` runs the criteria directly and prints them.

Trend criteria (7, 9, 10) are evaluated over the final decade of the scale
factor at the refinement instants. Each refinement happens at the same ratio
``lambda / h_finest``, so these samples share one discretization error and
compare like with like; pointwise counts are reported alongside.
"""

import functools
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402

from wavemaps import analytic, diagnostics, experiments as ex  # noqa: E402
from wavemaps.config import SimConfig  # noqa: E402
from wavemaps.evolver import Evolver, radial_laplacian_array  # noqa: E402

FOUR_PI = 4 * math.pi
PULSE = dict(radius=2.0, delta=0.4)


def report(n, ok, detail):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _orders(errs):
    errs = np.asarray(errs)
    return np.log2(errs[:-1] / errs[1:])


# -- 1 ---------------------------------------------------------------------

def test_criterion_1_stencil_and_oracles():
    lap_err = 0.0
    for h in (1e-3, 0.01, 0.1, 1.0):
        r = np.arange(101) * h
        lap_err = max(lap_err, float(np.max(np.abs(radial_laplacian_array(r * r, h) - 4.0))))
    rho = np.arange(1, 10) / 10
    ss = max(float(np.max(np.abs(analytic.self_similar_residual(a, rho))))
             for a in (0.5, 1.0, 2.0, 5.0))
    cont = float(np.max(np.abs(analytic.static_residual(np.geomspace(1e-2, 1e2, 200)))))
    errs = []
    for n in (200, 400, 800):
        h = 4.0 / n
        r = np.arange(n + 1) * h
        u = analytic.static_solution(r)
        res = radial_laplacian_array(u, h) - np.sin(2 * u[1:-1]) / (2 * r[1:-1] ** 2)
        errs.append(float(np.max(np.abs(res[r[1:-1] >= 0.5]))))
    orders = _orders(errs)
    ok = lap_err < 1e-9 and ss <= 1e-10 and cont < 1e-12 and np.all(np.abs(orders - 2) < 0.1)
    report(1, ok, f"laplacian(r^2) error {lap_err:.1e}, self-similar residual {ss:.1e}, "
                  f"static continuum residual {cont:.1e}, discrete orders "
                  f"{', '.join(f'{o:.2f}' for o in orders)}")


# -- 2 ---------------------------------------------------------------------

def test_criterion_2_convergence_order():
    cfg = SimConfig(amplitude=0.5, **PULSE, base_points=512)
    res = ex.convergence_study(cfg, t_end=1.0)
    ok = not res.flagged and abs(res.order - 2.0) <= 0.2
    report(2, ok, f"self-convergence order {res.order:.3f} from N = {res.resolutions} "
                  f"at t = 1 (target 2.0 +- 0.2)")


# -- 3 ---------------------------------------------------------------------

def test_criterion_3_energy_conservation():
    cfg = SimConfig(amplitude=0.5, **PULSE, base_points=2048, outer_radius=32.0)
    state = ex.initial_state(cfg)
    e0 = diagnostics.total_energy(state)
    evolver = Evolver(state, cfg.scheme)
    drift = 0.0
    for t in np.arange(0.5, 8.01, 0.5):
        evolver.run_until(t)
        drift = max(drift, abs(diagnostics.total_energy(evolver.state) - e0) / e0)
    report(3, drift <= 1e-3, f"max relative energy drift {drift:.2e} on [0, 8] at N = 2048 "
                             f"(limit 1e-3)")


# -- 4 ---------------------------------------------------------------------

def _static_drift(n):
    cfg = SimConfig(initial="static", base_points=n, outer_radius=32.0)
    evolver = Evolver(ex.initial_state(cfg), cfg.scheme)
    evolver.run_until(5.0)
    lv = evolver.state.grid.levels[0]
    inner = lv.radii <= 8.0
    return float(np.max(np.abs(evolver.state.u[0][inner] - analytic.static_solution(lv.radii[inner]))))


def test_criterion_4_static_stationarity():
    d2, d4 = _static_drift(2048), _static_drift(4096)
    ok = d2 <= 5e-3 and d4 <= 1.3e-3
    report(4, ok, f"sup drift on [0, 8] at t = 5: {d2:.2e} (N = 2048), {d4:.2e} (N = 4096), "
                  f"ratio {d2 / d4:.2f}")


# -- 5 ---------------------------------------------------------------------

def test_criterion_5_dispersal():
    out = ex.run(SimConfig(amplitude=0.5, **PULSE, base_points=1024, t_max=6.0))
    ok = out.kind == ex.DISPERSAL and abs(out.t_bounce - 2.4) <= 0.1
    report(5, ok, f"{out.kind}, t_bounce = {out.t_bounce:.4f}, lambda_min = "
                  f"{out.lambda_min:.4f} (target 2.4 +- 0.1)")


# -- 6 ---------------------------------------------------------------------

# Compact causal domain: the outgoing part of the pulse needs t > 10 to reach
# r = 8 and come back to the centre, far beyond the collapse near t = 2.6.
BISECT = dict(**PULSE, base_points=8192, outer_radius=8.0, t_max=6.0)


def _attainable_width(depth):
    """Width of the last bracket before a probe becomes unclassifiable at ``depth``."""
    cfg = SimConfig(amplitude=1.0, max_depth=depth, **BISECT)
    try:
        res = ex.bisect_critical_amplitude(0.5, 1.5, 1e-6, cfg, check_ends=False)
        return res.hi - res.lo
    except ex.BisectionAborted as exc:
        lo, hi = exc.brackets[-1]
        return hi - lo


def test_criterion_6_critical_amplitude():
    cfg = SimConfig(amplitude=1.0, max_depth=10, **BISECT)
    res = ex.bisect_critical_amplitude(0.5, 1.5, 5e-3, cfg)
    widths = [_attainable_width(d) for d in (6, 8, 10)]
    inside = 1.068 - 0.005 <= res.lo and res.hi <= 1.068 + 0.005
    tightening = all(b < a for a, b in zip(widths, widths[1:]))
    ok = inside and res.hi - res.lo <= 5e-3 and tightening
    report(6, ok, f"bracket [{res.lo:.6f}, {res.hi:.6f}] after {len(res.probes)} probes "
                  f"(target inside 1.068 +- 0.005); attainable width at depth 6/8/10: "
                  f"{', '.join(f'{w:.2e}' for w in widths)}")


# -- 7-10: one supercritical run --------------------------------------------

BLOWUP = SimConfig(amplitude=1.072, **PULSE, base_points=4096, max_depth=16, t_max=4.0,
                   fit_lambda_max=1e-2)


@functools.lru_cache(maxsize=None)
def blowup_run():
    return ex.run_with_lightcone(BLOWUP)


def final_decade(series):
    """Masks (window, checkpoints) for samples with lambda within a decade of its last value."""
    lam = series.lam
    lam_last = lam[np.isfinite(lam)][-1]
    window = np.isfinite(lam) & (lam <= 10 * lam_last)
    return window, window & (series.array("refined") > 0)


def _decreasing(x):
    return bool(np.all(np.diff(x) < 0))


def _rises(x):
    return int(np.sum(np.diff(x) >= 0))


def test_criterion_7_blowup():
    out = blowup_run()
    window, check = final_decade(out.diagnostics)
    err = out.diagnostics.array("profile_error")
    pts = err[check & np.isfinite(err)]
    ok = (out.kind == ex.BLOWUP and abs(out.T_est - 2.559) <= 0.010 and out.overshoot
          and out.overshoot_time <= out.t_final and pts.size >= 3 and _decreasing(pts))
    report(7, ok, f"{out.kind} at depth {out.depth}, T_est = {out.T_est:.6f} (target 2.559 +- "
                  f"0.010), overshoot at t = {out.overshoot_time:.6f}; collapse error at "
                  f"{pts.size} refinements of the last decade: "
                  f"{', '.join(f'{e:.2e}' for e in pts)}")


def test_criterion_8_blowup_rate():
    out = blowup_run()
    t = np.linspace(2.5, 2.999, 400)
    synth = ex.fit_power_law((t, (3 - t) ** 1.1))
    synth_ok = abs(synth.T - 3) <= 1e-3 and abs(synth.alpha - 1.1) <= 1e-3
    fit = out.fit
    ok = synth_ok and fit is not None and 1.0 <= fit.alpha <= 1.25 and fit.lambda_window[1] <= 1e-2
    report(8, ok, f"alpha = {fit.alpha:.4f} over lambda in [{fit.lambda_window[0]:.1e}, "
                  f"{fit.lambda_window[1]:.1e}] ({fit.samples} samples, rms {fit.residual:.1e}); "
                  f"synthetic fit T = {synth.T:.6f}, alpha = {synth.alpha:.6f}")


def test_criterion_9_energy_concentration():
    out = blowup_run()
    s = out.diagnostics
    window, check = final_decade(s)
    ek = s.array("E_K_lightcone") / FOUR_PI
    ep = s.array("E_P_lightcone") / FOUR_PI
    have = window & np.isfinite(ek) & np.isfinite(ep)
    ep_w = ep[have]
    ek_c = ek[check & np.isfinite(ek)]
    ok = (ep_w.size > 0 and np.all((ep_w >= 0.9) & (ep_w <= 1.1)) and ek_c.size >= 3
          and _decreasing(ek_c) and ek[have][-1] < 0.2)
    report(9, ok, f"E_P/4pi in [{ep_w.min():.4f}, {ep_w.max():.4f}] over {ep_w.size} samples; "
                  f"E_K/4pi at refinements {', '.join(f'{e:.2e}' for e in ek_c)}, final "
                  f"{ek[have][-1]:.2e} ({_rises(ek[have])} pointwise rises)")


def test_criterion_10_rate_condition():
    out = blowup_run()
    s = out.diagnostics
    window, check = final_decade(s)
    t, ratio = diagnostics.rate_ratio(s, out.T_est)
    finite = np.isfinite(s.lam)
    ratio_c = ratio[check[finite]]
    ok = ratio_c.size >= 3 and _decreasing(ratio_c)
    report(10, ok, f"lambda/(T - t) at refinements {', '.join(f'{x:.4f}' for x in ratio_c)} "
                   f"({_rises(ratio[window[finite]])} pointwise rises)")


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
