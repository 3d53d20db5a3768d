import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wavemaps import diagnostics as dg
from wavemaps import experiments as ex
from wavemaps.evolver import Evolver
from wavemaps.evolver import NumericalBlowupOfScheme
from conftest import pulse_config


def _outcome(kind, reason=""):
    return SimpleNamespace(kind=kind, reason=reason, lambda_min=math.nan, T_est=math.nan,
                           t_bounce=math.nan, depth=0)


class ThresholdStub:
    """Blowup above ``threshold``, dispersal below, optional inconclusive band."""

    def __init__(self, threshold=1.0, band=0.0):
        self.threshold = threshold
        self.band = band

    def __call__(self, config):
        a = config.amplitude
        if abs(a - self.threshold) < self.band:
            return _outcome(ex.INCONCLUSIVE, "stub band")
        return _outcome(ex.BLOWUP if a > self.threshold else ex.DISPERSAL)


class NonMonotoneStub:
    def __call__(self, config):
        a = config.amplitude
        return _outcome(ex.BLOWUP if (a > 1.2 or 0.85 < a < 0.95) else ex.DISPERSAL)


# -- power-law fits --------------------------------------------------------

def test_fit_recovers_planted_power_law():
    t = np.linspace(2.5, 2.999, 400)
    fit = ex.fit_power_law((t, (3 - t) ** 1.1))
    assert fit.T == pytest.approx(3.0, abs=1e-3)
    assert fit.alpha == pytest.approx(1.1, abs=1e-3)
    assert fit.residual < 1e-8


def test_fit_recovers_linear_law():
    t = np.linspace(2.5, 2.999, 400)
    fit = ex.fit_power_law((t, 0.5 * (3 - t)))
    assert fit.alpha == pytest.approx(1.0, abs=1e-3)
    assert fit.T == pytest.approx(3.0, abs=1e-3)
    assert fit.log_prefactor == pytest.approx(math.log(0.5), abs=1e-3)


@given(st.floats(-5.0, 5.0))
def test_fit_invariant_under_time_translation(c):
    t = np.linspace(1.0, 1.995, 200)
    lam = 0.3 * (2.0 - t) ** 1.2
    a = ex.fit_power_law((t, lam))
    b = ex.fit_power_law((t + c, lam))
    assert b.T - c == pytest.approx(a.T, abs=1e-9)
    assert b.alpha == pytest.approx(a.alpha, abs=1e-7)


def test_fit_needs_a_decade():
    t = np.linspace(0.0, 0.5, 50)
    with pytest.raises(ex.InsufficientDecade):
        ex.fit_power_law((t, 1.0 - t))


def test_fit_window_and_monotone_tail():
    t = np.linspace(0.0, 2.99, 300)
    lam = (3 - t) ** 1.1
    lam[:50] = np.linspace(0.1, lam[50] * 1.01, 50)  # growth phase before the collapse
    tt, ll = ex.monotone_tail(t, lam)
    assert tt[0] == t[49] and np.all(np.diff(ll) < 0)
    fit = ex.fit_power_law((t, lam), lambda_max=0.5)
    assert fit.lambda_window[1] <= 0.5
    assert fit.alpha == pytest.approx(1.1, abs=1e-3)


# -- bisection -------------------------------------------------------------

def test_bisection_stub_probe_count():
    lo, hi, tol = 0.5, 1.5, 1e-3
    res = ex.bisect_critical_amplitude(lo, hi, tol, pulse_config(), runner=ThresholdStub(1.0))
    expected = math.ceil(math.log2((hi - lo) / tol))
    assert len(res.probes) == expected + 2  # plus the two end-point checks
    assert len(res.brackets) == expected + 1
    assert res.lo <= 1.0 <= res.hi and res.hi - res.lo <= tol
    widths = [b - a for a, b in res.brackets]
    assert all(w2 < w1 for w1, w2 in zip(widths, widths[1:]))


def test_parallel_bisection_matches_threshold():
    res = ex.bisect_critical_amplitude(0.5, 1.5, 1e-3, pulse_config(),
                                       runner=ThresholdStub(1.0371), jobs=3)
    assert res.lo <= 1.0371 <= res.hi and res.hi - res.lo <= 1e-3
    assert sorted(p["amplitude"] for p in res.probes) == sorted(
        {p["amplitude"] for p in res.probes})


def test_bisection_precondition():
    with pytest.raises(ex.PreconditionError):
        ex.bisect_critical_amplitude(0.5, 0.9, 1e-2, pulse_config(), runner=ThresholdStub(1.0))
    with pytest.raises(ex.PreconditionError):
        ex.bisect_critical_amplitude(1.5, 0.5, 1e-2, pulse_config(), runner=ThresholdStub(1.0))


def test_bisection_aborts_on_inconclusive_probe():
    with pytest.raises(ex.BisectionAborted) as info:
        ex.bisect_critical_amplitude(0.5, 1.5, 1e-4, pulse_config(),
                                     runner=ThresholdStub(1.0, band=0.01))
    assert info.value.probe["kind"] == ex.INCONCLUSIVE
    lo, hi = info.value.brackets[-1]
    assert lo < 1.0 < hi


def test_bisection_aborts_on_non_monotone_outcomes():
    with pytest.raises(ex.BisectionAborted):
        ex.bisect_critical_amplitude(0.5, 1.5, 1e-3, pulse_config(), runner=NonMonotoneStub(),
                                     jobs=4)


# -- single runs -----------------------------------------------------------

def test_zero_amplitude_fast_path():
    out = ex.run(pulse_config(0.0))
    assert out.kind == ex.DISPERSAL and out.reason == "zero initial energy"
    assert len(out.diagnostics) == 1


@pytest.fixture(scope="module")
def dispersal_run():
    return ex.run(pulse_config(0.5, base_points=1024, t_max=6.0))


def test_dispersal_bounce(dispersal_run):
    out = dispersal_run
    assert out.kind == ex.DISPERSAL
    assert out.t_bounce == pytest.approx(2.4, abs=0.1)
    assert not out.overshoot


def test_dispersal_leaves_centre_empty(dispersal_run):
    cfg = pulse_config(0.5, base_points=1024)
    state = ex.initial_state(cfg)
    e0 = dg.total_energy(state)
    evolver = Evolver(state, cfg.scheme)
    evolver.run_until(2 * dispersal_run.t_bounce)
    assert dg.energy_inside(evolver.state, cfg.radius / 2) < 0.05 * e0


def test_run_is_deterministic():
    cfg = pulse_config(1.072, base_points=256, max_depth=8, t_max=3.0)
    a, b = ex.run(cfg), ex.run(cfg)
    assert a.kind == b.kind and a.reason == b.reason
    for c in dg.SERIES_COLUMNS:
        assert np.array_equal(a.diagnostics.array(c), b.diagnostics.array(c), equal_nan=True)


def test_shallow_supercritical_run_is_not_called_blowup():
    out = ex.run(pulse_config(1.072, base_points=256, max_depth=3, t_max=3.0))
    assert out.kind == ex.INCONCLUSIVE
    assert "maximum depth" in out.reason


def test_t_max_reached_is_inconclusive():
    out = ex.run(pulse_config(0.5, base_points=256, t_max=1.0))
    assert out.kind == ex.INCONCLUSIVE and out.reason == "t_max reached"


def test_scheme_failure_is_inconclusive(monkeypatch):
    def explode(self, k):
        raise NumericalBlowupOfScheme("stub")

    monkeypatch.setattr(Evolver, "_step_level", explode)
    out = ex.run(pulse_config(0.5, base_points=64))
    assert out.kind == ex.INCONCLUSIVE and "scheme failure" in out.reason


def test_snapshots_taken_at_requested_times():
    out = ex.run(pulse_config(0.5, base_points=256, t_max=1.0, snapshot_times=(0.0, 0.5)))
    assert [s.times[0] for s in out.snapshots] == [0.0, 0.5]


# -- convergence -----------------------------------------------------------

def test_convergence_order_two():
    res = ex.convergence_study(pulse_config(0.5, base_points=512), t_end=1.0)
    assert not res.flagged
    assert res.order == pytest.approx(2.0, abs=0.2)


def test_trivial_field_is_flagged():
    cfg = pulse_config(0.5, initial="linear", linear_slope=0.3, base_points=64)
    res = ex.convergence_study(cfg, t_end=0.0)
    assert res.flagged and "roundoff" in res.reason and math.isnan(res.order)


def test_first_order_boundary_degrades_order():
    cfg = pulse_config(0.5, outer_radius=3.0, base_points=96)
    good = ex.convergence_study(cfg, t_end=6.0)
    bad = ex.convergence_study(cfg.replace(boundary="sommerfeld_2d_first_order"), t_end=6.0)
    assert good.order > 1.7
    assert bad.order == pytest.approx(1.0, abs=0.2)


def test_convergence_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ex.convergence_study(pulse_config(0.5, base_points=64), resolutions=(64, 100, 200))
    with pytest.raises(ValueError):
        ex.evolve_fixed(pulse_config(0.5, base_points=64), 0.3)
