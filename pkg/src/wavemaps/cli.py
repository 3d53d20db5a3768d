"""Command-line front end.

Subcommands
-----------
evolve          run one configuration, write diagnostics, outcome and snapshots
bisect          bracket the threshold amplitude between dispersal and blowup
fit             power-law fit of a scale-factor series
converge        three-resolution self-convergence order
analytic-check  closed-form oracle checks

Every file written embeds the hash of the configuration that produced it and
contains no timestamps, so rerunning a command reproduces it byte for byte.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 failed
precondition, 4 bisection aborted on an inconclusive or non-monotone probe,
5 failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic, diagnostics, experiments
from .config import ConfigError, SimConfig, parse_override
from .evolver import radial_laplacian_array
from .grid import write_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_ABORTED = 4
EXIT_CHECK_FAILED = 5

PROFILE_SCHEMA = "wavemaps.profiles/1"
PROFILE_COLUMNS = ("t", "lambda", "sign", "eta", "u", "lambda_v")
FIT_SCHEMA = "wavemaps.fit/1"
FIT_COLUMNS = ("t", "lambda", "T_minus_t", "lambda_fit", "in_window")

log = logging.getLogger("wavemaps")


def load_config(args, defaults=None):
    """Build a :class:`SimConfig` from ``--config``, ``--override``, ``--max-depth`` and ``--out``.

    ``defaults`` fill fields that none of those sources set.
    """
    data = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("--config", f"{path} does not exist")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("--config", f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("--config", "top level must be a JSON object")
    for text in getattr(args, "override", None) or []:
        key, value = parse_override(text)
        data[key] = value
    if getattr(args, "max_depth", None) is not None:
        data["max_depth"] = args.max_depth
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    for key, value in (defaults or {}).items():
        data.setdefault(key, value)
    return SimConfig.from_dict(data)


def _dump_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    """Convert numpy scalars and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def write_profiles(profiles, path, config_hash):
    """Rescaled profiles ``u(t, lambda eta)`` and ``lambda v(t, lambda eta)`` in long format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={PROFILE_SCHEMA} config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROFILE_COLUMNS)
        for p in profiles:
            for eta, u, lv in zip(p["eta"], p["u"], p["lambda_v"]):
                writer.writerow((repr(float(p["t"])), repr(float(p["lambda"])), int(p["sign"]),
                                 repr(float(eta)), repr(float(u)), repr(float(lv))))


def write_outcome(outcome, config, out_dir):
    """Write ``config.json``, ``diagnostics.csv``, ``outcome.json`` and optional extras."""
    out_dir = Path(out_dir)
    h = config.config_hash()
    _dump_json(out_dir / "config.json", {"config_hash": h, "config": config.to_dict()})
    outcome.diagnostics.to_csv(out_dir / "diagnostics.csv", h)
    _dump_json(out_dir / "outcome.json", {"config_hash": h, "outcome": outcome.summary()})
    if outcome.profiles:
        write_profiles(outcome.profiles, out_dir / "profiles.csv", h)
    for state in outcome.snapshots:
        write_snapshot(state, out_dir / "snapshots" / f"t_{state.times[0]:.6f}", h)


def cmd_evolve(args):
    config = load_config(args)
    outcome = experiments.run_with_lightcone(config, record_profiles=True)
    write_outcome(outcome, config, config.output_dir)
    line = f"{outcome.kind}: {outcome.reason}"
    if outcome.kind == experiments.DISPERSAL:
        line += f" (t_bounce={outcome.t_bounce:.4f}, lambda_min={outcome.lambda_min:.4g})"
    elif outcome.kind == experiments.BLOWUP:
        line += f" (T_est={outcome.T_est:.7f}, lambda_last={outcome.lambda_last:.3g})"
    print(line)
    return EXIT_OK


def _probe_runner(config):
    """Bisection probe that also keeps the probe's diagnostics series."""
    outcome = experiments.run(config)
    name = f"A_{config.amplitude:.10f}.csv"
    outcome.diagnostics.to_csv(Path(config.output_dir) / "probes" / name, config.config_hash())
    return outcome


def cmd_bisect(args):
    # the template amplitude is replaced by every probe
    config = load_config(args, defaults={"amplitude": args.lo})
    out_dir = Path(config.output_dir)
    manifest = {"config_hash": config.config_hash(), "template": config.to_dict(),
                "lo": args.lo, "hi": args.hi, "tol": args.tol}
    try:
        result = experiments.bisect_critical_amplitude(args.lo, args.hi, args.tol, config,
                                                       runner=_probe_runner, jobs=args.jobs)
    except experiments.PreconditionError as exc:
        manifest.update(status="precondition_failed", error=str(exc))
        _dump_json(out_dir / "bisection.json", manifest)
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except experiments.BisectionAborted as exc:
        manifest.update(status="aborted", error=str(exc), offending_probe=exc.probe,
                        brackets=exc.brackets)
        _dump_json(out_dir / "bisection.json", manifest)
        print(f"bisection aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    manifest.update(status="ok", **result.to_dict())
    _dump_json(out_dir / "bisection.json", manifest)
    print(f"A* in [{result.lo:.7f}, {result.hi:.7f}] after {len(result.probes)} probes")
    return EXIT_OK


def write_fit_series(t, lam, fit, path, config_hash):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lo, hi = fit.lambda_window
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={FIT_SCHEMA} config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIT_COLUMNS)
        for ti, li in zip(t, lam):
            if not (math.isfinite(li) and ti < fit.T):
                continue
            dt = fit.T - ti
            model = math.exp(fit.log_prefactor) * dt ** fit.alpha
            writer.writerow((repr(float(ti)), repr(float(li)), repr(float(dt)),
                             repr(float(model)), int(lo <= li <= hi)))


def cmd_fit(args):
    if args.series:
        series = diagnostics.DiagnosticsSeries.from_csv(args.series)
        config = None
        lam_max = args.lambda_max
        config_hash = _series_hash(args.series)
        out_dir = Path(args.out or "out")
    else:
        config = load_config(args)
        outcome = experiments.run(config)
        if outcome.kind != experiments.BLOWUP:
            print(f"run did not blow up ({outcome.kind}: {outcome.reason})", file=sys.stderr)
            return EXIT_PRECONDITION
        series = outcome.diagnostics
        lam_max = args.lambda_max
        if lam_max is None:
            lam_max = experiments.fit_window(config, outcome)[0]
        config_hash = config.config_hash()
        out_dir = Path(config.output_dir)
    try:
        fit = experiments.fit_power_law(series, lam_max, args.lambda_min)
    except experiments.InsufficientDecade as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    _dump_json(out_dir / "fit.json", {"config_hash": config_hash, "fit": fit.to_dict()})
    write_fit_series(series.t, series.lam, fit, out_dir / "fit_series.csv", config_hash)
    print(f"T = {fit.T:.7f}, alpha = {fit.alpha:.4f}, residual = {fit.residual:.3g} "
          f"over {fit.samples} samples")
    return EXIT_OK


def _series_hash(path):
    """Hash recorded in a series file header, or an empty string."""
    with open(path) as fh:
        first = fh.readline()
    for token in first.split():
        if token.startswith("config_hash="):
            return token.split("=", 1)[1]
    return ""


def cmd_converge(args):
    config = load_config(args)
    result = experiments.convergence_study(config, t_end=args.t_end)
    _dump_json(Path(config.output_dir) / "convergence.json",
               {"config_hash": config.config_hash(), "t_end": args.t_end,
                **result.to_dict()})
    if result.flagged:
        print(f"convergence flagged: {result.reason}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"observed order {result.order:.3f}")
    return EXIT_OK


def analytic_checks():
    """Closed-form oracle checks as ``(name, value, tolerance)`` triples; passing means ``value <= tolerance``."""
    checks = []
    h = 0.01
    r = np.arange(201) * h
    lap = radial_laplacian_array(r * r, h)
    checks.append(("laplacian of r^2 equals 4", float(np.max(np.abs(lap - 4.0))), 1e-9))
    lap = radial_laplacian_array(np.full(r.size, 3.0), h)
    checks.append(("laplacian of a constant vanishes", float(np.max(np.abs(lap))), 1e-12))
    rho = np.linspace(0.05, 0.95, 19)
    worst = max(float(np.max(np.abs(analytic.self_similar_residual(a, rho))))
                for a in (0.25, 0.5, 1.0, 2.0, 4.0))
    checks.append(("self-similar residual", worst, 1e-10))
    rr = np.linspace(0.1, 10.0, 100)
    checks.append(("static continuum residual",
                   float(np.max(np.abs(analytic.static_residual(rr, 1.0)))), 1e-12))
    errs = []
    for n in (200, 400):
        hh = 4.0 / n
        nodes = np.arange(n + 1) * hh
        u = analytic.static_solution(nodes)
        res = radial_laplacian_array(u, hh) - np.sin(2 * u[1:-1]) / (2 * nodes[1:-1] ** 2)
        # the first nodes carry an O(h) local error from the 1/r^2 term; measure
        # the bulk order away from the centre
        errs.append(float(np.max(np.abs(res[nodes[1:-1] >= 0.5]))))
    checks.append(("static discrete residual order 2", abs(math.log2(errs[0] / errs[1]) - 2.0),
                   0.1))
    checks.append(("static energy equals 4 pi",
                   abs(analytic.static_energy_in_ball(1.0, math.inf) - analytic.FOUR_PI), 1e-12))
    lam, big_r = 0.7, 3.0
    closed = analytic.static_energy_in_ball(lam, big_r)
    quad = _static_energy_quadrature(lam, big_r)
    checks.append(("static energy in a ball", abs(closed - quad), 1e-8))
    return checks


def _static_energy_quadrature(lam, radius):
    from scipy.integrate import quad

    def density(x):
        u_r = analytic.static_solution_dr(x, lam)
        u = analytic.static_solution(x, lam)
        return (u_r * u_r + math.sin(u) ** 2 / (x * x)) * x if x > 0 else 0.0

    value, _ = quad(density, 0.0, radius, epsabs=1e-13, epsrel=1e-13, limit=200)
    return math.pi * value


def cmd_analytic_check(args):
    failed = 0
    for name, value, tol in analytic_checks():
        ok = value <= tol
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3e} (tolerance {tol:.0e})")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _add_config_flags(p):
    p.add_argument("--config", metavar="PATH", help="JSON configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    p.add_argument("--max-depth", type=int, metavar="K", help="maximum refinement depth")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="set a configuration field; may be repeated")


def build_parser():
    parser = argparse.ArgumentParser(prog="wavemaps",
                                     description="Equivariant wave maps into the two-sphere.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run one configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("bisect", help="bisect the critical amplitude")
    _add_config_flags(p)
    p.add_argument("--lo", type=float, default=0.5)
    p.add_argument("--hi", type=float, default=1.5)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="probes evaluated in parallel per round")
    p.set_defaults(func=cmd_bisect)

    p = sub.add_parser("fit", help="power-law fit of lambda(t)")
    _add_config_flags(p)
    p.add_argument("--series", metavar="CSV", help="fit an existing series instead of running")
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--lambda-min", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("converge", help="self-convergence order")
    _add_config_flags(p)
    p.add_argument("--t-end", type=float, default=1.0)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("analytic-check", help="closed-form oracle checks")
    p.set_defaults(func=cmd_analytic_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
