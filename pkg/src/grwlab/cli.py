"""Command-line surface: one subcommand per engine plus the scanner.

Every subcommand reads the shared key-value config (``--config``), lets
flags override individual keys, writes delimited output plus JSON metadata
into ``--out-dir``, and renders SVG figures alongside unless ``--no-plot``
is given.  Exit codes: 0 success, 1 numerical/invariant failure (with a
machine-readable JSON error on stderr), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (collapse_quantum_ratio, grw_moments,
                       schrodinger_moments, spread_curve)
from .core import (CORE_CONFIG_KEYS, DEFAULT_DQ0, DEFAULT_LAMBDA,
                   DEFAULT_MASS, DEFAULT_R_C, CollapseParams, ConfigError,
                   EvolutionAbort, FormulaDomainError, GridDomainError,
                   NumericalCheckError, ResourceLimitError, UnitError,
                   WavepacketParams, natural_scales, params_from_config,
                   read_config, to_natural, unit_system)
from .master_equation import (DensityGrid, evolve_series, grid_moments,
                              render_state, stable_timestep,
                              write_evolution_log_jsonl, write_grid_binary,
                              write_grid_magnitude_csv)
from .measurement import measurement_report, read_scenario
from .scan import (DEFAULT_LAMBDA_RANGE, DEFAULT_R_C_RANGE, DEFAULT_SCAN_TIME,
                   DEFAULT_THRESHOLDS, collapse_dominance_time,
                   collapse_rate_bound, overlay_bounds, read_curve_csv,
                   scan_plane, write_bound_json, write_coexistence_csv,
                   write_envelope_csv, write_scan_csv)
from .trajectories import (GaussianState, run_ensemble, write_ensemble_csv,
                           write_ensemble_json)

_USAGE_ERRORS = (ConfigError, UnitError, ValueError)
_ENGINE_ERRORS = (NumericalCheckError, EvolutionAbort, ResourceLimitError,
                  GridDomainError, FormulaDomainError)


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key-value config file")
    parser.add_argument("--out-dir", default=".", help="output directory")
    parser.add_argument("--units", choices=["si", "natural"],
                        help="unit system (default from config, else si)")
    parser.add_argument("--no-plot", action="store_true",
                        help="skip SVG figure rendering")
    parser.add_argument("--lambda", dest="lam", type=float,
                        help="collapse rate per second")
    parser.add_argument("--r-c", type=float, help="localization length, m")
    parser.add_argument("--mass", type=float, help="particle mass, kg")
    parser.add_argument("--dq0", type=float, help="initial width, m")
    parser.add_argument("--q0", type=float, help="initial mean position, m")
    parser.add_argument("--p0", type=float, help="initial mean momentum")
    parser.add_argument("--n-particles", type=int, help="composite size N")


def _load_params(args):
    mapping: dict[str, str] = {}
    if args.config:
        mapping = read_config(args.config, allowed=CORE_CONFIG_KEYS)
    cp, wp, units = params_from_config(mapping)
    overrides = {"lam": args.lam, "r_c": args.r_c}
    if any(v is not None for v in overrides.values()):
        cp = CollapseParams(
            lam=overrides["lam"] if overrides["lam"] is not None else cp.lam,
            r_c=overrides["r_c"] if overrides["r_c"] is not None else cp.r_c,
            mass_proportional=cp.mass_proportional)
    wp_kwargs = dict(mass=wp.mass, dq0=wp.dq0, q0=wp.q0, p0=wp.p0,
                     n_particles=wp.n_particles)
    for name in ("mass", "dq0", "q0", "p0", "n_particles"):
        value = getattr(args, name)
        if value is not None:
            wp_kwargs[name] = value
    wp = WavepacketParams(**wp_kwargs)
    if args.units is not None:
        units = unit_system(args.units)
    return cp, wp, units


def _out_dir(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _time_grid(args, units) -> np.ndarray:
    if getattr(args, "times", None):
        values = np.array([float(tok) for tok in args.times.split(",")])
        if np.any(values < 0) or np.any(np.diff(values) < 0):
            raise ValueError("--times must be ascending and non-negative")
        return values
    t_max = args.t_max
    if t_max is None:
        t_max = 2.0 if units.mode == "natural" else 2.0 * _natural_time(args)
    return np.linspace(0.0, t_max, args.n_times)


def _natural_time(args) -> float:
    mass = args.mass if args.mass is not None else DEFAULT_MASS
    dq0 = args.dq0 if args.dq0 is not None else DEFAULT_DQ0
    from .core import HBAR_SI
    return mass * dq0 * dq0 / HBAR_SI


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _meta(engine: str, cp, wp, units, **extra) -> dict:
    payload = {
        "engine": engine,
        "version": __version__,
        "timestamp": _timestamp(),
        "units": units.mode,
        "parameters": {"lambda": cp.lam, "r_c": cp.r_c, "mass": wp.mass,
                       "dq0": wp.dq0, "q0": wp.q0, "p0": wp.p0,
                       "n_particles": wp.n_particles},
    }
    payload.update(extra)
    return payload


# --- subcommand handlers ----------------------------------------------------

def _cmd_moments(args) -> int:
    cp, wp, units = _load_params(args)
    out = _out_dir(args)
    times = _time_grid(args, units)
    rows = []
    for t in times:
        base = schrodinger_moments(wp, float(t), hbar=units.hbar)
        grw = grw_moments(wp, cp, base, hbar=units.hbar)
        rows.append((t, grw.mean_q, grw.mean_q2, grw.mean_p, grw.mean_p2,
                     grw.mean_qp_sym, base.mean_q, base.mean_q2, base.mean_p,
                     base.mean_p2, base.mean_qp_sym))
    csv_path = out / "moments.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("time,mean_q,mean_q2,mean_p,mean_p2,mean_qp,"
                 "schrodinger_mean_q,schrodinger_mean_q2,schrodinger_mean_p,"
                 "schrodinger_mean_p2,schrodinger_mean_qp\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    _write_json(out / "moments.json", _meta("moments", cp, wp, units))
    print(f"wrote {csv_path}")
    return 0


def _cmd_width(args) -> int:
    cp, wp, units = _load_params(args)
    if args.schrodinger:
        cp = CollapseParams(lam=0.0, r_c=cp.r_c,
                            mass_proportional=cp.mass_proportional)
    out = _out_dir(args)
    times = _time_grid(args, units)
    curve = spread_curve(wp, cp, times, hbar=units.hbar)
    csv_path = out / "width.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("time,width,initial_term,correlation_term,quantum_term,"
                 "collapse_term\n")
        for i in range(len(curve.times)):
            row = (curve.times[i], curve.widths[i], curve.initial[i],
                   curve.correlation[i], curve.quantum[i], curve.collapse[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    _write_json(out / "width.json",
                _meta("width", cp, wp, units,
                      schrodinger=bool(args.schrodinger)))
    if not args.no_plot:
        from .plotting import save_width_figure
        fig_path = save_width_figure(
            curve.times, curve.widths,
            {"initial": curve.initial, "quantum": curve.quantum,
             "collapse": curve.collapse}, out / "width.svg")
        print(f"wrote {fig_path}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_trajectories(args) -> int:
    cp, wp, units = _load_params(args)
    out = _out_dir(args)
    times = _time_grid(args, units)
    stats = run_ensemble(wp, cp, times, args.n_traj, args.seed,
                         workers=args.workers, max_hits=args.max_hits,
                         units=units)
    csv_path = out / "trajectories.csv"
    write_ensemble_csv(stats, csv_path)
    write_ensemble_json(stats, wp, cp, units, out / "trajectories.json",
                        timestamp=_timestamp(), version=__version__)
    if not args.no_plot:
        from .plotting import save_ensemble_figure
        reference = {}
        if len(stats.times):
            ref_q2 = []
            for t in stats.times:
                base = schrodinger_moments(wp, float(t), hbar=units.hbar)
                ref_q2.append(grw_moments(wp, cp, base, hbar=units.hbar).mean_q2)
            reference["<q^2> closed form"] = np.array(ref_q2)
        fig_path = save_ensemble_figure(stats, out / "trajectories.svg",
                                        reference)
        print(f"wrote {fig_path}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_rho_evolve(args) -> int:
    cp, wp, units = _load_params(args)
    out = _out_dir(args)

    if units.mode == "si":
        scales = natural_scales(wp, hbar=units.hbar)
        cp_run, wp_run = to_natural(cp, wp, scales)
        t_max = (args.t_max / scales.time if args.t_max is not None else 1.0)
        extent = (args.domain_l / scales.length if args.domain_l is not None
                  else 10.0 * wp_run.dq0)
    else:
        scales = None
        cp_run, wp_run = cp, wp
        t_max = args.t_max if args.t_max is not None else 1.0
        extent = (args.domain_l if args.domain_l is not None
                  else 10.0 * wp_run.dq0)

    n = args.grid_n
    state = GaussianState.from_wavepacket(wp_run)
    rho = render_state(state, extent, n, hbar=1.0)
    dt = args.dt
    if dt is None:
        dt = stable_timestep(wp_run.mass, rho.spacing, 1.0)
    elif scales is not None:
        dt = dt / scales.time
    n_steps = args.n_steps
    if n_steps is None:
        n_steps = max(1, math.ceil(t_max / dt))
    dt = t_max / n_steps

    log: list[dict] = []
    series = evolve_series(rho, wp_run, cp_run, dt, n_steps,
                           record_every=args.snapshot_every, hbar=1.0,
                           log=log)
    final = series[-1]
    if scales is not None:
        final = DensityGrid(final.values / scales.length,
                            final.extent * scales.length,
                            time=final.time * scales.time)
        for record in log:
            record["time"] *= scales.time

    write_grid_binary(final, out / "rho_final.bin")
    write_grid_magnitude_csv(final, out / "rho_final_magnitude.csv")
    write_evolution_log_jsonl(log, out / "rho_log.jsonl")
    moments = grid_moments(final, hbar=units.hbar if scales else 1.0)
    _write_json(out / "rho_evolve.json",
                _meta("rho-evolve", cp, wp, units,
                      grid_n=n, dt=dt if scales is None else dt * scales.time,
                      n_steps=n_steps,
                      final={"time": final.time, "trace": final.trace(),
                             "purity": final.purity(),
                             "mean_q2": moments.mean_q2}))
    if not args.no_plot:
        from .plotting import save_density_figure
        fig_path = save_density_figure(final, out / "rho_final.svg")
        print(f"wrote {fig_path}")
    print(f"wrote {out / 'rho_final.bin'}")
    return 0


def _cmd_measure(args) -> int:
    cp, wp, units = _load_params(args)
    setup = read_scenario(args.scenario)
    t = args.t if args.t is not None else setup.ramp.t1
    report = measurement_report(setup, cp, t,
                                n_pointer_particles=args.n_pointer_particles,
                                hbar=units.hbar)
    report["version"] = __version__
    report["timestamp"] = _timestamp()
    out = _out_dir(args)
    json_path = out / "measure.json"
    _write_json(json_path, report)
    if not args.no_plot:
        from .plotting import save_matrix_figure
        pre = np.array([[complex(re, im) for re, im in row]
                        for row in report["reduced_pre"]])
        post = np.array([[complex(re, im) for re, im in row]
                         for row in report["reduced_post"]])
        fig_path = save_matrix_figure({"pre": pre, "post": post},
                                      out / "measure.svg")
        print(f"wrote {fig_path}")
    print(f"wrote {json_path}")
    return 0


def _cmd_scan(args) -> int:
    cp, wp, units = _load_params(args)
    out = _out_dir(args)
    thresholds = (args.threshold_low, args.threshold_high)
    result = scan_plane((args.lambda_min, args.lambda_max, args.resolution),
                        (args.rc_min, args.rc_max, args.resolution),
                        wp, args.t, thresholds)
    write_scan_csv(result, out / "scan.csv")
    write_coexistence_csv(result, out / "coexistence.csv")
    _write_json(out / "scan.json",
                _meta("scan", cp, wp, units, t=args.t,
                      thresholds=list(thresholds),
                      resolution=args.resolution))
    if not args.no_plot:
        from .plotting import save_phase_diagram
        fig_path = save_phase_diagram(result, out / "phase_diagram.svg")
        print(f"wrote {fig_path}")
    print(f"wrote {out / 'scan.csv'}")
    return 0


def _cmd_bounds(args) -> int:
    cp, wp, units = _load_params(args)
    out = _out_dir(args)
    bound = collapse_rate_bound(wp, args.r_c if args.r_c is not None else cp.r_c,
                                args.t, convention=args.convention)
    extra = {"version": __version__, "timestamp": _timestamp()}
    if cp.lam > 0:
        extra["dominance_time"] = collapse_dominance_time(
            wp, CollapseParams(lam=cp.lam, r_c=bound.r_c),
            convention=args.convention)
    write_bound_json(bound, out / "bound.json", extra)

    result = scan_plane((DEFAULT_LAMBDA_RANGE[0], DEFAULT_LAMBDA_RANGE[1], 2),
                        (args.rc_min, args.rc_max, args.resolution),
                        wp, args.t)
    curves = [read_curve_csv(path, label=Path(path).stem)
              for path in args.overlay]
    overlay = overlay_bounds(result, curves)
    write_envelope_csv(overlay, out / "envelope.csv")
    if not args.no_plot:
        from .plotting import save_bounds_figure
        fig_path = save_bounds_figure(overlay, out / "bounds.svg")
        print(f"wrote {fig_path}")
    print(f"wrote {out / 'bound.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grwlab",
        description="Numerical laboratory for spontaneous-collapse dynamics "
                    "of free wavepackets")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", help="closed-form moment corrections")
    _add_common(p)
    p.add_argument("--t-max", type=float)
    p.add_argument("--n-times", type=int, default=50)
    p.add_argument("--times", help="explicit comma-separated times")
    p.set_defaults(handler=_cmd_moments)

    p = sub.add_parser("width", help="wavepacket width versus time")
    _add_common(p)
    p.add_argument("--t-max", type=float)
    p.add_argument("--n-times", type=int, default=50)
    p.add_argument("--times", help="explicit comma-separated times")
    p.add_argument("--schrodinger", action="store_true",
                   help="no-collapse reference curve")
    p.set_defaults(handler=_cmd_width)

    p = sub.add_parser("trajectories", help="stochastic trajectory ensemble")
    _add_common(p)
    p.add_argument("--t-max", type=float)
    p.add_argument("--n-times", type=int, default=21)
    p.add_argument("--times", help="explicit comma-separated times")
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-hits", type=int, default=1_000_000)
    p.set_defaults(handler=_cmd_trajectories)

    p = sub.add_parser("rho-evolve", help="density-matrix grid evolution")
    _add_common(p)
    p.add_argument("--t-max", type=float)
    p.add_argument("--domain-l", type=float,
                   help="grid half-extent (positions span [-L, L))")
    p.add_argument("--grid-n", type=int, default=256)
    p.add_argument("--dt", type=float)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.set_defaults(handler=_cmd_rho_evolve)

    p = sub.add_parser("measure", help="pointer-measurement toy model")
    _add_common(p)
    p.add_argument("--scenario", required=True,
                   help="scenario config file")
    p.add_argument("--t", type=float, help="evaluation time")
    p.add_argument("--n-pointer-particles", type=int, default=1)
    p.set_defaults(handler=_cmd_measure)

    p = sub.add_parser("scan", help="(lambda, r_c) phase-plane scan")
    _add_common(p)
    p.add_argument("--t", type=float, default=DEFAULT_SCAN_TIME)
    p.add_argument("--lambda-min", type=float, default=DEFAULT_LAMBDA_RANGE[0])
    p.add_argument("--lambda-max", type=float, default=DEFAULT_LAMBDA_RANGE[1])
    p.add_argument("--rc-min", type=float, default=DEFAULT_R_C_RANGE[0])
    p.add_argument("--rc-max", type=float, default=DEFAULT_R_C_RANGE[1])
    p.add_argument("--resolution", type=int, default=48)
    p.add_argument("--threshold-low", type=float,
                   default=DEFAULT_THRESHOLDS[0])
    p.add_argument("--threshold-high", type=float,
                   default=DEFAULT_THRESHOLDS[1])
    p.set_defaults(handler=_cmd_scan)

    p = sub.add_parser("bounds", help="rate bounds and exclusion envelope")
    _add_common(p)
    p.add_argument("--t", type=float, default=DEFAULT_SCAN_TIME)
    p.add_argument("--convention", choices=["plain", "mass_proportional"],
                   default="plain")
    p.add_argument("--overlay", action="append", default=[],
                   help="external (r_c, lambda) CSV curve; repeatable")
    p.add_argument("--rc-min", type=float, default=DEFAULT_R_C_RANGE[0])
    p.add_argument("--rc-max", type=float, default=DEFAULT_R_C_RANGE[1])
    p.add_argument("--resolution", type=int, default=48)
    p.set_defaults(handler=_cmd_bounds)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _ENGINE_ERRORS as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("achieved", "step", "time", "drift", "completed"):
            if hasattr(exc, attr):
                payload[attr] = getattr(exc, attr)
        print(json.dumps(payload), file=sys.stderr)
        return 1
    except _USAGE_ERRORS as exc:
        print(f"grwlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
