"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 identification warning,
4 controller sizing failure, 5 integration failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

from . import csvio
from .config import (
    ConfigError,
    RawConfig,
    Typed,
    build_controller,
    build_harvester,
    build_load,
    build_pno,
    build_profile,
    build_sim,
    controller_overrides,
    parse_config,
    preset,
)
from .harvester import max_power, optimal_generator, optimal_impedance, source_impedance
from .identification import UnbracketedOptimum, identify_surface, synthetic_surface
from .interface import SizingError, size_controller, sizing_report
from .loads import GridSpec, grid_sweep, lambda_waste, ratio_sweep
from .mppt import run_pno_2d
from .transient import (
    AVG_WINDOW_PERIODS,
    IntegrationError,
    SimConfigError,
    expected_power,
    matched_load,
    simulate_behavioral,
    simulate_switched,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IDENTIFY = 3
EXIT_SIZING = 4
EXIT_INTEGRATION = 5


def _load_config(args) -> RawConfig:
    raw = RawConfig({}, {})
    for name in args.preset or []:
        raw = raw.merged(preset(name))
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        raw = raw.merged(parse_config(text))
    return raw


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_rows(rows, stream=None):
    stream = stream or sys.stdout
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}", file=stream)


# -- analyze ------------------------------------------------------------------


def cmd_analyze(args, t: Typed) -> int:
    h = build_harvester(t)
    a = args.a_max if args.a_max is not None else t.get("analyze.a_max_g", 1.0)
    ratios = args.ratios if args.ratios is not None else t.get("analyze.ratios", [])
    zp = source_impedance(h)
    zo = optimal_impedance(h)
    v_opt, phi_opt = optimal_generator(h, a)
    rows = [
        ("a_max_g", csvio.fmt(a)),
        ("p_max_w", csvio.fmt(max_power(h, a))),
        ("r_p_ohm", csvio.fmt(zp.real)),
        ("x_p_ohm", csvio.fmt(zp.imag)),
        ("z_opt_series_r_ohm", csvio.fmt(zo.series.real)),
        ("z_opt_series_x_ohm", csvio.fmt(zo.series.imag)),
        ("r_opt_ohm", csvio.fmt(zo.r_opt)),
        ("x_opt_ohm", csvio.fmt(zo.x_opt)),
        ("v_opt_v", csvio.fmt(v_opt)),
        ("phi_opt_rad", csvio.fmt(phi_opt)),
    ]
    _print_rows(rows)
    waste = [(r, lambda_waste(1.0, r)) for r in ratios]
    if waste:
        print()
        print("ratio  lambda_waste_percent")
        for r, lam in waste:
            print(f"{csvio.fmt(r)}  {csvio.fmt(lam)}")
    if args.out is not None:
        out = _out_dir(args)
        csvio.write_table(out / "analysis.csv", ("quantity", "value"), rows)
        if waste:
            csvio.write_table(out / "lambda_waste.csv", ("ratio", "lambda_waste"), waste)
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def cmd_sweep(args, t: Typed) -> int:
    out = _out_dir(args)
    if args.kind == "impedance":
        ds = grid_sweep(GridSpec.impedance(args.rho, args.lo, args.hi, args.num))
        path = out / f"impedance_rho{csvio.fmt(args.rho)}.csv"
        csvio.write_grid(path, ds)
    elif args.kind == "generator":
        ds = grid_sweep(GridSpec.generator(args.v_max, args.num))
        path = out / "generator.csv"
        csvio.write_grid(path, ds)
    else:
        path = out / "ratio.csv"
        csvio.write_ratio(path, ratio_sweep(args.ratio_from, args.ratio_to, args.num))
    print(path)
    return EXIT_OK


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args, t: Typed) -> int:
    h = build_harvester(t)
    profile = build_profile(t, h)
    sim = build_sim(t)
    load = build_load(t)
    controller = build_controller(t)
    if (load is None) == (controller is None):
        raise ConfigError("simulate needs exactly one of a load (load.*) or a controller (controller.*)")
    if sim.fidelity == "switched" and controller is None:
        raise ConfigError("switched fidelity needs controller.* parameters", key="sim.fidelity")
    if sim.fidelity == "behavioral" and load is None:
        raise ConfigError("behavioral fidelity needs a load.* description", key="sim.fidelity")

    t_run = sim.t_end if sim.t_end is not None else profile.duration
    if t_run * profile.drive_freq < 1:
        raise ConfigError("run is shorter than one drive period", key="profile.duration_s")

    h_eff = h.with_q(sim.q_factor_override) if sim.q_factor_override else h
    a_final = profile.segments[-1][1]
    summary = {"fidelity": sim.fidelity}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if controller is not None:
            res = simulate_switched(h, controller, profile, sim)
            summary["load"] = "emulated"
            expected = max_power(h_eff, a_final)
        elif load == "pno":
            mppt_cfg, start = build_pno(t)
            pno = run_pno_2d(h, profile, mppt_cfg, sim, start)
            res = pno.result
            summary["load"] = "pno"
            expected = max_power(h_eff, a_final)
        else:
            if load == "matched":
                load = matched_load(h_eff)
            res = simulate_behavioral(h, load, profile, sim)
            summary["load"] = type(load).__name__
            expected = expected_power(h_eff, load, a_final)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    n = min(AVG_WINDOW_PERIODS, len(res.period_end))
    v, i = res.phasors(n)
    summary.update(
        {
            "a_final_g": a_final,
            "avg_power_w": res.avg_power(n),
            "expected_power_w": expected,
            "v_amp_v": abs(v),
            "v_phase_rad": math.atan2(v.imag, v.real),
            "phase_lag_rad": res.phase_lag(n) if abs(i) > 0 and abs(v) > 0 else math.nan,
            "settle_time_s": res.settle_time(),
        }
    )
    if abs(v) > 0 and abs(i) > 0:
        r_e, c_e = res.emulated_load(n)
        summary["r_emulated_ohm"], summary["c_emulated_f"] = r_e, c_e
    if res.fidelity == "switched":
        summary["n_switch"] = res.stats["n_switch"]
    if summary["load"] == "pno":
        summary["v_final_v"], summary["phi_final_rad"] = pno.operating_point()
        summary["reliable"] = "yes" if pno.reliable else "no"

    out = _out_dir(args)
    csvio.write_trace(out / "trace.csv", res)
    csvio.write_summary(out / "summary.csv", summary)
    _print_rows([(k, csvio.fmt(v)) for k, v in summary.items()])
    return EXIT_OK


# -- identify -----------------------------------------------------------------


def cmd_identify(args, t: Typed) -> int:
    h = build_harvester(t)
    if args.synthetic:
        amps = args.amplitudes or t.get("identify.amplitudes", [0.75, 1.0, 1.25])
        noise = args.noise if args.noise is not None else t.get("identify.noise", 0.0)
        surfaces = [
            synthetic_surface(h, a, noise=noise, seed=None if args.seed is None else args.seed + k)
            for k, a in enumerate(amps)
        ]
    elif args.surfaces:
        try:
            surfaces = [csvio.read_surface(p) for p in args.surfaces]
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError("identify needs --synthetic or one or more surface CSV files")

    header = ("a_max_g", "v_opt_v", "phi_opt_rad", "p_max_w", "i_opt_a", "delta_v_per_g", "rho", "r_opt_ohm", "x_opt_ohm")
    rows, code = [], EXIT_OK
    for s in surfaces:
        try:
            r = identify_surface(s, h.c_p)
        except UnbracketedOptimum as exc:
            print(f"warning: a_max={csvio.fmt(s.a_max)} g: {exc}", file=sys.stderr)
            code = EXIT_IDENTIFY
            continue
        rows.append((r.a_max, r.v_opt, r.phi_opt, r.p_max, r.i_opt, r.delta, r.rho, r.r_opt, r.x_opt))
    print(",".join(header))
    for row in rows:
        print(",".join(csvio.fmt(v) for v in row))
    if args.out is not None:
        csvio.write_table(_out_dir(args) / "identification.csv", header, rows)
    return code


# -- size-controller ----------------------------------------------------------


def cmd_size_controller(args, t: Typed) -> int:
    h = build_harvester(t)
    fixed = controller_overrides(t)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cp = size_controller(h, fixed, tolerance=args.tolerance)
    except SizingError as exc:
        print(f"sizing failed: {exc}", file=sys.stderr)
        return EXIT_SIZING
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = sizing_report(h, cp)
    _print_rows(rows)
    if args.out is not None:
        csvio.write_table(_out_dir(args) / "sizing.csv", ("component", "value"), rows)
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _global_flags(default) -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=default, help="scenario file (key = value lines)")
    g.add_argument("--out", default=default, help="output directory for CSV files")
    g.add_argument("--preset", action="append", default=default, help="named parameter set: ppa4011, table1 (repeatable)")
    g.add_argument("--seed", type=int, default=default, help="seed for noise knobs")
    return g


def build_parser() -> argparse.ArgumentParser:
    # subcommands repeat the global flags without clobbering values given before them
    common = _global_flags(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="rpveh", description=__doc__.splitlines()[0], parents=[_global_flags(None)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="closed-form optimum and lambda_waste")
    p.add_argument("--a-max", type=float, help="acceleration amplitude in g")
    p.add_argument("--ratios", type=_floats, help="amplitude ratios A/A0 for the lambda_waste table")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="normalized power grids")
    kinds = p.add_subparsers(dest="kind", required=True)
    k = kinds.add_parser("impedance", parents=[common])
    k.add_argument("--rho", type=float, default=0.9)
    k.add_argument("--lo", type=float, default=0.1)
    k.add_argument("--hi", type=float, default=10.0)
    k.add_argument("--num", type=int, default=201)
    k = kinds.add_parser("generator", parents=[common])
    k.add_argument("--v-max", type=float, default=2.0)
    k.add_argument("--num", type=int, default=201)
    k = kinds.add_parser("ratio", parents=[common])
    k.add_argument("--from", dest="ratio_from", type=float, default=0.5)
    k.add_argument("--to", dest="ratio_to", type=float, default=3.0)
    k.add_argument("--num", type=int, default=251)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common], help="time-domain run, writes trace.csv and summary.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", parents=[common], help="harvester parameters from power surfaces")
    p.add_argument("surfaces", nargs="*", help="surface CSV files")
    p.add_argument("--synthetic", action="store_true", help="generate surfaces from the configured harvester")
    p.add_argument("--amplitudes", type=_floats, help="amplitudes in g for --synthetic")
    p.add_argument("--noise", type=float, help="relative uniform noise for --synthetic")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("size-controller", parents=[common], help="solve free interface components")
    p.add_argument("--tolerance", type=float, default=0.02, help="relative tolerance for fully pinned relations")
    p.set_defaults(func=cmd_size_controller)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        t = Typed(_load_config(args))
        return args.func(args, t)
    except (ConfigError, SimConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
