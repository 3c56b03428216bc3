"""Command-line front end.

Four verbs: ``sweep`` (polarisation vs protocol period), ``spectrum``
(quasi-energy branches and avoided crossings), ``schedule`` (staged
repetition protocol on one evolving state) and ``compare`` (closed-form
resonance table against the engine's conventions).

Exit codes: 0 on success, 1 for configuration or argument problems, 2 for
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import sys
from functools import partial
from math import pi

import numpy as np

from .analytic import (
    blockade_pair,
    blockade_rabi,
    blockade_shift,
    effective_params,
    optimal_pulse_count,
)
from .engine import ScheduleStage, run_schedule, sweep_trace
from .errors import (
    DegenerateSpins,
    DimensionMismatch,
    DimensionOverflow,
    DnpsimError,
    InvalidTau,
    NoConvergence,
    NotHermitian,
    NotIdealPulses,
    NotUnitary,
    ParseError,
    ValidationError,
)
from .floquet import compute_spectrum, find_crossings, write_spectrum_csv
from .protocols import cpmg_for_period, pulsepol_for_period
from .spins import load_register_file, precession_frequency

_USAGE_ERRORS = (
    ValidationError,
    ParseError,
    InvalidTau,
    NotIdealPulses,
    DegenerateSpins,
    DimensionOverflow,
    FileNotFoundError,
)
_NUMERICAL_ERRORS = (
    NotHermitian,
    NotUnitary,
    NoConvergence,
    DimensionMismatch,
    np.linalg.LinAlgError,
)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors surface as exit code 1."""

    def error(self, message):
        raise ValidationError(message)


def _fmt(x: float) -> str:
    return format(x, ".12g")


def _builder(args):
    if args.protocol == "pulsepol":
        return partial(pulsepol_for_period, harmonic=args.harmonic, rabi=args.rabi)
    return partial(cpmg_for_period, harmonic=args.harmonic, rabi=args.rabi)


def _grid(args) -> np.ndarray:
    if not args.t_stop > args.t_start > 0:
        raise ValidationError("need 0 < --t-start < --t-stop")
    if args.steps < 2:
        raise ValidationError(f"--steps: need at least 2, got {args.steps}")
    return np.linspace(args.t_start, args.t_stop, args.steps)


def _refine_extremum(t: np.ndarray, v: np.ndarray, m: int) -> tuple[float, float]:
    """Parabola through the three samples around index m; vertex clamped."""
    if m == 0 or m == t.size - 1:
        return float(t[m]), float(v[m])
    coeff = np.polyfit(t[m - 1 : m + 2], v[m - 1 : m + 2], 2)
    if coeff[0] == 0:
        return float(t[m]), float(v[m])
    t_star = float(np.clip(-coeff[1] / (2 * coeff[0]), t[m - 1], t[m + 1]))
    return t_star, float(np.polyval(coeff, t_star))


def _find_dips(t: np.ndarray, v: np.ndarray) -> list[tuple[float, float]]:
    """Local minima below 1 percent of the trace maximum, refined."""
    floor = 0.01 * float(v.max()) if v.size else 0.0
    out = []
    for m in range(1, t.size - 1):
        if v[m] < v[m - 1] and v[m] <= v[m + 1] and v[m] < floor:
            out.append(_refine_extremum(t, v, m))
    return out


def _write_sweep_csv(path, periods, labels, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau_us", "period_us", *labels, "total"])
        for i, period in enumerate(periods):
            row = [_fmt(period / 4.0), _fmt(period)]
            row.extend(_fmt(x) for x in values[i])
            row.append(_fmt(float(values[i].sum())))
            writer.writerow(row)


def _cmd_sweep(args) -> int:
    register = load_register_file(args.config)
    grid = _grid(args)
    trace = sweep_trace(
        _builder(args),
        register,
        grid,
        n_periods=args.n_periods,
        repetitions=args.reps,
        wait_us=args.wait_us,
        reinit_state=args.reinit,
        workers=args.workers,
    )
    sign = -1.0 if args.flip_sign else 1.0
    values = sign * args.scale * trace.values
    total = values.sum(axis=1)
    if args.out:
        _write_sweep_csv(args.out, trace.periods, trace.labels, values)
    m = int(np.argmax(total))
    t_peak, v_peak = _refine_extremum(trace.periods, total, m)
    print(f"points: {trace.periods.size}")
    print(f"peak: period_us={_fmt(t_peak)} tau_us={_fmt(t_peak / 4.0)} total={_fmt(v_peak)}")
    for t_dip, v_dip in _find_dips(trace.periods, total):
        print(f"dip: period_us={_fmt(t_dip)} tau_us={_fmt(t_dip / 4.0)} total={_fmt(v_dip)}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def _cmd_spectrum(args) -> int:
    register = load_register_file(args.config)
    grid = _grid(args)
    spectrum = compute_spectrum(_builder(args), register, grid, workers=args.workers)
    if args.out:
        write_spectrum_csv(spectrum, args.out)
    crossings = find_crossings(spectrum, gap_threshold=args.gap_threshold)
    print(f"branches: {spectrum.dim}  points: {spectrum.periods.size}")
    print(f"crossings below gap {args.gap_threshold}: {len(crossings)}")
    for c in crossings:
        who = ", ".join(f"{label} ({w:.3f})" for label, w in c.participants)
        print(
            f"crossing: period_us={_fmt(c.period)} gap={_fmt(c.gap)} "
            f"branches={c.branch_a},{c.branch_b} spins: {who}"
        )
    if args.out:
        print(f"wrote {args.out}")
    return 0


def _parse_stage(text: str) -> ScheduleStage:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValidationError(f"--stage: expected PERIOD:REPS or PERIOD:REPS:NP, got {text!r}")
    try:
        period = float(parts[0])
        reps = int(parts[1])
        n_p = int(parts[2]) if len(parts) == 3 else None
    except ValueError as exc:
        raise ValidationError(f"--stage: {text!r}: {exc}") from None
    return ScheduleStage(period=period, repetitions=reps, n_periods=n_p)


def _cmd_schedule(args) -> int:
    register = load_register_file(args.config)
    stages = tuple(_parse_stage(s) for s in args.stage)
    result = run_schedule(
        _builder(args),
        register,
        stages,
        n_periods=args.n_periods,
        wait_us=args.wait_us,
        reinit_state=args.reinit,
    )
    sign = -1.0 if args.flip_sign else 1.0
    values = sign * args.scale * result.values
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_us", "stage", "period_us", *result.labels, "total"])
            for i in range(result.times.size):
                row = [
                    _fmt(float(result.times[i])),
                    str(int(result.stage_index[i])),
                    _fmt(float(result.periods[i])),
                ]
                row.extend(_fmt(x) for x in values[i])
                row.append(_fmt(float(values[i].sum())))
                writer.writerow(row)
    final = values[-1]
    print(f"stages: {len(stages)}  repetitions: {result.times.size}")
    print(f"elapsed_us: {_fmt(float(result.times[-1]))}")
    print("final: " + "  ".join(f"{n}={_fmt(x)}" for n, x in zip(result.labels, final)))
    print(f"final total: {_fmt(float(final.sum()))}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def _cmd_compare(args) -> int:
    register = load_register_file(args.config)
    if not register.nuclei:
        raise ValidationError("config contains no nuclei")
    if args.blockade is not None:
        strong_spin = register.nucleus(args.blockade)
    else:
        strong_spin = max(register.nuclei, key=lambda s: s.a_perp)
    k = args.harmonic
    print(f"blockade spin: {strong_spin.label}  harmonic: k={k}")
    print(
        f"{'label':<8} {'omega_i':>10} {'T_r':>10} {'g':>10} {'N_opt':>6} "
        f"{'shift':>10} {'T_shifted':>10} {'g_blocked':>10}"
    )
    rows = []
    for spin in register.nuclei:
        omega_i = precession_frequency(spin, register.larmor)
        p = effective_params(spin, register.larmor, 2 * pi * k / omega_i, k)
        n_opt = optimal_pulse_count(p) if p.g > 0 else 0
        if spin.label == strong_spin.label:
            shift = t_shift = g_blocked = None
        else:
            bs = blockade_shift(strong_spin, spin, register.larmor, harmonic=k)
            strong_p = effective_params(strong_spin, register.larmor, p.period, k)
            pair = blockade_pair(strong_p, p)
            shift = bs.ratio
            t_shift = bs.shifted_period
            g_blocked = blockade_rabi(pair)
        rows.append((spin.label, p, n_opt, shift, t_shift, g_blocked))
    for label, p, n_opt, shift, t_shift, g_blocked in rows:
        cells = [
            f"{label:<8}",
            f"{p.omega_i:>10.6f}",
            f"{p.resonant_period:>10.6f}",
            f"{p.g:>10.6f}",
            f"{n_opt:>6d}",
        ]
        if shift is None:
            cells.extend([f"{'-':>10}", f"{'-':>10}", f"{'-':>10}"])
        else:
            cells.extend(
                [f"{shift:>10.6f}", f"{t_shift:>10.6f}", f"{g_blocked:>10.6f}"]
            )
        print(" ".join(cells))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["label", "omega_i", "resonant_period_us", "g", "n_opt",
                 "shift_ratio", "shifted_period_us", "g_blocked"]
            )
            for label, p, n_opt, shift, t_shift, g_blocked in rows:
                writer.writerow(
                    [label, _fmt(p.omega_i), _fmt(p.resonant_period), _fmt(p.g), n_opt]
                    + (
                        ["", "", ""]
                        if shift is None
                        else [_fmt(shift), _fmt(t_shift), _fmt(g_blocked)]
                    )
                )
        print(f"wrote {args.out}")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="register YAML file")
    sub.add_argument("--out", help="output CSV path")
    sub.add_argument(
        "--protocol", choices=("pulsepol", "cpmg"), default="pulsepol",
        help="period builder (default pulsepol)",
    )
    sub.add_argument("--harmonic", type=int, default=3, help="resonance harmonic k")
    sub.add_argument(
        "--rabi", type=float, default=None,
        help="finite-pulse Rabi frequency in rad/us (default: ideal pulses)",
    )
    sub.add_argument("--workers", type=int, default=1, help="process count for sweeps")


def _add_grid(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--t-start", type=float, required=True, help="first period (us)")
    sub.add_argument("--t-stop", type=float, required=True, help="last period (us)")
    sub.add_argument("--steps", type=int, default=101, help="grid points")


def _add_run(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--np", dest="n_periods", type=int, default=4,
                     help="protocol periods per repetition")
    sub.add_argument("--reps", type=int, default=1, help="repetitions")
    sub.add_argument("--wait-us", type=float, default=0.0, help="wait between repetitions")
    sub.add_argument("--reinit", type=int, choices=(0, 1), default=0,
                     help="electron reset state index")
    sub.add_argument("--flip-sign", action="store_true",
                     help="negate reported polarisations")
    sub.add_argument("--scale", type=float, default=1.0,
                     help="multiply reported polarisations (2 maps spin-1/2 onto [-1, 1])")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dnpsim", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    sweep = subs.add_parser("sweep", help="polarisation vs protocol period")
    _add_common(sweep)
    _add_grid(sweep)
    _add_run(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    spectrum = subs.add_parser("spectrum", help="quasi-energy branches and crossings")
    _add_common(spectrum)
    _add_grid(spectrum)
    spectrum.add_argument("--gap-threshold", type=float, default=0.5,
                          help="report crossings with phase gap below this")
    spectrum.set_defaults(func=_cmd_spectrum)

    schedule = subs.add_parser("schedule", help="staged protocol on one state")
    _add_common(schedule)
    _add_run(schedule)
    schedule.add_argument(
        "--stage", action="append", required=True, metavar="PERIOD:REPS[:NP]",
        help="stage spec; repeat for several stages",
    )
    schedule.set_defaults(func=_cmd_schedule)

    compare = subs.add_parser("compare", help="closed-form resonance table")
    _add_common(compare)
    compare.add_argument("--blockade", default=None,
                         help="blockade spin label (default: largest transverse coupling)")
    compare.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except DnpsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
