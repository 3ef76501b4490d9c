"""Command line entry point: ``perfectpp simulate|fit|envelope|summary``.

Exit codes: 0 success, 1 I/O error, 2 usage or configuration error,
3 sampler horizon cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cftp import DEFAULT_MAX_HORIZON, DEFAULT_T0, HorizonCapExceeded, perfect_sample, write_trajectory_csv
from .geometry import PointPattern
from .inference import (
    DegenerateDesignError,
    fit_mple,
    make_quadrature,
    profile_radii,
    write_fit_json,
    write_profile_csv,
)
from .models import MultiscaleModel
from .stats import STATISTICS, default_r_grid, envelope, summary, write_curve_csv, write_envelope_csv
from .validation import check_window, parse_grid

log = logging.getLogger("perfectpp")

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_HORIZON = 3


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from err
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _window_arg(text: str):
    try:
        return check_window(text).bounds
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from err


def _grid_arg(text: str):
    try:
        return parse_grid(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from err


def _shared(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=_seed, default=0, help="unsigned 64-bit master seed")
    p.add_argument("--window", type=_window_arg, default=(0.0, 1.0, 0.0, 1.0),
                   help="xmin,xmax,ymin,ymax (default 0,1,0,1)")
    p.add_argument("--boundary", choices=("clip", "torus"), default="clip")
    p.add_argument("--out", type=Path, help="output path (default: standard output)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def _model_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model")
    g.add_argument("--model", type=Path, help="model JSON file (overrides the flags below)")
    g.add_argument("--lambda", dest="lam", type=float, help="rate per unit area of the window")
    g.add_argument("--log10-gamma1", type=float, default=0.0)
    g.add_argument("--log10-gamma2", type=float, default=0.0)
    g.add_argument("--r1", type=float, default=0.07)
    g.add_argument("--r2", type=float, default=0.013)


def _stat_flags(p: argparse.ArgumentParser, many: bool):
    p.add_argument("--stat", default="L", help="K, L or T" + (" (comma separated)" if many else ""))
    p.add_argument("--rmax", type=float, help="largest r (default: quarter of the shorter side)")
    p.add_argument("--rsteps", type=int, default=512)
    p.add_argument("--correction", choices=("ripley", "torus", "none"),
                   help="edge correction (default ripley for K/L, torus for T)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfectpp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="exact sample by dominated CFTP")
    _shared(p)
    _model_flags(p)
    p.add_argument("--t0", type=float, default=DEFAULT_T0, help="initial horizon")
    p.add_argument("--max-horizon", type=float, default=DEFAULT_MAX_HORIZON)
    p.add_argument("--dump-trajectory", type=Path, help="write the dominating trajectory CSV")

    p = sub.add_parser("fit", help="maximum pseudo-likelihood fit")
    _shared(p)
    p.add_argument("--input", type=Path, required=True, help="points CSV with header x,y")
    p.add_argument("--r1", type=float, default=0.07)
    p.add_argument("--r2", type=float, default=0.013)
    p.add_argument("--r1-grid", type=_grid_arg, help="lo:hi:n")
    p.add_argument("--r2-grid", type=_grid_arg, help="lo:hi:n")
    p.add_argument("--dummy", type=int, nargs=2, default=(32, 32), metavar=("NX", "NY"))
    p.add_argument("--constrained", action="store_true", help="enforce gamma1 >= 1, gamma2 <= 1")
    p.add_argument("--profile-out", type=Path, help="profile table CSV (r1,r2,logPL)")

    p = sub.add_parser("envelope", help="simulation envelope of a summary function")
    _shared(p)
    _model_flags(p)
    _stat_flags(p, many=False)
    p.add_argument("--data", type=Path, required=True, help="points CSV with header x,y")
    p.add_argument("--nsim", type=int, default=19)
    p.add_argument("--max-horizon", type=float, default=DEFAULT_MAX_HORIZON)

    p = sub.add_parser("summary", help="K, L or T curves of a pattern")
    _shared(p)
    _stat_flags(p, many=True)
    p.add_argument("--input", type=Path, required=True, help="points CSV with header x,y")
    return parser


def read_points(path: Path, window) -> PointPattern:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise OSError(f"cannot read {path}: {err.strerror or err}") from err
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise OSError(f"{path}: expected a CSV with header x,y")
    try:
        xy = np.array([[float(a), float(b)] for a, b in (r for r in rows[1:] if r)], dtype=float)
    except ValueError as err:
        raise OSError(f"{path}: malformed row ({err})") from err
    if xy.size == 0:
        xy = xy.reshape(0, 2)
    try:
        return PointPattern(xy, window)
    except ValueError as err:
        raise UsageError(f"{path}: {err}") from err


def write_points(pattern: PointPattern, out):
    lines = ["x,y"] + [f"{x:.17g},{y:.17g}" for x, y in pattern.coords]
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _model(args) -> MultiscaleModel:
    window = check_window(args.window, args.boundary)
    if args.model is not None:
        try:
            return MultiscaleModel.from_json(args.model)
        except OSError as err:
            raise OSError(f"cannot read model file {args.model}: {err}") from err
        except (KeyError, TypeError, ValueError) as err:
            raise UsageError(f"bad model file {args.model}: {err}") from err
    if args.lam is None:
        raise UsageError("give --lambda (with --log10-gamma1/--log10-gamma2/--r1/--r2) or --model")
    return MultiscaleModel.two_scale(args.lam, args.log10_gamma1, args.log10_gamma2,
                                     args.r1, args.r2, window)


def _r_grid(args, window):
    if args.rsteps < 1:
        raise UsageError("--rsteps must be >= 1")
    return default_r_grid(window, args.rsteps, args.rmax)


def cmd_simulate(args) -> int:
    model = _model(args)
    res = perfect_sample(model, args.seed, t0=args.t0, max_horizon=args.max_horizon,
                         keep_trajectory=args.dump_trajectory is not None)
    write_points(res.sample, args.out)
    if args.dump_trajectory is not None:
        write_trajectory_csv(res.trajectory, args.dump_trajectory)
    print(f"horizon_used={res.horizon_used:g} restarts={res.restarts} "
          f"events_processed={res.events_processed}", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    window = check_window(args.window, args.boundary)
    pattern = read_points(args.input, window)
    if pattern.n < 1:
        raise OSError(f"{args.input}: no points to fit")
    scheme = make_quadrature(pattern, window, args.dummy)
    if args.r1_grid is not None or args.r2_grid is not None:
        r1_grid = args.r1_grid if args.r1_grid is not None else [args.r1]
        r2_grid = args.r2_grid if args.r2_grid is not None else [args.r2]
        fit, table = profile_radii(pattern, r1_grid, r2_grid, scheme, args.constrained, args.jobs)
        if args.profile_out is not None:
            write_profile_csv(table, args.profile_out)
    else:
        fit = fit_mple(pattern, (args.r1, args.r2), scheme, constrained=args.constrained)
    if args.out is None:
        json.dump(fit.report(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        write_fit_json(fit, args.out)
    return 0


def cmd_envelope(args) -> int:
    model = _model(args)
    data = read_points(args.data, model.window)
    stat = args.stat.upper()
    if stat not in STATISTICS:
        raise UsageError(f"--stat must be one of {STATISTICS}")
    if args.nsim < 2:
        raise UsageError("--nsim must be >= 2")
    band = envelope(model, stat, args.nsim, _r_grid(args, model.window), args.seed, data,
                    args.correction, n_jobs=args.jobs, max_horizon=args.max_horizon)
    write_envelope_csv(band, args.out if args.out is not None else "/dev/stdout")
    return 0


def _stat_path(out: Path | None, stat: str, many: bool):
    if out is None:
        return "/dev/stdout"
    if not many:
        return out
    return out.with_name(f"{out.stem}_{stat}{out.suffix or '.csv'}")


def cmd_summary(args) -> int:
    window = check_window(args.window, args.boundary)
    pattern = read_points(args.input, window)
    stats = [s.strip().upper() for s in args.stat.split(",") if s.strip()]
    bad = [s for s in stats if s not in STATISTICS]
    if bad or not stats:
        raise UsageError(f"--stat entries must be among {STATISTICS}, got {args.stat!r}")
    r = _r_grid(args, window)
    curves = [summary(pattern, s, r, args.correction) for s in stats]
    for s, curve in zip(stats, curves):
        write_curve_csv(curve, _stat_path(args.out, s, len(stats) > 1))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "envelope": cmd_envelope,
    "summary": cmd_summary,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except HorizonCapExceeded as err:
        print(f"perfectpp: {err}", file=sys.stderr)
        return EXIT_HORIZON
    except (UsageError, DegenerateDesignError) as err:
        print(f"perfectpp: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"perfectpp: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"perfectpp: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
