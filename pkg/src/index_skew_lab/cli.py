"""Command-line entry point: ``index-skew-lab <command> --model model.json [options]``.

Exit codes: 0 success, 2 invalid input, 3 computation failed.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .asymptotics import index_skew, most_likely_configuration, single_asset_skew
from .energy import SolverOptions, smile_from_energy
from .model import InvalidModelError, ModelFileError, load_model, validate
from .montecarlo import McConfig, default_workers, mc_smile, rate_check

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 2, 3

ENERGY_HEADER = "x,lambda,multiplier,implied_variance,converged,multistart_spread"
MC_HEADER = "x,digital,digital_se,price,price_se,implied_vol,iv_lo,iv_hi,flag"
RATE_HEADER = "epsilon,p_hat,eps2_log_p,neg_lambda,gap"


class InputError(Exception):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def csv_text(header: str, rows, seed) -> str:
    lines = [f"# index-skew-lab {__version__} seed={seed}", header]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def x_grid(args) -> list[float]:
    if args.x_count < 1:
        raise InputError("--x-count must be >= 1")
    if args.x_min > args.x_max:
        raise InputError("--x-min must not exceed --x-max")
    if args.x_count == 1:
        return [float(args.x_min)]
    xs = np.linspace(args.x_min, args.x_max, args.x_count)
    # snap roundoff so that a grid through zero contains exactly 0.0
    xs[np.abs(xs) < 1e-15 * max(abs(args.x_min), abs(args.x_max), 1.0)] = 0.0
    return [float(x) for x in xs]


def solver_options(args) -> SolverOptions:
    return SolverOptions(
        constraint_tol=args.constraint_tol,
        gradient_tol=args.gradient_tol,
        max_outer=args.max_outer,
        extra_starts=args.extra_starts,
        seed=args.seed,
    )


def mc_config(args, epsilon=None) -> McConfig:
    try:
        return McConfig(
            epsilon=args.epsilon if epsilon is None else epsilon,
            n_steps=args.steps,
            n_paths=args.paths,
            seed=args.seed,
            antithetic=not args.no_antithetic,
        )
    except ValueError as exc:
        raise InputError(str(exc))


# --- commands -------------------------------------------------------------------

def cmd_validate(model, args):
    return "ok\n", EXIT_OK


def cmd_asymptotics(model, args):
    sa = index_skew(model)
    rows = [("sigma_I_sq", sa.spot_variance), ("S_I", sa.variance_skew), ("vol_skew", sa.vol_skew)]
    rows += [(f"single_asset_skew_{i}", single_asset_skew(c)) for i, c in enumerate(model.components)]
    return csv_text("quantity,value", rows, args.seed), EXIT_OK


def _energy_rows(model, args):
    rows = smile_from_energy(model, x_grid(args), args.grid_steps, solver_options(args), default_workers())
    out = [(r.x, r.lambda_value, r.multiplier, r.implied_variance, r.converged, r.multistart_spread)
           for r in rows]
    code = EXIT_FAILED if not any(r.converged for r in rows) else EXIT_OK
    return csv_text(ENERGY_HEADER, out, args.seed), code


cmd_energy = _energy_rows
cmd_smile = _energy_rows


def cmd_mostlikely(model, args):
    xs = [args.x] if args.x is not None else x_grid(args)
    rows = []
    for xbar in xs:
        cfg = most_likely_configuration(model, xbar)
        rows += [(xbar, i, v) for i, v in enumerate(cfg.xstar)]
    return csv_text("xbar,component,xstar", rows, args.seed), EXIT_OK


def cmd_mc(model, args):
    smile = mc_smile(model, mc_config(args), x_grid(args), default_workers())
    rows = [(r.x, r.digital, r.digital_se, r.price, r.price_se, r.implied_vol, r.iv_lo, r.iv_hi, r.flag)
            for r in smile.rows]
    code = EXIT_FAILED if all(r.flag == "no_iv" for r in smile.rows) else EXIT_OK
    return csv_text(MC_HEADER, rows, args.seed), code


def cmd_rate(model, args):
    x = 0.1 if args.x is None else args.x
    try:
        eps = [float(e) for e in args.epsilons.split(",") if e.strip()]
    except ValueError:
        raise InputError(f"--epsilons must be a comma-separated list, got {args.epsilons!r}")
    if not eps or any(b >= a for a, b in zip(eps, eps[1:])):
        raise InputError("--epsilons must be a non-empty descending list")
    template = mc_config(args, epsilon=eps[0])
    rows = rate_check(model, x, eps, template, grid=args.grid_steps, workers=default_workers())
    out = [(r.epsilon, r.p_hat, r.eps2_log_p, r.neg_lambda, r.gap) for r in rows]
    code = EXIT_FAILED if all(r.p_hat == 0 for r in rows) else EXIT_OK
    return csv_text(RATE_HEADER, out, args.seed), code


COMMANDS = {
    "asymptotics": cmd_asymptotics,
    "energy": cmd_energy,
    "smile": cmd_smile,
    "mostlikely": cmd_mostlikely,
    "mc": cmd_mc,
    "rate": cmd_rate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="JSON model file")
    common.add_argument("--x-min", type=float, default=-0.1)
    common.add_argument("--x-max", type=float, default=0.1)
    common.add_argument("--x-count", type=int, default=11)
    common.add_argument("--x", type=float, default=None, help="single target (mostlikely, rate)")
    common.add_argument("--grid-steps", type=int, default=128, help="path grid for the energy solver")
    common.add_argument("--epsilon", type=float, default=0.1)
    common.add_argument("--epsilons", default="0.4,0.3,0.2", help="descending ladder for rate")
    common.add_argument("--paths", type=int, default=200_000)
    common.add_argument("--steps", type=int, default=256)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--no-antithetic", action="store_true")
    common.add_argument("--extra-starts", type=int, default=2)
    common.add_argument("--constraint-tol", type=float, default=1e-8)
    common.add_argument("--gradient-tol", type=float, default=1e-6)
    common.add_argument("--max-outer", type=int, default=200)
    common.add_argument("--out", default="-", help="output file (default: standard output)")

    parser = argparse.ArgumentParser(prog="index-skew-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"index-skew-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.model)
    except (OSError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    problems = validate(model)
    if problems:
        for p in problems:
            print(f"invalid model: {p}", file=sys.stderr)
        return EXIT_INPUT
    try:
        text, code = COMMANDS[args.command](model, args)
    except (InputError, InvalidModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
