"""Command-line entry point: ``simfas {sweep,optimize,validate,grad-check}``.

Exit codes: 0 success, 1 configuration error, 2 numerical or convergence
error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as config_mod
from . import experiment
from .channel import NumericError as ChannelNumericError
from .numerics import ConvergenceError, DomainError
from .optimizer import NumericError as OptimizerNumericError
from .sim_stack import ConfigurationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("simfas")


def _parser():
    p = argparse.ArgumentParser(prog="simfas", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("sweep", "evaluate the configured sweep and write a CSV"),
                        ("optimize", "optimize phases at the configured power, write the trace"),
                        ("validate", "compare analytical outage with BDMA Monte Carlo"),
                        ("grad-check", "analytical gradient vs central finite differences")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="YAML experiment configuration")
        s.add_argument("--out", help="output CSV path (overrides output.path)")
        s.add_argument("--seed", type=int,
                       help="seed for Monte Carlo, random optimizer starts and grad-check phases")
        s.add_argument("--trials", type=int, help="Monte Carlo trials")
        s.add_argument("--model", choices=("bdma", "jakes"), help="Monte Carlo channel model")
    return p


def resolve_config(args):
    cfg = config_mod.load(args.config)
    mc, opt, gc = {}, {}, {}
    if args.seed is not None:
        mc["seed"] = opt["seed"] = gc["seed"] = args.seed
    if args.trials is not None:
        mc["trials"] = args.trials
    if args.model is not None:
        mc["models"] = (args.model,)
    cfg = config_mod.replace(cfg, monte_carlo=mc, optimizer=opt, grad_check=gc)
    if args.out is not None:
        cfg = config_mod.replace(cfg, output_path=args.out)
    return cfg


def _cmd_sweep(cfg):
    rows = experiment.run_sweep(cfg, cfg.output_path)
    print(f"wrote {len(rows)} rows to {cfg.output_path}")
    return EXIT_OK


def _cmd_optimize(cfg):
    res = experiment.run_optimize(cfg, cfg.output_path)
    print(f"initial P_out {res.trace[0]:.6e}  final P_out {res.pout:.6e}  "
          f"iterations {len(res.trace) - 1}  stop: {res.reason}")
    print(f"trace written to {cfg.output_path}")
    return EXIT_OK


def _cmd_validate(cfg):
    points, passed, warnings = experiment.run_validate(cfg)
    print(f"{'sweep_value':>12} {'analytical':>13} {'monte_carlo':>13} {'std_err':>10} {'z':>7}"
          + ("  jakes_gap" if any(p.jakes_gap is not None for p in points) else ""))
    for p in points:
        line = (f"{p.sweep_value:>12g} {p.analytical:>13.6e} {p.empirical:>13.6e} "
                f"{p.std_error:>10.3e} {p.z:>7.2f}")
        if p.jakes_gap is not None:
            line += f"  {p.jakes_gap:+.4e}"
        print(line)
    for w in warnings:
        print(f"warning: {w}")
    print("validation " + ("passed" if passed else "FAILED"))
    return EXIT_OK if passed else EXIT_VALIDATION


def _cmd_grad_check(cfg):
    rep = experiment.run_gradient_check(cfg)
    print(f"P_out {rep.pout:.6e}  max |grad| {rep.grad_scale:.3e}")
    print(f"max relative error {rep.max_rel_error:.3e}  max absolute error {rep.max_abs_error:.3e}")
    if rep.delta_branch_zero:
        print("LoS-gain branch of the gradient is identically zero")
    for w in rep.warnings:
        print(f"warning: {w}")
    ok = rep.passed()
    print("gradient check " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {"sweep": _cmd_sweep, "optimize": _cmd_optimize,
            "validate": _cmd_validate, "grad-check": _cmd_grad_check}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (config_mod.ConfigError, ConfigurationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DomainError, ChannelNumericError, OptimizerNumericError,
            ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
