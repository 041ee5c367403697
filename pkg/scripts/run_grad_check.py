"""Analytical outage gradient vs central finite differences."""

import pathlib

from simfas import config, experiment

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main():
    cfg = config.load(ROOT / "configs" / "grad_check.yaml")
    rep = experiment.run_gradient_check(cfg)
    print(f"P_out {rep.pout:.4e}, max |grad| {rep.grad_scale:.3e}")
    print(f"max relative error {rep.max_rel_error:.3e}, max absolute error {rep.max_abs_error:.3e}")
    for w in rep.warnings:
        print("warning:", w)


if __name__ == "__main__":
    main()
