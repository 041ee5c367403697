"""Regenerate the figure CSVs (power sweeps over M and L, port sweep) into results/."""

import logging
import pathlib
import time

from simfas import config, experiment

ROOT = pathlib.Path(__file__).resolve().parents[1]
FIGURES = ("fig1_m16", "fig1_m32", "fig2_l2", "fig2_l3", "fig2_l4", "fig3_ports")


def main():
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    (ROOT / "results").mkdir(exist_ok=True)
    for name in FIGURES:
        cfg = config.load(ROOT / "configs" / f"{name}.yaml")
        out = ROOT / cfg.output_path
        t0 = time.perf_counter()
        rows = experiment.run_sweep(cfg, out)
        print(f"{name}: {len(rows)} points in {time.perf_counter() - t0:.1f} s -> {out}")
        for row in rows:
            print(f"  {cfg.sweep.axis}={row['sweep_value']:<6g} P_out={row['pout_analytical']:.4e}")


if __name__ == "__main__":
    main()
