"""Optimizer traces from several random starts, compared with all-zero phases."""

import pathlib

from simfas import config, experiment
from simfas.optimizer import pout_of_phases
from simfas.sim_stack import PhaseProfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main(seeds=(0, 1, 2)):
    base = config.load(ROOT / "configs" / "optimize.yaml")
    sys_ = experiment.build_system(base)
    zero = pout_of_phases(PhaseProfile.zeros(base.geometry.num_layers, base.geometry.atoms_per_layer),
                          sys_.coupling, sys_.stats, experiment.link_budget(base), sys_.partition,
                          experiment.quadrature_spec(base))
    print(f"all-zero phases: P_out {zero:.4e}")
    (ROOT / "results").mkdir(exist_ok=True)
    for seed in seeds:
        out = ROOT / "results" / f"optimize_trace_seed{seed}.csv"
        cfg = config.replace(base, optimizer={"seed": seed}, output_path=str(out))
        res = experiment.run_optimize(cfg, out)
        print(f"seed {seed}: {res.trace[0]:.4e} -> {res.pout:.4e} "
              f"after {len(res.trace) - 1} iterations ({res.reason})")


if __name__ == "__main__":
    main()
