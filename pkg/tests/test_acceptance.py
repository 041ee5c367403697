"""End-to-end acceptance checks.

Each test records one line in ``conftest.ACCEPTANCE_LINES`` before asserting,
and the terminal summary prints them as PASS/FAIL. The figure and optimizer
checks take a few minutes in total.
"""

import math
import pathlib
import time

import mpmath as mp
import numpy as np
import pytest
from scipy import stats as sps

from conftest import ACCEPTANCE_LINES
from simfas import config as config_mod
from simfas import experiment
from simfas.channel import BlockPartition, ChannelStats, FasConfig
from simfas.montecarlo import McPlan, simulate_outage
from simfas.numerics import bessel_j0, marcum_q1
from simfas.optimizer import initial_phases, optimize, pout_of_phases
from simfas.outage import EffectiveStats, outage_probability
from simfas.sim_stack import PhaseProfile

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def record(name, ok, detail):
    ACCEPTANCE_LINES.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def load(name, **overrides):
    cfg = config_mod.load(CONFIGS / name)
    return config_mod.replace(cfg, **overrides) if overrides else cfg


def test_1_closed_form_matches_monte_carlo():
    t0 = time.perf_counter()
    cfg = load("validate.yaml")
    assert cfg.monte_carlo.trials == 100_000 and len(cfg.sweep.values) == 8
    points, _, _ = experiment.run_validate(cfg, z_limit=3.0)
    probs = [p.analytical for p in points]
    in_range = all(1e-3 <= p <= 0.9 for p in probs)
    worst = max(abs(p.z) for p in points)
    elapsed = time.perf_counter() - t0
    record("1 closed form vs Monte Carlo", in_range and worst <= 3.0,
           f"{len(points)} powers, P_out in [{min(probs):.2e}, {max(probs):.2e}], "
           f"max |z| = {worst:.2f}, {elapsed:.0f} s")


def test_2_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    cfg = load("grad_check.yaml")
    assert cfg.grad_check.tolerance == 1e-12
    rep = experiment.run_gradient_check(cfg)
    elapsed = time.perf_counter() - t0
    record("2 gradient correctness", rep.max_rel_error <= 1e-4 and rep.grad_scale > 0,
           f"max relative error {rep.max_rel_error:.2e} at P_out {rep.pout:.2e}, {elapsed:.0f} s")


def marcum_integral(a, b):
    a, b = mp.mpf(a), mp.mpf(b)
    f = lambda t: t * mp.exp(-(t * t + a * a) / 2) * mp.besseli(0, a * t)
    if b <= a:
        return 1 - mp.quad(f, [0, b]) if b > 0 else mp.mpf(1)
    return mp.quad(f, [b, b + 4, b + 12, mp.inf])


def j0_series(x):
    x = mp.mpf(x)
    return mp.nsum(lambda k: (-1) ** k * (x / 2) ** (2 * k) / mp.factorial(k) ** 2, [0, mp.inf])


def test_3_special_function_accuracy():
    grid = np.linspace(0.0, 10.0, 20)
    worst_q = 0.0
    with mp.workdps(40):
        for a in grid:
            for b in grid:
                ref = marcum_integral(a, b)
                worst_q = max(worst_q, float(abs(marcum_q1(a, b) - ref) / ref))
    worst_j = 0.0
    with mp.workdps(120):
        for x in np.linspace(0.0, 100.0, 201):
            ref = j0_series(x)
            # relative where |J0| > 1, absolute elsewhere (J0 has zeros on the interval)
            worst_j = max(worst_j, float(abs(bessel_j0(x) - ref)) / max(float(abs(ref)), 1.0))
    record("3 special functions", worst_q <= 1e-9 and worst_j <= 1e-11,
           f"Marcum Q1 max rel error {worst_q:.1e} on 20x20 grid, "
           f"J0 max error {worst_j:.1e} on [0, 100]")


def test_4_analytic_limits():
    es = EffectiveStats(sigma_tilde_sq=0.8, delta_abs=1.1, gamma_th=1.7)
    rician = 1.0 - float(marcum_q1(math.sqrt(2 * es.delta_abs ** 2 / es.sigma_tilde_sq),
                                   math.sqrt(2 * es.gamma_th / es.sigma_tilde_sq)))
    # independent value of the same CDF from the noncentral chi-square
    ncx = sps.ncx2.cdf(2 * es.gamma_th / es.sigma_tilde_sq, 2, 2 * es.delta_abs ** 2 / es.sigma_tilde_sq)
    near_zero = outage_probability(es, BlockPartition(((1, math.sqrt(1e-8)),)))
    gap = abs(near_zero - rician)

    # one port, zero correlation: pick K and the path gain that give the same statistics
    k = es.delta_abs ** 2 / es.sigma_tilde_sq
    st_ = ChannelStats(es.sigma_tilde_sq * (k + 1), np.ones(1, dtype=complex), FasConfig(1),
                       BlockPartition(((1, 0.0),)), k)
    res = simulate_outage(np.ones(1), st_, es.gamma_th, McPlan(trials=100_000, seed=0))
    z = res.z_score(rician)
    record("4 analytic limits", gap <= 1e-5 and abs(rician - ncx) < 1e-12 and abs(z) <= 3.0,
           f"mu^2=1e-8 gap {gap:.1e}, N=1 Monte Carlo z = {z:.2f}")


def column(rows, key):
    return np.array([r[key] for r in rows], dtype=float)


def strictly_decreasing(x):
    return bool(np.all(np.diff(x) < 0))


@pytest.fixture(scope="module")
def figure_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("figures")
    runs, t0 = {}, time.perf_counter()
    for name in ("fig1_m16", "fig1_m32", "fig2_l2", "fig2_l3", "fig2_l4", "fig3_ports"):
        cfg = load(f"{name}.yaml", output_path=str(out / f"{name}.csv"))
        runs[name] = experiment.run_sweep(cfg, cfg.output_path)
    return runs, time.perf_counter() - t0


def test_5_figure_shapes(figure_runs):
    runs, elapsed = figure_runs
    p = {name: column(rows, "pout_analytical") for name, rows in runs.items()}
    checks = {
        "(a) decreasing in P": all(strictly_decreasing(p[n]) for n in
                                   ("fig1_m16", "fig2_l2", "fig2_l3", "fig2_l4")),
        # M=32 may underflow to 0 where M=16 is still positive
        "(b) M=32 below M=16": bool(np.all(p["fig1_m32"] < p["fig1_m16"])),
        "(c) larger L lower": bool(np.all(p["fig2_l3"] < p["fig2_l2"])
                                   and np.all(p["fig2_l4"] < p["fig2_l3"])),
        "(d) decreasing in N, no-FAS flat": strictly_decreasing(p["fig3_ports"])
        and len(set(column(runs["fig3_ports"], "pout_no_fas"))) == 1,
        "(e) benchmarks above": all(
            np.all(column(runs[n], "pout_no_sim") > p[n])
            and np.all(column(runs[n], "pout_no_fas") > p[n])
            for n in ("fig1_m16", "fig1_m32", "fig3_ports")),
    }
    failed = [k for k, ok in checks.items() if not ok]
    record("5 figure shapes", not failed,
           ("all of " if not failed else "failed ") + ", ".join(failed or checks)
           + f"; {elapsed:.0f} s")


def test_5_no_sim_crossover_is_reported(figure_runs):
    """Informational: where the SIM-free link beats the two-layer SIM on the
    fig2 grid. Recorded, not asserted."""
    runs, _ = figure_runs
    cfg = load("fig2_l2.yaml")
    no_sim = experiment.build_system(cfg, with_sim=False)
    spec = experiment.quadrature_spec(cfg)
    losses = []
    for row in runs["fig2_l2"]:
        budget = experiment.link_budget(cfg, row["sweep_value"])
        bench = experiment._analytic(np.ones(1, dtype=complex), no_sim, budget, spec)
        if bench <= row["pout_analytical"]:
            losses.append(row["sweep_value"])
    ACCEPTANCE_LINES.append(("5 note", True, f"L=2, M=16 SIM is at or above the SIM-free link at "
                             f"{len(losses)}/{len(runs['fig2_l2'])} fig2 powers"))


def test_6_optimizer_behaviour():
    t0 = time.perf_counter()
    base = load("optimize.yaml")
    sys_ = experiment.build_system(base)
    budget = experiment.link_budget(base)
    spec = experiment.quadrature_spec(base)
    zero = pout_of_phases(PhaseProfile.zeros(base.geometry.num_layers, base.geometry.atoms_per_layer),
                          sys_.coupling, sys_.stats, budget, sys_.partition, spec)
    monotone, wins, finals = True, 0, []
    for seed in range(3):
        cfg = config_mod.replace(base, optimizer={"seed": seed})
        ocfg = experiment.optimizer_config(cfg)
        start = initial_phases(ocfg, sys_.coupling, sys_.stats)
        res = optimize(start, sys_.coupling, sys_.stats, budget, sys_.partition, ocfg, spec)
        monotone &= all(b <= a for a, b in zip(res.trace, res.trace[1:]))
        wins += res.pout < zero
        finals.append(res.pout)
    elapsed = time.perf_counter() - t0
    record("6 optimizer", monotone and wins >= 2,
           f"monotone={monotone}, beats zero phases ({zero:.1e}) in {wins}/3 runs, "
           f"finals {', '.join(f'{v:.1e}' for v in finals)}, {elapsed:.0f} s")


def test_7_determinism(tmp_path):
    cfg = load("default.yaml", monte_carlo={"trials": 20_000},
               optimizer={"max_iters": 3}, sweep=config_mod.SweepConfig("tx_power_dbm", (9.5, 10.0)))
    texts = []
    for name in ("a.csv", "b.csv"):
        experiment.run_sweep(cfg, tmp_path / name)
        texts.append((tmp_path / name).read_bytes())
    record("7 determinism", texts[0] == texts[1], f"two runs, {len(texts[0])} bytes, identical")
