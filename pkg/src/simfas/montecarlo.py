"""Monte Carlo outage estimates with max-gain port selection.

Channels are drawn in batches, each batch with its own generator seeded from
(seed, batch index), so results do not depend on how batches are scheduled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelStats, build_sigma, draw_block_channels, draw_full_jakes_channels, psd_sqrt
from .numerics import DomainError
from .outage import LinkBudget


class ChannelModel(enum.Enum):
    BDMA = "bdma"
    FULL_JAKES = "jakes"


@dataclass(frozen=True)
class McPlan:
    trials: int = 100_000
    seed: int = 0
    model: ChannelModel = ChannelModel.BDMA
    batch: int = 4096

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class McResult:
    empirical_outage: float
    std_error: float
    trials_used: int
    seed: int

    @classmethod
    def from_count(cls, events, trials, seed):
        p = events / trials
        return cls(p, math.sqrt(p * (1.0 - p) / trials), trials, seed)

    def z_score(self, reference):
        """(p_hat - reference) in units of the reference's binomial standard error."""
        se = math.sqrt(max(reference * (1.0 - reference), 0.0) / self.trials_used)
        diff = self.empirical_outage - reference
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / se


def select_port(c):
    """Index (0-based) of the largest |C_k|, lowest index on ties, and |C_k|^2."""
    c = np.asarray(c)
    if c.ndim != 1 or c.size == 0:
        raise DomainError("select_port needs a non-empty vector")
    gains = np.abs(c) ** 2
    k = int(np.argmax(gains))  # argmax returns the first maximizer
    return k, float(gains[k])


def _field_vector(g):
    return np.asarray(getattr(g, "g", g), dtype=complex)


def max_port_gains(g, stats: ChannelStats, plan: McPlan):
    """max_k |h_k^T g|^2 for every trial, shape (T,)."""
    gv = _field_vector(g)
    if gv.shape != stats.los.shape:
        raise DomainError(f"field has {gv.shape[0]} entries, LoS vector {stats.los.shape[0]}")
    root = None
    if plan.model is ChannelModel.FULL_JAKES:
        root = psd_sqrt(build_sigma(stats.fas))
    out = np.empty(plan.trials)
    n_batches = -(-plan.trials // plan.batch)
    for i in range(n_batches):
        lo = i * plan.batch
        size = min(plan.batch, plan.trials - lo)
        rng = np.random.default_rng([plan.seed, i])
        if plan.model is ChannelModel.BDMA:
            h = draw_block_channels(stats, rng, trials=size).channels
        else:
            h = draw_full_jakes_channels(stats, None, rng, trials=size, sigma_sqrt=root)
        c = h @ gv
        out[lo:lo + size] = np.max(np.abs(c) ** 2, axis=1)
    return out


def _gamma(budget):
    return float(budget.gamma_th) if isinstance(budget, LinkBudget) else float(budget)


def simulate_outage(g, stats: ChannelStats, budget, plan: McPlan) -> McResult:
    """Empirical Pr[max_k |C_k|^2 < gamma_th]; ``budget`` is a LinkBudget or gamma_th."""
    gains = max_port_gains(g, stats, plan)
    events = int(np.count_nonzero(gains < _gamma(budget)))
    return McResult.from_count(events, plan.trials, plan.seed)


def simulate_outage_sweep(g, stats: ChannelStats, budgets, plan: McPlan):
    """Outage at several thresholds from one shared set of channel draws."""
    gains = max_port_gains(g, stats, plan)
    return [McResult.from_count(int(np.count_nonzero(gains < _gamma(b))), plan.trials, plan.seed)
            for b in budgets]
