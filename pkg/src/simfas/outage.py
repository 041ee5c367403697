"""Closed-form BDMA outage probability and its partial derivatives.

Each block contributes

    J_b = int_0^inf f_b(r) [1 - Q1(c r, c sqrt(gamma_th))]^{L_b} dr,
    c = sqrt(2 / (sigma2 (1 - mu_b^2))),

where f_b is the Rician density of the block's common envelope (scale
sigma2 mu_b^2, LoS amplitude |delta|), and P_out = prod_b J_b.

Integrals are evaluated in the dimensionless variable t = r / omega with
omega^2 = sigma2 mu_b^2, where the density becomes
2t exp(-(t - nu)^2) i0e(2 t nu) with nu = |delta| / omega.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import special

from .numerics import (
    DomainError,
    QuadratureSpec,
    _gk15_panels,
    integrate_interval,
    marcum_pair,
)
from .sim_stack import SimField

# Below this mu_b^2 a block is evaluated at r_b = |delta| instead of integrated.
DEGENERATE_MU_SQ = 1e-6


class DegenerateFieldError(ValueError):
    """The SIM field vanishes, so the effective statistics are undefined."""


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float                      # W
    noise_power: float = dbm_to_watt(-96.0)  # W
    target_rate: float = 6.0             # bit/s/Hz

    def __post_init__(self):
        if not (self.tx_power > 0 and self.noise_power > 0 and self.target_rate >= 0):
            raise ValueError("power and noise must be positive, rate non-negative")

    @classmethod
    def from_dbm(cls, tx_power_dbm, noise_dbm=-96.0, target_rate=6.0):
        return cls(dbm_to_watt(tx_power_dbm), dbm_to_watt(noise_dbm), target_rate)

    @property
    def gamma_th(self):
        return (2.0 ** self.target_rate - 1.0) * self.noise_power / self.tx_power


@dataclass(frozen=True)
class EffectiveStats:
    sigma_tilde_sq: float
    delta_abs: float
    gamma_th: float

    def __post_init__(self):
        if not self.sigma_tilde_sq > 0:
            raise DomainError("effective variance must be positive")
        if not self.delta_abs >= 0:
            raise DomainError("|delta| must be non-negative")
        if not self.gamma_th >= 0:
            raise DomainError("SNR threshold must be non-negative")

    def scaled(self, sigma_tilde_sq=None, delta_abs=None, gamma_th=None):
        return EffectiveStats(
            self.sigma_tilde_sq if sigma_tilde_sq is None else sigma_tilde_sq,
            self.delta_abs if delta_abs is None else delta_abs,
            self.gamma_th if gamma_th is None else gamma_th)


def effective_stats(field, stats, budget) -> EffectiveStats:
    """sigma2 = alpha/(K+1) ||g||^2, |delta| = sqrt(alpha K/(K+1)) |h_bar^T g|."""
    g = field.g if isinstance(field, SimField) else np.asarray(field, dtype=complex)
    if g.shape != stats.los.shape:
        raise ValueError(f"field length {g.shape} does not match LoS vector {stats.los.shape}")
    norm_sq = float(np.vdot(g, g).real)
    if norm_sq == 0.0:
        raise DegenerateFieldError("SIM field is identically zero")
    return EffectiveStats(
        sigma_tilde_sq=stats.scatter_power * norm_sq,
        delta_abs=float(stats.los_amplitude * abs(stats.los @ g)),
        gamma_th=budget.gamma_th if isinstance(budget, LinkBudget) else float(budget),
    )


# ---------------------------------------------------------------------------
# Densities and conditional CDFs
# ---------------------------------------------------------------------------

def delta_density(r, es: EffectiveStats, mu, scaled=True):
    """Rician density of the block envelope |delta + mu Z1|."""
    if not 0.0 < mu < 1.0:
        raise DomainError("density needs 0 < mu < 1 (mu = 0 is a point mass at |delta|)")
    r = np.asarray(r, dtype=float)
    w2 = es.sigma_tilde_sq * mu * mu
    d = es.delta_abs
    u = 2.0 * r * d / w2
    if scaled:
        out = 2.0 * r / w2 * np.exp(-(r - d) ** 2 / w2) * special.i0e(u)
    else:
        out = 2.0 * r / w2 * np.exp(-(r * r + d * d) / w2) * special.i0(u)
    return float(out) if out.ndim == 0 else out


def _bracket_scale(es, mu):
    return math.sqrt(2.0 / (es.sigma_tilde_sq * (1.0 - mu * mu)))


def conditional_port_cdf(r_k, r_b, es: EffectiveStats, mu):
    """P[C_k <= r_k | Delta_b = r_b] = 1 - Q1(c r_b, c r_k)."""
    c = _bracket_scale(es, mu)
    return marcum_pair(c * np.asarray(r_b, dtype=float), c * np.asarray(r_k, dtype=float))[1]


# ---------------------------------------------------------------------------
# Block integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockTerms:
    value: float       # J_b
    complement: float  # 1 - J_b, accurate even when J_b is close to 1
    d_sigma2: float    # dJ_b / d sigma2
    d_delta: float     # dJ_b / d |delta|
    d_gamma: float     # dJ_b / d gamma_th

    @property
    def log_value(self):
        if self.complement < 0.5:
            return math.log1p(-self.complement)
        return math.log(self.value) if self.value > 0.0 else -math.inf


def _envelope(t, nu):
    """2t exp(-(t-nu)^2) i0e(2 t nu) and I1/I0 at 2 t nu."""
    u = 2.0 * t * nu
    i0 = special.i0e(u)
    return 2.0 * t * np.exp(-(t - nu) ** 2) * i0, special.i1e(u) / i0


def _bracket_terms(a, b, size):
    """Bracket B = 1 - Q1(a, b) raised to ``size`` and its sensitivities.

    Returns (B^L, 1 - B^L, L B^(L-1) sigma2 dB/dsigma2, L B^(L-1) gamma dB/dgamma).
    a and b both scale as sigma2^(-1/2); b scales as gamma^(1/2).
    """
    q, bracket = marcum_pair(a, b)
    # log from whichever of Q and 1 - Q carries full relative precision
    with np.errstate(divide="ignore"):
        log_b = size * np.where(bracket < 0.5, np.log(bracket), np.log1p(-q))
    e = b * np.exp(-0.5 * (a - b) ** 2)
    x = a * b
    ive0 = special.i0e(x)
    ive1 = special.i1e(x)
    lead = size * bracket ** (size - 1)
    s_db = 0.5 * e * (a * ive1 - b * ive0)
    g_db = 0.5 * e * b * ive0
    return np.exp(log_b), -np.expm1(log_b), lead * s_db, lead * g_db


def _integration_domain(nu, kappa, b, spec):
    t_max = nu + spec.tail_cutoff_sigma
    breaks = [nu]
    if kappa > 0:
        t_edge = b / kappa  # where the bracket switches from ~1 to ~0
        if t_edge < t_max:
            breaks.extend([t_edge, max(t_edge - 3.0 / kappa, 0.0), t_edge + 3.0 / kappa])
    return t_max, breaks


def _rough_integral(f, lo, hi, breakpoints):
    """One fixed G7-K15 pass over a 4x refined breakpoint grid."""
    edges = np.array(sorted({lo, hi, *(p for p in breakpoints if lo < p < hi)}))
    fine = np.concatenate([np.linspace(a, b, 5)[:-1] for a, b in zip(edges[:-1], edges[1:])]
                          + [edges[-1:]])
    value, _ = _gk15_panels(f, fine[:-1], fine[1:])
    return value.sum(axis=1)


def block_terms(es: EffectiveStats, size, mu, spec=QuadratureSpec(), derivatives=True):
    """J_b, its complement and (optionally) its partials in sigma2, |delta|, gamma_th.

    Whichever of J_b and 1 - J_b is smaller is integrated directly (the other
    follows by subtraction), and the integrand is normalized by a rough first
    estimate so the quadrature tolerances act relative to that quantity.
    """
    size = int(size)
    if size < 1:
        raise ValueError("block size must be >= 1")
    s, d, gam = es.sigma_tilde_sq, es.delta_abs, es.gamma_th
    if gam == 0.0:
        return BlockTerms(0.0, 1.0, 0.0, 0.0, 0.0)
    mu_sq = mu * mu
    c = _bracket_scale(es, mu)
    b = c * math.sqrt(gam)

    if mu_sq < DEGENERATE_MU_SQ:
        a = c * d
        val, comp, s_db, g_db = (float(v) for v in _bracket_terms(np.array(a), np.array(b), size))
        lead = size * marcum_pair(a, b)[1] ** (size - 1)
        dq_da = b * math.exp(-0.5 * (a - b) ** 2) * special.i1e(a * b)
        # d(1 - Q1)/d|delta| = -dQ1/da * c
        return BlockTerms(val, comp, s_db / s, -lead * dq_da * c, g_db / gam)

    omega = math.sqrt(s * mu_sq)
    nu = d / omega
    kappa = math.sqrt(2.0 * mu_sq / (1.0 - mu_sq))
    # J > 1/2 roughly when the bracket at the density peak is above 1/2
    upper = float(_bracket_terms(np.array(kappa * max(nu, 0.5)), np.array(b), size)[0]) > 0.5
    sign = -1.0 if upper else 1.0

    def integrand(t):
        dens, ratio = _envelope(t, nu)
        br, comp, s_br, g_br = _bracket_terms(kappa * t, b, size)
        main = comp if upper else br
        if not derivatives:
            return dens * main
        # the score terms integrate to zero against the density alone, so they
        # can multiply either B^L or -(1 - B^L)
        return np.stack([
            dens * main,
            dens * ((-1.0 + t * t + nu * nu - 2.0 * t * nu * ratio) * sign * main + s_br),
            dens * (-2.0 * nu + 2.0 * t * ratio) * sign * main,
            dens * g_br,
        ])

    t_max, breaks = _integration_domain(nu, kappa, b, spec)
    scale = float(np.atleast_1d(_rough_integral(integrand, 0.0, t_max, breaks))[0])
    if not scale > 0.0:
        # the integrated side underflows: J is exactly 0 or 1 in double precision
        j = 1.0 if upper else 0.0
        return BlockTerms(j, 1.0 - j, 0.0, 0.0, 0.0)
    value, _ = integrate_interval(lambda t: integrand(t) / scale, 0.0, t_max, spec,
                                  breakpoints=breaks)
    value = np.atleast_1d(value) * scale
    small = min(max(float(value[0]), 0.0), 1.0)
    j, comp = (1.0 - small, small) if upper else (small, 1.0 - small)
    if not derivatives:
        return BlockTerms(j, comp, math.nan, math.nan, math.nan)
    _, s_dj, w_dj, g_dj = value
    return BlockTerms(j, comp, s_dj / s, w_dj / omega, g_dj / gam)


def block_integral_Jb(es: EffectiveStats, block, spec=QuadratureSpec()):
    size, mu = block
    return block_terms(es, size, mu, spec, derivatives=False).value


# ---------------------------------------------------------------------------
# Outage probability
# ---------------------------------------------------------------------------

def _unique_blocks(partition):
    return Counter(partition.blocks)


@dataclass(frozen=True)
class OutageTerms:
    """P_out and its partials.

    ``log_pout`` and ``log_success`` = log(1 - P_out) keep resolution at both
    ends of [0, 1]; ``dlog_*`` are the partials of log P_out.
    """
    log_pout: float
    log_success: float
    dlog_sigma2: float = math.nan
    dlog_delta: float = math.nan
    dlog_gamma: float = math.nan
    d_sigma2: float = math.nan
    d_delta: float = math.nan
    d_gamma: float = math.nan

    @property
    def pout(self):
        return math.exp(self.log_pout)

    @property
    def log_odds(self):
        return self.log_pout - self.log_success


def _log_success(log_p):
    if log_p == -math.inf:
        return 0.0
    one_minus = -math.expm1(log_p)
    return math.log(one_minus) if one_minus > 0.0 else -math.inf


def outage_terms(es: EffectiveStats, partition, spec=QuadratureSpec(), derivatives=True):
    """log P_out, log(1 - P_out) and the partials of P_out.

    Partials come from differentiating every J_b under the integral:
    dP/dx = sum_b (dJ_b/dx) prod_{c != b} J_c, evaluated as
    P * sum_b count_b (dJ_b/dx)/J_b when no J_b vanishes.
    """
    terms = {blk: (cnt, block_terms(es, blk[0], blk[1], spec, derivatives))
             for blk, cnt in _unique_blocks(partition).items()}
    log_p = sum(cnt * t.log_value for cnt, t in terms.values())
    log_s = _log_success(log_p)
    if not derivatives:
        return OutageTerms(log_p, log_s)
    names = ("d_sigma2", "d_delta", "d_gamma")
    zeros = [(cnt, t) for cnt, t in terms.values() if t.value <= 0.0]
    if not zeros:
        p = math.exp(log_p)
        dlog = [sum(cnt * getattr(t, name) / t.value for cnt, t in terms.values())
                for name in names]
        return OutageTerms(log_p, log_s, *dlog, *(p * x for x in dlog))
    nan3 = (math.nan,) * 3
    if len(zeros) > 1 or zeros[0][0] > 1:
        return OutageTerms(log_p, log_s, *nan3, 0.0, 0.0, 0.0)
    _, zero_term = zeros[0]
    rest = math.prod(t.value ** cnt for cnt, t in terms.values() if t.value > 0.0)
    return OutageTerms(log_p, log_s, *nan3,
                       *(getattr(zero_term, name) * rest for name in names))


def log_outage_probability(es: EffectiveStats, partition, spec=QuadratureSpec()):
    """sum_b log J_b (identical blocks are integrated once)."""
    return outage_terms(es, partition, spec, derivatives=False).log_pout


def outage_probability(es: EffectiveStats, partition, spec=QuadratureSpec()):
    return math.exp(log_outage_probability(es, partition, spec))


def outage_with_derivatives(es: EffectiveStats, partition, spec=QuadratureSpec()):
    return outage_terms(es, partition, spec, derivatives=True)


def joint_cdf(r, es: EffectiveStats, partition, spec=QuadratureSpec()):
    """P[C_1 <= r_1, ..., C_N <= r_N] under the BDMA model."""
    r = np.asarray(r, dtype=float)
    if r.shape != (partition.num_ports,):
        raise ValueError(f"need {partition.num_ports} thresholds, got shape {r.shape}")
    if np.any(r < 0):
        raise DomainError("thresholds must be non-negative")
    if np.any(r == 0):
        return 0.0
    s, d = es.sigma_tilde_sq, es.delta_abs
    total = 1.0
    start = 0
    for size, mu in partition.blocks:
        rk = r[start:start + size]
        start += size
        c = _bracket_scale(es, mu)
        bk = c * rk
        if mu * mu < DEGENERATE_MU_SQ:
            total *= float(np.prod(marcum_pair(c * d, bk)[1]))
            continue
        omega = math.sqrt(s * mu * mu)
        nu = d / omega
        kappa = math.sqrt(2.0 * mu * mu / (1.0 - mu * mu))

        def integrand(t, bk=bk, nu=nu, kappa=kappa):
            dens, _ = _envelope(t, nu)
            br = marcum_pair(kappa * t[:, None], bk[None, :])[1]
            return dens * np.prod(br, axis=1)

        t_max = nu + spec.tail_cutoff_sigma
        breaks = [nu, *[x for x in bk / kappa if x < t_max]]
        value, _ = integrate_interval(integrand, 0.0, t_max, spec, breakpoints=breaks)
        total *= min(max(value, 0.0), 1.0)
    return total
