"""Special functions and semi-infinite quadrature.

Bessel J0 and the exponentially scaled modified Bessel functions are thin
wrappers over ``scipy.special`` with domain checking. The first-order Marcum
Q-function and the adaptive Gauss-Kronrod integrator are implemented here.

All functions accept scalars or numpy arrays and return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ConvergenceError(RuntimeError):
    """Adaptive quadrature ran out of subdivisions."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 400
    tail_cutoff_sigma: float = 10.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if self.tail_cutoff_sigma < 6:
            raise ValueError("tail_cutoff_sigma must be >= 6")


# ---------------------------------------------------------------------------
# Bessel functions
# ---------------------------------------------------------------------------

def _as_checked(x, nonneg=False):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("non-finite argument")
    if nonneg and np.any(arr < 0):
        raise DomainError("argument must be >= 0")
    return arr


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def bessel_j0(x):
    """Zero-order Bessel function of the first kind."""
    return _ret(special.j0(_as_checked(x)))


def bessel_i0_scaled(x):
    """exp(-x) * I0(x) for x >= 0."""
    return _ret(special.i0e(_as_checked(x, nonneg=True)))


def bessel_i1_scaled(x):
    """exp(-x) * I1(x) for x >= 0."""
    return _ret(special.i1e(_as_checked(x, nonneg=True)))


def bessel_ratio_i1_i0(x):
    """I1(x)/I0(x), evaluated from scaled functions so it never overflows."""
    x = _as_checked(x, nonneg=True)
    return _ret(special.i1e(x) / special.i0e(x))


# ---------------------------------------------------------------------------
# Marcum Q1
# ---------------------------------------------------------------------------

# Poisson branch is used while max(a^2, b^2)/2 stays below this.
_POISSON_LIMIT = 30.0
_EPS = 1e-17


def _marcum_poisson(x, y):
    """(Q1, 1-Q1) from the Poisson-mixture series, x = a^2/2, y = b^2/2.

    Q1(a, b) = P[N_x >= N_y] for independent Poisson counts, so
    Q = sum_n p_x(n) F_y(n) and 1 - Q = sum_n p_y(n) F_x(n-1).
    Every term is non-negative, so the smaller output keeps full relative
    accuracy; the larger is its complement.
    """
    px = np.exp(-x)
    py = np.exp(-y)
    fx = np.zeros_like(x)  # F_x(n-1)
    fy = py.copy()         # F_y(n)
    q = px * fy
    p = np.zeros_like(x)
    nmax = int(math.ceil(_POISSON_LIMIT + 14.0 * math.sqrt(_POISSON_LIMIT) + 40))
    for n in range(1, nmax):
        fx = fx + px
        px = px * x / n
        py = py * y / n
        fy = fy + py
        q += px * fy
        p += py * fx
    # the larger side accumulates ~n rounding errors; rebuild it from the smaller
    q_small = q <= p
    return np.where(q_small, q, 1.0 - p), np.where(q_small, 1.0 - q, p)


def _marcum_bessel(a, b):
    """(Q1, 1-Q1) from the scaled Bessel series.

    With r = min(a,b)/max(a,b), the smaller tail is
        exp(-(a-b)^2/2) * sum_k r^k * ive(k, ab)
    (k from 0 for Q when a < b, from 1 for 1-Q when a >= b). The complement
    is then >= ~0.3, so forming it by subtraction loses nothing.

    The ratios rho_k = I_k/I_{k-1} come from the backward recurrence
    rho_k = x / (2k + x rho_{k+1}) (Miller's algorithm in ratio form, so
    nothing overflows), and the sum is nested as
    r rho_1 (1 + r rho_2 (1 + ...)).
    """
    x = a * b
    q_side = a < b
    r = np.minimum(a, b) / np.maximum(a, b)
    # r^k ive(k,x)/ive(0,x) < exp(-k^2/(2x)) is below 1e-18 well before this
    k_top = int(math.ceil(10.0 * math.sqrt(float(np.max(x))) + 60.0))
    rho = np.zeros_like(x)
    acc = np.zeros_like(x)  # sum_{k>=1} r^k I_k/I_0 once the loop ends
    for k in range(k_top, 0, -1):
        rho = x / (2.0 * k + x * rho)
        acc = r * rho * (1.0 + acc)
    i0 = special.ive(0, x)
    small = np.exp(-0.5 * (a - b) ** 2) * i0 * np.where(q_side, 1.0 + acc, acc)
    small = np.minimum(small, 1.0)
    q = np.where(q_side, small, 1.0 - small)
    p = np.where(q_side, 1.0 - small, small)
    return q, p


def marcum_pair(a, b):
    """Return (Q1(a, b), 1 - Q1(a, b)) with both accurate in relative terms
    wherever the value is not swamped by its complement."""
    a = _as_checked(a, nonneg=True)
    b = _as_checked(b, nonneg=True)
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    a = a.ravel().astype(float)
    b = b.ravel().astype(float)
    q = np.empty_like(a)
    p = np.empty_like(a)

    zero_b = b == 0.0
    q[zero_b], p[zero_b] = 1.0, 0.0
    zero_a = (a == 0.0) & ~zero_b
    q[zero_a] = np.exp(-0.5 * b[zero_a] ** 2)
    p[zero_a] = -np.expm1(-0.5 * b[zero_a] ** 2)

    rest = ~(zero_a | zero_b)
    x = 0.5 * a * a
    y = 0.5 * b * b
    pois = rest & (np.maximum(x, y) <= _POISSON_LIMIT)
    if np.any(pois):
        q[pois], p[pois] = _marcum_poisson(x[pois], y[pois])
    bes = rest & ~pois
    if np.any(bes):
        q[bes], p[bes] = _marcum_bessel(a[bes], b[bes])
    q = np.clip(q, 0.0, 1.0).reshape(shape)
    p = np.clip(p, 0.0, 1.0).reshape(shape)
    return _ret(q), _ret(p)


def marcum_q1(a, b):
    """First-order Marcum Q-function Q1(a, b) for a, b >= 0."""
    return marcum_pair(a, b)[0]


def marcum_p1(a, b):
    """Complementary Marcum function 1 - Q1(a, b), i.e. the Rician CDF."""
    return marcum_pair(a, b)[1]


def marcum_q1_partials(a, b):
    """(dQ1/da, dQ1/db).

    dQ1/da =  b exp(-(a^2+b^2)/2) I1(ab)
    dQ1/db = -b exp(-(a^2+b^2)/2) I0(ab)
    written with scaled Bessels as exp(-(a-b)^2/2) * ive(., ab).
    """
    a = _as_checked(a, nonneg=True)
    b = _as_checked(b, nonneg=True)
    e = b * np.exp(-0.5 * (a - b) ** 2)
    x = a * b
    return _ret(e * special.i1e(x)), _ret(-e * special.i0e(x))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

# 15-point Kronrod nodes on [-1, 1] with the embedded 7-point Gauss weights.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_KWEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[1:14:2] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15_panels(f, lo, hi):
    """Apply G7-K15 on each panel [lo_i, hi_i]; f is called once, vectorized.

    ``f`` maps a 1-d array of nodes to either values of the same length or a
    (ncomp, n) stack. Returns (kronrod, |kronrod - gauss|), each (ncomp, npanels).
    """
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _NODES[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float)
    vals = vals.reshape((-1,) + pts.shape)
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError("integrand returned non-finite values")
    kron = half * (vals @ _KWEIGHTS)
    gauss = half * (vals @ _GWEIGHTS)
    return kron, np.abs(kron - gauss)


def integrate_interval(f, lo, hi, spec=QuadratureSpec(), breakpoints=()):
    """Adaptive Gauss-Kronrod integral of a vectorized ``f`` over [lo, hi].

    The interval is first split at any interior ``breakpoints``. Panels are
    bisected, worst first, until every component's summed error estimate is
    within max(abs_tol, rel_tol*|I|). Returns (value, error_estimate); both
    are arrays when ``f`` returns a stack of components.
    """
    edges = sorted({float(lo), float(hi), *(float(p) for p in breakpoints if lo < p < hi)})
    lo_arr = np.array(edges[:-1])
    hi_arr = np.array(edges[1:])
    vals, errs = _gk15_panels(f, lo_arr, hi_arr)
    scalar = vals.shape[0] == 1
    # panels are kept as columns of growing arrays; retired panels get zero weight
    a_all, b_all = lo_arr, hi_arr
    v_all, e_all = vals, errs
    live = np.ones(len(a_all), dtype=bool)
    while True:
        total = v_all[:, live].sum(axis=1)
        err = e_all[:, live].sum(axis=1)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        if np.all(err <= tol):
            break
        if live.sum() >= spec.max_subdivisions:
            raise ConvergenceError(
                f"quadrature did not converge: estimate {total}, error {err}",
                estimate=total, error=err)
        score = np.max(e_all / tol[:, None], axis=0)
        score[~live] = -1.0
        # bisect every panel that carries a sizeable share of the worst error
        order = np.argsort(score)[::-1]
        pick = order[:max(1, min(16, int(np.sum(score > 0.1 * score[order[0]]))))]
        pick = pick[score[pick] > 0]
        a, b = a_all[pick], b_all[pick]
        m = 0.5 * (a + b)
        v, e = _gk15_panels(f, np.concatenate([a, m]), np.concatenate([m, b]))
        live[pick] = False
        a_all = np.concatenate([a_all, a, m])
        b_all = np.concatenate([b_all, m, b])
        v_all = np.concatenate([v_all, v], axis=1)
        e_all = np.concatenate([e_all, e], axis=1)
        live = np.concatenate([live, np.ones(2 * len(pick), dtype=bool)])
    if not np.all(np.isfinite(total)):
        raise ConvergenceError("quadrature produced a non-finite value")
    if scalar:
        return float(total[0]), float(err[0])
    return total, err


def integrate_semi_infinite(f, weight_scale, spec=QuadratureSpec(), center=0.0,
                            breakpoints=()):
    """Integral of ``f`` over [0, inf) for integrands with Gaussian-type tails.

    The domain is truncated at center + weight_scale * tail_cutoff_sigma.
    ``center`` is where the integrand mass sits (0 for Rayleigh-like shapes);
    it is also used as a breakpoint.
    """
    if not weight_scale > 0:
        raise DomainError("weight_scale must be positive")
    r_max = max(center, 0.0) + weight_scale * spec.tail_cutoff_sigma
    pts = [center, *breakpoints]
    value, _ = integrate_interval(f, 0.0, r_max, spec, breakpoints=pts)
    return value
