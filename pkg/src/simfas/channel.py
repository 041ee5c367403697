"""Fluid-antenna port correlation, BDMA blocks, LoS/path loss and channel draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .numerics import DomainError, bessel_j0
from .sim_stack import TWO_PI, SimGeometry


class NumericError(ArithmeticError):
    """A matrix or value failed a numerical sanity check."""


@dataclass(frozen=True)
class FasConfig:
    num_ports: int
    aperture_wavelengths: float = 5.0

    def __post_init__(self):
        if self.num_ports < 1:
            raise ValueError("num_ports must be >= 1")
        if not self.aperture_wavelengths > 0:
            raise ValueError("aperture must be positive")


@dataclass(frozen=True)
class BlockPartition:
    blocks: tuple  # ((size, mu), ...)

    def __post_init__(self):
        blocks = tuple((int(s), float(mu)) for s, mu in self.blocks)
        if not blocks:
            raise ValueError("partition needs at least one block")
        for size, mu in blocks:
            if size < 1:
                raise ValueError("block sizes must be >= 1")
            if not (0.0 <= mu and mu * mu < 1.0):
                raise ValueError(f"intra-block correlation {mu} outside [0, 1)")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def uniform(cls, sizes, mu):
        return cls(tuple((s, mu) for s in sizes))

    @property
    def num_ports(self):
        return sum(s for s, _ in self.blocks)

    @property
    def sizes(self):
        return [s for s, _ in self.blocks]

    def port_block_index(self):
        """Block index of every port, in port order."""
        return np.repeat(np.arange(len(self.blocks)), self.sizes)


@dataclass(frozen=True)
class ChannelStats:
    path_loss: float
    los: np.ndarray
    fas: FasConfig
    partition: BlockPartition
    rician_k: float = 2.0

    def __post_init__(self):
        if not self.path_loss > 0:
            raise ValueError("path loss gain must be positive")
        if not self.rician_k >= 0:
            raise ValueError("Rician factor must be >= 0")
        los = np.asarray(self.los, dtype=complex)
        if not np.allclose(np.abs(los), 1.0, atol=1e-12):
            raise ValueError("LoS vector must have unit-modulus entries")
        object.__setattr__(self, "los", los)
        if self.partition.num_ports != self.fas.num_ports:
            raise ValueError(
                f"partition covers {self.partition.num_ports} ports, FAS has {self.fas.num_ports}")

    @property
    def los_amplitude(self):
        """sqrt(alpha K / (K+1))."""
        k = self.rician_k
        return np.sqrt(self.path_loss * k / (k + 1.0)) if np.isfinite(k) else np.sqrt(self.path_loss)

    @property
    def scatter_power(self):
        """alpha / (K+1), variance of every diffuse entry."""
        k = self.rician_k
        return self.path_loss / (k + 1.0) if np.isfinite(k) else 0.0


def jakes_correlation(k, fas: FasConfig):
    """Correlation between port 1 and port k (1-based)."""
    n = fas.num_ports
    if not 1 <= k <= n:
        raise DomainError(f"port {k} out of range 1..{n}")
    if n == 1:
        return 1.0
    return bessel_j0(TWO_PI * (k - 1) * fas.aperture_wavelengths / (n - 1))


def build_sigma(fas: FasConfig):
    """Toeplitz port-correlation matrix."""
    n = fas.num_ports
    if n == 1:
        return np.ones((1, 1))
    first_row = bessel_j0(TWO_PI * np.arange(n) * fas.aperture_wavelengths / (n - 1))
    first_row = np.atleast_1d(first_row)
    first_row[0] = 1.0
    return toeplitz(first_row)


def bdma_partition(sigma, mu_sq, max_block=None):
    """Greedy consecutive-port grouping.

    A block starts at its head port and absorbs following ports while the
    squared correlation with the head is at least ``mu_sq`` and the block is
    shorter than ``max_block``. Every block gets intra-correlation sqrt(mu_sq).
    """
    if not 0.0 <= mu_sq < 1.0:
        raise DomainError("mu_sq must lie in [0, 1)")
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    if sigma.shape != (n, n) or not np.allclose(sigma, sigma.T):
        raise ValueError("sigma must be a symmetric square matrix")
    if not np.allclose(np.diag(sigma), 1.0):
        raise ValueError("sigma must have a unit diagonal")
    max_block = n if max_block is None else int(max_block)
    if max_block < 1:
        raise ValueError("max_block must be >= 1")
    mu = float(np.sqrt(mu_sq))
    sizes = []
    head = 0
    while head < n:
        size = 1
        while (head + size < n and size < max_block
               and sigma[head, head + size] ** 2 >= mu_sq):
            size += 1
        sizes.append(size)
        head += size
    return BlockPartition.uniform(sizes, mu)


def los_vector(geometry: SimGeometry, user_height_drop, user_distance):
    """Unit-modulus LoS vector from the output layer to the user.

    The user is ``user_distance`` metres in front of the output layer along
    the stack axis and ``user_height_drop`` metres below it.
    """
    if not user_distance > 0:
        raise DomainError("user distance must be positive")
    user = np.array([0.0, -float(user_height_drop),
                     geometry.layer_z(geometry.num_layers) + float(user_distance)])
    d = np.linalg.norm(geometry.atom_positions(geometry.num_layers) - user, axis=1)
    return np.exp(1j * TWO_PI * d / geometry.wavelength)


def link_distance(user_height_drop, user_distance):
    return float(np.hypot(user_height_drop, user_distance))


def path_loss(distance, exponent=3.5, ref_gain_db=-30.0):
    """Log-distance path-loss gain 10^(ref/10) * d^-exponent."""
    if not distance > 0:
        raise DomainError("distance must be positive")
    return 10.0 ** (ref_gain_db / 10.0) * distance ** (-exponent)


def _cn(rng, shape, variance):
    """Circular complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass
class BlockChannelDraw:
    shared: np.ndarray       # (T, B, M) h~_b
    innovations: np.ndarray  # (T, N, M) e_k
    channels: np.ndarray     # (T, N, M) h_k


def draw_block_channels(stats: ChannelStats, rng, trials=None):
    """Draw BDMA-model port channels.

    With ``trials=None`` a single draw is returned (leading axis dropped).
    """
    t = 1 if trials is None else int(trials)
    m = stats.los.shape[0]
    nb = len(stats.partition.blocks)
    n = stats.fas.num_ports
    var = stats.scatter_power
    shared = _cn(rng, (t, nb, m), var)
    innov = _cn(rng, (t, n, m), var)
    idx = stats.partition.port_block_index()
    mu = np.array([b[1] for b in stats.partition.blocks])[idx]
    h = (stats.los_amplitude * stats.los[None, None, :]
         + mu[None, :, None] * shared[:, idx, :]
         + np.sqrt(1.0 - mu * mu)[None, :, None] * innov)
    if trials is None:
        return BlockChannelDraw(shared[0], innov[0], h[0])
    return BlockChannelDraw(shared, innov, h)


def psd_sqrt(sigma, tol=1e-10):
    """Symmetric square root of a PSD matrix, clipping eigenvalues in [-tol, 0)."""
    w, v = np.linalg.eigh(np.asarray(sigma, dtype=float))
    if np.min(w) < -tol:
        raise NumericError(f"correlation matrix is indefinite (min eigenvalue {np.min(w):.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def draw_full_jakes_channels(stats: ChannelStats, sigma, rng, trials=None, sigma_sqrt=None):
    """Port channels with NLoS correlation following ``sigma`` across ports.

    Returns an (N, M) array, or (T, N, M) when ``trials`` is given.
    """
    root = psd_sqrt(sigma) if sigma_sqrt is None else sigma_sqrt
    t = 1 if trials is None else int(trials)
    n = root.shape[0]
    m = stats.los.shape[0]
    white = _cn(rng, (t, n, m), stats.scatter_power)
    h = stats.los_amplitude * stats.los[None, None, :] + np.einsum("kj,tjm->tkm", root, white)
    return h[0] if trials is None else h
