"""Stacked intelligent metasurface forward model.

Layers are parallel planes normal to z, equally spaced by thickness/L, with
layer 1 at z = 0. Each layer holds an M-atom rectangular grid centred on the
z axis. A single isotropic feed sits on the axis one layer spacing behind
layer 1 (half a wavelength for a single layer).

The transmit field is
    g = Theta_L W_L ... Theta_2 W_2 Theta_1 w_1,
with Theta_l = diag(exp(j theta_l)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Inconsistent geometry, shapes or parameters."""


TWO_PI = 2.0 * np.pi


def default_grid_shape(m):
    rows = int(np.floor(np.sqrt(m)))
    while m % rows:
        rows -= 1
    return rows, m // rows


@dataclass(frozen=True)
class SimGeometry:
    num_layers: int
    atoms_per_layer: int
    wavelength: float
    total_thickness: float | None = None  # defaults to 5 wavelengths
    atom_pitch: float | None = None       # defaults to half a wavelength
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.num_layers < 1 or self.atoms_per_layer < 1:
            raise ConfigurationError("need at least one layer and one atom")
        if not self.wavelength > 0:
            raise ConfigurationError("wavelength must be positive")
        if self.total_thickness is None:
            object.__setattr__(self, "total_thickness", 5.0 * self.wavelength)
        if self.atom_pitch is None:
            object.__setattr__(self, "atom_pitch", 0.5 * self.wavelength)
        if self.grid_shape is None:
            object.__setattr__(self, "grid_shape", default_grid_shape(self.atoms_per_layer))
        rows, cols = self.grid_shape
        if rows * cols != self.atoms_per_layer:
            raise ConfigurationError(
                f"grid_shape {self.grid_shape} does not hold {self.atoms_per_layer} atoms")
        if self.num_layers >= 2 and not self.total_thickness > 0:
            raise ConfigurationError("zero layer spacing with more than one layer")
        if not self.atom_pitch > 0:
            raise ConfigurationError("atom_pitch must be positive")

    @property
    def layer_spacing(self):
        if self.num_layers == 1:
            return 0.0
        return self.total_thickness / self.num_layers

    @property
    def feed_distance(self):
        if self.num_layers == 1:
            return 0.5 * self.wavelength
        return self.layer_spacing

    @property
    def atom_area(self):
        return self.atom_pitch ** 2

    def atom_xy(self):
        """(M, 2) in-plane atom coordinates, row-major, centred on the axis."""
        rows, cols = self.grid_shape
        ys = (np.arange(rows) - (rows - 1) / 2.0) * self.atom_pitch
        xs = (np.arange(cols) - (cols - 1) / 2.0) * self.atom_pitch
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def layer_z(self, layer):
        """z coordinate of 1-based ``layer``."""
        return (layer - 1) * self.layer_spacing

    def atom_positions(self, layer):
        xy = self.atom_xy()
        return np.column_stack([xy, np.full(len(xy), self.layer_z(layer))])

    def feed_position(self):
        return np.array([0.0, 0.0, -self.feed_distance])


def rayleigh_sommerfeld(src, dst, area, wavelength):
    """Diffraction coefficients from points ``src`` (S, 3) to ``dst`` (D, 3).

    Entry (d, s) = area cos(chi)/dist * (1/(2 pi dist) - j/lambda) * exp(j 2 pi dist/lambda),
    chi being the angle between the propagation direction and the z axis.
    """
    diff = dst[:, None, :] - src[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    cos_chi = np.abs(diff[..., 2]) / dist
    return (area * cos_chi / dist
            * (1.0 / (TWO_PI * dist) - 1j / wavelength)
            * np.exp(1j * TWO_PI * dist / wavelength))


@dataclass(frozen=True)
class CouplingSet:
    inter_layer: tuple  # W_2 ... W_L, each (M, M) complex
    feed: np.ndarray    # w_1, (M,) complex

    @property
    def num_layers(self):
        return len(self.inter_layer) + 1

    @property
    def num_atoms(self):
        return self.feed.shape[0]


def build_coupling(geometry: SimGeometry) -> CouplingSet:
    lam, area = geometry.wavelength, geometry.atom_area
    feed = rayleigh_sommerfeld(geometry.feed_position()[None, :],
                               geometry.atom_positions(1), area, lam)[:, 0]
    inter = []
    if geometry.num_layers >= 2:
        # equal spacing: every W_l is the same matrix
        w = rayleigh_sommerfeld(geometry.atom_positions(1), geometry.atom_positions(2),
                                area, lam)
        w.setflags(write=False)
        inter = [w] * (geometry.num_layers - 1)
    feed.setflags(write=False)
    return CouplingSet(inter_layer=tuple(inter), feed=feed)


def wrap_phase(theta):
    """Map angles into [0, 2 pi)."""
    out = np.mod(theta, TWO_PI)
    # mod can round up to exactly 2 pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


@dataclass(frozen=True)
class PhaseProfile:
    angles: np.ndarray  # (L, M) real

    def __post_init__(self):
        a = np.array(self.angles, dtype=float)
        if a.ndim != 2:
            raise ConfigurationError("phase angles must be an L x M matrix")
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("phase angles must be finite")
        a = wrap_phase(a)
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @classmethod
    def zeros(cls, num_layers, num_atoms):
        return cls(np.zeros((num_layers, num_atoms)))

    @classmethod
    def random(cls, num_layers, num_atoms, rng):
        return cls(rng.uniform(0.0, TWO_PI, size=(num_layers, num_atoms)))

    @property
    def shape(self):
        return self.angles.shape

    def phasors(self):
        return np.exp(1j * self.angles)


@dataclass
class SimField:
    g: np.ndarray
    per_layer_cache: list = field(default_factory=list)  # u_1 ... u_L


def _check_shapes(phases, coupling):
    if phases.shape != (coupling.num_layers, coupling.num_atoms):
        raise ConfigurationError(
            f"phase profile {phases.shape} does not match coupling "
            f"({coupling.num_layers}, {coupling.num_atoms})")


def forward(phases: PhaseProfile, coupling: CouplingSet) -> SimField:
    _check_shapes(phases, coupling)
    t = phases.phasors()
    u = coupling.feed
    prefixes = [u]
    x = t[0] * u
    for l, w in enumerate(coupling.inter_layer, start=1):
        u = w @ x
        prefixes.append(u)
        x = t[l] * u
    return SimField(g=x, per_layer_cache=prefixes)


def _suffixes(phases, coupling):
    """D_1 ... D_L with D_L = I and D_l = D_{l+1} Theta_{l+1} W_{l+1}."""
    t = phases.phasors()
    n_layers, m = phases.shape
    d = [None] * n_layers
    d[-1] = np.eye(m, dtype=complex)
    for l in range(n_layers - 2, -1, -1):
        # D_l = D_{l+1} diag(t_{l+1}) W_{l+1}; inter_layer[l] is W_{l+2} in 1-based terms
        d[l] = (d[l + 1] * t[l + 1][None, :]) @ coupling.inter_layer[l]
    return d


def partial_fields(phases: PhaseProfile, coupling: CouplingSet, layer: int):
    """(u_l, D_l) for 1-based ``layer`` such that g = D_l Theta_l u_l."""
    _check_shapes(phases, coupling)
    if not 1 <= layer <= phases.shape[0]:
        raise IndexError(f"layer {layer} out of range 1..{phases.shape[0]}")
    field_ = forward(phases, coupling)
    return field_.per_layer_cache[layer - 1], _suffixes(phases, coupling)[layer - 1]


def all_partial_fields(phases: PhaseProfile, coupling: CouplingSet):
    """Stacked prefixes U (L, M) and suffixes D (L, M, M), plus g."""
    field_ = forward(phases, coupling)
    return np.array(field_.per_layer_cache), np.array(_suffixes(phases, coupling)), field_.g


def field_derivative(phases: PhaseProfile, coupling: CouplingSet, layer: int, atom: int):
    """dg/d theta_{layer, atom} = j e^{j theta} u_{layer, atom} d_{layer, atom}.

    ``layer`` is 1-based, ``atom`` is 0-based (a column index).
    """
    u, d = partial_fields(phases, coupling, layer)
    if not 0 <= atom < phases.shape[1]:
        raise IndexError(f"atom {atom} out of range 0..{phases.shape[1] - 1}")
    theta = phases.angles[layer - 1, atom]
    return 1j * np.exp(1j * theta) * u[atom] * d[:, atom]
