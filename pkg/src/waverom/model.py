"""Velocity fields, grids, and the search-space parametrization.

Conventions
-----------
- The 2D domain is [x0, x0+(nx+1)hx] x [z0, z0+(nz+1)hz] with z measured
  as depth (increasing downward).  The nx*nz stored nodes are strictly
  interior: node (i, j) sits at (x0+(i+1)hx, z0+(j+1)hz), so homogeneous
  Dirichlet walls live one spacing outside the node block.
- Velocity arrays have shape (nx, nz), C order, which makes z the
  fastest-varying index when flattened (the on-disk layout).
- Units are meters, seconds, m/s throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainTooSmall, NonPositiveVelocity

BC_KINDS = ("dirichlet", "neumann")

#: Default lower clamp for evaluated velocities (m/s).  Keeps the wave
#: operator well-posed during aggressive line-search trials.
DEFAULT_C_MIN = 300.0


def _normalize_bc(bc) -> tuple[str, str, str, str]:
    """Expand a bc spec into per-side tags (x_lo, x_hi, z_lo, z_hi)."""
    if isinstance(bc, str):
        bc = (bc,) * 4
    bc = tuple(str(side).lower() for side in bc)
    if len(bc) != 4 or any(side not in BC_KINDS for side in bc):
        raise ValueError(f"bc must be 4 sides from {BC_KINDS}, got {bc!r}")
    return bc


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid of interior nodes."""

    nx: int
    nz: int
    hx: float
    hz: float
    x0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        if self.nx < 3 or self.nz < 3:
            raise ValueError("grid needs nx, nz >= 3")
        if self.hx <= 0 or self.hz <= 0:
            raise ValueError("grid spacings must be positive")

    @property
    def n_dof(self) -> int:
        return self.nx * self.nz

    @property
    def quad_weight(self) -> float:
        """Quadrature weight of one node in all inner products."""
        return self.hx * self.hz

    @property
    def extent(self) -> tuple[float, float]:
        """Domain size (Lx, Lz) including the boundary offset."""
        return (self.nx + 1) * self.hx, (self.nz + 1) * self.hz

    @property
    def x_max(self) -> float:
        return self.x0 + self.extent[0]

    @property
    def z_max(self) -> float:
        return self.z0 + self.extent[1]

    def xs(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(1, self.nx + 1)

    def zs(self) -> np.ndarray:
        return self.z0 + self.hz * np.arange(1, self.nz + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as (nx, nz) arrays."""
        return np.meshgrid(self.xs(), self.zs(), indexing="ij")

    def nearest_node(self, x: float, z: float) -> tuple[int, int]:
        i = int(round((x - self.x0) / self.hx)) - 1
        j = int(round((z - self.z0) / self.hz)) - 1
        if not (0 <= i < self.nx and 0 <= j < self.nz):
            raise DomainTooSmall(f"point ({x}, {z}) outside node block")
        return i, j

    def contains(self, x: float, z: float) -> bool:
        return (self.x0 <= x <= self.x_max) and (self.z0 <= z <= self.z_max)


@dataclass(frozen=True)
class VelocityModel:
    """Velocity field c(x) on a grid plus boundary-condition choice."""

    grid: Grid2D
    c: np.ndarray
    bc: tuple[str, str, str, str] = ("dirichlet",) * 4

    def __post_init__(self):
        object.__setattr__(self, "bc", _normalize_bc(self.bc))
        c = np.asarray(self.c, dtype=float)
        if c.shape != (self.grid.nx, self.grid.nz):
            raise ValueError(f"c has shape {c.shape}, expected {(self.grid.nx, self.grid.nz)}")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise NonPositiveVelocity("velocity values must be positive and finite")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    def at(self, x: float, z: float) -> float:
        """Velocity at the node nearest to (x, z)."""
        i, j = self.grid.nearest_node(x, z)
        return float(self.c[i, j])

    def rel_l2_error(self, other: "VelocityModel") -> float:
        """Relative L2 distance of self from `other` (the reference)."""
        if self.grid != other.grid:
            raise ValueError("velocity models on different grids")
        diff = self.c - other.c
        return float(np.linalg.norm(diff) / np.linalg.norm(other.c))


@dataclass(frozen=True)
class GaussianBump:
    """One search-space basis function: amp * exp(-|x-center|^2 / (2 w^2))."""

    center: tuple[float, float]
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bump width must be positive")

    def evaluate(self, grid: Grid2D) -> np.ndarray:
        xx, zz = grid.mesh()
        r2 = (xx - self.center[0]) ** 2 + (zz - self.center[1]) ** 2
        return self.amplitude * np.exp(-r2 / (2.0 * self.width**2))


@dataclass(frozen=True)
class Parametrization:
    """Search space v(x; eta) = c_o(x) + sum_l eta_l phi_l(x)."""

    background: VelocityModel
    basis: tuple[GaussianBump, ...]
    eta: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        if len(self.basis) < 1:
            raise ValueError("parametrization needs at least one basis function")
        g = self.background.grid
        for b in self.basis:
            if not g.contains(*b.center):
                raise ValueError(f"bump center {b.center} outside the domain")
        eta = self.eta
        eta = np.zeros(len(self.basis)) if eta is None else np.asarray(eta, dtype=float)
        if eta.shape != (len(self.basis),):
            raise ValueError(f"eta must have length {len(self.basis)}")
        eta = eta.copy()
        eta.flags.writeable = False
        object.__setattr__(self, "eta", eta)

    @property
    def n_params(self) -> int:
        return len(self.basis)

    def with_eta(self, eta) -> "Parametrization":
        return Parametrization(self.background, self.basis, np.asarray(eta, dtype=float))


def basis_matrix(p: Parametrization, g: Grid2D) -> np.ndarray:
    """Stack all basis functions into an (n_dof, N) matrix.

    Column l is phi_l evaluated on the grid, flattened in C order.  The
    inversion precomputes this once so trial velocities are a single
    matrix-vector product.
    """
    return np.column_stack([b.evaluate(g).ravel() for b in p.basis])


def evaluate_velocity(
    p: Parametrization,
    g: Grid2D = None,
    eta=None,
    c_min: float = DEFAULT_C_MIN,
    clamp: bool = True,
    _basis: np.ndarray = None,
) -> VelocityModel:
    """Evaluate v(x; eta) = c_o(x) + sum_l eta_l phi_l(x) on the grid.

    Node values are clamped below at `c_min` unless `clamp` is False, in
    which case a non-positive node raises NonPositiveVelocity.  `_basis`
    accepts a precomputed `basis_matrix` for repeated evaluations.
    """
    g = p.background.grid if g is None else g
    if g != p.background.grid:
        raise ValueError("evaluation grid must match the background grid")
    eta = p.eta if eta is None else np.asarray(eta, dtype=float)
    phi = basis_matrix(p, g) if _basis is None else _basis
    c = p.background.c.ravel() + phi @ eta
    if clamp:
        c = np.maximum(c, c_min)
    elif np.any(c <= 0):
        raise NonPositiveVelocity("trial velocity non-positive and clamping disabled")
    return VelocityModel(g, c.reshape(g.nx, g.nz), p.background.bc)


def make_constant_model(c0: float, g: Grid2D, bc="dirichlet") -> VelocityModel:
    return VelocityModel(g, np.full((g.nx, g.nz), float(c0)), bc)


def make_two_layer_model(
    depth_left: float,
    contrast: float,
    g: Grid2D,
    slope_drop: float = 400.0,
    c_top: float = 1500.0,
    bc="dirichlet",
) -> VelocityModel:
    """Two regions separated by a slanted interface.

    The interface depth grows linearly from `depth_left` at the left edge
    to `depth_left + slope_drop` at the right edge; velocity is `c_top`
    above and `contrast * c_top` below.
    """
    if not (0 < depth_left < g.extent[1]):
        raise ValueError("depth_left must lie inside the domain depth")
    if contrast <= 0:
        raise ValueError("contrast must be positive")
    xx, zz = g.mesh()
    iface = depth_left + slope_drop * (xx - g.x0) / g.extent[0]
    c = np.where(zz - g.z0 > iface, contrast * c_top, c_top)
    return VelocityModel(g, c, bc)


def make_camembert_model(
    g: Grid2D,
    center: tuple[float, float] = (1000.0, 1000.0),
    radius: float = 600.0,
    c_inside: float = 4000.0,
    c_outside: float = 3000.0,
    bc="dirichlet",
) -> VelocityModel:
    """Circular inclusion in a constant background (closed-disk convention)."""
    cx, cz = center
    if (
        cx - radius < g.x0
        or cx + radius > g.x_max
        or cz - radius < g.z0
        or cz + radius > g.z_max
    ):
        raise DomainTooSmall("inclusion disk does not fit inside the domain")
    xx, zz = g.mesh()
    inside = (xx - cx) ** 2 + (zz - cz) ** 2 <= radius**2
    c = np.where(inside, c_inside, c_outside)
    return VelocityModel(g, c, bc)


def make_gradient_model(
    c_top: float, c_bottom: float, g: Grid2D, bc="dirichlet"
) -> VelocityModel:
    """One-dimensional velocity gradient in depth."""
    zz = g.zs()
    prof = c_top + (c_bottom - c_top) * (zz - g.z0) / g.extent[1]
    return VelocityModel(g, np.tile(prof, (g.nx, 1)), bc)


def make_bump_lattice(
    background: VelocityModel,
    shape: tuple[int, int],
    width_factor: float = 1.5,
    amplitude: float = 1.0,
) -> Parametrization:
    """Gaussian bumps centered on a uniform p x q lattice over the domain.

    Bump width defaults to `width_factor` times the geometric-mean lattice
    spacing, enough overlap to represent smooth fields without making the
    basis ill-conditioned.
    """
    p, q = shape
    if p < 1 or q < 1:
        raise ValueError("lattice shape must be at least 1x1")
    g = background.grid
    lx, lz = g.extent
    dx, dz = lx / p, lz / q
    width = width_factor * math.sqrt(dx * dz)
    centers_x = g.x0 + dx * (np.arange(p) + 0.5)
    centers_z = g.z0 + dz * (np.arange(q) + 0.5)
    basis = [
        GaussianBump((float(cx), float(cz)), width, amplitude)
        for cx in centers_x
        for cz in centers_z
    ]
    return Parametrization(background, tuple(basis))
