"""Periodic uniform 1-D grid and the three-point stencils used by the solvers.

Each stencil is stored as one coefficient per diagonal with periodic
wrap-around; applying it costs O(Nx * m) and never builds the
Nx x Nx matrix. ``dense()`` exists for tests and small oracles.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError


@dataclass(frozen=True)
class SpatialMesh:
    n_cells: int
    x_left: float = 0.0
    x_right: float = 1.0

    def __post_init__(self):
        if self.n_cells < 3:
            raise ValueError("periodic stencils need at least 3 cells")
        if not self.x_right > self.x_left:
            raise ValueError("x_right must exceed x_left")

    @property
    def length(self):
        return self.x_right - self.x_left

    @property
    def dx(self):
        return self.length / self.n_cells

    @property
    def centers(self):
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True)
class PeriodicStencil:
    """Circulant operator (D z)_j = lower*z_{j-1} + diag*z_j + upper*z_{j+1}."""

    n: int
    lower: float
    diag: float
    upper: float

    def apply(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[0] != self.n:
            raise DimensionError(f"field has {z.shape[0]} rows, stencil expects {self.n}")
        out = self.diag * z if self.diag else np.zeros_like(z)
        if self.upper:
            out = out + self.upper * np.roll(z, -1, axis=0)
        if self.lower:
            out = out + self.lower * np.roll(z, 1, axis=0)
        return out

    __matmul__ = apply

    @property
    def T(self):
        return PeriodicStencil(self.n, self.upper, self.diag, self.lower)

    def dense(self):
        D = self.diag * np.eye(self.n)
        idx = np.arange(self.n)
        D[idx, (idx + 1) % self.n] += self.upper
        D[idx, (idx - 1) % self.n] += self.lower
        return D


@dataclass(frozen=True)
class StencilSet:
    """Dx (centered first derivative), Dxx (~ dx/2 d_xx) and Dplus (sqrt factor of -Dxx)."""

    mesh: SpatialMesh
    Dx: PeriodicStencil = field(init=False)
    Dxx: PeriodicStencil = field(init=False)
    Dplus: PeriodicStencil = field(init=False)

    def __post_init__(self):
        n, dx = self.mesh.n_cells, self.mesh.dx
        h = 1.0 / (2.0 * dx)
        p = 1.0 / np.sqrt(2.0 * dx)
        object.__setattr__(self, "Dx", PeriodicStencil(n, -h, 0.0, h))
        object.__setattr__(self, "Dxx", PeriodicStencil(n, h, -2.0 * h, h))
        object.__setattr__(self, "Dplus", PeriodicStencil(n, 0.0, -p, p))


def build_stencils(mesh):
    return StencilSet(mesh)


def apply_stencil(op, field):
    return op.apply(field)
