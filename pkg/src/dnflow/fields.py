"""Radial discretization of R^n and cell-averaged density fields.

The grid is a partition of [0, r_max] into shells with exact volumes
omega_i = sigma_{n-1} (r_{i+1/2}^n - r_{i-1/2}^n) / n.  Edges may be
geometrically stretched to concentrate cells near the origin while keeping
the far-field cell width roughly proportional to radius, which is what the
r^2-growing effective diffusivity of the rescaled flow wants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exponents import Exponents, ParameterError, unit_sphere_area


@dataclass(frozen=True)
class RadialGrid:
    """Shell partition of the ball of radius r_max in R^n.

    edges has length cells+1 with edges[0] = 0 and strictly increasing
    entries.  Cell centers are edge midpoints; shell volumes are exact.
    """

    n: int
    edges: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "edges", edges)
        if edges.ndim != 1 or edges.size < 2:
            raise ParameterError("edges must be a 1-d array with >= 2 entries")
        if edges[0] != 0.0 or np.any(np.diff(edges) <= 0.0):
            raise ParameterError("edges must start at 0 and increase strictly")

    @property
    def cells(self) -> int:
        return self.edges.size - 1

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])

    @cached_property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def h_min(self) -> float:
        return float(self.widths.min())

    @cached_property
    def volumes(self) -> np.ndarray:
        """omega_i = sigma_{n-1}(r_{i+1/2}^n - r_{i-1/2}^n)/n, exact."""
        sig = unit_sphere_area(self.n)
        rn = self.edges ** self.n
        return sig * np.diff(rn) / self.n

    @cached_property
    def areas(self) -> np.ndarray:
        """Shell areas sigma_{n-1} r^{n-1} at every edge (0 at the origin)."""
        return unit_sphere_area(self.n) * self.edges ** (self.n - 1)

    # interior-edge quantities used by fluxes and gradient quadratures
    @cached_property
    def r_edge(self) -> np.ndarray:
        return self.edges[1:-1]

    @cached_property
    def dr_edge(self) -> np.ndarray:
        """Center-to-center gaps across each interior edge."""
        return np.diff(self.centers)

    @cached_property
    def area_edge(self) -> np.ndarray:
        return self.areas[1:-1]

    @cached_property
    def evol_edge(self) -> np.ndarray:
        """Edge quadrature weight A_e * dr_e for gradient-type integrals."""
        return self.area_edge * self.dr_edge

    def refine(self, factor: int = 2) -> "RadialGrid":
        """Grid with each cell split into `factor` equal parts."""
        pieces = [
            np.linspace(self.edges[i], self.edges[i + 1], factor + 1)[:-1]
            for i in range(self.cells)
        ]
        edges = np.concatenate(pieces + [self.edges[-1:]])
        return RadialGrid(n=self.n, edges=edges)


def build_grid(n: int, r_max: float, cells: int, stretch: float = 1.0) -> RadialGrid:
    """Geometrically stretched grid: cell widths h_i = h_0 * stretch^i.

    stretch = 1 gives uniform spacing.  Requires cells >= 1 (>= 16 for any
    serious run), r_max > 0, stretch >= 1.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    if not r_max > 0.0:
        raise ParameterError(f"r_max must be positive, got {r_max}")
    if int(cells) != cells or cells < 1:
        raise ParameterError(f"cells must be a positive integer, got {cells}")
    if not stretch >= 1.0:
        raise ParameterError(f"stretch must be >= 1, got {stretch}")
    cells = int(cells)
    if stretch == 1.0:
        edges = np.linspace(0.0, r_max, cells + 1)
    else:
        ratios = np.cumprod(np.full(cells, stretch)) / stretch  # 1, g, g^2, ...
        widths = ratios / ratios.sum() * r_max
        edges = np.concatenate([[0.0], np.cumsum(widths)])
        edges[-1] = r_max
    return RadialGrid(n=int(n), edges=edges)


@dataclass
class DensityField:
    """Nonnegative cell-averaged density on a radial grid."""

    grid: RadialGrid
    exponents: Exponents
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.cells,):
            raise ParameterError(
                f"values shape {self.values.shape} does not match "
                f"{self.grid.cells} cells"
            )

    @property
    def mass(self) -> float:
        return float(self.grid.volumes @ self.values)

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.exponents, self.values.copy())
