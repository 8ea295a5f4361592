"""Uniform rectangular grids and sampled complex vector fields.

Grids are 1D or 2D, either periodic (point n identified with point 0) or
open (endpoints included).  Open grids carry a boundary band that residual
norms exclude, since centered stencils degrade there.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["Grid", "GridFunction"]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on a box.

    ``cells[j]`` is the number of spacings along axis j, so the spacing is
    ``(hi[j] - lo[j]) / cells[j]``.  Periodic grids store ``cells[j]``
    points (the right endpoint is identified with the left one); open
    grids store ``cells[j] + 1`` points including both endpoints.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    cells: tuple[int, ...]
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(b) for b in self.hi))
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        if not (1 <= self.dim <= 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if len(self.hi) != self.dim or len(self.cells) != self.dim:
            raise ValueError("lo/hi/cells length mismatch")
        for a, b, n in zip(self.lo, self.hi, self.cells):
            if n < 8:
                raise ValueError(f"need at least 8 cells per axis, got {n}")
            if b <= a:
                raise ValueError(f"empty extent [{a}, {b}]")

    # -- basic geometry ------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for a, b, n in zip(self.lo, self.hi, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        if self.periodic:
            return self.cells
        return tuple(n + 1 for n in self.cells)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, j: int) -> np.ndarray:
        a = self.lo[j]
        h = self.spacing[j]
        return a + h * np.arange(self.shape[j])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(j) for j in range(self.dim)]

    def mesh(self) -> list[np.ndarray]:
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def point(self, index: tuple[int, ...] | int) -> tuple[float, ...]:
        if isinstance(index, (int, np.integer)):
            index = (int(index),)
        return tuple(self.axis(j)[i] for j, i in enumerate(index))

    # -- interior handling ---------------------------------------------

    def interior_mask(self, band: int = 0) -> np.ndarray:
        """Boolean mask of points at least ``band`` points from an open edge."""
        mask = np.ones(self.shape, dtype=bool)
        if self.periodic or band <= 0:
            return mask
        for j in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[j] = slice(0, band)
            mask[tuple(sl)] = False
            sl[j] = slice(self.shape[j] - band, None)
            mask[tuple(sl)] = False
        return mask

    # -- constructors ----------------------------------------------------

    @staticmethod
    def line(a: float, b: float, cells: int, periodic: bool = False) -> "Grid":
        return Grid((a,), (b,), (cells,), periodic)

    @staticmethod
    def box(lo: Sequence[float], hi: Sequence[float], cells: Sequence[int],
            periodic: bool = False) -> "Grid":
        return Grid(tuple(lo), tuple(hi), tuple(cells), periodic)

    @staticmethod
    def torus(cells: int | Sequence[int], length: float = 2.0 * np.pi,
              dim: int | None = None) -> "Grid":
        if isinstance(cells, (int, np.integer)):
            if dim is None:
                dim = 1
            cells = (int(cells),) * dim
        cells = tuple(cells)
        d = len(cells)
        return Grid((0.0,) * d, (length,) * d, cells, periodic=True)


@dataclass(frozen=True)
class GridFunction:
    """A sampled C^N-valued function: values[..., c] is channel c."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape[: self.grid.dim] != self.grid.shape:
            raise ValueError(
                f"value shape {v.shape} does not match grid shape {self.grid.shape}")
        if v.ndim == self.grid.dim:
            v = v[..., None]
        if v.ndim != self.grid.dim + 1:
            raise ValueError(f"expected (*grid, N) values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def scalar(self) -> np.ndarray:
        if self.channels != 1:
            raise ValueError("scalar() requires a single-channel function")
        return self.values[..., 0]

    # -- constructors ----------------------------------------------------

    @staticmethod
    def from_callable(grid: Grid, func: Callable, channels: int = 1) -> "GridFunction":
        out = np.asarray(func(*grid.mesh()), dtype=complex)
        if out.shape == grid.shape:
            out = out[..., None]
        elif out.shape[0] == channels and out.shape[1:] == grid.shape:
            out = np.moveaxis(out, 0, -1)
        return GridFunction(grid, out)

    @staticmethod
    def zeros(grid: Grid, channels: int = 1) -> "GridFunction":
        return GridFunction(grid, np.zeros(grid.shape + (channels,), dtype=complex))

    # -- norms over the usable interior ----------------------------------

    def norm_l2(self, band: int = 0) -> float:
        m = self.grid.interior_mask(band)
        return float(np.sqrt(np.sum(np.abs(self.values[m]) ** 2) * self.grid.cell_volume))

    def norm_max(self, band: int = 0) -> float:
        m = self.grid.interior_mask(band)
        return float(np.max(np.abs(self.values[m])))

    def inner(self, other: "GridFunction", band: int = 0) -> complex:
        """Discrete pairing <f, g> = sum conj(f)^T g * cell volume."""
        m = self.grid.interior_mask(band)
        return complex(np.sum(np.conj(self.values[m]) * other.values[m])
                       * self.grid.cell_volume)

    # -- arithmetic -------------------------------------------------------

    def _like(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self._like(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self._like(self.values - other.values)

    def __mul__(self, c) -> "GridFunction":
        return self._like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return self._like(-self.values)
