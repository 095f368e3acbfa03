"""
Pixel-set analogues of support, inner support and outer support.

Sets are boolean labels on the interior cells of a :class:`PixelGrid`.
Complement components use 4-adjacency; a component is connected to the
boundary when it contains a cell of the boundary layer (interior cells
4-adjacent to a non-interior cell).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from eitmono.errors import ParameterError
from eitmono.mesh import PixelGrid, pixel_region

FOUR = ndimage.generate_binary_structure(2, 1)
EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """In/out label per cell; non-interior cells are always out."""

    grid: PixelGrid
    labels: np.ndarray

    def __post_init__(self) -> None:
        lab = np.array(self.labels, dtype=bool).ravel()
        if lab.shape != (self.grid.n_cells,):
            raise ParameterError("labels must have one entry per grid cell")
        lab &= self.grid.interior
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def empty(cls, grid: PixelGrid) -> "IndicatorField":
        return cls(grid, np.zeros(grid.n_cells, bool))

    @classmethod
    def full(cls, grid: PixelGrid) -> "IndicatorField":
        return cls(grid, grid.interior)

    @classmethod
    def from_cells(cls, grid: PixelGrid, cells: Sequence[int]) -> "IndicatorField":
        lab = np.zeros(grid.n_cells, bool)
        lab[np.asarray(cells, dtype=np.int64)] = True
        return cls(grid, lab)

    @property
    def count(self) -> int:
        return int(self.labels.sum())

    @property
    def cells(self) -> np.ndarray:
        return np.flatnonzero(self.labels)

    def image(self) -> np.ndarray:
        """Labels as an (n, n) array indexed ``[iy, ix]``."""
        return self.labels.reshape(self.grid.shape)

    def triangles(self) -> np.ndarray:
        return pixel_region(self.grid, self.cells)

    def _check(self, other: "IndicatorField") -> None:
        if other.grid is not self.grid and (
            other.grid.n != self.grid.n or other.grid.mesh is not self.grid.mesh
        ):
            raise ParameterError("indicator fields live on different grids")

    def __and__(self, other: "IndicatorField") -> "IndicatorField":
        self._check(other)
        return IndicatorField(self.grid, self.labels & other.labels)

    def __or__(self, other: "IndicatorField") -> "IndicatorField":
        self._check(other)
        return IndicatorField(self.grid, self.labels | other.labels)

    def __sub__(self, other: "IndicatorField") -> "IndicatorField":
        self._check(other)
        return IndicatorField(self.grid, self.labels & ~other.labels)

    def complement(self) -> "IndicatorField":
        return IndicatorField(self.grid, ~self.labels)

    def issubset(self, other: "IndicatorField") -> bool:
        self._check(other)
        return bool(np.all(~self.labels | other.labels))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndicatorField):
            return NotImplemented
        return self.grid.n == other.grid.n and bool(np.array_equal(self.labels, other.labels))

    __hash__ = None  # type: ignore[assignment]

    def to_pgm(self, path: str | Path) -> None:
        """ASCII PGM, one pixel per cell, top row = largest y."""
        img = np.flipud(self.image()).astype(int) * 255
        lines = ["P2", f"{self.grid.n} {self.grid.n}", "255"]
        lines += [" ".join(str(v) for v in row) for row in img]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_pgm(cls, grid: PixelGrid, path: str | Path) -> "IndicatorField":
        tokens = Path(path).read_text().split()
        if tokens[0] != "P2":
            raise ParameterError("not an ASCII PGM file")
        w, h = int(tokens[1]), int(tokens[2])
        if (w, h) != grid.shape:
            raise ParameterError("PGM size does not match grid")
        img = np.array(tokens[4 : 4 + w * h], dtype=int).reshape(h, w)
        return cls(grid, np.flipud(img) > 0)

    def to_csv(self, path: str | Path) -> None:
        n = self.grid.n
        rows = ["cell_x,cell_y,label"]
        rows += [f"{k % n},{k // n},{int(self.labels[k])}" for k in self.grid.interior_ids]
        Path(path).write_text("\n".join(rows) + "\n")


@dataclass(frozen=True, eq=False)
class TestSet:
    """Candidate set C for the indefinite tests; ``valid`` iff outer_closure(C) == C."""

    field: IndicatorField
    valid: bool
    name: str = ""

    __test__ = False  # not a pytest class

    @classmethod
    def from_field(cls, field_: IndicatorField, name: str = "") -> "TestSet":
        return cls(field_, outer_closure(field_) == field_, name)

    @property
    def grid(self) -> PixelGrid:
        return self.field.grid

    def triangles(self) -> np.ndarray:
        return self.field.triangles()


def boundary_connected_complement(field_: IndicatorField) -> np.ndarray:
    """Cells of the complement (within the interior) that reach the boundary layer."""
    grid = field_.grid
    comp = (grid.interior & ~field_.labels).reshape(grid.shape)
    lab, n = ndimage.label(comp, structure=FOUR)
    if n == 0:
        return np.zeros(grid.n_cells, bool)
    touching = np.unique(lab.ravel()[grid.boundary_layer() & comp.ravel()])
    touching = touching[touching > 0]
    return np.isin(lab.ravel(), touching)


def outer_closure(field_: IndicatorField) -> IndicatorField:
    """Fill every hole of the set that cannot be reached from the boundary layer."""
    return IndicatorField(field_.grid, field_.grid.interior & ~boundary_connected_complement(field_))


def _cell_stats(kappa: np.ndarray, grid: PixelGrid, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (grid.mesh.n_triangles,):
        raise ParameterError("kappa must have one value per triangle")
    big = np.abs(kappa) >= threshold
    owner = grid.cell_of_triangle
    n_big = np.bincount(owner, weights=big, minlength=grid.n_cells)
    n_all = np.bincount(owner, minlength=grid.n_cells)
    return n_big, n_all


def inner_support(kappa: np.ndarray, grid: PixelGrid, threshold: float = 1e-6) -> IndicatorField:
    """Cells all of whose (at least one) triangles have ``|kappa| >= threshold``."""
    if threshold <= 0:
        raise ParameterError("threshold must be positive")
    n_big, n_all = _cell_stats(kappa, grid, threshold)
    return IndicatorField(grid, (n_all > 0) & (n_big == n_all))


def support(kappa: np.ndarray, grid: PixelGrid, threshold: float = 1e-6) -> IndicatorField:
    """Cells containing at least one triangle with ``|kappa| >= threshold``."""
    if threshold <= 0:
        raise ParameterError("threshold must be positive")
    n_big, _ = _cell_stats(kappa, grid, threshold)
    return IndicatorField(grid, n_big > 0)


def outer_support(kappa: np.ndarray, grid: PixelGrid, threshold: float = 1e-6) -> IndicatorField:
    return outer_closure(support(kappa, grid, threshold))


def dilate(field_: IndicatorField, cells: int = 1) -> IndicatorField:
    """Grow by ``cells`` layers in the 8-neighbourhood, clipped to the interior."""
    if cells <= 0:
        return field_
    img = ndimage.binary_dilation(field_.image(), structure=EIGHT, iterations=int(cells))
    return IndicatorField(field_.grid, img.ravel())


def make_halfspace_set(direction: Sequence[float], offset: float, grid: PixelGrid) -> TestSet:
    """Interior cells with ``center . direction <= offset``."""
    d = np.asarray(direction, dtype=float)
    if d.shape != (2,) or abs(np.hypot(*d) - 1.0) > 1e-9:
        raise ParameterError("direction must be a unit 2-vector")
    lab = grid.centers @ d <= offset
    return TestSet.from_field(
        IndicatorField(grid, lab), name=f"half({d[0]:.3f},{d[1]:.3f};{offset:.3f})"
    )


def make_channel_complement(center: Sequence[float], radius: float, grid: PixelGrid) -> TestSet:
    """All cells except a ball and a straight channel of the ball's width to the boundary.

    The channel runs from the center toward the nearest boundary point
    (``+x`` when the center is the origin).
    """
    c = np.asarray(center, dtype=float)
    r0 = float(np.hypot(*c))
    if c.shape != (2,) or r0 >= 1.0:
        raise ParameterError("channel center must lie inside the unit disk")
    if not radius > 0:
        raise ParameterError("channel radius must be positive")
    name = f"channel({c[0]:.3f},{c[1]:.3f};{radius:.3f})"
    if radius >= 1.0:
        return TestSet.from_field(IndicatorField.empty(grid), name=name)
    d = c / r0 if r0 > 1e-12 else np.array([1.0, 0.0])
    # never thinner than half a cell diagonal: every cell the axis crosses is
    # then removed, which keeps the removed set 4-connected
    w = max(float(radius), grid.circumradius() * (1 + 1e-9))
    rel = grid.centers - c
    along = rel @ d
    across = np.abs(rel @ np.array([-d[1], d[0]]))
    removed = (np.hypot(rel[:, 0], rel[:, 1]) <= w) | ((along >= 0) & (across <= w))
    out = TestSet.from_field(IndicatorField(grid, ~removed), name=name)
    if not out.valid:
        raise ParameterError(f"channel construction at {tuple(c)} left a sealed hole")
    return out
