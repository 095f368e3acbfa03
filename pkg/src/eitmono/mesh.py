"""
Triangulations of the unit disk and a pixel index over them.

The disk mesh starts from a hexagon split into six triangles around the
origin and is refined by midpoint subdivision. Midpoints of boundary edges
are pushed out to the unit circle, so every boundary vertex lies on the
circle and the vertex set of one level is contained in the next.

Pixel cells on ``[-1, 1]^2`` are the spatial index used to describe test
regions (balls, half-spaces, channels) and ground-truth inclusions as sets
of cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from eitmono.errors import ParameterError

MAX_LEVEL = 8


def _readonly(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation of the unit disk.

    Attributes
    ----------
    vertices : (V, 2) array
    triangles : (T, 3) int array, counterclockwise
    boundary_vertices : (K,) int array, ordered counterclockwise by angle
    boundary_edges : (K, 2) int array, ``boundary_edges[k] = (b[k], b[k+1])``
    boundary_angle : (K,) angles of ``boundary_vertices`` in ``[0, 2*pi)``
    area : (T,) triangle areas
    grad : (T, 3, 2) constant gradients of the three barycentric shape functions
    level : refinement level the mesh was built with
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray
    boundary_edges: np.ndarray
    boundary_angle: np.ndarray
    area: np.ndarray
    grad: np.ndarray
    level: int = -1
    centroids: np.ndarray = field(init=False, repr=False)
    boundary_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        centroids = self.vertices[self.triangles].mean(axis=1)
        # lumped (trapezoidal) boundary mass: half of each adjacent edge length
        e = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        lengths = np.hypot(e[:, 0], e[:, 1])
        weights = 0.5 * (lengths + np.roll(lengths, 1))
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "boundary_weights", weights)
        _readonly(
            self.vertices, self.triangles, self.boundary_vertices, self.boundary_edges,
            self.boundary_angle, self.area, self.grad, centroids, weights,
        )

    @classmethod
    def from_arrays(cls, vertices: np.ndarray, triangles: np.ndarray, level: int = -1) -> "Mesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        p = vertices[triangles]
        e0 = p[:, 2] - p[:, 1]
        e1 = p[:, 0] - p[:, 2]
        e2 = p[:, 1] - p[:, 0]
        area = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
        if np.any(area <= 0):
            raise ParameterError("triangles must be counterclockwise with positive area")
        # grad(lambda_i) = rot90(opposite edge) / (2 area), rot90(x, y) = (-y, x)
        grad = np.stack(
            [np.stack([-e[:, 1], e[:, 0]], axis=1) for e in (e0, e1, e2)], axis=1
        ) / (2.0 * area)[:, None, None]
        bverts = _boundary_cycle(triangles)
        ang = np.mod(np.arctan2(vertices[bverts, 1], vertices[bverts, 0]), 2 * np.pi)
        start = int(np.argmin(ang))
        bverts = np.roll(bverts, -start)
        ang = np.roll(ang, -start)
        bedges = np.stack([bverts, np.roll(bverts, -1)], axis=1)
        return cls(vertices, triangles, bverts, bedges, ang, area, grad, level)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) array."""
        t = self.triangles
        e = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0)

    @property
    def h(self) -> float:
        """Longest edge length."""
        e = self.edges()
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    def export(self, path: str | Path) -> None:
        """Write the plain-text mesh format (header, vertices, triangles, boundary edges)."""
        lines = [
            f"vertices {self.n_vertices} triangles {self.n_triangles} "
            f"boundary {len(self.boundary_edges)}"
        ]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles]
        lines += [f"{i} {j}" for i, j in self.boundary_edges]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Mesh":
        rows = Path(path).read_text().split("\n")
        head = rows[0].split()
        nv, nt = int(head[1]), int(head[3])
        v = np.array([[float(s) for s in r.split()] for r in rows[1 : 1 + nv]])
        t = np.array([[int(s) for s in r.split()] for r in rows[1 + nv : 1 + nv + nt]])
        return cls.from_arrays(v, t)


def _boundary_cycle(triangles: np.ndarray) -> np.ndarray:
    """Boundary vertices in traversal order of the (oriented) boundary edges."""
    directed = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bd = directed[counts[inv.ravel()] == 1]
    succ = dict(zip(bd[:, 0].tolist(), bd[:, 1].tolist()))
    if len(succ) != len(bd):
        raise ParameterError("boundary is not a simple closed curve")
    start = int(bd[0, 0])
    cycle = [start]
    nxt = succ[start]
    while nxt != start:
        cycle.append(nxt)
        nxt = succ[nxt]
        if len(cycle) > len(bd):
            raise ParameterError("boundary is not a simple closed curve")
    if len(cycle) != len(bd):
        raise ParameterError("boundary has more than one component")
    return np.array(cycle, dtype=np.int64)


def _hexagon() -> tuple[np.ndarray, np.ndarray]:
    ang = np.arange(6) * np.pi / 3
    v = np.vstack([[0.0, 0.0], np.column_stack([np.cos(ang), np.sin(ang)])])
    t = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)])
    return v, t


def _subdivide(v: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, inv, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    on_bd = counts == 1
    mid[on_bd] /= np.hypot(mid[on_bd, 0], mid[on_bd, 1])[:, None]
    m = inv.reshape(3, -1).T + len(v)
    a, b, c = t.T
    m01, m12, m20 = m.T
    children = np.vstack([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    return np.vstack([v, mid]), children


def build_disk_mesh(refinement_level: int) -> Mesh:
    """Mesh of the unit disk with ``6 * 4**level`` triangles.

    Deterministic: the same level always yields bit-identical arrays.
    """
    if not isinstance(refinement_level, (int, np.integer)) or not 0 <= refinement_level <= MAX_LEVEL:
        raise ParameterError(f"refinement_level must be an integer in [0, {MAX_LEVEL}], got {refinement_level!r}")
    v, t = _hexagon()
    for _ in range(int(refinement_level)):
        v, t = _subdivide(v, t)
    return Mesh.from_arrays(v, t, level=int(refinement_level))


def ball_to_region(mesh: Mesh, center: Sequence[float], radius: float) -> np.ndarray:
    """Indices of triangles whose centroid lies in the open ball."""
    c = np.asarray(center, dtype=float)
    d = mesh.centroids - c
    return np.flatnonzero(d[:, 0] ** 2 + d[:, 1] ** 2 < radius * radius)


class PixelGrid:
    """Square cells tiling ``[-1, 1]^2``; cell id ``iy * n + ix``.

    A cell is interior iff its center lies strictly inside the unit disk.
    Every triangle is owned by exactly one interior cell: the cell containing
    its centroid, or the nearest interior cell when the centroid falls into a
    clipped corner cell whose center lies outside the disk.
    """

    def __init__(self, mesh: Mesh, resolution: int) -> None:
        if resolution < 2:
            raise ParameterError("resolution must be at least 2")
        n = int(resolution)
        self.mesh = mesh
        self.n = n
        self.cell_size = 2.0 / n
        c = -1.0 + self.cell_size * (np.arange(n) + 0.5)
        xx, yy = np.meshgrid(c, c)  # row index = iy
        self.centers = np.column_stack([xx.ravel(), yy.ravel()])
        self.interior = np.hypot(self.centers[:, 0], self.centers[:, 1]) < 1.0

        cen = mesh.centroids
        ix = np.clip(np.floor((cen[:, 0] + 1.0) / self.cell_size).astype(int), 0, n - 1)
        iy = np.clip(np.floor((cen[:, 1] + 1.0) / self.cell_size).astype(int), 0, n - 1)
        owner = iy * n + ix
        stray = np.flatnonzero(~self.interior[owner])
        if len(stray):
            inner = np.flatnonzero(self.interior)
            d = cen[stray, None, :] - self.centers[None, inner, :]
            owner[stray] = inner[np.argmin((d ** 2).sum(axis=2), axis=1)]
        self.cell_of_triangle = owner
        order = np.argsort(owner, kind="stable")
        bounds = np.searchsorted(owner[order], np.arange(n * n + 1))
        self._cell_triangles = [order[bounds[k] : bounds[k + 1]] for k in range(n * n)]
        _readonly(self.centers, self.interior, self.cell_of_triangle)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    def cell_triangles(self, cell: int) -> np.ndarray:
        if not 0 <= cell < self.n_cells:
            raise ParameterError(f"cell id {cell} out of range")
        return self._cell_triangles[cell]

    def circumradius(self) -> float:
        return self.cell_size * np.sqrt(0.5)

    def boundary_layer(self) -> np.ndarray:
        """Interior cells 4-adjacent to a non-interior cell (or the grid edge)."""
        inside = np.pad(self.interior.reshape(self.shape), 1, constant_values=False)
        outside_nb = (
            ~inside[:-2, 1:-1] | ~inside[2:, 1:-1] | ~inside[1:-1, :-2] | ~inside[1:-1, 2:]
        )
        return (self.interior.reshape(self.shape) & outside_nb).ravel()

    def cell_mask_to_triangles(self, cells: np.ndarray) -> np.ndarray:
        """Boolean per-triangle mask for a boolean per-cell mask."""
        return np.asarray(cells, dtype=bool)[self.cell_of_triangle]


def pixel_region(grid: PixelGrid, cell_ids: Iterable[int]) -> np.ndarray:
    """Sorted, deduplicated union of the triangles owned by ``cell_ids``."""
    ids = np.unique(np.asarray(list(cell_ids), dtype=np.int64))
    if ids.size == 0:
        return np.empty(0, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= grid.n_cells:
        raise ParameterError("invalid cell id")
    return np.sort(np.concatenate([grid.cell_triangles(int(k)) for k in ids]))
