"""
Ground-truth conductivity scenarios and noisy measurements.

A phantom is described by a list of shapes, each with a conductivity value
(``contrast``) inside it; the background is 1. Shapes with contrast above 1
make up D+, those below 1 make up D-.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from eitmono.errors import ParameterError
from eitmono.forward import Conductivity, NtDMatrix
from eitmono.geometry import IndicatorField, dilate
from eitmono.mesh import Mesh, PixelGrid

CONTRAST_RANGE = (0.25, 4.0)
SHAPE_KINDS = ("disk", "rect", "lshape")
_SHAPE_KEYS = {
    "disk": {"kind", "center", "radius", "contrast"},
    "rect": {"kind", "min", "max", "contrast"},
    "lshape": {"kind", "min", "max", "cut_min", "cut_max", "contrast"},
}


def _pt(shape: Mapping[str, Any], key: str) -> np.ndarray:
    try:
        p = np.asarray(shape[key], dtype=float)
    except KeyError:
        raise ParameterError(f"{shape.get('kind')} shape needs '{key}'") from None
    if p.shape != (2,):
        raise ParameterError(f"'{key}' must be a 2-vector")
    return p


def _in_box(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.all((points >= lo) & (points <= hi), axis=1)


def shape_mask(shape: Mapping[str, Any], points: np.ndarray) -> np.ndarray:
    """Which of ``points`` lie in the shape. Also validates the shape."""
    kind = shape.get("kind")
    if kind not in SHAPE_KINDS:
        raise ParameterError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    extra = set(shape) - _SHAPE_KEYS[kind]
    if extra:
        raise ParameterError(f"unknown fields for {kind}: {sorted(extra)}")
    if kind == "disk":
        c = _pt(shape, "center")
        r = float(shape.get("radius", 0))
        if r <= 0 or np.hypot(*c) + r >= 1:
            raise ParameterError("disk must have positive radius and lie inside the unit disk")
        return np.hypot(*(points - c).T) < r
    lo, hi = _pt(shape, "min"), _pt(shape, "max")
    if np.any(hi <= lo):
        raise ParameterError("rectangle needs min < max")
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    if np.any(np.hypot(*corners.T) >= 1):
        raise ParameterError("rectangle must lie inside the unit disk")
    inside = _in_box(points, lo, hi)
    if kind == "lshape":
        clo, chi = _pt(shape, "cut_min"), _pt(shape, "cut_max")
        if np.any(chi <= clo):
            raise ParameterError("cut rectangle needs cut_min < cut_max")
        inside &= ~_in_box(points, clo, chi)
    return inside


@dataclass(frozen=True, eq=False)
class Phantom:
    conductivity: Conductivity
    d_plus: IndicatorField
    d_minus: IndicatorField
    name: str = ""
    contrasts: tuple[float, ...] = ()

    @property
    def truth(self) -> IndicatorField:
        return self.d_plus | self.d_minus

    @property
    def kappa(self) -> np.ndarray:
        """``sigma - 1`` per triangle."""
        return self.conductivity.values - 1.0


def load_phantom_spec(source) -> dict:
    """Accept a dict, a JSON string, or a path to a JSON file."""
    if isinstance(source, Mapping):
        return dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        path = Path(text)
        if not path.exists():
            raise ParameterError(f"phantom spec file not found: {path}")
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"phantom spec is not valid JSON: {exc}") from exc


def make_phantom(spec, grid: PixelGrid, mesh: Mesh | None = None,
                 cell_aligned: bool = True) -> Phantom:
    """Build the per-triangle conductivity and its cell-level ground truth.

    With ``cell_aligned`` a shape owns the grid cells whose centers it
    contains and every triangle of those cells gets its contrast; otherwise
    triangles are selected by centroid (finer geometry, but the cell truth is
    then only approximate). Later shapes overwrite earlier ones.
    """
    spec = load_phantom_spec(spec)
    extra = set(spec) - {"shapes", "name", "schema"}
    if extra:
        raise ParameterError(f"unknown phantom fields: {sorted(extra)}")
    mesh = grid.mesh if mesh is None else mesh
    if mesh is not grid.mesh:
        raise ParameterError("grid was built on a different mesh")
    shapes = spec.get("shapes", [])
    sigma = np.ones(mesh.n_triangles)
    cell_sigma = np.ones(grid.n_cells)
    contrasts = []
    for shape in shapes:
        c = float(shape.get("contrast", np.nan))
        if not CONTRAST_RANGE[0] <= c <= CONTRAST_RANGE[1] or c == 1.0:
            raise ParameterError(f"contrast must be in [1/4, 4] and differ from 1, got {c}")
        cells = shape_mask(shape, grid.centers) & grid.interior
        cell_sigma[cells] = c
        if cell_aligned:
            sigma[cells[grid.cell_of_triangle]] = c
        else:
            sigma[shape_mask(shape, mesh.centroids)] = c
        contrasts.append(c)
    d_plus = IndicatorField(grid, cell_sigma > 1)
    d_minus = IndicatorField(grid, cell_sigma < 1)
    if d_plus.count and d_minus.count and (dilate(d_plus, 1) & d_minus).count:
        raise ParameterError("shapes of opposite sign must be separated by at least one cell")
    return Phantom(Conductivity(sigma), d_plus, d_minus, spec.get("name", ""), tuple(contrasts))


def example_definite_spec() -> dict:
    """Single disk of radius 0.3 at (0.4, 0) with conductivity 2."""
    return {"name": "disk", "shapes": [
        {"kind": "disk", "center": [0.4, 0.0], "radius": 0.3, "contrast": 2.0}]}


def example_indefinite_spec() -> dict:
    """One conductive and one resistive disk."""
    return {"name": "two-disks", "shapes": [
        {"kind": "disk", "center": [-0.4, 0.2], "radius": 0.25, "contrast": 2.0},
        {"kind": "disk", "center": [0.35, -0.3], "radius": 0.25, "contrast": 0.5}]}


@dataclass(frozen=True, eq=False)
class NoisyMeasurement:
    ntd: NtDMatrix
    delta: float
    seed: int | None
    perturbation: np.ndarray


def add_noise(a: NtDMatrix, delta: float, seed: int | None = None) -> NoisyMeasurement:
    """Add a seeded symmetric perturbation of spectral norm exactly ``delta``."""
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    n = a.size
    e = np.zeros((n, n))
    if delta > 0:
        rng = np.random.default_rng(seed)
        e = rng.uniform(-1.0, 1.0, size=(n, n))
        e = 0.5 * (e + e.T)
        e *= delta / np.linalg.norm(e, 2)
    return NoisyMeasurement(a.with_values(a.values + e), float(delta), seed, e)
