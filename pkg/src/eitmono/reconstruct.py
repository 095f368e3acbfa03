"""
Shape reconstruction from test sweeps.

Definite case: union of the grid cells whose ball test passes for some test
level. Indefinite case: intersection of the test sets passing the two-sided
test, either over a fixed family or by greedy shrinking from the full disk.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from eitmono.errors import InconsistentDataError, ParameterError
from eitmono.forward import (
    BackgroundModel,
    CurrentBasis,
    ForwardSolver,
    FrechetOperator,
    NtDMatrix,
    assemble_frechet,
)
from eitmono.geometry import (
    IndicatorField,
    TestSet,
    make_channel_complement,
    make_halfspace_set,
)
from eitmono.mesh import Mesh, PixelGrid, ball_to_region
from eitmono.monotone import (
    TestOutcome,
    definite_test_full,
    definite_test_linearized,
    indefinite_test_full,
    indefinite_test_linearized,
)

DEFINITE_ALPHAS = tuple(2.0**i for i in range(-4, 5))
INDEFINITE_ALPHAS_FULL = (2.0, 4.0, 8.0)
INDEFINITE_ALPHAS_LINEARIZED = (0.25, 0.5, 1.0, 2.0)
MODES = ("full", "linearized")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cell_ball_regions(grid: PixelGrid, radius: float | None = None) -> dict[int, np.ndarray]:
    """Ball of ``radius`` (default: cell circumradius) around every interior cell center.

    A ball that catches no centroid falls back to the cell's own triangles.
    """
    r = grid.circumradius() if radius is None else radius
    out = {}
    for k in grid.interior_ids:
        tri = ball_to_region(grid.mesh, grid.centers[k], r)
        out[int(k)] = tri if tri.size else grid.cell_triangles(k)
    return out


@dataclass(frozen=True, eq=False)
class DefiniteSweep:
    """Per-cell outcome of a definite sweep.

    ``lambdas[i, j]`` is the deciding eigenvalue for ``cells[i]`` at
    ``alphas[j]``; ``margins[i]`` is the smallest distance of any of them to
    the threshold ``-alpha_reg``.
    """

    field: IndicatorField
    cells: np.ndarray
    alphas: tuple[float, ...]
    alpha_reg: float
    lambdas: np.ndarray
    passed: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        return np.abs(self.lambdas + self.alpha_reg).min(axis=1)

    def outcomes(self) -> Iterable[tuple[int, TestOutcome]]:
        for i, c in enumerate(self.cells):
            for j, a in enumerate(self.alphas):
                lam = float(self.lambdas[i, j])
                yield int(c), TestOutcome(bool(self.passed[i, j]), lam, self.alpha_reg, a)


def definite_sweep(measured: NtDMatrix, mesh: Mesh, basis: CurrentBasis, grid: PixelGrid,
                   alphas: Sequence[float] = DEFINITE_ALPHAS, alpha_reg: float = 0.0,
                   mode: str = "linearized", sign: int = 1, threads: int = 1,
                   frechet: FrechetOperator | None = None,
                   background: BackgroundModel | None = None,
                   regions: dict[int, np.ndarray] | None = None) -> DefiniteSweep:
    _check_mode(mode)
    alphas = tuple(float(a) for a in alphas)
    if not alphas:
        raise ParameterError("alphas must be nonempty")
    regions = cell_ball_regions(grid) if regions is None else regions
    cells = np.array(sorted(regions), dtype=np.int64)
    w = basis.whitener()
    if mode == "linearized":
        frechet = frechet or assemble_frechet(mesh, basis)

        def run(c: int) -> list[TestOutcome]:
            return [definite_test_linearized(measured, frechet, regions[c], a, alpha_reg, sign, w)
                    for a in alphas]
    else:
        background = background or BackgroundModel(ForwardSolver(mesh, 1.0), basis)

        def run(c: int) -> list[TestOutcome]:
            return [definite_test_full(measured, mesh, basis, regions[c], a, alpha_reg, sign,
                                       background, w) for a in alphas]

    results = _pmap(run, list(cells), threads)
    lambdas = np.array([[o.lambda_min for o in row] for row in results]).reshape(len(cells), len(alphas))
    passed = np.array([[o.passed for o in row] for row in results], dtype=bool).reshape(lambdas.shape)
    lab = np.zeros(grid.n_cells, bool)
    lab[cells] = passed.any(axis=1)
    return DefiniteSweep(IndicatorField(grid, lab), cells, alphas, alpha_reg, lambdas, passed)


def reconstruct_definite(measured: NtDMatrix, mesh: Mesh, basis: CurrentBasis, grid: PixelGrid,
                         alphas: Sequence[float] = DEFINITE_ALPHAS, alpha_reg: float = 0.0,
                         mode: str = "linearized", sign: int = 1, threads: int = 1,
                         frechet: FrechetOperator | None = None,
                         background: BackgroundModel | None = None) -> IndicatorField:
    """Union of cells whose ball test passes for at least one ``alpha``."""
    return definite_sweep(measured, mesh, basis, grid, alphas, alpha_reg, mode, sign, threads,
                          frechet, background).field


def default_family(grid: PixelGrid, n_directions: int = 8, n_offsets: int = 17,
                   lattice: int = 8, channel_cells: float = 2.0,
                   channels: bool = True) -> list[TestSet]:
    """Half-spaces in ``n_directions`` directions plus channel complements on a lattice."""
    family = []
    for k in range(n_directions):
        t = 2 * np.pi * k / n_directions
        d = (np.cos(t), np.sin(t))
        for off in np.linspace(-1.0, 1.0, n_offsets):
            family.append(make_halfspace_set(d, float(off), grid))
    if channels:
        radius = channel_cells * grid.cell_size
        pts = -1.0 + (2 * np.arange(lattice) + 1) / lattice
        for y in pts:
            for x in pts:
                if np.hypot(x, y) + radius < 1.0:
                    family.append(make_channel_complement((x, y), radius, grid))
    return family


@dataclass(frozen=True, eq=False)
class FamilyResult:
    field: IndicatorField
    passing: tuple[int, ...]
    outcomes: tuple[TestOutcome | None, ...]


def _member_tester(measured: NtDMatrix, mode: str, alpha_reg: float,
                   mesh: Mesh | None, frechet: FrechetOperator | None):
    w = measured.basis.whitener()
    if mode == "linearized":
        if frechet is None:
            if mesh is None:
                raise ParameterError("linearized mode needs a mesh or a Frechet operator")
            frechet = assemble_frechet(mesh, measured.basis)

        def test(c: TestSet, a: float, chi=None) -> TestOutcome:
            return indefinite_test_linearized(measured, frechet, c, a, alpha_reg, w, chi)
        return test, frechet
    if mesh is None:
        raise ParameterError("full mode needs a mesh")

    def test(c: TestSet, a: float, chi=None) -> TestOutcome:
        return indefinite_test_full(measured, mesh, measured.basis, c, a, alpha_reg, w)
    return test, frechet


def indefinite_family_sweep(measured: NtDMatrix, family: Sequence[TestSet],
                            alphas: Sequence[float] | None = None, alpha_reg: float = 0.0,
                            mode: str = "linearized", mesh: Mesh | None = None,
                            frechet: FrechetOperator | None = None,
                            threads: int = 1) -> FamilyResult:
    _check_mode(mode)
    if not family:
        raise ParameterError("family must be nonempty")
    for c in family:
        if not isinstance(c, TestSet) or not c.valid:
            raise ParameterError(f"family member {getattr(c, 'name', c)!r} violates C = out C")
    if alphas is None:
        alphas = INDEFINITE_ALPHAS_FULL if mode == "full" else INDEFINITE_ALPHAS_LINEARIZED
    alphas = tuple(float(a) for a in alphas)
    if not alphas:
        raise ParameterError("alphas must be nonempty")
    test, _ = _member_tester(measured, mode, alpha_reg, mesh, frechet)

    def run(c: TestSet) -> TestOutcome | None:
        best = None
        for a in alphas:
            o = test(c, a)
            if o.passed:
                return o
            if best is None or o.lambda_min > best.lambda_min:
                best = o
        return best

    outcomes = _pmap(run, list(family), threads)
    grid = family[0].grid
    passing = tuple(i for i, o in enumerate(outcomes) if o is not None and o.passed)
    lab = grid.interior.copy()
    for i in passing:
        lab &= family[i].field.labels
    return FamilyResult(IndicatorField(grid, lab), passing, tuple(outcomes))


def reconstruct_indefinite_family(measured: NtDMatrix, family: Sequence[TestSet],
                                  alphas: Sequence[float] | None = None, alpha_reg: float = 0.0,
                                  mode: str = "linearized", mesh: Mesh | None = None,
                                  frechet: FrechetOperator | None = None,
                                  threads: int = 1) -> IndicatorField:
    """Intersection of the family members passing the two-sided test for some ``alpha``.

    Returns the full interior when no member passes.
    """
    return indefinite_family_sweep(measured, family, alphas, alpha_reg, mode, mesh,
                                   frechet, threads).field


def _removable(labels: np.ndarray, grid: PixelGrid, layer: np.ndarray) -> np.ndarray:
    img = labels.reshape(grid.shape)
    outside = (grid.interior & ~labels).reshape(grid.shape)
    nb = np.zeros_like(outside)
    nb[1:, :] |= outside[:-1, :]
    nb[:-1, :] |= outside[1:, :]
    nb[:, 1:] |= outside[:, :-1]
    nb[:, :-1] |= outside[:, 1:]
    return np.flatnonzero(img & (nb | layer.reshape(grid.shape)))


def reconstruct_indefinite_shrink(measured: NtDMatrix, grid: PixelGrid, alpha: float,
                                  alpha_reg: float = 0.0, mode: str = "linearized",
                                  mesh: Mesh | None = None,
                                  frechet: FrechetOperator | None = None) -> TestSet:
    """Greedy minimal passing test set, starting from all interior cells.

    Removable cells are those of C in the boundary layer or 4-adjacent to the
    complement; each removal keeps C = out C. The scan runs over removable
    cells in increasing cell id and restarts after each removal. Shrinking C
    only makes both inequalities harder, so a cell whose removal failed once
    never needs to be tried again.
    """
    _check_mode(mode)
    if mode == "full" and not alpha > 1:
        raise ParameterError("full mode needs alpha > 1")
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    mesh = grid.mesh if mesh is None else mesh
    test, frechet = _member_tester(measured, mode, alpha_reg, mesh, frechet)

    labels = grid.interior.copy()
    cell_chi = None
    chi = None
    if mode == "linearized":
        cell_chi = {int(k): frechet.indicator(grid.cell_triangles(k)) for k in grid.interior_ids}
        chi = sum(cell_chi.values())
    start = TestSet.from_field(IndicatorField(grid, labels), "all")
    if not test(start, alpha, chi).passed:
        raise InconsistentDataError(
            f"the full disk fails the two-sided test at alpha={alpha}; phantom inconsistent with alpha"
        )
    layer = grid.boundary_layer()
    dead = np.zeros(grid.n_cells, bool)
    while True:
        removed = False
        for k in _removable(labels, grid, layer):
            if dead[k]:
                continue
            trial = labels.copy()
            trial[k] = False
            c = TestSet.from_field(IndicatorField(grid, trial))
            if not c.valid:
                continue
            trial_chi = None if chi is None else chi - cell_chi[int(k)]
            if test(c, alpha, trial_chi).passed:
                labels, chi, removed = trial, trial_chi, True
                break
            dead[k] = True
        if not removed:
            break
    return TestSet.from_field(IndicatorField(grid, labels), "shrink")


def jaccard(a: IndicatorField, b: IndicatorField) -> float:
    a._check(b)
    union = np.count_nonzero(a.labels | b.labels)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.labels & b.labels) / union


METRICS_HEADER = ("phantom", "mode", "alpha_reg", "jaccard", "cells_in", "cells_truth")


def metrics_row(phantom: str, mode: str, alpha_reg: float, result: IndicatorField,
                truth: IndicatorField) -> dict:
    return {"phantom": phantom, "mode": mode, "alpha_reg": alpha_reg,
            "jaccard": jaccard(result, truth), "cells_in": result.count,
            "cells_truth": truth.count}


def write_metrics(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
