"""
Localized potentials as extremal currents of a symmetric pencil.

For two regions D1, D2 the current maximizing ``g^T A1 g`` subject to
``g^T (A2 + eps I) g = 1`` is the top eigenvector of ``(A1, A2 + eps I)``,
where ``A_j`` is the gradient-energy form of region ``D_j``. Sweeping the
Fourier order shows whether the achievable ratio blows up (D1 reachable from
the boundary outside D2) or stays bounded (D1 shielded by D2).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from eitmono.errors import NumericalError, ParameterError
from eitmono.forward import (
    Conductivity,
    CurrentBasis,
    ForwardSolver,
    as_conductivity,
    fourier_basis,
)
from eitmono.geometry import IndicatorField, outer_closure
from eitmono.mesh import Mesh
from eitmono.phantoms import shape_mask

BLOWUP_FACTOR = 10.0
BOUNDED_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class EnergyForm:
    """``g^T matrix g = sum_{T in region} area_T |grad u^g|_T^2`` for coefficient vectors ``g``."""

    matrix: np.ndarray
    region: np.ndarray
    sigma: Conductivity
    basis: CurrentBasis


def _region(mesh: Mesh, region) -> np.ndarray:
    idx = np.asarray(region)
    if idx.dtype == bool:
        if idx.shape != (mesh.n_triangles,):
            raise ParameterError("region mask must have one entry per triangle")
        idx = np.flatnonzero(idx)
    idx = idx.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= mesh.n_triangles):
        raise ParameterError("region contains invalid triangle indices")
    return np.unique(idx)


def _form(grads: np.ndarray, area: np.ndarray, region: np.ndarray,
          weights: np.ndarray | None = None) -> np.ndarray:
    g = grads[region]
    h = g.transpose(0, 2, 1).reshape(-1, g.shape[1])
    w = area[region] if weights is None else area[region] * weights[region]
    out = h.T @ (np.repeat(w, 2)[:, None] * h)
    return 0.5 * (out + out.T)


def energy_form(mesh: Mesh, sigma, basis: CurrentBasis, region, weighted: bool = False,
                solver: ForwardSolver | None = None) -> EnergyForm:
    """Gradient-energy form of ``region`` under the ``sigma``-solutions.

    ``weighted`` multiplies each triangle by ``sigma``; over the full domain
    this reproduces the NtD matrix.
    """
    sigma = as_conductivity(sigma, mesh)
    region = _region(mesh, region)
    solver = solver or ForwardSolver(mesh, sigma)
    grads = solver.gradients(solver.solve_system(basis.loads()))
    mat = _form(grads, mesh.area, region, sigma.values if weighted else None)
    return EnergyForm(mat, region, sigma, basis)


@dataclass(frozen=True)
class LocalizedPotential:
    coefficients: np.ndarray
    ratio: float
    e1: float
    e2: float


def _matrix(a) -> np.ndarray:
    return np.asarray(a.matrix if isinstance(a, EnergyForm) else a, dtype=float)


def localized_potential(a1, a2, eps: float = 1e-8) -> LocalizedPotential:
    """Top eigenpair of the pencil ``(A1, A2 + eps I)``, normalized so ``g^T (A2 + eps I) g = 1``."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    m1, m2 = _matrix(a1), _matrix(a2)
    if m1.shape != m2.shape or m1.shape[0] != m1.shape[1]:
        raise ParameterError("energy forms must be square and of equal size")
    n = m1.shape[0]
    try:
        w, v = scipy.linalg.eigh(m1, m2 + eps * np.eye(n), subset_by_index=[n - 1, n - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"pencil eigensolver failed: {exc}") from exc
    g = v[:, 0]
    if g[np.argmax(np.abs(g))] < 0:
        g = -g
    return LocalizedPotential(g, float(w[0]), float(g @ m1 @ g), float(g @ m2 @ g))


@dataclass(frozen=True, eq=False)
class LocalizedPotentialResult:
    orders: tuple[int, ...]
    potentials: tuple[LocalizedPotential, ...]
    eps: float

    @property
    def e1(self) -> np.ndarray:
        return np.array([p.e1 for p in self.potentials])

    @property
    def e2(self) -> np.ndarray:
        return np.array([p.e2 for p in self.potentials])

    @property
    def ratio(self) -> np.ndarray:
        return np.array([p.ratio for p in self.potentials])

    def classification(self) -> str:
        return classify(self.ratio)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "E1", "E2", "ratio"])
            for k, p in zip(self.orders, self.potentials):
                w.writerow([k, f"{p.e1:.17g}", f"{p.e2:.17g}", f"{p.ratio:.17g}"])


def classify(values: Sequence[float], blowup: float = BLOWUP_FACTOR,
             bounded: float = BOUNDED_FACTOR) -> str:
    """'blow-up' if last/first >= blowup, 'bounded' if max <= bounded * first."""
    v = np.asarray(values, dtype=float)
    if v.size < 2 or v[0] <= 0:
        return "indeterminate"
    if v[-1] / v[0] >= blowup:
        return "blow-up"
    if v.max() <= bounded * v[0]:
        return "bounded"
    return "indeterminate"


def _sweep_forms(mesh: Mesh, solver: ForwardSolver, d1: np.ndarray, d2: np.ndarray,
                 order: int) -> tuple[CurrentBasis, np.ndarray, np.ndarray]:
    basis = fourier_basis(mesh, order)
    grads = solver.gradients(solver.solve_system(basis.loads()))
    return basis, _form(grads, mesh.area, d1), _form(grads, mesh.area, d2)


def locpot_dichotomy_sweep(mesh: Mesh, sigma, d1, d2, orders: Sequence[int],
                           eps: float = 1e-8) -> LocalizedPotentialResult:
    """Localized potential for each Fourier order in ``orders``."""
    if not orders:
        raise ParameterError("orders must be nonempty")
    d1, d2 = _region(mesh, d1), _region(mesh, d2)
    solver = ForwardSolver(mesh, sigma)
    pots = []
    for k in orders:
        _, a1, a2 = _sweep_forms(mesh, solver, d1, d2, int(k))
        pots.append(localized_potential(a1, a2, eps))
    return LocalizedPotentialResult(tuple(int(k) for k in orders), tuple(pots), eps)


def region_from_shapes(mesh: Mesh, shapes: Sequence[dict]) -> np.ndarray:
    """Triangles whose centroid lies in any of the shapes.

    Besides the phantom shapes an ``annulus`` with ``center``, ``inner`` and
    ``outer`` radius is accepted.
    """
    mask = np.zeros(mesh.n_triangles, bool)
    for shape in shapes:
        shape = {k: v for k, v in shape.items() if k != "contrast"}
        if shape.get("kind") == "annulus":
            extra = set(shape) - {"kind", "center", "inner", "outer"}
            if extra:
                raise ParameterError(f"unknown fields for annulus: {sorted(extra)}")
            c = np.asarray(shape.get("center", (0.0, 0.0)), dtype=float)
            r0, r1 = float(shape.get("inner", 0.0)), float(shape.get("outer", 0.0))
            if not 0 <= r0 < r1 or np.hypot(*c) + r1 >= 1:
                raise ParameterError("annulus needs 0 <= inner < outer and must lie inside the disk")
            r = np.hypot(*(mesh.centroids - c).T)
            mask |= (r > r0) & (r < r1)
        else:
            mask |= shape_mask(shape, mesh.centroids)
    return np.flatnonzero(mask)


def reachable(d1_cells: IndicatorField, d2_cells: IndicatorField) -> bool:
    """True when D1 is not contained in the outer closure of D2."""
    return not d1_cells.issubset(outer_closure(d2_cells))


@dataclass(frozen=True, eq=False)
class IndependenceReport:
    orders: tuple[int, ...]
    e1_sigma: np.ndarray
    e2_sigma: np.ndarray
    e1_tau: np.ndarray
    e2_tau: np.ndarray
    class_sigma: str
    class_tau: str

    @property
    def e2_constants(self) -> np.ndarray:
        """Per-order ``max(E2s/E2t, E2t/E2s)``."""
        q = self.e2_sigma / self.e2_tau
        return np.maximum(q, 1.0 / q)

    @property
    def e2_constant(self) -> float:
        return float(self.e2_constants.max())

    @property
    def agree(self) -> bool:
        return self.class_sigma == self.class_tau and self.class_sigma != "indeterminate"


def conductivity_independence_check(mesh: Mesh, sigma, tau, d1, d2, orders: Sequence[int],
                                    eps: float = 1e-8) -> IndependenceReport:
    """Apply the currents localized for ``sigma`` to ``tau`` and compare energies.

    ``sigma`` and ``tau`` may differ only on D2.
    """
    s = as_conductivity(sigma, mesh)
    t = as_conductivity(tau, mesh)
    d1, d2 = _region(mesh, d1), _region(mesh, d2)
    outside = np.ones(mesh.n_triangles, bool)
    outside[d2] = False
    if np.any(s.values[outside] != t.values[outside]):
        raise ParameterError("sigma and tau must coincide outside D2")
    solver_s, solver_t = ForwardSolver(mesh, s), ForwardSolver(mesh, t)
    rows = []
    for k in orders:
        basis, a1s, a2s = _sweep_forms(mesh, solver_s, d1, d2, int(k))
        _, a1t, a2t = _sweep_forms(mesh, solver_t, d1, d2, int(k))
        p = localized_potential(a1s, a2s, eps)
        g = p.coefficients
        rows.append((p.e1, p.e2, g @ a1t @ g, g @ a2t @ g))
    r = np.array(rows)
    return IndependenceReport(tuple(int(k) for k in orders), r[:, 0], r[:, 1], r[:, 2], r[:, 3],
                              classify(r[:, 0]), classify(r[:, 2]))
