"""
P1 finite elements for the Neumann conductivity problem on the disk.

The zero-boundary-mean normalization of the potential is imposed with one
Lagrange multiplier, bordering the stiffness matrix with the lumped boundary
mass vector ``c``::

    [ K(sigma)  c ] [u]   [b]
    [ c^T       0 ] [l] = [0]

so the system stays symmetric and no vertex is pinned. Boundary currents are
nodal values on the boundary vertices, paired through the same lumped mass,
and ``<g_i, Lambda g_j> = b_i^T u_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from eitmono.errors import NumericalError, ParameterError
from eitmono.mesh import Mesh

SIGMA_MIN = 1e-6
RESIDUAL_TOL = 1e-8
ASYMMETRY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Conductivity:
    """Piecewise constant conductivity, one positive value per triangle."""

    values: np.ndarray
    sigma_min: float = SIGMA_MIN

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ParameterError("conductivity values must be finite")
        if v.size and v.min() < self.sigma_min:
            raise ParameterError(
                f"conductivity {v.min():.3g} below sigma_min={self.sigma_min:.3g}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: Mesh, value: float = 1.0) -> "Conductivity":
        return cls(np.full(mesh.n_triangles, float(value)))

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, path: str | Path) -> None:
        rows = ["triangle_index,value"] + [f"{i},{v:.17g}" for i, v in enumerate(self.values)]
        Path(path).write_text("\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Conductivity":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(data[:, 0])
        return cls(data[order, 1])


def as_conductivity(sigma, mesh: Mesh) -> Conductivity:
    if isinstance(sigma, Conductivity):
        out = sigma
    elif np.isscalar(sigma):
        out = Conductivity.constant(mesh, float(sigma))
    else:
        out = Conductivity(np.asarray(sigma, dtype=float))
    if len(out) != mesh.n_triangles:
        raise ParameterError(
            f"conductivity has {len(out)} values, mesh has {mesh.n_triangles} triangles"
        )
    return out


@dataclass(frozen=True, eq=False)
class CurrentBasis:
    """Zero-mean boundary currents as nodal values on ``mesh.boundary_vertices``.

    ``values[:, i]`` is the i-th current; ``weights`` is the lumped boundary
    mass, so ``gram = values^T diag(weights) values`` is the L2 Gram matrix.
    """

    values: np.ndarray
    weights: np.ndarray
    boundary_vertices: np.ndarray
    n_vertices: int
    labels: tuple[str, ...] = ()
    arc: tuple[float, float] | None = None
    modes: np.ndarray | None = None
    gram: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.weights):
            raise ParameterError("basis values must be (n_boundary, N)")
        means = self.weights @ values
        scale = np.sqrt(self.weights @ values**2)
        if np.any(np.abs(means) > 1e-10 * np.maximum(scale, 1.0)):
            raise ParameterError("basis currents must have zero boundary mean")
        gram = values.T @ (self.weights[:, None] * values)
        gram = 0.5 * (gram + gram.T)
        if values.shape[1] == 0 or np.linalg.cond(gram) > 1e12:
            raise ParameterError("basis currents are not linearly independent")
        values.setflags(write=False)
        gram.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gram", gram)

    @property
    def size(self) -> int:
        return self.values.shape[1]

    def loads(self) -> np.ndarray:
        """Right-hand sides ``b_i = M_boundary g_i`` as a (V, N) array."""
        b = np.zeros((self.n_vertices, self.size))
        b[self.boundary_vertices] = self.weights[:, None] * self.values
        return b

    def whitener(self) -> np.ndarray:
        """``L^{-1}`` with ``gram = L L^T``; maps coefficient forms to L2-orthonormal ones."""
        chol = np.linalg.cholesky(self.gram)
        return scipy.linalg.solve_triangular(chol, np.eye(self.size), lower=True)


def fourier_basis(mesh: Mesh, order: int) -> CurrentBasis:
    """``pi^{-1/2} cos(n t), pi^{-1/2} sin(n t)`` for ``n = 1..order`` (N = 2 * order)."""
    if order < 1:
        raise ParameterError("Fourier order must be >= 1")
    if 2 * order >= len(mesh.boundary_vertices):
        raise ParameterError("Fourier order not resolved by the boundary mesh")
    th = mesh.boundary_angle
    cols, labels = [], []
    for n in range(1, order + 1):
        cols += [np.cos(n * th), np.sin(n * th)]
        labels += [f"cos{n}", f"sin{n}"]
    return CurrentBasis(
        np.column_stack(cols) / np.sqrt(np.pi),
        mesh.boundary_weights,
        mesh.boundary_vertices,
        mesh.n_vertices,
        labels=tuple(labels),
        modes=np.repeat(np.arange(1, order + 1), 2),
    )


def arc_mask(angles: np.ndarray, arc: tuple[float, float], tol: float = 1e-12) -> np.ndarray:
    """Angles in the closed counterclockwise interval from ``arc[0]`` to ``arc[1]``."""
    lo, hi = float(arc[0]), float(arc[1])
    span = np.mod(hi - lo, 2 * np.pi)
    if span == 0.0 and hi != lo:
        span = 2 * np.pi
    rel = np.mod(angles - lo + tol, 2 * np.pi) - tol
    return rel <= span + tol


def edge_indicator_basis(mesh: Mesh, arc: tuple[float, float] | None = None) -> CurrentBasis:
    """One current per boundary edge inside ``arc``.

    Each edge indicator is represented nodally (1 at both endpoints), its mean
    over the arc removed, and the last one dropped so the family stays
    independent. All currents vanish on boundary vertices outside the arc.
    """
    nb = len(mesh.boundary_vertices)
    inside = np.ones(nb, bool) if arc is None else arc_mask(mesh.boundary_angle, arc)
    edges = [k for k in range(nb) if inside[k] and inside[(k + 1) % nb]]
    if len(edges) < 2:
        raise ParameterError("arc contains fewer than two boundary edges")
    w = mesh.boundary_weights
    support = inside.astype(float)
    cols, labels = [], []
    for k in edges[:-1]:
        g = np.zeros(nb)
        g[k] = g[(k + 1) % nb] = 1.0
        g -= (w @ g) / (w @ support) * support
        cols.append(g)
        labels.append(f"edge{k}")
    return CurrentBasis(
        np.column_stack(cols), w, mesh.boundary_vertices, mesh.n_vertices,
        labels=tuple(labels), arc=None if arc is None else (float(arc[0]), float(arc[1])),
    )


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Nodal potential and per-triangle gradient of one forward solution."""

    mesh: Mesh
    potential: np.ndarray
    gradient: np.ndarray

    @property
    def boundary_mean(self) -> float:
        m = self.mesh
        return float(m.boundary_weights @ self.potential[m.boundary_vertices])


@dataclass(frozen=True, eq=False)
class NtDMatrix:
    """Gram-type matrix ``<g_i, Lambda(sigma) g_j>`` against ``basis``."""

    values: np.ndarray
    basis: CurrentBasis

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.basis.size, self.basis.size):
            raise ParameterError("NtD matrix shape does not match basis size")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def operator_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the operator restricted to span(basis), ascending."""
        return scipy.linalg.eigh(self.values, self.basis.gram, eigvals_only=True)

    def with_values(self, values: np.ndarray) -> "NtDMatrix":
        return NtDMatrix(values, self.basis)

    def to_csv(self, path: str | Path) -> None:
        rows = [str(self.size)] + [",".join(f"{x:.17g}" for x in row) for row in self.values]
        Path(path).write_text("\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path, basis: CurrentBasis) -> "NtDMatrix":
        lines = Path(path).read_text().split()
        n = int(lines[0])
        vals = np.array([[float(x) for x in r.split(",")] for r in lines[1 : 1 + n]])
        return cls(vals, basis)


def stiffness_matrix(mesh: Mesh, sigma: np.ndarray) -> sp.csr_matrix:
    local = np.einsum("tia,tja->tij", mesh.grad, mesh.grad) * (sigma * mesh.area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1)
    cols = np.tile(mesh.triangles, (1, 3))
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


def _symmetrize(a: np.ndarray) -> np.ndarray:
    norm = np.abs(a).max()
    if norm > 0 and np.abs(a - a.T).max() > ASYMMETRY_TOL * norm:
        raise NumericalError(
            f"assembled matrix asymmetric: {np.abs(a - a.T).max() / norm:.2e} relative"
        )
    return 0.5 * (a + a.T)


class ForwardSolver:
    """Factorized bordered system for one conductivity.

    The factorization is computed once and reused for every right-hand
    side; it is not modified afterwards, so concurrent solves are safe.
    """

    def __init__(self, mesh: Mesh, sigma) -> None:
        self.mesh = mesh
        self.sigma = as_conductivity(sigma, mesh)
        n = mesh.n_vertices
        c = np.zeros(n)
        c[mesh.boundary_vertices] = mesh.boundary_weights
        self._c = c
        k = stiffness_matrix(mesh, self.sigma.values)
        col = sp.csr_matrix(c[:, None])
        self._system = sp.bmat([[k, col], [col.T, None]], format="csc")
        try:
            self._lu = spla.splu(self._system)
        except RuntimeError as exc:
            raise NumericalError(f"factorization failed: {exc}") from exc

    def condition_estimate(self) -> float:
        """1-norm condition estimate of the bordered system."""
        n = self._system.shape[0]
        inv = spla.LinearOperator((n, n), matvec=self._lu.solve, rmatvec=self._lu.solve, dtype=float)
        return float(spla.onenormest(self._system) * spla.onenormest(inv))

    def solve_system(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the bordered system for (V,) or (V, k) vertex loads; returns potentials."""
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.ndim == 1
        b = rhs[:, None] if flat else rhs
        full = np.vstack([b, np.zeros((1, b.shape[1]))])
        x = self._lu.solve(full)
        scale = max(np.abs(full).max(), 1e-300)
        resid = np.abs(self._system @ x - full).max() / scale
        if not np.isfinite(resid) or resid > RESIDUAL_TOL * max(1.0, np.abs(x).max()):
            raise NumericalError(
                f"linear solve residual {resid:.2e}; condition estimate "
                f"{self.condition_estimate():.2e}"
            )
        u = x[:-1]
        return u[:, 0] if flat else u

    def gradients(self, potentials: np.ndarray) -> np.ndarray:
        """Per-triangle gradients, (T, 2) for one potential or (T, N, 2) for N."""
        t = self.mesh.triangles
        if potentials.ndim == 1:
            return np.einsum("tia,ti->ta", self.mesh.grad, potentials[t])
        return np.einsum("tia,tin->tna", self.mesh.grad, potentials[t])

    def ntd(self, basis: CurrentBasis) -> NtDMatrix:
        return self.ntd_and_potentials(basis)[0]

    def ntd_and_potentials(self, basis: CurrentBasis) -> tuple[NtDMatrix, np.ndarray]:
        loads = basis.loads()
        u = self.solve_system(loads)
        return NtDMatrix(_symmetrize(loads.T @ u), basis), u


def solve_neumann(mesh: Mesh, sigma, boundary_current: np.ndarray,
                  solver: ForwardSolver | None = None) -> SolutionField:
    """Zero-mean P1 solution for nodal boundary current values."""
    g = np.asarray(boundary_current, dtype=float)
    if g.shape != (len(mesh.boundary_vertices),):
        raise ParameterError("boundary current must give one value per boundary vertex")
    w = mesh.boundary_weights
    if abs(w @ g) > 1e-10 * max(1.0, np.sqrt(w @ g**2)):
        raise ParameterError("boundary current must have zero mean")
    solver = solver or ForwardSolver(mesh, sigma)
    loads = np.zeros(mesh.n_vertices)
    loads[mesh.boundary_vertices] = w * g
    u = solver.solve_system(loads)
    field_ = SolutionField(mesh, u, solver.gradients(u))
    if abs(field_.boundary_mean) > 1e-8 * max(1.0, np.abs(u).max()):
        raise NumericalError(f"solution boundary mean {field_.boundary_mean:.2e} not zero")
    return field_


def assemble_ntd(mesh: Mesh, sigma, basis: CurrentBasis) -> NtDMatrix:
    if basis.n_vertices != mesh.n_vertices:
        raise ParameterError("basis was built for a different mesh")
    return ForwardSolver(mesh, sigma).ntd(basis)


@dataclass(frozen=True, eq=False)
class FrechetOperator:
    """Background sensitivities: ``G_T = area_T * grad u_i|_T . grad u_j|_T`` at sigma = 1.

    The per-triangle matrices are kept implicitly through the background
    solution gradients, (T, N, 2); ``weighted_gram`` forms ``sum_T w_T G_T``.
    """

    grads: np.ndarray
    area: np.ndarray
    basis: CurrentBasis
    background: NtDMatrix

    @property
    def n_triangles(self) -> int:
        return len(self.area)

    def contribution(self, triangle: int) -> np.ndarray:
        g = self.grads[triangle]
        return self.area[triangle] * (g @ g.T)

    def weighted_gram(self, weights: np.ndarray, region: np.ndarray | None = None) -> np.ndarray:
        """``sum_T weights_T G_T`` over ``region`` (indices) or over nonzero weights."""
        w = np.asarray(weights, dtype=float)
        if region is None:
            if w.shape != (self.n_triangles,):
                raise ParameterError("kappa must have one value per triangle")
            region = np.flatnonzero(w)
            w = w[region]
        else:
            region = np.asarray(region)
            w = np.broadcast_to(w, region.shape)
        g = self.grads[region]  # (R, N, 2)
        h = g.transpose(0, 2, 1).reshape(-1, g.shape[1])  # (2R, N)
        scale = np.repeat(w * self.area[region], 2)
        out = h.T @ (scale[:, None] * h)
        return 0.5 * (out + out.T)

    def indicator(self, region: np.ndarray) -> np.ndarray:
        """``Lambda'(1) chi_region`` as a matrix."""
        return -self.weighted_gram(1.0, np.asarray(region))


def assemble_frechet(mesh: Mesh, basis: CurrentBasis,
                     solver: ForwardSolver | None = None) -> FrechetOperator:
    solver = solver or ForwardSolver(mesh, 1.0)
    a, u = solver.ntd_and_potentials(basis)
    grads = solver.gradients(u)
    grads.setflags(write=False)
    return FrechetOperator(grads, mesh.area, basis, a)


def apply_frechet(frechet: FrechetOperator, kappa: np.ndarray) -> np.ndarray:
    """``Lambda'(1) kappa = -sum_T kappa_T G_T``."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (frechet.n_triangles,):
        raise ParameterError(
            f"kappa has shape {kappa.shape}, expected ({frechet.n_triangles},)"
        )
    return -frechet.weighted_gram(kappa)


def region_energy(field_: SolutionField, region) -> float:
    """``sum_{T in region} area_T |grad u|_T^2``; region is an index array or mask."""
    idx = np.asarray(region)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        return 0.0
    g = field_.gradient[idx]
    return float(field_.mesh.area[idx] @ (g[:, 0] ** 2 + g[:, 1] ** 2))


def analytic_disk_eigenvalues(modes: np.ndarray, radius: float = 0.0, contrast: float = 1.0) -> np.ndarray:
    """NtD eigenvalues on the unit disk for a concentric inclusion of given radius and contrast.

    Mode ``n`` gives ``(1/n)(1 - mu r^{2n}) / (1 + mu r^{2n})`` with
    ``mu = (k - 1)/(k + 1)``; ``radius = 0`` is the homogeneous disk.
    """
    n = np.asarray(modes, dtype=float)
    mu = (contrast - 1.0) / (contrast + 1.0)
    q = mu * radius ** (2 * n)
    return (1.0 / n) * (1.0 - q) / (1.0 + q)


def calibrate_fem_tolerance(mesh: Mesh, order: int = 8,
                            solver: ForwardSolver | None = None) -> float:
    """Twice the largest deviation of the sigma = 1 NtD spectrum from ``1/n``."""
    basis = fourier_basis(mesh, order)
    a = (solver or ForwardSolver(mesh, 1.0)).ntd(basis)
    fem = np.sort(a.operator_eigenvalues())
    exact = np.sort(analytic_disk_eigenvalues(basis.modes))
    return 2.0 * float(np.abs(fem - exact).max())


class BackgroundModel:
    """NtD of ``sigma + delta * chi_region`` for small regions by low-rank update.

    With ``P`` selecting the m vertices of the region, ``M`` the local
    stiffness of ``delta`` on the region and ``W = P^T S^{-1} P``::

        Lambda' = Lambda - U_P^T M (I + W M)^{-1} U_P,   U_P = P^T S^{-1} B

    which needs m solves with the background factorization instead of a new
    factorization. Regions with more than ``max_rank`` vertices fall back to
    a direct factorization.
    """

    def __init__(self, solver: ForwardSolver, basis: CurrentBasis, max_rank: int = 400) -> None:
        self.solver = solver
        self.basis = basis
        self.max_rank = max_rank
        self.ntd, self.potentials = solver.ntd_and_potentials(basis)

    @property
    def mesh(self) -> Mesh:
        return self.solver.mesh

    def perturbed(self, region: np.ndarray, delta) -> NtDMatrix:
        mesh = self.mesh
        region = np.asarray(region, dtype=np.int64)
        if region.size == 0:
            return self.ntd
        delta = np.broadcast_to(np.asarray(delta, dtype=float), region.shape)
        new_sigma = np.array(self.solver.sigma.values)
        new_sigma[region] += delta
        if new_sigma[region].min() < SIGMA_MIN:
            raise ParameterError("perturbed conductivity not admissible")
        verts, local = np.unique(mesh.triangles[region], return_inverse=True)
        local = local.reshape(-1, 3)
        m = len(verts)
        if m > self.max_rank:
            return ForwardSolver(mesh, new_sigma).ntd(self.basis)
        g = mesh.grad[region]
        kloc = np.einsum("tia,tja->tij", g, g) * (delta * mesh.area[region])[:, None, None]
        mm = np.zeros((m, m))
        np.add.at(mm, (np.repeat(local, 3, axis=1), np.tile(local, (1, 3))), kloc.reshape(-1, 9))
        unit = np.zeros((mesh.n_vertices, m))
        unit[verts, np.arange(m)] = 1.0
        w = self.solver.solve_system(unit)[verts]
        up = self.potentials[verts]
        y = np.linalg.solve(np.eye(m) + w @ mm, up)
        a = self.ntd.values - up.T @ (mm @ y)
        return NtDMatrix(0.5 * (a + a.T), self.basis)
