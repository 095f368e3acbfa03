"""
Regularized semidefiniteness tests between NtD matrices.

Every comparison ``A <= B up to alpha_reg`` is decided by one eigenvalue:
``lambda_min(B - A) >= -alpha_reg``. Eigenvalues are taken relative to the
L2 Gram matrix of the current basis, so ``alpha_reg`` is an operator-norm
level regardless of how the basis is scaled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from eitmono.errors import NumericalError, ParameterError
from eitmono.forward import (
    BackgroundModel,
    CurrentBasis,
    ForwardSolver,
    FrechetOperator,
    NtDMatrix,
    as_conductivity,
)
from eitmono.geometry import TestSet
from eitmono.mesh import Mesh


@dataclass(frozen=True)
class TestOutcome:
    """Result of one (one- or two-sided) regularized test."""

    passed: bool
    lambda_min: float
    alpha_reg: float
    alpha: float | None = None
    inequalities: tuple[str, ...] = ()
    lambdas: tuple[float, ...] = ()

    __test__ = False

    @property
    def margin(self) -> float:
        """Distance of the deciding eigenvalue from the threshold ``-alpha_reg``."""
        return abs(self.lambda_min + self.alpha_reg)

    def csv_row(self, region_id) -> str:
        a = "" if self.alpha is None else f"{self.alpha:.17g}"
        return f"{region_id},{a},{self.alpha_reg:.17g},{self.lambda_min:.17g},{int(self.passed)}"


CSV_HEADER = "region_id,alpha,alpha_reg,lambda_min,pass"


def lambda_min(a: np.ndarray, whitener: np.ndarray | None = None) -> float:
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + a.T)
    if whitener is not None:
        a = whitener @ a @ whitener.T
    try:
        return float(scipy.linalg.eigvalsh(a, subset_by_index=[0, 0])[0])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc


def regularized_definiteness_test(a: np.ndarray, alpha_reg: float,
                                  gram: np.ndarray | None = None) -> TestOutcome:
    """Pass iff the symmetric part of ``a`` has ``lambda_min >= -alpha_reg``.

    With ``gram`` the eigenvalue is taken relative to that inner product.
    """
    if alpha_reg < 0:
        raise ParameterError("alpha_reg must be nonnegative")
    w = None
    if gram is not None:
        chol = np.linalg.cholesky(gram)
        w = scipy.linalg.solve_triangular(chol, np.eye(len(gram)), lower=True)
    lam = lambda_min(a, w)
    return TestOutcome(lam >= -alpha_reg, lam, alpha_reg, inequalities=("A>=0",), lambdas=(lam,))


def _decide(mats: Sequence[np.ndarray], names: Sequence[str], basis: CurrentBasis,
            alpha: float, alpha_reg: float, whitener: np.ndarray | None = None) -> TestOutcome:
    if alpha_reg < 0:
        raise ParameterError("alpha_reg must be nonnegative")
    w = basis.whitener() if whitener is None else whitener
    lams = tuple(lambda_min(m, w) for m in mats)
    lam = min(lams)
    return TestOutcome(lam >= -alpha_reg, lam, alpha_reg, alpha, tuple(names), lams)


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")


def definite_test_full(measured: NtDMatrix, mesh: Mesh, basis: CurrentBasis, region: np.ndarray,
                       alpha: float, alpha_reg: float, sign: int = 1,
                       background: BackgroundModel | None = None,
                       whitener: np.ndarray | None = None) -> TestOutcome:
    """``Lambda(1 + sign*alpha*chi_B)`` against the measurement.

    sign +1 tests ``Lambda(1 + alpha chi_B) >= Lambda(sigma)``; sign -1 tests
    ``Lambda(1 - alpha chi_B) <= Lambda(sigma)`` and needs ``0 < alpha < 1``.
    """
    _check_sign(sign)
    if alpha <= 0 or (sign == -1 and alpha >= 1):
        raise ParameterError("need alpha > 0, and alpha < 1 for sign -1")
    region = np.asarray(region, dtype=np.int64)
    if background is None:
        sigma = np.ones(mesh.n_triangles)
        sigma[region] += sign * alpha
        test = ForwardSolver(mesh, sigma).ntd(basis)
    else:
        test = background.perturbed(region, sign * alpha)
    d = sign * (test.values - measured.values)
    name = "L(1+aB)>=L(s)" if sign == 1 else "L(1-aB)<=L(s)"
    return _decide([d], [name], basis, alpha, alpha_reg, whitener)


def definite_test_linearized(measured: NtDMatrix, frechet: FrechetOperator, region: np.ndarray,
                             alpha: float, alpha_reg: float, sign: int = 1,
                             whitener: np.ndarray | None = None) -> TestOutcome:
    """``Lambda(1) + sign*alpha*Lambda'(1) chi_B`` against the measurement."""
    _check_sign(sign)
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    if frechet.basis is not measured.basis and frechet.basis.size != measured.size:
        raise ParameterError("Frechet operator and measurement use different bases")
    test = frechet.background.values + sign * alpha * frechet.indicator(region)
    d = sign * (test - measured.values)
    name = "L1+aL'B>=L(s)" if sign == 1 else "L1-aL'B<=L(s)"
    return _decide([d], [name], measured.basis, alpha, alpha_reg, whitener)


def _check_set(c: TestSet) -> None:
    if not isinstance(c, TestSet) or not c.valid:
        raise ParameterError("test set must satisfy C = out C")


def indefinite_test_full(measured: NtDMatrix, mesh: Mesh, basis: CurrentBasis, c: TestSet,
                         alpha: float, alpha_reg: float,
                         whitener: np.ndarray | None = None) -> TestOutcome:
    """``Lambda(1 + alpha chi_C) <= Lambda(sigma) <= Lambda(1 - chi_C / alpha)``."""
    _check_set(c)
    if alpha <= 1:
        raise ParameterError("alpha must exceed 1")
    tri = c.triangles()
    hi = np.ones(mesh.n_triangles)
    hi[tri] = 1.0 + alpha
    lo = np.ones(mesh.n_triangles)
    lo[tri] = 1.0 - 1.0 / alpha
    t_hi = ForwardSolver(mesh, hi).ntd(basis).values
    t_lo = ForwardSolver(mesh, lo).ntd(basis).values
    return _decide(
        [measured.values - t_hi, t_lo - measured.values],
        ["L(1+aC)<=L(s)", "L(s)<=L(1-C/a)"], basis, alpha, alpha_reg, whitener,
    )


def indefinite_test_linearized(measured: NtDMatrix, frechet: FrechetOperator, c: TestSet,
                               alpha: float, alpha_reg: float,
                               whitener: np.ndarray | None = None,
                               chi: np.ndarray | None = None) -> TestOutcome:
    """``Lambda(1) + alpha L'chi_C <= Lambda(sigma) <= Lambda(1) - alpha L'chi_C``.

    ``chi`` may carry a precomputed ``Lambda'(1) chi_C``.
    """
    _check_set(c)
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    d = frechet.indicator(c.triangles()) if chi is None else chi
    base = frechet.background.values
    return _decide(
        [measured.values - (base + alpha * d), base - alpha * d - measured.values],
        ["L1+aL'C<=L(s)", "L(s)<=L1-aL'C"], measured.basis, alpha, alpha_reg, whitener,
    )


@dataclass(frozen=True)
class SandwichReport:
    """Per-current terms of the energy sandwich and its worst slacks.

    ``upper - middle >= 0`` and ``middle - lower >= 0`` should hold, where
    ``middle = <g, (Lambda(sigma2) - Lambda(sigma1)) g>``.
    """

    upper: np.ndarray
    middle: np.ndarray
    lower: np.ndarray
    slack_upper: np.ndarray = field(init=False)
    slack_lower: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "slack_upper", self.upper - self.middle)
        object.__setattr__(self, "slack_lower", self.middle - self.lower)

    @property
    def worst_slack(self) -> float:
        return float(min(self.slack_upper.min(), self.slack_lower.min()))


def sandwich_check(mesh: Mesh, basis: CurrentBasis, sigma1, sigma2) -> SandwichReport:
    s1 = as_conductivity(sigma1, mesh).values
    s2 = as_conductivity(sigma2, mesh).values
    solver2 = ForwardSolver(mesh, s2)
    a2, u2 = solver2.ntd_and_potentials(basis)
    a1 = ForwardSolver(mesh, s1).ntd(basis)
    g = solver2.gradients(u2)  # (T, N, 2)
    energy = mesh.area[:, None] * (g ** 2).sum(axis=2)  # (T, N)
    upper = (s1 - s2) @ energy
    lower = (s2 / s1 * (s1 - s2)) @ energy
    middle = np.diag(a2.values - a1.values).copy()
    return SandwichReport(upper, middle, lower)
