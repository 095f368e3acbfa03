"""Monotonicity-based inclusion detection for electrical impedance tomography."""

from eitmono.errors import (
    EitMonoError,
    InconsistentDataError,
    NumericalError,
    ParameterError,
)
from eitmono.mesh import Mesh, PixelGrid, ball_to_region, build_disk_mesh, pixel_region
from eitmono.forward import (
    Conductivity,
    CurrentBasis,
    ForwardSolver,
    FrechetOperator,
    NtDMatrix,
    SolutionField,
    apply_frechet,
    assemble_frechet,
    assemble_ntd,
    calibrate_fem_tolerance,
    edge_indicator_basis,
    fourier_basis,
    region_energy,
    solve_neumann,
)
from eitmono.geometry import (
    IndicatorField,
    TestSet,
    make_channel_complement,
    make_halfspace_set,
    outer_closure,
)
from eitmono.monotone import (
    TestOutcome,
    definite_test_full,
    definite_test_linearized,
    indefinite_test_full,
    indefinite_test_linearized,
    regularized_definiteness_test,
)
from eitmono.phantoms import (
    Phantom,
    add_noise,
    example_definite_spec,
    example_indefinite_spec,
    make_phantom,
)
from eitmono.reconstruct import (
    jaccard,
    reconstruct_definite,
    reconstruct_indefinite_family,
    reconstruct_indefinite_shrink,
)
from eitmono.locpot import energy_form, localized_potential, locpot_dichotomy_sweep

__version__ = "0.1.0"

__all__ = [
    "EitMonoError",
    "InconsistentDataError",
    "NumericalError",
    "ParameterError",
    "Mesh",
    "PixelGrid",
    "ball_to_region",
    "build_disk_mesh",
    "pixel_region",
    "Conductivity",
    "CurrentBasis",
    "ForwardSolver",
    "FrechetOperator",
    "NtDMatrix",
    "SolutionField",
    "apply_frechet",
    "assemble_frechet",
    "assemble_ntd",
    "calibrate_fem_tolerance",
    "edge_indicator_basis",
    "fourier_basis",
    "region_energy",
    "solve_neumann",
    "IndicatorField",
    "TestSet",
    "make_channel_complement",
    "make_halfspace_set",
    "outer_closure",
    "TestOutcome",
    "definite_test_full",
    "definite_test_linearized",
    "indefinite_test_full",
    "indefinite_test_linearized",
    "regularized_definiteness_test",
    "Phantom",
    "add_noise",
    "example_definite_spec",
    "example_indefinite_spec",
    "make_phantom",
    "jaccard",
    "reconstruct_definite",
    "reconstruct_indefinite_family",
    "reconstruct_indefinite_shrink",
    "energy_form",
    "localized_potential",
    "locpot_dichotomy_sweep",
]
