import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eitmono.forward import assemble_frechet, calibrate_fem_tolerance, fourier_basis  # noqa: E402
from eitmono.mesh import PixelGrid, build_disk_mesh  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def mesh3():
    return build_disk_mesh(3)


@pytest.fixture(scope="session")
def mesh4():
    return build_disk_mesh(4)


@pytest.fixture(scope="session")
def mesh5():
    return build_disk_mesh(5)


@pytest.fixture(scope="session")
def grid16(mesh4):
    return PixelGrid(mesh4, 16)


@pytest.fixture(scope="session")
def grid32(mesh5):
    return PixelGrid(mesh5, 32)


@pytest.fixture(scope="session")
def basis4(mesh4):
    return fourier_basis(mesh4, 4)


@pytest.fixture(scope="session")
def basis8(mesh5):
    return fourier_basis(mesh5, 8)


@pytest.fixture(scope="session")
def frechet4(mesh4, basis4):
    return assemble_frechet(mesh4, basis4)


@pytest.fixture(scope="session")
def eps_fem5(mesh5):
    return calibrate_fem_tolerance(mesh5, 8)


@pytest.fixture(scope="session")
def eps_fem4(mesh4):
    return calibrate_fem_tolerance(mesh4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
