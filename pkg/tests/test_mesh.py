import numpy as np
import pytest

from eitmono.errors import ParameterError
from eitmono.mesh import Mesh, PixelGrid, ball_to_region, build_disk_mesh, pixel_region
from oracles import inscribed_polygon_area


@pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
def test_mesh_invariants(level):
    m = build_disk_mesh(level)
    assert np.all(m.area > 0)
    r = np.hypot(*m.vertices[m.boundary_vertices].T)
    assert np.all((r >= 1 - 1e-12) & (r <= 1 + 1e-12))
    # boundary is one closed cycle, ordered by angle
    assert np.array_equal(m.boundary_edges[:, 1], np.roll(m.boundary_edges[:, 0], -1))
    assert np.all(np.diff(m.boundary_angle) > 0)
    assert m.n_triangles == 6 * 4**level


@pytest.mark.parametrize("level", [1, 3])
def test_conforming(level):
    m = build_disk_mesh(level)
    t = m.triangles
    e = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    # every edge is shared by at most two triangles; exactly K boundary edges
    assert counts.max() == 2
    assert np.count_nonzero(counts == 1) == len(m.boundary_edges)
    # Euler characteristic of a disk
    assert m.n_vertices - len(counts) + m.n_triangles == 1


def test_level0_area_is_hexagon():
    m = build_disk_mesh(0)
    assert abs(m.area.sum() - inscribed_polygon_area(6)) < 1e-12


def test_area_deficit_level5(mesh5):
    deficit = np.pi - mesh5.area.sum()
    assert 0 < deficit < 1e-2
    n = len(mesh5.boundary_vertices)
    assert abs(deficit - (np.pi - inscribed_polygon_area(n))) < 1e-10


def test_h_halves_and_counts_grow():
    # the first refinement bends the hexagon the most, so start at level 1
    hs = [build_disk_mesh(k).h for k in range(1, 6)]
    ratios = np.array(hs[:-1]) / np.array(hs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))
    assert ratios[-1] > ratios[0]


def test_refinement_nesting():
    a, b = build_disk_mesh(2), build_disk_mesh(3)
    assert np.array_equal(b.vertices[: a.n_vertices], a.vertices)


def test_deterministic():
    a, b = build_disk_mesh(3), build_disk_mesh(3)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


@pytest.mark.parametrize("bad", [-1, 9, 2.5])
def test_level_out_of_range(bad):
    with pytest.raises(ParameterError):
        build_disk_mesh(bad)


def test_immutable(mesh3):
    with pytest.raises(ValueError):
        mesh3.vertices[0, 0] = 3.0


def test_ball_to_region(mesh5):
    assert len(ball_to_region(mesh5, (0, 0), 2.0)) == mesh5.n_triangles
    assert len(ball_to_region(mesh5, (0, 0), 1e-6)) == 0
    reg = ball_to_region(mesh5, (0.4, 0), 0.3)
    assert abs(mesh5.area[reg].sum() / (np.pi * 0.09) - 1) < 0.05


def test_export_roundtrip(tmp_path, mesh3):
    p = tmp_path / "m.txt"
    mesh3.export(p)
    head = p.read_text().splitlines()[0]
    assert head == f"vertices {mesh3.n_vertices} triangles {mesh3.n_triangles} boundary {len(mesh3.boundary_edges)}"
    m2 = Mesh.load(p)
    assert np.array_equal(m2.triangles, mesh3.triangles)
    assert np.allclose(m2.vertices, mesh3.vertices, atol=0)


class TestPixelGrid:
    def test_partition(self, grid16, mesh4):
        owners = grid16.cell_of_triangle
        assert owners.shape == (mesh4.n_triangles,)
        assert np.all(grid16.interior[owners])
        allt = pixel_region(grid16, grid16.interior_ids)
        assert np.array_equal(allt, np.arange(mesh4.n_triangles))

    def test_interior_definition(self, grid16):
        r = np.hypot(*grid16.centers.T)
        assert np.array_equal(grid16.interior, r < 1)

    def test_cells_tile_box(self, grid16):
        c = grid16.centers
        assert np.isclose(c.min(), -1 + grid16.cell_size / 2)
        assert len(np.unique(c, axis=0)) == grid16.n_cells

    def test_empty_region(self, grid16):
        assert pixel_region(grid16, []).size == 0

    def test_single_cell_matches_box_scan(self, grid16, mesh4):
        n = grid16.n
        cell = (n // 2) * n + n // 2 + 2
        assert not grid16.boundary_layer()[cell]
        x0, y0 = grid16.centers[cell] - grid16.cell_size / 2
        cen = mesh4.centroids
        inbox = np.flatnonzero((cen[:, 0] >= x0) & (cen[:, 0] < x0 + grid16.cell_size)
                               & (cen[:, 1] >= y0) & (cen[:, 1] < y0 + grid16.cell_size))
        assert np.array_equal(pixel_region(grid16, [cell]), inbox)

    def test_invalid_cell(self, grid16):
        with pytest.raises(ParameterError):
            pixel_region(grid16, [grid16.n_cells])

    def test_boundary_layer(self, grid16):
        layer = grid16.boundary_layer().reshape(grid16.shape)
        inside = grid16.interior.reshape(grid16.shape)
        assert np.all(inside[layer])
        # the center cell is far from the boundary
        assert not layer[8, 8]
