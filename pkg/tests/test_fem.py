import numpy as np
import pytest
from scipy.sparse.linalg import spsolve

from fracwave import fem


@pytest.fixture
def mesh44():
    return fem.rectangle_mesh((-1, -1), (1, 1), 4, 4)


@pytest.fixture
def unit16():
    return fem.rectangle_mesh((0, 0), (1, 1), 16, 16)


class TestMesh:
    def test_counts_and_orientation(self, mesh44):
        assert mesh44.n_nodes == 25
        assert len(mesh44.triangles) == 32
        p = mesh44.points[mesh44.triangles]
        v1 = p[:, 1] - p[:, 0]
        v2 = p[:, 2] - p[:, 0]
        assert np.all(v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0] > 0)

    def test_boundary_marking(self, mesh44):
        on_edge = (np.abs(np.abs(mesh44.points) - 1.0) < 1e-14).any(axis=1)
        assert np.array_equal(mesh44.boundary, on_edge)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            fem.rectangle_mesh((0, 0), (0, 1), 4, 4)


class TestMass:
    def test_total_sum_is_area(self, mesh44, unit16):
        assert fem.assemble_mass(mesh44).sum() == pytest.approx(4.0, rel=1e-13)
        assert fem.assemble_mass(unit16).sum() == pytest.approx(1.0, rel=1e-13)

    def test_row_sums_are_hat_integrals(self, unit16):
        # partition of unity: row sums equal int N_i = (support area)/3
        M = fem.assemble_mass(unit16)
        rows = np.asarray(M.sum(axis=1)).ravel()
        cell = unit16.dx * unit16.dy
        interior = unit16.interior_nodes
        # an interior node of this triangulation supports 6 triangles
        assert rows[interior] == pytest.approx(np.full(len(interior), 6 * cell / 2 / 3), rel=1e-12)

    def test_element_matrix_against_midpoint_quadrature(self):
        # the 3-midpoint rule integrates quadratics exactly on a triangle
        rng = np.random.default_rng(0)
        p = rng.standard_normal((3, 2))
        e1, e2 = p[1] - p[0], p[2] - p[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        mids = np.array([(p[0] + p[1]) / 2, (p[1] + p[2]) / 2, (p[2] + p[0]) / 2])
        # barycentric coordinates of the edge midpoints
        lam = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        quad = np.zeros((3, 3))
        for k in range(3):
            quad += np.outer(lam[k], lam[k]) * area / 3.0
        assert quad == pytest.approx(area * fem._M_LOCAL, rel=1e-14)

    def test_spd(self, mesh44):
        M = fem.assemble_mass(mesh44).toarray()
        assert np.linalg.eigvalsh(M).min() > 0


class TestStiffness:
    def test_constants_in_kernel(self, mesh44):
        K = fem.assemble_stiffness(mesh44)
        assert np.abs(K @ np.ones(mesh44.n_nodes)).max() < 1e-13

    def test_exact_symmetry(self, mesh44, unit16):
        for mesh in (mesh44, unit16):
            K = fem.assemble_stiffness(mesh)
            assert (K - K.T).nnz == 0

    def test_rayleigh_quotient_converges(self):
        # interpolated first eigenmode: u'Ku/u'Mu -> 2 pi^2 from above
        target = 2 * np.pi**2
        errs = []
        for nx in (8, 16, 32):
            mesh = fem.rectangle_mesh((0, 0), (1, 1), nx, nx)
            u = np.sin(np.pi * mesh.points[:, 0]) * np.sin(np.pi * mesh.points[:, 1])
            K = fem.assemble_stiffness(mesh)
            M = fem.assemble_mass(mesh)
            rq = (u @ K @ u) / (u @ M @ u)
            errs.append(abs(rq - target))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.01 * target


class TestDirichlet:
    def test_all_nodes_gives_identity(self, mesh44):
        K = fem.assemble_stiffness(mesh44)
        A, rhs = fem.apply_dirichlet(K, np.ones(mesh44.n_nodes), np.arange(mesh44.n_nodes))
        assert (A - np.eye(mesh44.n_nodes)).__abs__().max() < 1e-15 or (
            np.abs(A.toarray() - np.eye(mesh44.n_nodes)).max() < 1e-15)
        assert np.all(rhs == 0)

    def test_solution_zero_on_boundary(self, mesh44):
        rng = np.random.default_rng(1)
        K = fem.assemble_stiffness(mesh44)
        f = rng.standard_normal(mesh44.n_nodes)
        A, rhs = fem.apply_dirichlet(K, f, mesh44.boundary_nodes)
        x = spsolve(A.tocsc(), rhs)
        assert np.all(x[mesh44.boundary_nodes] == 0.0)
        assert np.abs(x).max() > 0

    def test_eliminated_stiffness_spd(self, mesh44):
        K = fem.assemble_stiffness(mesh44)
        A, _ = fem.apply_dirichlet(K, None, mesh44.boundary_nodes)
        assert np.linalg.eigvalsh(A.toarray()).min() > 0


class TestSampler:
    def test_coarse_diamond(self, mesh44):
        s = fem.circle_sampler(mesh44, 0.8)
        got = sorted(map(tuple, mesh44.points[s.nodes].tolist()))
        assert got == [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]
        assert s.perimeter == pytest.approx(4.0)

    def test_weights_positive_and_sum_to_perimeter(self, unit16=None):
        mesh = fem.rectangle_mesh((-1, -1), (1, 1), 16, 16)
        s = fem.circle_sampler(mesh, 0.8)
        assert np.all(s.weights > 0)
        poly = mesh.points[np.append(s.nodes, s.nodes[0])]
        perim = np.sum(np.linalg.norm(np.diff(poly, axis=0), axis=1))
        assert s.weights.sum() == pytest.approx(perim, rel=1e-13)

    def test_disjoint_from_outer_boundary(self):
        for nx in (4, 16, 32):
            mesh = fem.rectangle_mesh((-1, -1), (1, 1), nx, nx)
            s = fem.circle_sampler(mesh, 0.8)
            assert not np.any(mesh.boundary[s.nodes])

    def test_perimeter_near_circle_on_fine_mesh(self):
        mesh = fem.rectangle_mesh((-1, -1), (1, 1), 64, 64)
        s = fem.circle_sampler(mesh, 0.8)
        target = 2 * np.pi * 0.8
        assert 0.95 * target < s.perimeter < 1.25 * target


class TestSurfaceOps:
    def test_unit_load_sums_to_perimeter(self, unit16=None):
        mesh = fem.rectangle_mesh((-1, -1), (1, 1), 32, 32)
        s = fem.circle_sampler(mesh, 0.8)
        load = fem.surface_load(mesh, s, np.ones(s.n_nodes))
        assert load.sum() == pytest.approx(s.perimeter, rel=1e-13)

    def test_zero_load(self, mesh44):
        s = fem.circle_sampler(mesh44, 0.8)
        assert np.all(fem.surface_load(mesh44, s, np.zeros(s.n_nodes)) == 0)

    def test_point_source_locality(self):
        mesh = fem.rectangle_mesh((-1, -1), (1, 1), 16, 16)
        s = fem.circle_sampler(mesh, 0.8)
        w = np.zeros(s.n_nodes)
        w[3] = 1.0
        load = fem.surface_load(mesh, s, w)
        support = np.flatnonzero(load)
        neighborhood = {s.nodes[2], s.nodes[3], s.nodes[4]}
        assert set(support) <= neighborhood

    def test_load_trace_adjointness(self):
        # (surface_load(w), u) = (w, W_Sigma trace(u)), exact by construction
        rng = np.random.default_rng(5)
        mesh = fem.rectangle_mesh((-1, -1), (1, 1), 16, 16)
        s = fem.circle_sampler(mesh, 0.8)
        for _ in range(5):
            w = rng.standard_normal(s.n_nodes)
            u = rng.standard_normal(mesh.n_nodes)
            lhs = fem.surface_load(mesh, s, w) @ u
            rhs = w @ (s.weights * fem.trace_on_sigma(mesh, s, u))
            assert lhs == pytest.approx(rhs, rel=1e-14)

    def test_trace_basics(self, mesh44):
        s = fem.circle_sampler(mesh44, 0.8)
        assert fem.trace_on_sigma(mesh44, s, np.full(25, 3.3)) == pytest.approx(
            np.full(s.n_nodes, 3.3))
        u = np.ones(25)
        u[s.nodes] = 0.0
        assert np.all(fem.trace_on_sigma(mesh44, s, u) == 0)

    def test_trace_is_nodal_interpolation(self):
        mesh = fem.rectangle_mesh((0, 0), (1, 1), 16, 16)
        # observation circle inside the unit square
        s = fem.circle_sampler(mesh, 0.3, center=(0.5, 0.5))
        psi = np.sin(np.pi * mesh.points[:, 0]) * np.sin(np.pi * mesh.points[:, 1])
        pts = mesh.points[s.nodes]
        expect = np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
        assert fem.trace_on_sigma(mesh, s, psi) == pytest.approx(expect, rel=1e-15)

    def test_wrong_length_rejected(self, mesh44):
        s = fem.circle_sampler(mesh44, 0.8)
        with pytest.raises(ValueError):
            fem.surface_load(mesh44, s, np.ones(s.n_nodes + 1))


class TestOmega:
    def test_coarse_interior_is_center(self, mesh44):
        s = fem.circle_sampler(mesh44, 0.8)
        om = fem.omega_interior_nodes(mesh44, s)
        assert mesh44.points[om].tolist() == [[0.0, 0.0]]

    def test_disjoint_from_sigma_and_boundary(self):
        mesh = fem.rectangle_mesh((-1, -1), (1, 1), 16, 16)
        s = fem.circle_sampler(mesh, 0.8)
        om = fem.omega_interior_nodes(mesh, s)
        assert len(om) > 0
        assert not set(om) & set(s.nodes.tolist())
        assert not np.any(mesh.boundary[om])
        # everything strictly inside the circle radius up to one cell
        r = np.linalg.norm(mesh.points[om], axis=1)
        assert r.max() < 0.8 + mesh.h


class TestExports:
    def test_csv_roundtrip(self, tmp_path, mesh44):
        field = np.arange(mesh44.n_nodes, dtype=float)
        path = tmp_path / "field.csv"
        fem.save_field_csv(mesh44, field, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "x,y,value"
        assert len(lines) == mesh44.n_nodes + 1
        back = np.loadtxt(path, delimiter=",", skiprows=1)
        assert back[:, :2] == pytest.approx(mesh44.points)
        assert back[:, 2] == pytest.approx(field)

    def test_vtk_header(self, tmp_path, mesh44):
        path = tmp_path / "field.vtk"
        fem.save_field_vtk(mesh44, np.zeros(mesh44.n_nodes), path)
        text = path.read_text()
        assert text.startswith("# vtk DataFile Version 3.0")
        assert f"POINTS {mesh44.n_nodes} double" in text
        assert "CELL_TYPES 32" in text
