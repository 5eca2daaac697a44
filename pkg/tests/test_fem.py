"""Finite element assembly and the surface eigenproblem."""

import numpy as np
import pytest

from tricva.model import CorrelationTriple
from tricva import domain3d, fem


@pytest.fixture(scope="module")
def octant_small():
    spec = domain3d.build_domain(CorrelationTriple(0.0, 0.0, 0.0))
    mesh = domain3d.build_mesh(spec, n_points=600, seed=0)
    return spec, mesh, fem.build_basis(mesh, n_modes=50)


@pytest.fixture(scope="module")
def tiny_mesh():
    spec = domain3d.build_domain(CorrelationTriple(0.5, 0.1, 0.2))
    return domain3d.build_mesh(spec, n_points=150, seed=2)


class TestOctantSpectrum:
    # Dirichlet harmonics on the octant keep only degrees with l - m odd
    # and even sine orders, so l(l+1) gives 12, then 30 twice, then 56
    # three times.
    def test_ground_eigenvalue(self, octant_small):
        _, _, basis = octant_small
        assert 11.8 < basis.lam2[0] < 12.8

    def test_degenerate_pair(self, octant_small):
        _, _, basis = octant_small
        assert 29.5 < basis.lam2[1] < 31.5
        assert 29.5 < basis.lam2[2] < 31.5
        assert abs(basis.lam2[2] - basis.lam2[1]) < 0.5

    def test_third_cluster_is_triple(self, octant_small):
        _, _, basis = octant_small
        assert np.all(basis.lam2[3:6] > 54.0)
        assert np.all(basis.lam2[3:6] < 59.0)
        assert basis.lam2[6] > 80.0

    def test_mode_count_below_threshold(self, octant_small):
        _, _, basis = octant_small
        assert int(np.sum(basis.lam2 <= 45.0)) == 3

    def test_ground_mode_matches_harmonic(self, octant_small):
        # exact ground state: sin^2(theta) cos(theta) sin(2 phi), unit
        # mass norm 2 pi / 105 on the octant
        _, mesh, basis = octant_small
        phi = mesh.vertices[:, 0]
        theta = mesh.vertices[:, 1]
        exact = (np.sin(theta) ** 2 * np.cos(theta) * np.sin(2 * phi)
                 / np.sqrt(2 * np.pi / 105.0))
        diff = basis.psi[:, 0] - exact
        err = np.sqrt(diff @ basis.mass @ diff)
        assert err < 0.03


class TestBasisProperties:
    def test_mass_orthonormal(self, octant_small):
        _, _, basis = octant_small
        gram = basis.psi.T @ basis.mass @ basis.psi
        assert np.abs(gram - np.eye(basis.n_modes)).max() < 1e-10

    def test_interior_rows_solve_the_problem(self, octant_small):
        _, mesh, basis = octant_small
        resid = (basis.stiffness @ basis.psi
                 - basis.mass @ basis.psi * basis.lam2)
        inner = ~mesh.boundary_mask
        scale = np.abs(resid[mesh.boundary_mask]).max()
        assert np.abs(resid[inner]).max() < 1e-9 * scale

    def test_boundary_values_zero(self, octant_small):
        _, mesh, basis = octant_small
        assert np.abs(basis.psi[mesh.boundary_mask]).max() == 0.0

    def test_surface_integrals_non_negative(self, octant_small):
        _, _, basis = octant_small
        assert np.all(basis.s_n >= 0.0)

    def test_ground_mode_one_signed(self, octant_small):
        _, _, basis = octant_small
        assert basis.psi[:, 0].min() > -1e-10

    def test_nu_definition(self, octant_small):
        _, _, basis = octant_small
        assert basis.nu == pytest.approx(np.sqrt(basis.lam2 + 0.25),
                                         rel=1e-15)

    def test_rejects_too_many_modes(self, tiny_mesh):
        with pytest.raises(ValueError):
            fem.build_basis(tiny_mesh, n_modes=10_000)

    def test_midedge_quadrature_agrees(self, tiny_mesh):
        # same O(h^2) limit, different constants; only low modes are
        # well resolved on this coarse mesh
        b1 = fem.build_basis(tiny_mesh, n_modes=8, quadrature="centroid")
        b2 = fem.build_basis(tiny_mesh, n_modes=8, quadrature="midedge")
        assert b2.lam2[:4] == pytest.approx(b1.lam2[:4], rel=0.05)
        gram = b2.psi.T @ b2.mass @ b2.psi
        assert np.abs(gram - np.eye(8)).max() < 1e-10

    def test_rejects_unknown_quadrature(self, tiny_mesh):
        with pytest.raises(ValueError):
            fem.assemble(tiny_mesh, quadrature="gauss7")

    def test_mismatched_matrices_rejected(self, tiny_mesh):
        K, M = fem.assemble(tiny_mesh)
        with pytest.raises(ValueError):
            fem.solve_eig(K[:-1, :-1], M[:-1, :-1], tiny_mesh, n_modes=4)


class TestAssembly:
    def test_free_vertex_dimensions(self, tiny_mesh):
        K, M = fem.assemble(tiny_mesh)
        n_free = int((~tiny_mesh.boundary_mask).sum())
        assert K.shape == (n_free, n_free)
        assert M.shape == (n_free, n_free)
        assert np.abs(K - K.T).max() < 1e-12
        assert np.abs(M - M.T).max() < 1e-12

    def test_reference_triangle_flat_metric(self):
        # unit right triangle, metric weight switched off: the P1
        # stiffness and one-point mass have textbook closed forms
        mesh = domain3d.SurfaceMesh(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            triangles=np.array([[0, 1, 2]]),
            boundary_mask=np.zeros(3, dtype=bool),
            h0=1.0,
        )
        K, M = fem.assemble(mesh, weighted=False)
        k_ref = 0.5 * np.array([[2.0, -1.0, -1.0],
                                [-1.0, 1.0, 0.0],
                                [-1.0, 0.0, 1.0]])
        assert K == pytest.approx(k_ref, abs=1e-14)
        assert M == pytest.approx(np.full((3, 3), 1.0 / 18.0), abs=1e-14)

    def test_degenerate_triangle_rejected(self):
        mesh = domain3d.SurfaceMesh(
            vertices=np.array([[0.0, 0.5], [1.0, 0.5], [2.0, 0.5]]),
            triangles=np.array([[0, 1, 2]]),
            boundary_mask=np.zeros(3, dtype=bool),
            h0=1.0,
        )
        with pytest.raises(ValueError):
            fem.assemble(mesh)


class TestSymmetricSolver:
    def test_matches_lapack_on_random_matrix(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((60, 60))
        C = A + A.T
        lam, V = fem.symmetric_eig_lowest(C, 15)
        ref = np.linalg.eigvalsh(C)[:15]
        assert lam == pytest.approx(ref, rel=1e-12, abs=1e-12)
        assert np.abs(V.T @ V - np.eye(15)).max() < 1e-10
        resid = C @ V - V * lam
        assert np.abs(resid).max() < 1e-10 * np.abs(C).max()

    def test_repeated_eigenvalues_give_orthonormal_span(self):
        rng = np.random.default_rng(11)
        Q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        d = np.array([1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
        C = Q @ np.diag(d) @ Q.T
        lam, V = fem.symmetric_eig_lowest(C, 4)
        assert lam == pytest.approx(d[:4], rel=1e-11)
        assert np.abs(V.T @ V - np.eye(4)).max() < 1e-10
        # triple eigenspace recovered as a projector even though the
        # individual vectors are an arbitrary basis of it
        P = V[:, :3] @ V[:, :3].T
        P_ref = Q[:, :3] @ Q[:, :3].T
        assert np.abs(P - P_ref).max() < 1e-9

    def test_generalized_problem_matches_lapack(self, tiny_mesh):
        import scipy.linalg as sla

        K, M = fem.assemble(tiny_mesh)
        ref = sla.eigh(K, M, eigvals_only=True)[:8]
        basis = fem.solve_eig(K, M, tiny_mesh, n_modes=8)
        assert basis.lam2 == pytest.approx(ref, rel=1e-9)


def _jacobi_eigh(A, sweeps=30):
    # cyclic Jacobi rotations, plain python; independent of lapack
    A = A.copy()
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                off = max(off, abs(apq))
                if abs(apq) < 1e-14:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                if tau == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
        if off < 1e-13:
            break
    return np.diag(A).copy(), V


class TestAgainstJacobiRotations:
    def test_generalized_eigenvalues_match(self, tiny_mesh):
        mesh = tiny_mesh
        basis = fem.build_basis(mesh, n_modes=8)
        K, M = basis.stiffness, basis.mass
        idx = np.nonzero(~mesh.boundary_mask)[0]
        Kii = K[np.ix_(idx, idx)]
        Mii = M[np.ix_(idx, idx)]
        dm, Vm = _jacobi_eigh(Mii)
        assert dm.min() > 0.0
        half = Vm @ np.diag(dm ** -0.5) @ Vm.T
        dc, _ = _jacobi_eigh(half @ Kii @ half)
        ref = np.sort(dc)[:8]
        assert basis.lam2 == pytest.approx(ref, rel=1e-8)


class TestPointEvaluation:
    def test_vertex_values_reproduced(self, octant_small):
        _, mesh, basis = octant_small
        pick = np.arange(0, len(mesh.vertices), 37)
        vals = fem.eval_basis(basis, mesh.vertices[pick, 0],
                              mesh.vertices[pick, 1])
        assert vals == pytest.approx(basis.psi[pick], abs=1e-11)

    def test_interpolation_is_linear_inside_triangles(self, octant_small):
        _, mesh, basis = octant_small
        tri = mesh.triangles[50]
        corners = mesh.vertices[tri]
        w = np.array([0.2, 0.3, 0.5])
        p = w @ corners
        val = fem.eval_basis(basis, p[0], p[1])[0]
        assert val == pytest.approx(w @ basis.psi[tri], abs=1e-11)

    def test_gradient_matches_finite_differences(self, octant_small):
        _, mesh, basis = octant_small
        cent = mesh.vertices[mesh.triangles[100]].mean(axis=0)
        g = fem.eval_basis_gradient(basis, cent[0], cent[1])[0]
        eps = 1e-7
        for axis in range(2):
            dp = np.zeros(2)
            dp[axis] = eps
            up = fem.eval_basis(basis, *(cent + dp))[0]
            dn = fem.eval_basis(basis, *(cent - dp))[0]
            fd = (up - dn) / (2 * eps)
            assert g[:, axis] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_outside_point_raises(self, octant_small):
        _, _, basis = octant_small
        with pytest.raises(ValueError):
            fem.eval_basis(basis, -0.5, -0.5)
