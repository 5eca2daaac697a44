"""P1 finite elements for the spherical-surface eigenproblem.

The angular operator separates in the chart (phi, theta): stiffness uses
the metric weights 1/sin(theta) on phi-derivatives and sin(theta) on
theta-derivatives, mass carries sin(theta). Dirichlet rows (all chart
edges) are eliminated, the generalized problem is reduced by a Cholesky
factor of the mass block, and the standard symmetric problem is solved
in-repo: Householder tridiagonalization, implicit-shift QL for the
spectrum, inverse iteration for the requested lowest eigenvectors. The
returned basis is mass-orthonormal with each mode's surface integral
made non-negative.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded, solve_triangular
from scipy.spatial import Delaunay as _Delaunay

from .domain3d import SurfaceMesh


def _triangle_geometry(mesh):
    v = mesh.vertices
    t = mesh.triangles
    p1, p2, p3 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    a2 = ((p2[:, 0] - p1[:, 0]) * (p3[:, 1] - p1[:, 1])
          - (p3[:, 0] - p1[:, 0]) * (p2[:, 1] - p1[:, 1]))  # signed, 2A
    if np.any(np.abs(a2) == 0.0):
        raise ValueError("mesh has a zero-area triangle; mass would be "
                         "singular")
    # hat-function gradients, rows are (d/dphi, d/dtheta)
    gphi = np.stack([p2[:, 1] - p3[:, 1],
                     p3[:, 1] - p1[:, 1],
                     p1[:, 1] - p2[:, 1]], axis=1) / a2[:, None]
    gth = np.stack([p3[:, 0] - p2[:, 0],
                    p1[:, 0] - p3[:, 0],
                    p2[:, 0] - p1[:, 0]], axis=1) / a2[:, None]
    return p1, p2, p3, 0.5 * np.abs(a2), gphi, gth


def _assemble_full(mesh, quadrature="centroid", weighted=True):
    """K and M over all vertices, boundary rows included."""
    if quadrature not in ("centroid", "midedge"):
        raise ValueError("quadrature must be 'centroid' or 'midedge'")
    p1, p2, p3, area, gphi, gth = _triangle_geometry(mesh)
    theta = np.stack([p1[:, 1], p2[:, 1], p3[:, 1]], axis=1)

    if quadrature == "centroid":
        s = np.sin(theta.mean(axis=1)) if weighted \
            else np.ones(len(theta))
        ke = area[:, None, None] * (
            gphi[:, :, None] * gphi[:, None, :] / s[:, None, None]
            + gth[:, :, None] * gth[:, None, :] * s[:, None, None])
        me = (area * s / 9.0)[:, None, None] * np.ones((1, 3, 3))
    else:
        mid = 0.5 * np.stack([theta[:, 0] + theta[:, 1],
                              theta[:, 1] + theta[:, 2],
                              theta[:, 2] + theta[:, 0]], axis=1)
        sq = np.sin(mid) if weighted else np.ones_like(mid)
        hats = np.array([[0.5, 0.5, 0.0],
                         [0.0, 0.5, 0.5],
                         [0.5, 0.0, 0.5]])
        wsum = sq.mean(axis=1)
        winv = (1.0 / sq).mean(axis=1)
        ke = area[:, None, None] * (
            gphi[:, :, None] * gphi[:, None, :] * winv[:, None, None]
            + gth[:, :, None] * gth[:, None, :] * wsum[:, None, None])
        me = area[:, None, None] / 3.0 * np.einsum(
            "tq,qi,qj->tij", sq, hats, hats)

    n = len(mesh.vertices)
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    t = mesh.triangles
    for i in range(3):
        for j in range(3):
            np.add.at(K, (t[:, i], t[:, j]), ke[:, i, j])
            np.add.at(M, (t[:, i], t[:, j]), me[:, i, j])
    return K, M


def assemble(mesh, quadrature="centroid", weighted=True):
    """Stiffness and mass over the free (interior) vertices.

    Dirichlet rows and columns are eliminated. The weighted flag exists
    for tests: False replaces the sin(theta) metric by 1, turning K into
    the plain flat-triangle P1 form.
    """
    K, M = _assemble_full(mesh, quadrature, weighted)
    idx = np.nonzero(~mesh.boundary_mask)[0]
    return K[np.ix_(idx, idx)], M[np.ix_(idx, idx)]


def _householder_tridiagonalize(C):
    """Reduce a symmetric matrix to tridiagonal form in place.

    Returns the diagonal, subdiagonal, and the reflector data (vectors
    in the strict lower triangle of the work matrix plus scales) needed
    to back-transform eigenvectors.
    """
    A = np.array(C, dtype=float, copy=True)
    n = A.shape[0]
    betas = np.zeros(n)
    sub = np.zeros(n - 1)
    for k in range(n - 2):
        x = A[k + 1:, k]
        nx = math.sqrt(float(x @ x))
        if nx == 0.0:
            sub[k] = 0.0
            continue
        alpha = -nx if x[0] >= 0 else nx
        v = x.copy()
        v[0] -= alpha
        vv = float(v @ v)
        if vv == 0.0:
            sub[k] = alpha
            continue
        beta = 2.0 / vv
        B = A[k + 1:, k + 1:]
        p = beta * (B @ v)
        p -= (0.5 * beta * float(p @ v)) * v
        B -= np.outer(p, v) + np.outer(v, p)
        sub[k] = alpha
        A[k + 1:, k] = v      # reflector stored where zeros belong
        betas[k] = beta
    if n >= 2:
        sub[n - 2] = A[n - 1, n - 2]
    return np.diag(A).copy(), sub, A, betas


def _apply_reflectors(work, betas, V):
    """Back-transform tridiagonal eigenvectors to the original frame."""
    n = work.shape[0]
    for k in range(n - 3, -1, -1):
        if betas[k] == 0.0:
            continue
        v = work[k + 1:, k]
        V[k + 1:, :] -= np.outer(v, betas[k] * (v @ V[k + 1:, :]))
    return V


def _ql_implicit_eigenvalues(d, e, max_sweeps=50):
    """All eigenvalues of a symmetric tridiagonal matrix.

    Implicit-shift QL with deflation; values only, ascending.
    """
    d = np.array(d, dtype=float, copy=True)
    n = len(d)
    ev = np.append(np.array(e, dtype=float, copy=True), 0.0)
    eps = np.finfo(float).eps
    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(ev[m]) <= eps * dd + 1e-300:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise ArithmeticError("QL sweep failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * ev[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + ev[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            for i in range(m - 1, l - 1, -1):
                f = s * ev[i]
                b = c * ev[i]
                r = math.hypot(f, g)
                ev[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    ev[m] = 0.0
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            else:
                d[l] -= p
                ev[l] = g
                ev[m] = 0.0
    d.sort()
    return d


def _tridiag_eigenvectors(d, e, lam, cluster_rtol=1e-6):
    """Inverse iteration on the tridiagonal for the given eigenvalues.

    Shifted solves from a fixed random start; vectors inside a
    degenerate cluster are orthogonalized against each other, making
    the basis there an arbitrary orthonormal one.
    """
    n = len(d)
    k = len(lam)
    rng = np.random.default_rng(0x5eed)
    V = np.empty((n, k))
    scale = max(abs(lam[0]), abs(lam[-1]), 1.0)
    ab = np.zeros((3, n))
    start = 0
    while start < k:
        stop = start + 1
        while (stop < k
               and lam[stop] - lam[stop - 1] <= cluster_rtol * abs(
                   lam[stop]) + 1e-300):
            stop += 1
        for j in range(start, stop):
            # spread shifts inside the cluster so solves separate
            mu = lam[j] + (j - start) * 1e-12 * scale
            ab[0, 1:] = e
            ab[1, :] = d - mu
            ab[2, :-1] = e
            x = rng.standard_normal(n)
            for _ in range(3):
                for v in V[:, start:j].T:
                    x -= (v @ x) * v
                try:
                    x = solve_banded((1, 1), ab, x)
                except np.linalg.LinAlgError:
                    ab[1, :] += 1e-10 * scale
                    x = solve_banded((1, 1), ab, x)
                x /= math.sqrt(float(x @ x))
            for v in V[:, start:j].T:
                x -= (v @ x) * v
            x /= math.sqrt(float(x @ x))
            V[:, j] = x
        start = stop
    return V


def symmetric_eig_lowest(C, k):
    """k smallest eigenpairs of a dense symmetric matrix.

    Householder tridiagonalization, implicit-shift QL for the full
    spectrum, inverse iteration for the requested eigenvectors.
    """
    n = C.shape[0]
    if k > n:
        raise ValueError("more eigenpairs requested than the dimension")
    if n == 1:
        return np.array([C[0, 0]]), np.ones((1, 1))
    d, e, work, betas = _householder_tridiagonalize(C)
    lam_all = _ql_implicit_eigenvalues(d, e)
    lam = lam_all[:k]
    V = _tridiag_eigenvectors(d, e, lam)
    V = _apply_reflectors(work, betas, V)
    # guard against drift across near-degenerate pairs
    for j in range(V.shape[1]):
        for i in range(j):
            V[:, j] -= (V[:, i] @ V[:, j]) * V[:, i]
        V[:, j] /= math.sqrt(float(V[:, j] @ V[:, j]))
    return lam, V


@dataclass
class EigenBasis:
    """Discrete eigenpairs of the surface operator.

    psi holds vertex values of each mode (zero on the boundary), columns
    mass-orthonormal. s_n is the surface integral of each mode, used as
    the source weight in survival expansions; signs are fixed so it is
    non-negative. stiffness and mass keep the full (all-vertex) forms so
    boundary fluxes can be recovered variationally.
    """
    mesh: SurfaceMesh
    lam2: np.ndarray       # (k,) ascending
    psi: np.ndarray        # (n_vertices, k)
    s_n: np.ndarray        # (k,)
    quadrature: str
    stiffness: np.ndarray = field(repr=False, default=None)
    mass: np.ndarray = field(repr=False, default=None)
    _locator: object = field(repr=False, default=None, compare=False)

    @property
    def n_modes(self):
        return len(self.lam2)

    @property
    def nu(self):
        """Radial Bessel orders sqrt(lam2 + 1/4)."""
        return np.sqrt(self.lam2 + 0.25)


def solve_eig(K, M, mesh, n_modes=50, quadrature="centroid"):
    """Lowest generalized eigenpairs with Dirichlet chart edges.

    K and M are the free-vertex matrices from assemble (same quadrature
    setting); the mesh supplies the boundary layout for the caches.
    """
    idx = np.nonzero(~mesh.boundary_mask)[0]
    if n_modes > len(idx):
        raise ValueError("mesh too coarse for %d modes" % n_modes)
    if K.shape != (len(idx), len(idx)):
        raise ValueError("matrices do not match the mesh free vertices")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as err:
        raise ValueError("mass matrix not positive definite; broken "
                         "mesh") from err
    Y = solve_triangular(L, K, lower=True)
    C = solve_triangular(L, Y.T, lower=True)
    C = 0.5 * (C + C.T)
    lam2, E = symmetric_eig_lowest(C, n_modes)
    psi_in = solve_triangular(L.T, E, lower=False)

    Kf, Mf = _assemble_full(mesh, quadrature)
    n = len(mesh.vertices)
    psi = np.zeros((n, n_modes))
    psi[idx] = psi_in
    s_n = (Mf @ psi).sum(axis=0)
    flip = s_n < 0
    # ambiguous when a mode has zero net mass; anchor on its first
    # nonvanishing vertex value instead
    tiny = np.abs(s_n) < 1e-12
    for j in np.nonzero(tiny)[0]:
        lead = psi[np.nonzero(np.abs(psi[:, j]) > 1e-12)[0][0], j]
        flip[j] = lead < 0
    psi[:, flip] *= -1.0
    s_n[flip] *= -1.0
    s_n[tiny] = np.abs(s_n[tiny])
    return EigenBasis(mesh=mesh, lam2=lam2, psi=psi, s_n=s_n,
                      quadrature=quadrature, stiffness=Kf, mass=Mf)


def build_basis(mesh, n_modes=50, quadrature="centroid"):
    """Assemble and solve in one step."""
    K, M = assemble(mesh, quadrature)
    return solve_eig(K, M, mesh, n_modes=n_modes, quadrature=quadrature)


class _Locator:
    """Maps chart points to containing triangles with barycentrics.

    Rebuilds the Delaunay hull of the mesh vertices; kept triangles are
    a subset of it, so interior queries resolve to valid triples.
    """

    def __init__(self, mesh):
        self.tri = _Delaunay(mesh.vertices)

    def locate(self, pts):
        pts = np.atleast_2d(pts)
        s = self.tri.find_simplex(pts)
        miss = s < 0
        if np.any(miss):
            s2 = self.tri.find_simplex(pts[miss], bruteforce=True, tol=1e-9)
            s[miss] = s2
        if np.any(s < 0):
            raise ValueError("query point outside the chart hull")
        verts = self.tri.simplices[s]
        T = self.tri.transform[s]
        b = np.einsum("nij,nj->ni", T[:, :2, :],
                      pts - T[:, 2, :])
        bary = np.column_stack([b, 1.0 - b.sum(axis=1)])
        return verts, bary, T


def _locator(basis):
    if basis._locator is None:
        basis._locator = _Locator(basis.mesh)
    return basis._locator


def eval_basis(basis, phi, theta):
    """Mode values at chart points; (npts, n_modes)."""
    pts = np.column_stack([np.ravel(phi), np.ravel(theta)])
    verts, bary, _ = _locator(basis).locate(pts)
    return np.einsum("nj,njk->nk", bary, basis.psi[verts])


def eval_basis_gradient(basis, phi, theta):
    """Chart-coordinate mode gradients at points; (npts, n_modes, 2).

    Piecewise constant per triangle: last axis is (d/dphi, d/dtheta).
    """
    pts = np.column_stack([np.ravel(phi), np.ravel(theta)])
    verts, _, T = _locator(basis).locate(pts)
    gb = np.empty((len(pts), 3, 2))
    gb[:, 0, :] = T[:, 0, :]
    gb[:, 1, :] = T[:, 1, :]
    gb[:, 2, :] = -T[:, 0, :] - T[:, 1, :]
    return np.einsum("njd,njk->nkd", gb, basis.psi[verts])
