"""Shared fixtures: meshes and eigenbases reused across test modules."""

import pytest

from tricva.model import CorrelationTriple
from tricva import domain3d, fem


def _basis(rho, n_points, n_modes=160):
    # deep basis so the pricing legs are mode-converged and the
    # series-depth sensitivity checks (50 vs 80 terms) can slice it
    spec = domain3d.build_domain(CorrelationTriple(*rho))
    mesh = domain3d.build_mesh(spec, n_points=n_points, seed=0)
    return spec, fem.build_basis(mesh, n_modes=n_modes)


@pytest.fixture(scope="session")
def octant_basis():
    """Uncorrelated drivers, the reference octant domain."""
    return _basis((0.0, 0.0, 0.0), 1500)


@pytest.fixture(scope="session")
def basis_pos_moderate():
    """All-positive correlations (0.8, 0.2, 0.5)."""
    return _basis((0.8, 0.2, 0.5), 1800)


@pytest.fixture(scope="session")
def basis_mixed_neg():
    """Mixed-sign correlations (0.2, -0.1, -0.6)."""
    return _basis((0.2, -0.1, -0.6), 1600)


@pytest.fixture(scope="session")
def basis_table1():
    """Correlations used in the worked three-name example (0.8, 0.5, 0.3)."""
    return _basis((0.8, 0.5, 0.3), 1500)
