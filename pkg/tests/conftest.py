import pytest

from matspec.ensembles import ip_2d, kesten_1d, kesten_affine_1d, similarity_2d
from matspec.projective import PROJECTIVE, build_grid
from matspec.spectrum import KSolver, solve_alpha


@pytest.fixture(scope="session")
def kesten():
    return kesten_1d()


@pytest.fixture(scope="session")
def kesten_affine():
    return kesten_affine_1d()


@pytest.fixture(scope="session")
def similarity():
    return similarity_2d()


@pytest.fixture(scope="session")
def ip():
    return ip_2d()


@pytest.fixture(scope="session")
def ip_solver(ip):
    """Shared 256-node solver for the d=2 reference ensemble."""
    return KSolver(ip, build_grid(2, 256, PROJECTIVE))


@pytest.fixture(scope="session")
def ip_alpha(ip, ip_solver):
    return solve_alpha(ip, solver=ip_solver)


@pytest.fixture(scope="session")
def kesten_bank_small():
    from matspec.recursion import sample_stationary

    return sample_stationary(kesten_affine_1d(), 400, 200_000, seed=20240601)
