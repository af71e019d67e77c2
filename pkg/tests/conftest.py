import numpy as np
import pytest

from beamplate import tensors
from beamplate.mesh import CrossSection, build_multidomain_mesh

OMEGA_A = CrossSection(0.5, 0.5)
OMEGA_B = CrossSection(1.0, 1.0)


@pytest.fixture(scope="session")
def small_mesh():
    """Coarse multidomain mesh shared by unit tests."""
    return build_multidomain_mesh(
        OMEGA_A,
        OMEGA_B,
        beam_divisions=(2, 2, 6),
        plate_half_divisions=6,
        plate_nz=2,
        plate_grading=1.3,
    )


@pytest.fixture(scope="session")
def tiny_mesh():
    """Multidomain mesh with at most 200 displacement dofs."""
    mesh = build_multidomain_mesh(
        OMEGA_A,
        OMEGA_B,
        beam_divisions=(1, 1, 2),
        plate_half_divisions=2,
        plate_nz=1,
        plate_grading=1.0,
    )
    assert 3 * (mesh.beam.n_nodes + mesh.plate.n_nodes) <= 200
    return mesh


@pytest.fixture(scope="session")
def iso11():
    return tensors.isotropic(1.0, 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
