import numpy as np
import pytest

import dnflow as d


@pytest.fixture(scope="session")
def e1():
    """Canonical singular-mobility triple: q=3, gamma=1/3."""
    return d.derive(4.0 / 3.0, 1.5, 3)


@pytest.fixture(scope="session")
def e2():
    """Canonical degenerate-mobility triple: q=3/2, gamma=3/5."""
    return d.derive(0.1, 3.0, 3)


@pytest.fixture(scope="session")
def grid_small(e1):
    return d.build_grid(3, 15.0, 96, 1.01)


@pytest.fixture(scope="session")
def ref_small(e1, grid_small):
    prof = d.match_grid_mass(e1, grid_small.centers, grid_small.volumes,
                             d.BarenblattProfile(e1, 1.0).mass)
    return d.ReferenceProfile(prof, grid_small)


@pytest.fixture(scope="session")
def grid_small2(e2):
    return d.build_grid(3, 12.0, 96, 1.01)


@pytest.fixture(scope="session")
def ref_small2(e2, grid_small2):
    prof = d.match_grid_mass(e2, grid_small2.centers, grid_small2.volumes, 1.5)
    return d.ReferenceProfile(prof, grid_small2)


def zero_mean_bump(ref, scale=1.0, r0=1.5, width=0.5):
    """Smooth zero-mean perturbation that decays like the profile."""
    grid = ref.grid
    psi = np.exp(-(((grid.centers - r0) / width) ** 2))
    base = ref.u_c
    psi = psi - float(grid.volumes @ (base * psi)) / float(grid.volumes @ base)
    return scale * base * psi
