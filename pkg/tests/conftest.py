import numpy as np
import pytest

from vfpns import spatial_spectral as sp
from vfpns.params import ModelParams
from vfpns.state_energy import SystemState
from vfpns.velocity_basis import enumerate_truncation


def random_state(grid, trunc, eps, rng, band=None):
    """Real random state on modes with every |m_axis| <= band (default n/4), L^2 norm eps."""
    band = grid.n // 4 if band is None else band
    mask = np.all(np.abs(grid.mode_numbers) <= band, axis=0)

    def field(lead):
        return np.where(mask, sp.transform(grid, rng.standard_normal(lead + grid.shape)), 0)

    state = SystemState(grid, trunc, field((len(trunc),)), field(()), field((grid.dim,)))
    return state.scaled(eps / np.sqrt(grid.l2_sq(state.stack())))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def grid3():
    return sp.make_grid(3, 8)


@pytest.fixture(scope="session")
def trunc3():
    return enumerate_truncation(3, 4)
