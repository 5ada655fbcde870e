import os
import sys

import numpy as np
import pytest

# Make the repository root importable the way main.py does
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from backend.src.simulation.noise import DeviceParams, NoiseModel  # noqa: E402
from backend.src.simulation.qops import basis_state, density  # noqa: E402
from backend.src.simulation.schedule import Timing  # noqa: E402


@pytest.fixture
def params():
    return DeviceParams.default()


@pytest.fixture
def device_model(params):
    return NoiseModel.from_params(params)


@pytest.fixture
def noiseless_model():
    return NoiseModel.noiseless()


@pytest.fixture
def timing():
    return Timing()


@pytest.fixture
def ideal_timing():
    return Timing(ideal_cpmg_pulses=True)


@pytest.fixture
def ground():
    return density(basis_state("000"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def random_density(rng):
    """Factory for random density matrices of a given dimension and rank."""

    def make(dim=8, rank=None):
        rank = rank or dim
        g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
        rho = g @ g.conj().T
        return rho / np.trace(rho).real

    return make
