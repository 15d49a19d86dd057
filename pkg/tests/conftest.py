import numpy as np
import pytest

from pulseforge.core import DecoherenceRates, ground_state
from pulseforge.coherence import CoherenceTarget, design_coherence_pulses
from pulseforge.lindblad import evolve
from pulseforge.population import PopulationTarget, design_population_pulses


@pytest.fixture(scope="session")
def device_rates():
    return DecoherenceRates.device()


@pytest.fixture(scope="session")
def zero_rates():
    return DecoherenceRates(0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def pop_design(device_rates):
    return design_population_pulses(PopulationTarget(0.3, 0.2, 3.0), device_rates)


@pytest.fixture(scope="session")
def pop_traj(pop_design, device_rates):
    return evolve(ground_state(), pop_design.pulses, device_rates)


@pytest.fixture(scope="session")
def coh_design(device_rates):
    return design_coherence_pulses(CoherenceTarget(0.2, 0.3, 3.0), device_rates)


@pytest.fixture(scope="session")
def coh_traj(coh_design, device_rates):
    return evolve(ground_state(), coh_design.pulses, device_rates)


def random_family(rng, n):
    """Random (f1, f2, h1, h2, h3) tuples; not necessarily positive."""
    f = rng.dirichlet([1.0, 1.0, 1.0], size=n)
    h = rng.uniform(-0.3, 0.3, size=(n, 3))
    return np.column_stack([f[:, 0], f[:, 1], h])
