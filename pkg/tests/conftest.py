import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridmapper.floorplan import GeneratorConfig, generate_floorplan


@pytest.fixture(scope="session")
def small_map():
    """One default-sized generated floorplan shared across tests."""
    return generate_floorplan(GeneratorConfig(seed=7))


@pytest.fixture(scope="session")
def map_pool():
    """A handful of generated floorplans for randomized checks."""
    return [generate_floorplan(GeneratorConfig(seed=s)) for s in range(8)]
