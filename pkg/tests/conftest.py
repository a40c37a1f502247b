"""Shared fixtures: small deterministic maps and footprints for fast tests."""

import math

import numpy as np
import pytest

from sonarloc import SemanticMap, SonarFootprint, WorldSpec, generate_world
from sonarloc.geomap import STRUCTURE, WATER


@pytest.fixture(scope="session")
def small_fp():
    """Coarse fan grid that keeps per-crop work tiny."""
    return SonarFootprint(max_range=10.0, fov=math.radians(90.0),
                          range_bins=32, bearing_bins=48)


@pytest.fixture(scope="session")
def water_map():
    """40 x 40 m of open water at 0.5 m/px."""
    cells = np.full((80, 80), WATER, dtype=np.uint8)
    return SemanticMap(cells=cells, resolution=0.5)


@pytest.fixture(scope="session")
def wall_map():
    """80 x 80 m map with a solid Structure wall occupying x >= 40 m."""
    cells = np.full((160, 160), WATER, dtype=np.uint8)
    cells[:, 80:] = STRUCTURE
    return SemanticMap(cells=cells, resolution=0.5)


@pytest.fixture(scope="session")
def near_wall_map():
    """30 x 30 m map with the wall at x >= 10 m, matching the worked geometry case."""
    cells = np.full((60, 120), WATER, dtype=np.uint8)
    cells[:, 20:] = STRUCTURE
    return SemanticMap(cells=cells, resolution=0.5)


@pytest.fixture(scope="session")
def marina_map():
    """Default synthetic marina, fixed seed."""
    return generate_world(WorldSpec(seed=3))
