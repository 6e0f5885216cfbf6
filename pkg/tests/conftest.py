from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gradedcavity.geometry import LatticeSpec

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
FIXTURES = CONFIGS / "fixtures"


@pytest.fixture
def fig1a_spec() -> LatticeSpec:
    return LatticeSpec(a=305.0, n_rows=32, n_cols=25, r_over_a_center=0.2296,
                       r_over_a_edge_x=0.2918, r_over_a_edge_y=0.2918, wavelength=1035.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
