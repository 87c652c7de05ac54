import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles helper module

from qwtopo.data import RegionSpec, generate_dataset, sample_parameters, split
from qwtopo.model import CouplingParams
from qwtopo.topo import BZGrid
from qwtopo.walk import Domain, Lattice


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small 2-class momentum dataset (l=31) shared across smoke tests."""
    out = tmp_path_factory.mktemp("tiny_ds")
    region = RegionSpec(kind="whole", m_range=(-20.0, -10.5), t3_range=(-20.0, 20.0))
    params = sample_parameters(region, {0: 12, 1: 12}, CouplingParams(m=0.0),
                               seed=5, grid=BZGrid(64))
    manifest = generate_dataset(params, Lattice(31), Domain.MOMENTUM, out,
                                seed=5, region=region)
    manifest = split(manifest, seed=0)
    manifest.save(out / "manifest.json")
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
