"""
Pytest configuration and fixtures for the channel simulator tests.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from chansim.gscm import ScenarioParameterTable
from chansim.scenario import CarrierSpec, LinkGeometry, MsVelocity, Position3D

DATA_DIR = Path(__file__).parent.parent / "data"


@pytest.fixture(scope="function")
def rng() -> np.random.Generator:
    """Seeded generator; every test gets a fresh, identical stream."""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def parameter_table() -> ScenarioParameterTable:
    """Scenario parameter table loaded from the data directory."""
    return ScenarioParameterTable.load()


@pytest.fixture(scope="function")
def uma_geometry() -> LinkGeometry:
    """UMa-like link: 25 m BS, 1.5 m MS about 126 m away, static."""
    return LinkGeometry.from_positions(Position3D(0.0, 0.0, 25.0), Position3D(120.0, 40.0, 1.5))


@pytest.fixture(scope="function")
def moving_geometry() -> LinkGeometry:
    """Same link with the MS walking along +x at 0.83 m/s."""
    return LinkGeometry.from_positions(
        Position3D(0.0, 0.0, 25.0), Position3D(120.0, 40.0, 1.5), MsVelocity(0.83, 0.0)
    )


@pytest.fixture(scope="function")
def carrier_28() -> CarrierSpec:
    """28 GHz carrier, 100 MHz bandwidth."""
    return CarrierSpec.from_ghz(28.0)


@pytest.fixture(scope="function")
def write_config(tmp_path: Path):
    """
    Write a run configuration to a temporary file.
    Pass a dict (serialized with indentation) or raw text.
    """
    def _write(content, name: str = "run.json") -> Path:
        path = tmp_path / name
        text = content if isinstance(content, str) else json.dumps(content, indent=2)
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="function")
def minimal_config(tmp_path: Path) -> dict:
    """Smallest valid configuration, writing into the test's temporary directory."""
    return {
        "scenario": {"name": "UMa", "state": "NLOS"},
        "carrier": {"f_ghz": 28.0},
        "run": {"seed": 7, "output": str(tmp_path / "out")},
    }
