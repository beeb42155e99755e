"""
Pytest configuration and shared fixtures for smtrt tests.
"""
import json
import sys
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

# Add parent directory to path to import the package without installing it
sys.path.insert(0, str(Path(__file__).parent.parent))

from smtrt.bench import equilibrium_spec, gray_slab_spec, marshak_spec
from smtrt.driver import SolverConfig
from smtrt.fem1d import Mesh1D
from smtrt.quadrature import gauss_legendre_sn
from smtrt.spectral import GroupStructure

FIXTURES_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    """Seeded generator so randomized checks are reproducible."""
    return np.random.default_rng(20240917)


@pytest.fixture
def s2():
    return gauss_legendre_sn(2)


@pytest.fixture
def s6():
    return gauss_legendre_sn(6)


@pytest.fixture
def uniform_mesh():
    """Eight equal elements on [0, 1]."""
    return Mesh1D.uniform(0.0, 1.0, 8)


@pytest.fixture
def larsen_groups():
    """33 logarithmic groups from 1e-2 eV to 300 keV."""
    return GroupStructure.logarithmic(1e-2, 3e5, 33)


@pytest.fixture
def marshak_problem():
    """Factory for a coarse Marshak problem."""
    def _build(n_elements: int = 8, sn: int = 4):
        return marshak_spec().build(n_elements=n_elements, sn=sn)
    return _build


@pytest.fixture
def equilibrium_problem():
    """Factory for an equilibrium slab at temperature T."""
    def _build(T: float = 100.0, n_elements: int = 6, groups=None):
        return equilibrium_spec(T=T, groups=groups).build(n_elements=n_elements)
    return _build


@pytest.fixture
def thin_slab_problem():
    """Optically thin constant-opacity gray slab."""
    return gray_slab_spec(sigma=0.1, length=1.0, t_final=0.01, sn=4).build(n_elements=10)


@pytest.fixture
def solver_config():
    """Factory for SolverConfig with test-friendly overrides."""
    def _build(method: str = "consistent", **overrides):
        return SolverConfig(method=method, **overrides)
    return _build


@pytest.fixture
def minimal_config() -> Dict[str, Any]:
    """Smallest valid run configuration."""
    return {"problem": "marshak", "method": "consistent", "elements": 32, "dt": 4e-3}


@pytest.fixture
def small_run_config(tmp_path) -> Dict[str, Any]:
    """Equilibrium run that finishes in a few steps."""
    return {
        "problem": "equilibrium",
        "problem_options": {"T": 50.0, "t_final": 0.012},
        "method": "consistent",
        "elements": 4,
        "dt": 4e-3,
        "snapshots": [0.004, 0.012],
        "probes": [0.01, 0.04],
        "output_dir": str(tmp_path / "out"),
    }


@pytest.fixture
def temp_config_dir(tmp_path):
    """Provide a temporary directory for config files."""
    config_dir = tmp_path / "configs"
    config_dir.mkdir()
    return config_dir


@pytest.fixture
def create_config_file(temp_config_dir):
    """Factory fixture to create config files in temp directory."""
    def _create_config(filename: str, data) -> Path:
        filepath = temp_config_dir / filename
        with open(filepath, 'w') as f:
            if isinstance(data, str):
                f.write(data)
            else:
                json.dump(data, f, indent=2)
        return filepath
    return _create_config


# Helper functions for test assertions

def assert_relative_close(actual, expected, rtol: float, label: str = "value") -> None:
    """Assert ||actual - expected|| <= rtol ||expected|| for arrays or scalars."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = np.linalg.norm(expected)
    err = np.linalg.norm(actual - expected)
    assert err <= rtol * max(scale, 1e-300), \
        f"{label}: relative error {err / max(scale, 1e-300):.3e} exceeds {rtol:.1e}"


def assert_positive(values, label: str = "values") -> None:
    """Assert every entry is strictly positive."""
    values = np.asarray(values)
    assert np.all(values > 0.0), f"{label}: minimum {values.min():.3e} is not positive"
