"""
Pytest configuration and fixtures for kinetic-gmsfem evaluations.
"""

import numpy as np
import pytest

from evals.config import SMALL_EPSILON, SMALL_M, SMALL_MESH
from services.dg_fine import DGAssembler
from services.media import oscillatory_media
from services.mesh import build_nested_mesh
from services.ordinates import build_ordinates


@pytest.fixture
def rng():
    """Seeded generator so random-field tests are repeatable."""
    return np.random.default_rng(20240611)


@pytest.fixture
def small_mesh():
    return build_nested_mesh(*SMALL_MESH)


@pytest.fixture
def ords4():
    return build_ordinates(SMALL_M, "quarter_offset")


@pytest.fixture
def media():
    return oscillatory_media()


@pytest.fixture
def assembler(small_mesh, ords4, media):
    return DGAssembler(small_mesh, ords4, media, SMALL_EPSILON)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Route CLI output and cache into a temporary directory."""
    from config.settings import settings

    monkeypatch.setattr(settings, "output_dir", tmp_path)
    return tmp_path
