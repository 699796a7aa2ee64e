"""
Fixtures compartidas de las pruebas.

Los módulos de src/ son archivos simples: se agrega src/ al path antes de importarlos.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Agregar src al path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / 'src'))

from config import FrontendConfig, LocalizerConfig, PipelineConfig, TrackerConfig
from lebedev import get_grid


@pytest.fixture(scope='session')
def grid():
    return get_grid(50)


@pytest.fixture
def frontend_config():
    return FrontendConfig()


@pytest.fixture
def localizer_config():
    return LocalizerConfig()


@pytest.fixture
def tracker_config():
    return TrackerConfig()


@pytest.fixture
def pipeline_config():
    return PipelineConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def scenes_dir():
    return project_root / 'scenes'
