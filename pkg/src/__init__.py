"""
TRAMP: localización instantánea de fuentes sonoras en FOA y seguimiento
multi-fuente con filtros de partículas.

NOTA: Estos son módulos simples en una carpeta; se pueden usar agregando src/
al path o instalando el proyecto con setup.py.

Módulos principales:
- frontend: lectura de WAV, codificación FOA y STFT
- vad: estimación del ruido y detección de actividad
- lebedev: rejilla esférica de 974 nodos
- localizer: pseudointensidad, histograma esférico y observaciones
- tracker: banco de filtros de partículas y ciclo de vida de fuentes
- simulator: escenas FOA sintéticas con referencia
- metrics: evaluación con asignación húngara
- serialize: JSON Lines / CSV / JSON
- cli: subcomandos track, simulate, eval y dump-histogram
"""

__version__ = "0.1.0"

# Agregar src/ al path automáticamente cuando se importa este módulo
from ._path_helper import add_src_to_path
add_src_to_path()

from errors import TrampError, UsageError, AudioIOError, ConfigError, AlignmentError
from config import (
    FrontendConfig,
    VadConfig,
    LocalizerConfig,
    TrackerConfig,
    PipelineConfig,
    load_config,
    load_pipeline_config,
    dump_config,
)
from frontend import (
    AudioBuffer,
    EncodingMatrix,
    FoaSpectrum,
    StftStream,
    encode_foa,
    load_encoding_matrix,
    read_wav,
    stft,
)
from vad import NoiseState, VadFrame, VoiceActivityDetector, update_noise, frame_vad, speech_presence
from lebedev import SphericalGrid, get_grid
from localizer import (
    DoaLocalizer,
    Observation,
    SphericalHistogram,
    accumulate,
    pick_observations,
    plane_wave_ratio,
    pseudointensity,
)
from tracker import (
    AssociationResult,
    TrackedSource,
    TrackFrame,
    Tracker,
    associate,
    observability,
    predict,
    resample,
    suppress_redundant,
)
from simulator import SceneSpec, SourceSpec, NoiseSpec, GroundTruth, load_scene_spec, synthesize, write_scene
from metrics import azimuth_error, elevation_error, hungarian, evaluate
from cli import main, run_track

__all__ = [
    '__version__',

    # Errores
    'TrampError', 'UsageError', 'AudioIOError', 'ConfigError', 'AlignmentError',

    # Configuración
    'FrontendConfig', 'VadConfig', 'LocalizerConfig', 'TrackerConfig', 'PipelineConfig',
    'load_config', 'load_pipeline_config', 'dump_config',

    # Frontend
    'AudioBuffer', 'EncodingMatrix', 'FoaSpectrum', 'StftStream',
    'encode_foa', 'load_encoding_matrix', 'read_wav', 'stft',

    # VAD
    'NoiseState', 'VadFrame', 'VoiceActivityDetector', 'update_noise', 'frame_vad', 'speech_presence',

    # Localizador
    'SphericalGrid', 'get_grid', 'DoaLocalizer', 'Observation', 'SphericalHistogram',
    'accumulate', 'pick_observations', 'plane_wave_ratio', 'pseudointensity',

    # Tracker
    'AssociationResult', 'TrackedSource', 'TrackFrame', 'Tracker',
    'associate', 'observability', 'predict', 'resample', 'suppress_redundant',

    # Simulador y evaluación
    'SceneSpec', 'SourceSpec', 'NoiseSpec', 'GroundTruth', 'load_scene_spec', 'synthesize', 'write_scene',
    'azimuth_error', 'elevation_error', 'hungarian', 'evaluate',

    # CLI
    'main', 'run_track',
]
