"""
Simulador de escenas FOA sintéticas.

Cada fuente es una onda plana: W += p, X += √C·p·cosθ·cosφ, Y += √C·p·sinθ·cosφ,
Z += √C·p·sinφ, con (θ, φ) interpolados linealmente sobre su trayectoria. El
ruido opcional es blanco independiente por canal o difuso (64 ondas planas
independientes en direcciones de Fibonacci), escalado a la SNR pedida respecto de
la potencia de W de la mezcla.

Formato del archivo de escena (misma gramática clave-valor que la configuración):

    scene.duration = 10
    scene.sample_rate = 16000
    scene.seed = 7
    noise.type = diffuse_iso
    noise.snr_db = 20
    source.0.label = talker
    source.0.signal = speech_like_modulated_noise
    source.0.level_db = -20
    source.0.trajectory = 0:0:0, 10:90:0     # tiempo:azimut°:elevación°
    source.0.on_off = 0.5:4, 5:9.5
"""

import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.signal import chirp

try:
    from .config import FrontendConfig, parse_key_values, read_key_value_file
    from .errors import ConfigError
    from .frontend import AudioBuffer, frame_times, write_wav
    from .geometry import direction_vector, wrap_angle
    from .serialize import write_truth_csv
except ImportError:
    from config import FrontendConfig, parse_key_values, read_key_value_file
    from errors import ConfigError
    from frontend import AudioBuffer, frame_times, write_wav
    from geometry import direction_vector, wrap_angle
    from serialize import write_truth_csv

logger = logging.getLogger(__name__)

SIGNAL_TYPES = ('white_noise', 'speech_like_modulated_noise', 'sine_sweep')
SIGNAL_ALIASES = {'speech_like': 'speech_like_modulated_noise', 'white': 'white_noise', 'sweep': 'sine_sweep'}
NOISE_TYPES = ('none', 'white', 'diffuse_iso')
DIFFUSE_DIRECTIONS = 64
MODULATION_HZ = 4.0
MODULATION_DEPTH = 0.8


@dataclass
class SourceSpec:
    """Fuente de la escena; trayectoria en (tiempo s, θ rad, φ rad)."""

    label: str
    signal: str = 'white_noise'
    level_db: float = 0.0
    trajectory: List[Tuple[float, float, float]] = field(default_factory=lambda: [(0.0, 0.0, 0.0)])
    on_off: Optional[List[Tuple[float, float]]] = None

    def intervals(self, duration: float) -> List[Tuple[float, float]]:
        return self.on_off if self.on_off is not None else [(0.0, duration)]

    def is_active(self, t, duration: float):
        """Máscara de actividad (intervalos [inicio, fin))."""
        t = np.asarray(t, dtype=float)
        mask = np.zeros(t.shape, dtype=bool)
        for start, stop in self.intervals(duration):
            mask |= (t >= start) & (t < stop)
        return mask

    def direction_at(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """(θ, φ) interpolados linealmente; θ se desenvuelve entre puntos y se envuelve al final."""
        t = np.asarray(t, dtype=float)
        times = np.array([p[0] for p in self.trajectory])
        azimuths = np.unwrap(np.array([p[1] for p in self.trajectory]))
        elevations = np.array([p[2] for p in self.trajectory])
        if times.size == 1:
            return np.full(t.shape, wrap_angle(azimuths[0])), np.full(t.shape, elevations[0])
        return wrap_angle(np.interp(t, times, azimuths)), np.interp(t, times, elevations)


@dataclass
class NoiseSpec:
    type: str = 'none'
    snr_db: float = 20.0


@dataclass
class SceneSpec:
    """Descripción completa de una escena sintética."""

    duration: float
    sample_rate: int = 16000
    sources: List[SourceSpec] = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    encoding_constant: float = 3.0
    seed: int = 0

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def validate(self) -> None:
        if self.duration < 0:
            raise ConfigError(f"scene.duration debe ser >= 0 (recibido {self.duration})")
        if self.sample_rate <= 0:
            raise ConfigError(f"scene.sample_rate debe ser > 0 (recibido {self.sample_rate})")
        if self.encoding_constant <= 0:
            raise ConfigError("scene.encoding_constant debe ser > 0")
        if self.noise.type not in NOISE_TYPES:
            raise ConfigError(f"noise.type desconocido: {self.noise.type!r}")
        if not math.isfinite(self.noise.snr_db):
            raise ConfigError("noise.snr_db debe ser finito")
        labels = set()
        for source in self.sources:
            if source.label in labels:
                raise ConfigError(f"Etiqueta de fuente repetida: {source.label!r}")
            labels.add(source.label)
            if source.signal not in SIGNAL_TYPES:
                raise ConfigError(f"Fuente {source.label!r}: señal desconocida {source.signal!r}")
            if not math.isfinite(source.level_db):
                raise ConfigError(f"Fuente {source.label!r}: nivel no finito")
            _validate_trajectory(source, self.duration)
            for start, stop in source.intervals(self.duration):
                if stop < start:
                    raise ConfigError(f"Fuente {source.label!r}: intervalo on/off invertido ({start}, {stop})")


def _validate_trajectory(source: SourceSpec, duration: float) -> None:
    points = source.trajectory
    if not points:
        raise ConfigError(f"Fuente {source.label!r}: trayectoria vacía")
    times = [p[0] for p in points]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError(f"Fuente {source.label!r}: los tiempos de la trayectoria deben ser estrictamente crecientes")
    if len(points) > 1 and (times[0] > 1e-9 or times[-1] < duration - 1e-9):
        raise ConfigError(
            f"Fuente {source.label!r}: la trayectoria debe cubrir [0, {duration}] s "
            f"(cubre [{times[0]}, {times[-1]}])"
        )
    for _, _, elevation in points:
        if abs(elevation) > math.pi / 2 + 1e-12:
            raise ConfigError(f"Fuente {source.label!r}: elevación fuera de [-90°, 90°]")


@dataclass
class TruthFrame:
    """Posición de referencia de las fuentes activas en un hop."""

    time: float
    sources: Dict[str, Tuple[float, float]] = field(default_factory=dict)


@dataclass
class GroundTruth:
    """Registros por hop (tiempos de centro de trama de la configuración consumidora)."""

    frames: List[TruthFrame] = field(default_factory=list)

    def rows(self) -> List[Tuple[float, str, float, float]]:
        """Filas (tiempo, etiqueta, azimut rad, elevación rad) en orden temporal."""
        return [
            (frame.time, label, azimuth, elevation)
            for frame in self.frames
            for label, (azimuth, elevation) in frame.sources.items()
        ]

    @classmethod
    def from_rows(cls, rows) -> "GroundTruth":
        """Agrupa filas (tiempo, etiqueta, azimut, elevación) en registros por hop."""
        frames: Dict[float, TruthFrame] = {}
        for time, label, azimuth, elevation in rows:
            frame = frames.setdefault(float(time), TruthFrame(float(time)))
            frame.sources[label] = (float(azimuth), float(elevation))
        return cls([frames[t] for t in sorted(frames)])

    @property
    def labels(self) -> List[str]:
        seen = {}
        for frame in self.frames:
            for label in frame.sources:
                seen.setdefault(label, None)
        return list(seen)


def fibonacci_sphere(n: int) -> np.ndarray:
    """n direcciones casi uniformes (espiral de Fibonacci), forma (n, 3)."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    radius = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=1)


def source_rng(scene_seed: int, label: str) -> np.random.Generator:
    """Generador propio de cada fuente, derivado de la semilla de escena y la etiqueta."""
    return np.random.default_rng([scene_seed, zlib.crc32(label.encode('utf-8'))])


def source_signal(source: SourceSpec, n_samples: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """
    Señal de presión de una fuente con RMS 10^(nivel/20), antes de la compuerta on/off.
    """
    t = np.arange(n_samples) / float(sample_rate)
    if source.signal == 'white_noise':
        signal = rng.standard_normal(n_samples)
    elif source.signal == 'speech_like_modulated_noise':
        signal = rng.standard_normal(n_samples) * (1.0 + MODULATION_DEPTH * np.sin(2.0 * np.pi * MODULATION_HZ * t))
    elif source.signal == 'sine_sweep':
        if n_samples == 0:
            return np.zeros(0)
        t_end = max(t[-1], 1.0 / sample_rate)
        f_end = min(8000.0, 0.45 * sample_rate)
        signal = chirp(t, f0=100.0, t1=t_end, f1=f_end, method='logarithmic')
    else:
        raise ConfigError(f"Señal desconocida: {source.signal!r}")
    rms = float(np.sqrt(np.mean(signal ** 2))) if n_samples else 0.0
    if rms > 0.0:
        signal = signal / rms
    return signal * 10.0 ** (source.level_db / 20.0)


def encode_plane_wave(pressure: np.ndarray, azimuth, elevation, encoding_constant: float) -> np.ndarray:
    """Componentes FOA (4, n) de una onda plana con presión `pressure`."""
    gain = math.sqrt(encoding_constant)
    direction = direction_vector(azimuth, elevation)
    direction = np.broadcast_to(direction, pressure.shape + (3,))
    out = np.empty((4,) + pressure.shape)
    out[0] = pressure
    out[1:] = gain * pressure[None, :] * direction.T
    return out


def render_sources(spec: SceneSpec) -> np.ndarray:
    """Mezcla limpia (4, n) de todas las fuentes de la escena."""
    n = spec.n_samples
    t = np.arange(n) / float(spec.sample_rate)
    mixture = np.zeros((4, n))
    for source in spec.sources:
        pressure = source_signal(source, n, spec.sample_rate, source_rng(spec.seed, source.label))
        pressure = pressure * source.is_active(t, spec.duration)
        azimuth, elevation = source.direction_at(t)
        mixture += encode_plane_wave(pressure, azimuth, elevation, spec.encoding_constant)
    return mixture


def render_noise(spec: SceneSpec, mixture_power: float) -> np.ndarray:
    """Ruido (4, n) escalado a la SNR de la escena respecto de la potencia de W."""
    n = spec.n_samples
    if spec.noise.type == 'none' or n == 0:
        return np.zeros((4, n))
    rng = source_rng(spec.seed, '__noise__')
    if spec.noise.type == 'white':
        noise = rng.standard_normal((4, n))
    else:
        noise = np.zeros((4, n))
        for direction in fibonacci_sphere(DIFFUSE_DIRECTIONS):
            azimuth = math.atan2(direction[1], direction[0])
            elevation = math.asin(max(-1.0, min(1.0, direction[2])))
            noise += encode_plane_wave(rng.standard_normal(n), azimuth, elevation, spec.encoding_constant)
    reference = mixture_power if mixture_power > 0.0 else 1.0
    target = reference / 10.0 ** (spec.noise.snr_db / 10.0)
    current = float(np.mean(noise[0] ** 2))
    if current > 0.0:
        noise *= math.sqrt(target / current)
    return noise


def ground_truth(spec: SceneSpec, frontend: FrontendConfig) -> GroundTruth:
    """Referencia por hop con los tiempos de centro de trama de `frontend`."""
    frames = []
    for time in frame_times(spec.n_samples, frontend, spec.sample_rate):
        sources = {}
        for source in spec.sources:
            if source.is_active(time, spec.duration):
                azimuth, elevation = source.direction_at(time)
                sources[source.label] = (float(azimuth), float(elevation))
        frames.append(TruthFrame(float(time), sources))
    return GroundTruth(frames)


def synthesize(spec: SceneSpec, frontend: Optional[FrontendConfig] = None) -> Tuple[AudioBuffer, GroundTruth]:
    """
    Sintetiza la escena completa.

    Args:
        spec: Escena validada
        frontend: Configuración que define la rejilla de hops de la referencia

    Returns:
        (AudioBuffer FOA de 4 canales en orden W-X-Y-Z, GroundTruth)
    """
    spec.validate()
    frontend = frontend or FrontendConfig()
    mixture = render_sources(spec)
    mixture_power = float(np.mean(mixture[0] ** 2)) if spec.n_samples else 0.0
    mixture = mixture + render_noise(spec, mixture_power)
    logger.debug("Escena: %.2f s, %d fuentes, ruido %s", spec.duration, len(spec.sources), spec.noise.type)
    return AudioBuffer(spec.sample_rate, mixture), ground_truth(spec, frontend)


def write_scene(wav_path: Union[str, Path], truth_path: Union[str, Path],
                buffer: AudioBuffer, truth: GroundTruth) -> None:
    """Escribe el WAV FLOAT32 de 4 canales y el CSV de referencia."""
    write_wav(wav_path, buffer)
    write_truth_csv(truth_path, truth.rows())


def _parse_pairs(raw: str, arity: int, key: str) -> List[Tuple[float, ...]]:
    items = []
    for chunk in raw.split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(':')
        if len(parts) != arity:
            raise ConfigError(f"'{key}': se esperaban {arity} campos separados por ':' en {chunk!r}")
        try:
            items.append(tuple(float(p) for p in parts))
        except ValueError as e:
            raise ConfigError(f"'{key}': valor numérico inválido en {chunk!r}") from e
    return items


_SCENE_KEYS = {
    'scene.duration': ('duration', float),
    'scene.sample_rate': ('sample_rate', int),
    'scene.seed': ('seed', int),
    'scene.encoding_constant': ('encoding_constant', float),
}
_SOURCE_FIELDS = ('label', 'signal', 'level_db', 'trajectory', 'on_off')


def scene_from_entries(entries: List[Tuple[str, str, int]], source_name: str = '<escena>') -> SceneSpec:
    """Construye una SceneSpec desde pares clave-valor ya parseados."""
    values: Dict[str, object] = {'duration': None}
    noise = NoiseSpec()
    sources: Dict[int, Dict[str, str]] = {}
    for key, raw, line in entries:
        where = f"{source_name}:{line}"
        try:
            if key in _SCENE_KEYS:
                name, cast = _SCENE_KEYS[key]
                values[name] = cast(raw)
            elif key == 'noise.type':
                noise.type = raw
            elif key == 'noise.snr_db':
                noise.snr_db = float(raw)
            elif key.startswith('source.'):
                parts = key.split('.')
                if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in _SOURCE_FIELDS:
                    raise ConfigError(f"{where}: clave de fuente desconocida '{key}'")
                sources.setdefault(int(parts[1]), {})[parts[2]] = raw
            else:
                raise ConfigError(f"{where}: clave desconocida '{key}'")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{where}: valor inválido para '{key}': {raw!r}") from e

    if values['duration'] is None:
        raise ConfigError(f"{source_name}: falta scene.duration")
    duration = float(values['duration'])
    specs = []
    for index in sorted(sources):
        fields_ = sources[index]
        key = f"source.{index}"
        signal = fields_.get('signal', 'white_noise')
        signal = SIGNAL_ALIASES.get(signal, signal)
        try:
            level = float(fields_.get('level_db', '0'))
        except ValueError as e:
            raise ConfigError(f"'{key}.level_db': valor inválido") from e
        trajectory = [
            (t, math.radians(az), math.radians(el))
            for t, az, el in _parse_pairs(fields_.get('trajectory', '0:0:0'), 3, f"{key}.trajectory")
        ]
        on_off = None
        if 'on_off' in fields_:
            on_off = [(a, b) for a, b in _parse_pairs(fields_['on_off'], 2, f"{key}.on_off")]
        specs.append(SourceSpec(fields_.get('label', f"s{index}"), signal, level, trajectory, on_off))
    spec = SceneSpec(
        duration=duration,
        sample_rate=int(values.get('sample_rate', 16000)),
        sources=specs,
        noise=noise,
        encoding_constant=float(values.get('encoding_constant', 3.0)),
        seed=int(values.get('seed', 0)),
    )
    spec.validate()
    return spec


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    """Lee y valida un archivo de escena."""
    return scene_from_entries(read_key_value_file(path), source_name=str(path))


def parse_scene_text(text: str, source_name: str = '<escena>') -> SceneSpec:
    """Construye y valida una escena desde el texto clave-valor."""
    return scene_from_entries(parse_key_values(text, source=source_name), source_name=source_name)
