"""
Configuración del pipeline TRAMP.

Formato de archivo: líneas planas `clave = valor` con prefijos de sección
separados por puntos, por ejemplo:

    # análisis STFT
    frontend.frame_len = 0.04
    tracker.max_sources = 4
    seed = 1234

El archivo se parsea con una gramática Lark (la misma que usan los archivos de
escena del simulador). Cada constante publicada tiene una clave con su valor por
defecto, de modo que `config/tramp.conf` funciona como registro de parámetros.

Precedencia: valores por defecto < archivo (--config o TRAMP_CONFIG) <
entorno (TRAMP_SEED) < flags de línea de comandos.
"""

import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from lark import Lark, Transformer
from lark.exceptions import LarkError

try:
    from .errors import ConfigError
except ImportError:
    from errors import ConfigError

logger = logging.getLogger(__name__)


# Gramática Lark para archivos clave-valor
KEY_VALUE_GRAMMAR = r"""
start: (_NL | entry _NL)*

entry: KEY "=" VALUE

KEY: /[A-Za-z0-9_]+(\.[A-Za-z0-9_]+)*/
VALUE: /[^\s#][^\n#]*/
COMMENT: /#[^\n]*/
_NL: /\r?\n/

%ignore /[\t\f\r ]+/
%ignore COMMENT
"""


class KeyValueTransformer(Transformer):
    """Convierte el árbol Lark en una lista de (clave, valor, línea)."""

    def start(self, entries):
        return list(entries)

    def entry(self, children):
        key_token, value_token = children
        return (str(key_token), str(value_token).strip(), key_token.line)


_kv_parser = None


def get_kv_parser() -> Lark:
    """Obtiene una instancia singleton del parser clave-valor."""
    global _kv_parser
    if _kv_parser is None:
        _kv_parser = Lark(KEY_VALUE_GRAMMAR, parser='lalr', transformer=KeyValueTransformer())
    return _kv_parser


def parse_key_values(text: str, source: str = '<texto>') -> List[Tuple[str, str, int]]:
    """
    Parsea un texto clave-valor.

    Args:
        text: Contenido del archivo
        source: Nombre usado en los mensajes de error

    Returns:
        Lista de tuplas (clave, valor, número de línea) en orden de aparición
    """
    if not text.endswith('\n'):
        text += '\n'
    try:
        return get_kv_parser().parse(text)
    except LarkError as e:
        raise ConfigError(f"{source}: sintaxis inválida: {e}") from e


def read_key_value_file(path: Union[str, Path]) -> List[Tuple[str, str, int]]:
    """Lee y parsea un archivo clave-valor."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"No se pudo leer el archivo de configuración '{path}': {e}") from e
    return parse_key_values(text, source=str(path))


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on', 'si', 'sí'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"valor booleano inválido: {value!r}")


@dataclass
class FrontendConfig:
    """Parámetros del análisis STFT de los canales FOA."""

    frame_len: float = 0.04
    overlap: float = 0.5
    f_lo: float = 400.0
    f_hi: float = 7000.0
    window: str = 'hann'
    channel_order: str = 'wxyz'
    encoding_constant: float = 3.0

    def frame_samples(self, sample_rate: int) -> int:
        return int(round(self.frame_len * sample_rate))

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.frame_samples(sample_rate) * (1.0 - self.overlap))))

    def hop_seconds(self, sample_rate: int) -> float:
        return self.hop_samples(sample_rate) / float(sample_rate)

    def validate(self, sample_rate: int) -> None:
        if sample_rate <= 0:
            raise ConfigError(f"sample_rate debe ser positivo (recibido {sample_rate})")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError(f"frontend.overlap debe estar en [0, 1) (recibido {self.overlap})")
        if not 0.0 < self.f_lo < self.f_hi <= sample_rate / 2.0:
            raise ConfigError(
                f"Se requiere 0 < f_lo < f_hi <= {sample_rate / 2.0} Hz "
                f"(recibido f_lo={self.f_lo}, f_hi={self.f_hi})"
            )
        if self.frame_samples(sample_rate) < 16:
            raise ConfigError(
                f"La trama debe tener al menos 16 muestras "
                f"(frame_len={self.frame_len} s a {sample_rate} Hz)"
            )
        if self.window not in ('hann', 'rectangular'):
            raise ConfigError(f"frontend.window desconocida: {self.window!r}")
        if self.channel_order not in ('wxyz', 'ambix'):
            raise ConfigError(f"frontend.channel_order desconocido: {self.channel_order!r}")
        if self.encoding_constant <= 0:
            raise ConfigError(f"frontend.encoding_constant debe ser > 0 (recibido {self.encoding_constant})")


@dataclass
class VadConfig:
    """Parámetros del VAD con seguimiento de mínimos del ruido."""

    threshold_db: float = 7.0
    smoothing: float = 0.8
    min_window: float = 1.5
    bias: float = 1.5
    floor: float = 1e-12
    presence_db: float = 3.0
    warmup: float = 0.5
    noise_rise_db: float = 0.1
    # derivados en bind()
    min_window_frames: int = 0
    warmup_frames: int = 0
    rise_factor: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError(f"vad.smoothing debe estar en [0, 1) (recibido {self.smoothing})")
        if self.min_window <= 0 or self.bias <= 0 or self.floor <= 0:
            raise ConfigError("vad.min_window, vad.bias y vad.floor deben ser positivos")
        if self.warmup < 0 or self.noise_rise_db < 0:
            raise ConfigError("vad.warmup y vad.noise_rise_db no pueden ser negativos")


@dataclass
class LocalizerConfig:
    """Parámetros del histograma esférico y de la selección de picos."""

    window_seconds: float = 1.0
    select_threshold: float = 0.3
    filter_variance: float = 0.2
    filter_support: int = 50
    max_observations: int = 4
    peak_normalize: bool = True
    power_floor: float = 1e-12
    # derivado en bind()
    window_frames: int = 0

    def validate(self) -> None:
        if self.window_seconds <= 0:
            raise ConfigError(f"localizer.window_seconds debe ser > 0 (recibido {self.window_seconds})")
        if not 0.0 <= self.select_threshold < 1.0:
            raise ConfigError(f"localizer.select_threshold debe estar en [0, 1) (recibido {self.select_threshold})")
        if self.filter_variance <= 0:
            raise ConfigError("localizer.filter_variance debe ser > 0")
        if not 1 <= self.filter_support <= 974:
            raise ConfigError(f"localizer.filter_support debe estar en [1, 974] (recibido {self.filter_support})")
        if self.max_observations < 1:
            raise ConfigError("localizer.max_observations debe ser >= 1")


@dataclass
class TrackerConfig:
    """Constantes del banco de filtros de partículas."""

    dt: float = 0.02
    langevin_alpha: float = 2.0
    langevin_beta: float = 0.04
    langevin_a: Optional[float] = None
    langevin_b: Optional[float] = None
    radius: float = 1.0
    n_particles: int = 300
    max_sources: int = 4
    max_observations: int = 4
    enable_threshold: float = 0.3
    new_source_threshold: float = 0.8
    hangover: float = 0.1
    deletion_delay: float = 0.2
    merge_angle_deg: float = 5.0
    merge_factor: float = 0.95
    resample_fraction: float = 0.7
    likelihood_variance: float = 0.008
    velocity_factor: float = 0.2
    false_alarm_density: float = 1.0 / (4.0 * math.pi)
    new_source_density: float = 1.0 / (4.0 * math.pi)
    prior_false_alarm: float = 0.5
    prior_new_source: float = 0.05
    exist_factor: float = 0.5
    act_smoothing: float = 0.4
    act_offset: float = 0.3
    act_base: float = 0.15
    act_gain: float = 0.85
    init_p_act: float = 0.5
    floor: float = 1e-12

    @property
    def a(self) -> float:
        """Coeficiente de amortiguamiento de Langevin."""
        if self.langevin_a is not None:
            return self.langevin_a
        return math.exp(-self.langevin_alpha * self.dt)

    @property
    def b(self) -> float:
        """Coeficiente de excitación de Langevin."""
        if self.langevin_b is not None:
            return self.langevin_b
        return self.langevin_beta * math.sqrt(max(0.0, 1.0 - self.a ** 2))

    def validate(self) -> None:
        if self.dt <= 0:
            raise ConfigError(f"tracker.dt debe ser > 0 (recibido {self.dt})")
        if self.radius <= 0:
            raise ConfigError("tracker.radius debe ser > 0")
        if self.n_particles < 1:
            raise ConfigError("tracker.n_particles debe ser >= 1")
        if self.max_sources < 1 or self.max_observations < 1:
            raise ConfigError("tracker.max_sources y tracker.max_observations deben ser >= 1")
        probabilities = {
            'enable_threshold': self.enable_threshold,
            'new_source_threshold': self.new_source_threshold,
            'merge_factor': self.merge_factor,
            'resample_fraction': self.resample_fraction,
            'prior_false_alarm': self.prior_false_alarm,
            'prior_new_source': self.prior_new_source,
            'init_p_act': self.init_p_act,
        }
        for name, value in probabilities.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"tracker.{name} debe estar en [0, 1] (recibido {value})")
        if self.hangover < 0 or self.deletion_delay < 0 or self.merge_angle_deg < 0:
            raise ConfigError("tracker.hangover, deletion_delay y merge_angle_deg deben ser >= 0")
        if self.likelihood_variance <= 0:
            raise ConfigError("tracker.likelihood_variance debe ser > 0")


@dataclass
class PipelineConfig:
    """Configuración completa: frontend, VAD, localizador, tracker y semilla."""

    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    localizer: LocalizerConfig = field(default_factory=LocalizerConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    seed: int = 0

    def bind(self, sample_rate: int) -> 'PipelineConfig':
        """
        Valida la configuración para una frecuencia de muestreo y deriva los
        valores cruzados (ΔT del tracker = hop, T del histograma = 1 s / hop).

        Returns:
            Nueva PipelineConfig con los campos derivados completos
        """
        self.frontend.validate(sample_rate)
        self.vad.validate()
        self.localizer.validate()
        hop = self.frontend.hop_seconds(sample_rate)
        vad = replace(
            self.vad,
            min_window_frames=max(1, int(round(self.vad.min_window / hop))),
            warmup_frames=max(1, int(round(self.vad.warmup / hop))),
            rise_factor=10.0 ** (self.vad.noise_rise_db * hop / 10.0),
        )
        localizer = replace(
            self.localizer,
            window_frames=max(1, int(round(self.localizer.window_seconds / hop))),
        )
        tracker = replace(self.tracker, dt=hop, max_observations=self.localizer.max_observations)
        tracker.validate()
        return replace(self, vad=vad, localizer=localizer, tracker=tracker)


SECTIONS = ('frontend', 'vad', 'localizer', 'tracker')
DERIVED_KEYS = {
    'vad.min_window_frames', 'vad.warmup_frames', 'vad.rise_factor',
    'localizer.window_frames', 'tracker.dt',
}


def _convert(raw: str, current: Any, key: str) -> Any:
    try:
        if isinstance(current, bool):
            return parse_bool(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float) or current is None:
            if current is None and raw.lower() in ('none', ''):
                return None
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"Valor inválido para '{key}': {raw!r} ({e})") from e


def apply_overrides(config: PipelineConfig, overrides: Dict[str, str], source: str = '<overrides>') -> PipelineConfig:
    """
    Aplica pares clave-valor (claves con puntos) sobre una configuración.

    Args:
        config: Configuración base (se modifica en sitio)
        overrides: Diccionario clave -> valor en texto
        source: Origen para los mensajes de error

    Returns:
        La misma configuración, actualizada
    """
    for key, raw in overrides.items():
        if key == 'seed':
            config.seed = _convert(raw, config.seed, key)
            continue
        section_name, _, attr = key.partition('.')
        if section_name not in SECTIONS or not attr:
            raise ConfigError(f"{source}: clave desconocida '{key}'")
        section = getattr(config, section_name)
        names = {f.name for f in fields(section)}
        if attr not in names:
            raise ConfigError(f"{source}: clave desconocida '{key}'")
        if key in DERIVED_KEYS:
            logger.warning("%s: '%s' se deriva del frontend y será recalculado", source, key)
        setattr(section, attr, _convert(raw, getattr(section, attr), key))
    return config


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """
    Carga una configuración desde archivo (o los valores por defecto si path es None).
    """
    config = PipelineConfig()
    if path is None:
        return config
    entries = read_key_value_file(path)
    overrides = {}
    for key, value, line in entries:
        if key in overrides:
            logger.debug("%s:%d: '%s' redefinida", path, line, key)
        overrides[key] = value
    return apply_overrides(config, overrides, source=str(path))


def load_pipeline_config(path: Optional[Union[str, Path]] = None, use_env: bool = True) -> PipelineConfig:
    """
    Resuelve la configuración completa: archivo explícito o TRAMP_CONFIG, y
    TRAMP_SEED desde el entorno (se carga .env si existe).
    """
    if use_env:
        load_dotenv()
        if path is None and os.getenv('TRAMP_CONFIG'):
            path = os.getenv('TRAMP_CONFIG')
    config = load_config(path)
    if use_env and os.getenv('TRAMP_SEED'):
        apply_overrides(config, {'seed': os.getenv('TRAMP_SEED')}, source='TRAMP_SEED')
    return config


def dump_config(config: PipelineConfig) -> str:
    """Serializa la configuración al formato clave-valor (sin campos derivados)."""
    lines = []
    for section_name in SECTIONS:
        section = getattr(config, section_name)
        lines.append(f"# {section_name}")
        for f in fields(section):
            key = f"{section_name}.{f.name}"
            if key in DERIVED_KEYS:
                continue
            value = getattr(section, f.name)
            if value is None:
                text = 'none'
            elif isinstance(value, bool):
                text = 'true' if value else 'false'
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key} = {text}")
        lines.append('')
    lines.append(f"seed = {config.seed}")
    return '\n'.join(lines) + '\n'
