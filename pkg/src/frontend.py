"""
Frontend de señal: lectura de audio multicanal, codificación FOA opcional y
STFT de los cuatro canales FOA (W, X, Y, Z) restringida a la banda de análisis.

Orden interno de canales: (W, X, Y, Z). Los archivos AmbiX (W, Y, Z, X) se
permutan al cargarlos.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Tuple, Union

import numpy as np
import soundfile as sf
from scipy.signal import get_window

try:
    from .config import FrontendConfig
    from .errors import AudioIOError, ConfigError
except ImportError:
    from config import FrontendConfig
    from errors import AudioIOError, ConfigError

logger = logging.getLogger(__name__)

FOA_CHANNELS = ('W', 'X', 'Y', 'Z')
# índice de la columna AmbiX que alimenta cada canal interno
AMBIX_TO_WXYZ = (0, 3, 1, 2)
ACCEPTED_SUBTYPES = ('PCM_16', 'PCM_24', 'FLOAT')

_SF_ERRORS = (RuntimeError, OSError, getattr(sf, 'SoundFileError', RuntimeError))


@dataclass
class AudioBuffer:
    """Audio multicanal en memoria, forma (canales, muestras)."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 2:
            raise ConfigError(f"AudioBuffer espera un arreglo 2D, recibido ndim={self.samples.ndim}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate debe ser positivo (recibido {self.sample_rate})")
        if self.samples.shape[0] < 1:
            raise ConfigError("AudioBuffer necesita al menos un canal")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / float(self.sample_rate)


@dataclass
class EncodingMatrix:
    """Matriz estática 4 x M que convierte M canales crudos en FOA."""

    gains: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        if self.gains.ndim != 2 or self.gains.shape[0] != 4:
            raise ConfigError(f"La matriz de codificación debe tener 4 filas, forma recibida {self.gains.shape}")
        if not np.all(np.isfinite(self.gains)):
            raise ConfigError("La matriz de codificación contiene valores no finitos")

    @property
    def cols(self) -> int:
        return self.gains.shape[1]


def load_encoding_matrix(path: Union[str, Path]) -> EncodingMatrix:
    """
    Lee una matriz de codificación en texto plano.

    Formato: primera línea "filas columnas", luego los valores reales en orden
    por filas separados por espacios en blanco.
    """
    path = Path(path)
    try:
        tokens = path.read_text(encoding='utf-8').split()
    except OSError as e:
        raise AudioIOError(f"No se pudo leer la matriz '{path}': {e}") from e
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]], dtype=float)
    except (IndexError, ValueError) as e:
        raise ConfigError(f"Matriz de codificación mal formada en '{path}': {e}") from e
    if values.size != rows * cols:
        raise ConfigError(
            f"'{path}': se esperaban {rows * cols} valores para {rows}x{cols}, se encontraron {values.size}"
        )
    return EncodingMatrix(values.reshape(rows, cols))


def encode_foa(buffer: AudioBuffer, matrix: EncodingMatrix) -> AudioBuffer:
    """
    Aplica la matriz de codificación muestra a muestra.

    Returns:
        AudioBuffer de 4 canales con la misma longitud y frecuencia de muestreo
    """
    if matrix.cols != buffer.channels:
        raise ConfigError(
            f"La matriz tiene {matrix.cols} columnas pero el audio tiene {buffer.channels} canales"
        )
    return AudioBuffer(buffer.sample_rate, matrix.gains @ buffer.samples)


def reorder_channels(samples: np.ndarray, channel_order: str) -> np.ndarray:
    """Lleva un bloque (4, n) al orden interno W-X-Y-Z."""
    if channel_order == 'wxyz':
        return samples
    if channel_order == 'ambix':
        if samples.shape[0] != 4:
            raise ConfigError(f"El orden AmbiX requiere 4 canales, recibidos {samples.shape[0]}")
        return samples[list(AMBIX_TO_WXYZ)]
    raise ConfigError(f"Orden de canales desconocido: {channel_order!r}")


def _check_subtype(path: Path):
    try:
        info = sf.info(str(path))
    except _SF_ERRORS as e:
        raise AudioIOError(f"No se pudo abrir '{path}': {e}") from e
    if info.subtype not in ACCEPTED_SUBTYPES:
        raise AudioIOError(
            f"'{path}': formato de muestra {info.subtype} no soportado (se aceptan {', '.join(ACCEPTED_SUBTYPES)})"
        )
    return info


def wav_info(path: Union[str, Path]) -> Tuple[int, int, int]:
    """Devuelve (sample_rate, canales, muestras) de un WAV aceptado."""
    info = _check_subtype(Path(path))
    return info.samplerate, info.channels, info.frames


def read_wav(path: Union[str, Path], channel_order: str = 'wxyz') -> AudioBuffer:
    """
    Lee un WAV completo (PCM16/PCM24/FLOAT32) como flotantes.

    Args:
        path: Ruta del archivo
        channel_order: 'wxyz' o 'ambix' (solo se permuta si hay 4 canales)
    """
    path = Path(path)
    _check_subtype(path)
    try:
        data, sample_rate = sf.read(str(path), dtype='float64', always_2d=True)
    except _SF_ERRORS as e:
        raise AudioIOError(f"No se pudo leer '{path}': {e}") from e
    samples = data.T
    if samples.shape[0] == 4:
        samples = reorder_channels(samples, channel_order)
    return AudioBuffer(sample_rate, samples)


def read_wav_blocks(path: Union[str, Path], block_samples: int,
                    channel_order: str = 'wxyz') -> Iterator[np.ndarray]:
    """
    Lee un WAV por bloques de `block_samples` muestras, forma (canales, n).

    La memoria usada no depende de la duración del archivo.
    """
    path = Path(path)
    _check_subtype(path)
    try:
        with sf.SoundFile(str(path)) as handle:
            for block in handle.blocks(blocksize=block_samples, dtype='float64', always_2d=True):
                samples = block.T
                if samples.shape[0] == 4:
                    samples = reorder_channels(samples, channel_order)
                yield samples
    except _SF_ERRORS as e:
        raise AudioIOError(f"Error leyendo '{path}': {e}") from e


def write_wav(path: Union[str, Path], buffer: AudioBuffer) -> None:
    """Escribe un AudioBuffer como WAV FLOAT32."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), buffer.samples.T, buffer.sample_rate, subtype='FLOAT')
    except _SF_ERRORS as e:
        raise AudioIOError(f"No se pudo escribir '{path}': {e}") from e


def analysis_window(window: str, n: int) -> np.ndarray:
    """Ventana de análisis de longitud n (Hann periódica o rectangular)."""
    if window == 'rectangular':
        return np.ones(n)
    if window == 'hann':
        return get_window('hann', n, fftbins=True)
    raise ConfigError(f"Ventana desconocida: {window!r}")


def frame_spectrum(frame: np.ndarray, window: np.ndarray) -> np.ndarray:
    """
    Transformada de una trama (canales, N) enventanada, sin relleno de ceros.

    Returns:
        Arreglo complejo (canales, N//2 + 1)
    """
    return np.fft.rfft(frame * window, axis=-1)


@dataclass
class FoaSpectrum:
    """Valores STFT de los cuatro canales FOA de una trama, dentro de la banda."""

    frame_index: int
    time: float
    frequencies: np.ndarray
    coefficients: np.ndarray  # (4, K) complejo, orden W-X-Y-Z

    @property
    def W(self) -> np.ndarray:
        return self.coefficients[0]

    @property
    def X(self) -> np.ndarray:
        return self.coefficients[1]

    @property
    def Y(self) -> np.ndarray:
        return self.coefficients[2]

    @property
    def Z(self) -> np.ndarray:
        return self.coefficients[3]

    @property
    def n_bins(self) -> int:
        return self.frequencies.size

    def bins(self) -> List[Tuple[float, complex, complex, complex, complex]]:
        """Vista por bin: (frecuencia, W, X, Y, Z)."""
        return [
            (float(f), complex(w), complex(x), complex(y), complex(z))
            for f, w, x, y, z in zip(self.frequencies, *self.coefficients)
        ]


class StftStream:
    """
    STFT incremental: se empujan bloques (4, n) y se reciben las tramas completas.

    Conserva solo las muestras necesarias para la siguiente trama; la trama
    parcial final nunca se emite.
    """

    def __init__(self, config: FrontendConfig, sample_rate: int):
        config.validate(sample_rate)
        self.config = config
        self.sample_rate = sample_rate
        self.frame_samples = config.frame_samples(sample_rate)
        self.hop_samples = config.hop_samples(sample_rate)
        self.window = analysis_window(config.window, self.frame_samples)
        freqs = np.fft.rfftfreq(self.frame_samples, 1.0 / sample_rate)
        tol = 1e-9 * sample_rate
        self.band = np.flatnonzero((freqs >= config.f_lo - tol) & (freqs <= config.f_hi + tol))
        self.frequencies = freqs[self.band]
        self._pending = np.zeros((4, 0))
        self._pending_start = 0
        self._next_start = 0
        self._frame_index = 0
        logger.debug(
            "STFT: N=%d hop=%d bins=%d (%.1f-%.1f Hz)",
            self.frame_samples, self.hop_samples, self.band.size, config.f_lo, config.f_hi,
        )

    @property
    def hop_seconds(self) -> float:
        return self.hop_samples / float(self.sample_rate)

    def push(self, block: np.ndarray) -> List[FoaSpectrum]:
        block = np.atleast_2d(np.asarray(block, dtype=float))
        if block.shape[0] != 4:
            raise ConfigError(f"La STFT FOA requiere 4 canales, recibidos {block.shape[0]}")
        self._pending = np.concatenate([self._pending, block], axis=1)
        frames = []
        end = self._pending_start + self._pending.shape[1]
        while self._next_start + self.frame_samples <= end:
            offset = self._next_start - self._pending_start
            frame = self._pending[:, offset:offset + self.frame_samples]
            spectrum = frame_spectrum(frame, self.window)[:, self.band]
            time = (self._next_start + self.frame_samples / 2.0) / self.sample_rate
            frames.append(FoaSpectrum(self._frame_index, time, self.frequencies, spectrum))
            self._frame_index += 1
            self._next_start += self.hop_samples
        drop = min(self._next_start - self._pending_start, self._pending.shape[1])
        if drop > 0:
            self._pending = self._pending[:, drop:]
            self._pending_start += drop
        return frames


def frame_count(n_samples: int, frame_samples: int, hop_samples: int) -> int:
    """Número de tramas completas: floor((len - N) / hop) + 1, o 0 si len < N."""
    if n_samples < frame_samples:
        return 0
    return (n_samples - frame_samples) // hop_samples + 1


def frame_times(n_samples: int, config: FrontendConfig, sample_rate: int) -> np.ndarray:
    """Tiempos de centro de trama para un archivo de n_samples muestras."""
    n_frame = config.frame_samples(sample_rate)
    hop = config.hop_samples(sample_rate)
    count = frame_count(n_samples, n_frame, hop)
    return (np.arange(count) * hop + n_frame / 2.0) / sample_rate


def stft(buffer: AudioBuffer, config: FrontendConfig) -> List[FoaSpectrum]:
    """
    STFT completa de un buffer FOA de 4 canales.

    Returns:
        Lista de FoaSpectrum (vacía si el buffer es más corto que una trama)
    """
    if buffer.channels != 4:
        raise ConfigError(f"stft requiere 4 canales FOA, recibidos {buffer.channels}")
    stream = StftStream(config, buffer.sample_rate)
    return stream.push(buffer.samples)
