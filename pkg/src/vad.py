"""
Detector de actividad de voz sobre el canal W.

Estimador del ruido: periodograma suavizado exponencialmente por bin combinado
con un seguimiento del mínimo en una ventana deslizante (1.5 s por defecto),
compensado por un factor de sesgo. La potencia de ruido es el mínimo entre el
periodograma suavizado y el mínimo compensado.

El seguimiento solo avanza en ausencia de voz: cuando el periodograma suavizado
supera la estimación previa en más de `presence_db` (media de la SNR por bin),
la ventana de mínimos queda congelada y el ruido solo puede subir a
`rise` por trama. Así una fuente sostenida no se absorbe en el ruido. Durante las
primeras `warmup_frames` tramas se asume que solo hay ruido.

Decisión por trama: SNR a posteriori por bin γ = |W|²/σ² - 1, integrada sobre la
banda (suma normalizada por el ancho de banda) y comparada con un umbral en dB.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

try:
    from .config import VadConfig
except ImportError:
    from config import VadConfig

logger = logging.getLogger(__name__)


@dataclass
class NoiseState:
    """
    Estado por bin del estimador de ruido.

    `history` es un buffer circular (window_frames x K) con los periodogramas
    suavizados recientes; las filas aún no escritas valen +inf.
    """

    n_bins: int
    window_frames: int
    smoothing: float = 0.8
    bias: float = 1.5
    floor: float = 1e-12
    presence_db: float = 3.0
    warmup_frames: int = 25
    rise: float = 10.0 ** (0.1 * 0.02 / 10.0)
    speech_present: bool = False
    smoothed: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    history: Optional[np.ndarray] = None
    position: int = 0
    frames: int = 0

    def __post_init__(self):
        if self.window_frames < 1:
            raise ValueError(f"window_frames debe ser >= 1 (recibido {self.window_frames})")
        if self.history is None:
            self.history = np.full((self.window_frames, self.n_bins), np.inf)
        if self.noise is None:
            self.noise = np.full(self.n_bins, self.floor)

    @classmethod
    def from_config(cls, config: VadConfig, n_bins: int) -> 'NoiseState':
        window = config.min_window_frames if config.min_window_frames > 0 else 75
        state = cls(n_bins=n_bins, window_frames=window, smoothing=config.smoothing,
                    bias=config.bias, floor=config.floor, presence_db=config.presence_db)
        if config.warmup_frames > 0:
            state.warmup_frames = config.warmup_frames
        if config.rise_factor > 0:
            state.rise = config.rise_factor
        return state

    @property
    def tracked_minimum(self) -> np.ndarray:
        """Mínimo del periodograma suavizado sobre las tramas vistas en la ventana."""
        return self.history.min(axis=0)


@dataclass
class VadFrame:
    """Resultado del VAD para una trama."""

    frame_index: int
    gamma_bins: np.ndarray = field(repr=False)
    gamma_frame: float
    active: bool

    @property
    def positive_gamma(self) -> np.ndarray:
        """max(γ, 0) por bin, la forma en que se consume en el histograma."""
        return np.maximum(self.gamma_bins, 0.0)

    @property
    def gamma_frame_db(self) -> float:
        return float(10.0 * np.log10(self.gamma_frame + 1e-12))


def _periodogram(w_bins: Sequence[complex]) -> np.ndarray:
    w = np.asarray(w_bins, dtype=complex)
    return (w.real ** 2 + w.imag ** 2).astype(float)


def speech_presence(state: NoiseState, smoothed: np.ndarray) -> bool:
    """
    Indica si el periodograma suavizado está por encima de la estimación de
    ruido vigente (media de max(S/σ² - 1, 0) frente a `presence_db`).
    """
    if smoothed.size == 0:
        return False
    ratio = smoothed / np.maximum(state.noise, state.floor)
    snr = float(np.mean(np.maximum(ratio - 1.0, 0.0)))
    return bool(10.0 * np.log10(snr + state.floor) >= state.presence_db)


def update_noise(state: NoiseState, w_bins: Sequence[complex]) -> NoiseState:
    """
    Actualiza la estimación de potencia de ruido con una trama del canal W.

    Con presencia de voz la ventana de mínimos no avanza y el ruido queda
    acotado por su valor previo multiplicado por `rise`.

    Args:
        state: Estado a actualizar (se modifica en sitio)
        w_bins: Valores complejos de W en los bins de la banda

    Returns:
        El mismo estado, actualizado
    """
    power = _periodogram(w_bins)
    if power.size != state.n_bins:
        raise ValueError(f"Se esperaban {state.n_bins} bins, recibidos {power.size}")
    if state.smoothed is None:
        state.smoothed = power.copy()
    else:
        state.smoothed = state.smoothing * state.smoothed + (1.0 - state.smoothing) * power
    state.frames += 1
    state.speech_present = state.frames > state.warmup_frames and speech_presence(state, state.smoothed)
    if state.speech_present:
        held = np.minimum(state.noise * state.rise, state.smoothed)
        state.noise = np.maximum(held, state.floor)
        return state
    state.history[state.position] = state.smoothed
    state.position = (state.position + 1) % state.window_frames
    compensated = state.bias * state.tracked_minimum
    state.noise = np.maximum(np.minimum(state.smoothed, compensated), state.floor)
    return state


def frame_vad(state: NoiseState, w_bins: Sequence[complex], threshold_db: float = 7.0) -> VadFrame:
    """
    Calcula las SNR a posteriori y la decisión binaria de una trama.

    La integral sobre la banda se realiza como suma de max(γ, 0)·Δf dividida por
    el ancho cubierto (K·Δf), es decir, la media de max(γ, 0) sobre los bins.

    Args:
        state: Estado de ruido ya actualizado con esta trama
        w_bins: Valores complejos de W en los bins de la banda
        threshold_db: Umbral de la SNR de trama

    Returns:
        VadFrame con γ por bin (acotado inferiormente en -1), SNR de trama y decisión
    """
    power = _periodogram(w_bins)
    frame_index = max(state.frames - 1, 0)
    if power.size == 0:
        return VadFrame(frame_index, power, 0.0, False)
    noise = np.maximum(state.noise, state.floor)
    gamma = np.maximum(power / noise - 1.0, -1.0)
    gamma_frame = float(np.mean(np.maximum(gamma, 0.0)))
    active = bool(10.0 * np.log10(gamma_frame + state.floor) >= threshold_db)
    return VadFrame(frame_index, gamma, gamma_frame, active)


class VoiceActivityDetector:
    """Envoltorio que posee el NoiseState y procesa tramas en orden."""

    def __init__(self, config: VadConfig, n_bins: int):
        self.config = config
        self.state = NoiseState.from_config(config, n_bins)
        self.active_frames = 0

    def process(self, w_bins: Sequence[complex]) -> VadFrame:
        update_noise(self.state, w_bins)
        result = frame_vad(self.state, w_bins, self.config.threshold_db)
        if result.active:
            self.active_frames += 1
        return result

    @property
    def activation_rate(self) -> float:
        if self.state.frames == 0:
            return 0.0
        return self.active_frames / float(self.state.frames)
