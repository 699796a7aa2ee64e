"""
Localizador instantáneo de direcciones de llegada.

Para cada bin tiempo-frecuencia se calcula el vector de pseudointensidad
Re(W*·[X, Y, Z]), se cuantiza su dirección al nodo más cercano de la rejilla de
Lebedev y se suma un peso max(γ, 0)/(1 + |C - R|)², donde R es el cociente de
energías (|X|²+|Y|²+|Z|²)/|W|² que vale C para una onda plana ideal.

El histograma esférico acumula las contribuciones de las últimas T tramas.
Cuando el VAD se activa se extraen las observaciones (máximos locales del
histograma normalizado y filtrado).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

try:
    from .config import LocalizerConfig
    from .frontend import FoaSpectrum
    from .geometry import direction_angles, direction_vector
    from .lebedev import SphericalGrid, get_grid
    from .vad import VadFrame
except ImportError:
    from config import LocalizerConfig
    from frontend import FoaSpectrum
    from geometry import direction_angles, direction_vector
    from lebedev import SphericalGrid, get_grid
    from vad import VadFrame

logger = logging.getLogger(__name__)


def pseudointensity(coefficients) -> np.ndarray:
    """
    Vector de pseudointensidad Re(W*·[X, Y, Z]).

    Args:
        coefficients: (W, X, Y, Z) complejos, forma (4,) o (4, K)

    Returns:
        Arreglo (3,) o (K, 3)
    """
    c = np.asarray(coefficients, dtype=complex)
    intensity = np.real(np.conj(c[0]) * c[1:4])
    return intensity.T if intensity.ndim > 1 else intensity


def plane_wave_ratio(coefficients, floor: float = 1e-12) -> Optional[float]:
    """
    Cociente (|X|² + |Y|² + |Z|²)/|W|² de un bin.

    Returns:
        El cociente, o None si |W|² <= floor (el bin se descarta)
    """
    ratios = plane_wave_ratios(np.asarray(coefficients, dtype=complex).reshape(4, 1), floor)
    return None if np.isnan(ratios[0]) else float(ratios[0])


def plane_wave_ratios(coefficients: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Versión vectorial de plane_wave_ratio: NaN donde |W|² <= floor."""
    power = np.abs(coefficients) ** 2
    w_power = power[0]
    ratios = np.full(w_power.shape, np.nan)
    valid = w_power > floor
    ratios[valid] = power[1:4, valid].sum(axis=0) / w_power[valid]
    return ratios


def pseudointensity_doa(coefficients) -> Optional[Tuple[float, float]]:
    """(azimut, elevación) del vector de pseudointensidad, o None si es nulo."""
    intensity = pseudointensity(coefficients)
    if not np.any(intensity):
        return None
    azimuth, elevation = direction_angles(intensity)
    return float(azimuth), float(elevation)


class SphericalHistogram:
    """
    Histograma sobre los nodos de la rejilla con ventana deslizante de T tramas.

    `ring` guarda la contribución de cada trama; el agregado es su suma por nodo.
    """

    def __init__(self, n_nodes: int, window_frames: int):
        if window_frames < 1:
            raise ValueError(f"window_frames debe ser >= 1 (recibido {window_frames})")
        self.n_nodes = n_nodes
        self.window_frames = window_frames
        self.ring = np.zeros((window_frames, n_nodes))
        self.position = 0
        self.frames = 0
        self.aggregate = np.zeros(n_nodes)

    def push(self, contribution: np.ndarray) -> None:
        """Inserta la contribución de una trama desalojando la más antigua."""
        contribution = np.asarray(contribution, dtype=float)
        if contribution.shape != (self.n_nodes,):
            raise ValueError(f"Contribución con forma {contribution.shape}, se esperaba ({self.n_nodes},)")
        self.ring[self.position] = contribution
        self.position = (self.position + 1) % self.window_frames
        self.frames += 1
        self.aggregate = self.ring.sum(axis=0)

    def clear(self) -> None:
        self.ring[:] = 0.0
        self.aggregate = np.zeros(self.n_nodes)
        self.position = 0


@dataclass
class Observation:
    """Dirección candidata (nodo de la rejilla) con su puntuación P_q."""

    azimuth: float
    elevation: float
    score: float
    node: int = -1

    @property
    def vector(self) -> np.ndarray:
        return direction_vector(self.azimuth, self.elevation)


def frame_contribution(frame: FoaSpectrum, vad: VadFrame, grid: SphericalGrid,
                       encoding_constant: float, floor: float = 1e-12) -> np.ndarray:
    """
    Pesos que una trama aporta a cada nodo de la rejilla.

    Returns:
        Arreglo (N,) no negativo
    """
    coefficients = frame.coefficients
    if coefficients.shape[1] != vad.gamma_bins.size:
        raise ValueError(
            f"La trama tiene {coefficients.shape[1]} bins pero el VAD {vad.gamma_bins.size}"
        )
    ratios = plane_wave_ratios(coefficients, floor)
    intensity = pseudointensity(coefficients).reshape(-1, 3)
    valid = ~np.isnan(ratios) & np.any(intensity != 0.0, axis=1)
    weights = np.maximum(vad.gamma_bins, 0.0) / (1.0 + np.abs(encoding_constant - ratios)) ** 2
    valid &= weights > 0.0
    if not np.any(valid):
        return np.zeros(grid.size)
    nodes = grid.quantize(intensity[valid])
    return np.bincount(nodes, weights=weights[valid], minlength=grid.size)


def accumulate(hist: SphericalHistogram, frame: FoaSpectrum, vad: VadFrame,
               grid: SphericalGrid, encoding_constant: float, floor: float = 1e-12) -> SphericalHistogram:
    """
    Suma la contribución de una trama al histograma y desaloja la trama más antigua.

    Args:
        hist: Histograma a actualizar (en sitio)
        frame: Espectro FOA de la trama
        vad: Resultado del VAD para la misma trama
        grid: Rejilla esférica
        encoding_constant: Constante C del formato FOA

    Returns:
        El mismo histograma
    """
    hist.push(frame_contribution(frame, vad, grid, encoding_constant, floor))
    return hist


def normalized_histogram(hist: SphericalHistogram) -> np.ndarray:
    """Valores min-max normalizados a [0, 1]; ceros si el histograma es constante."""
    values = hist.aggregate
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def local_maxima(values: np.ndarray, selected: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """
    Índices de los nodos seleccionados cuyo valor supera estrictamente al de
    todo vecino seleccionado (en empate gana el índice menor).
    """
    candidates = np.flatnonzero(selected)
    peaks = []
    for i in candidates:
        nb = neighbors[i]
        nb = nb[(nb != i) & selected[nb]]
        vi = values[i]
        vj = values[nb]
        if np.all((vi > vj) | ((vi == vj) & (i < nb))):
            peaks.append(i)
    return np.array(peaks, dtype=int)


def pick_observations(hist: SphericalHistogram, grid: SphericalGrid, q_max: int = 4,
                      select_threshold: float = 0.3, filter_variance: float = 0.2,
                      peak_normalize: bool = True,
                      filter_weights: Optional[np.ndarray] = None) -> List[Observation]:
    """
    Extrae hasta q_max observaciones del histograma.

    Pasos: normalización min-max, selección de nodos > umbral, filtro gaussiano
    normalizado sobre los K vecinos (los nodos no seleccionados aportan 0),
    máximos locales estrictos entre seleccionados, P_q = valor filtrado (opcionalmente
    reescalado por el máximo) acotado a [0, 1], orden descendente por P_q.

    Returns:
        Lista de Observation (vacía si el histograma es degenerado)
    """
    values = hist.aggregate
    if values.size == 0 or float(values.max()) <= float(values.min()):
        return []
    normalized = normalized_histogram(hist)
    selected = normalized > select_threshold
    if not np.any(selected):
        return []
    if filter_weights is None:
        filter_weights = grid.filter_weights(filter_variance)
    masked = np.where(selected, normalized, 0.0)
    filtered = np.sum(filter_weights * masked[grid.neighbors], axis=1)
    peaks = local_maxima(filtered, selected, grid.neighbors)
    if peaks.size == 0:
        return []
    scores = filtered[peaks]
    if peak_normalize:
        top = float(scores.max())
        if top > 0.0:
            scores = scores / top
    scores = np.clip(scores, 0.0, 1.0)
    order = np.argsort(-scores, kind='stable')[:q_max]
    return [
        Observation(float(grid.azimuth[peaks[k]]), float(grid.elevation[peaks[k]]), float(scores[k]), int(peaks[k]))
        for k in order
    ]


class DoaLocalizer:
    """Posee la rejilla y el histograma; acumula tramas y extrae observaciones."""

    def __init__(self, config: LocalizerConfig, encoding_constant: float = 3.0,
                 grid: Optional[SphericalGrid] = None):
        self.config = config
        self.encoding_constant = encoding_constant
        self.grid = grid if grid is not None else get_grid(config.filter_support)
        window = config.window_frames if config.window_frames > 0 else 50
        self.histogram = SphericalHistogram(self.grid.size, window)
        self._filter_weights = self.grid.filter_weights(config.filter_variance)

    def accumulate(self, frame: FoaSpectrum, vad: VadFrame) -> SphericalHistogram:
        return accumulate(self.histogram, frame, vad, self.grid, self.encoding_constant, self.config.power_floor)

    def pick(self) -> List[Observation]:
        observations = pick_observations(
            self.histogram, self.grid,
            q_max=self.config.max_observations,
            select_threshold=self.config.select_threshold,
            filter_variance=self.config.filter_variance,
            peak_normalize=self.config.peak_normalize,
            filter_weights=self._filter_weights,
        )
        logger.debug("%d observaciones", len(observations))
        return observations

    def normalized(self) -> np.ndarray:
        return normalized_histogram(self.histogram)
