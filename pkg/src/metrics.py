"""
Métricas de evaluación de pistas.

Protocolo: para cada par (trayectoria de referencia, pista estimada) se calcula
el error medio de azimut sobre los hops en que ambas coexisten; la asignación
óptima uno a uno se obtiene con el algoritmo húngaro y el error de la grabación
es la media de los errores de los pares asignados. La elevación se trata igual.

Los pares sin solapamiento temporal llevan un coste centinela (1e6) y nunca
forman parte del informe.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

try:
    from .errors import AlignmentError
    from .simulator import GroundTruth
    from .tracker import TrackFrame
except ImportError:
    from errors import AlignmentError
    from simulator import GroundTruth
    from tracker import TrackFrame

logger = logging.getLogger(__name__)

SENTINEL_COST = 1e6


def azimuth_error(theta_est, theta_ref):
    """
    Error angular de azimut en grados, min(|Δθ|, 2π - |Δθ|).

    Args:
        theta_est, theta_ref: Azimuts en radianes (escalares o arreglos)
    """
    delta = np.abs(np.mod(np.asarray(theta_est, dtype=float) - np.asarray(theta_ref, dtype=float), 2.0 * np.pi))
    error = np.degrees(np.minimum(delta, 2.0 * np.pi - delta))
    return float(error) if np.ndim(error) == 0 else error


def elevation_error(phi_est, phi_ref):
    """Error absoluto de elevación en grados."""
    error = np.degrees(np.abs(np.asarray(phi_est, dtype=float) - np.asarray(phi_ref, dtype=float)))
    return float(error) if np.ndim(error) == 0 else error


def hungarian(costs: np.ndarray, sentinel: float = SENTINEL_COST) -> List[Tuple[int, int]]:
    """
    Asignación uno a uno de coste total mínimo sobre una matriz rectangular.

    La matriz se rellena a cuadrada con el centinela; los pares con coste
    centinela (o de relleno) se descartan.

    Returns:
        Lista de pares (fila, columna) ordenada por fila
    """
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        return []
    rows, cols = costs.shape
    size = max(rows, cols)
    padded = np.full((size, size), sentinel)
    padded[:rows, :cols] = costs
    row_idx, col_idx = linear_sum_assignment(padded)
    return [
        (int(r), int(c)) for r, c in zip(row_idx, col_idx)
        if r < rows and c < cols and costs[r, c] < sentinel
    ]


@dataclass
class CostMatrix:
    """Filas = trayectorias de referencia, columnas = pistas estimadas."""

    truth_labels: List[str]
    track_ids: List[int]
    costs: np.ndarray
    elevation_costs: np.ndarray
    overlaps: np.ndarray


@dataclass
class PairResult:
    truth_label: str
    track_id: int
    azimuth_error: float
    elevation_error: float
    overlap_hops: int
    overlap_seconds: float


@dataclass
class RecordingReport:
    """Resultado de una grabación; los errores son None si no hay pares asignados."""

    name: str
    azimuth_error: Optional[float]
    elevation_error: Optional[float]
    pairs: List[PairResult] = field(default_factory=list)
    n_truth: int = 0
    n_tracks: int = 0

    @property
    def empty_assignment(self) -> bool:
        return not self.pairs

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['empty_assignment'] = self.empty_assignment
        return data


def estimate_hop(times: Sequence[float]) -> Optional[float]:
    """Hop como mediana de las diferencias entre tiempos consecutivos."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return None
    return float(np.median(np.diff(times)))


def align_times(track_times: Sequence[float], truth_times: Sequence[float]) -> np.ndarray:
    """
    Índice del hop estimado más cercano para cada instante de referencia.

    Raises:
        AlignmentError: si algún instante de referencia queda a más de medio hop
    """
    track_times = np.asarray(track_times, dtype=float)
    truth_times = np.asarray(truth_times, dtype=float)
    if truth_times.size == 0:
        return np.zeros(0, dtype=int)
    if track_times.size == 0:
        raise AlignmentError("No hay tramas estimadas para alinear con la referencia")
    hop = estimate_hop(track_times) or estimate_hop(truth_times)
    if hop is None or hop <= 0:
        hop = float('inf')
    pos = np.clip(np.searchsorted(track_times, truth_times), 1, max(track_times.size - 1, 1))
    left = track_times[np.maximum(pos - 1, 0)]
    right = track_times[np.minimum(pos, track_times.size - 1)]
    nearest = np.where(np.abs(truth_times - left) <= np.abs(right - truth_times), pos - 1, pos)
    nearest = np.clip(nearest, 0, track_times.size - 1)
    gaps = np.abs(track_times[nearest] - truth_times)
    worst = int(np.argmax(gaps))
    if gaps[worst] > hop / 2.0 + 1e-6:
        raise AlignmentError(
            f"Rejillas de tiempo incompatibles: la referencia en t={truth_times[worst]:.4f} s "
            f"está a {gaps[worst]:.4f} s del hop estimado más cercano (tolerancia {hop / 2.0:.4f} s)"
        )
    return nearest


def build_cost_matrix(tracks: Sequence[TrackFrame], truth: GroundTruth) -> CostMatrix:
    """Errores medios de azimut/elevación y solapamientos de todos los pares."""
    track_times = [frame.time for frame in tracks]
    truth_times = [frame.time for frame in truth.frames]
    nearest = align_times(track_times, truth_times)

    labels = truth.labels
    track_ids = sorted({s.id for frame in tracks for s in frame.sources})
    label_index = {label: i for i, label in enumerate(labels)}
    id_index = {tid: j for j, tid in enumerate(track_ids)}
    shape = (len(labels), len(track_ids))
    az_sum = np.zeros(shape)
    el_sum = np.zeros(shape)
    overlaps = np.zeros(shape, dtype=int)

    for truth_frame, k in zip(truth.frames, nearest):
        estimates = tracks[int(k)].sources
        for label, (ref_az, ref_el) in truth_frame.sources.items():
            i = label_index[label]
            for estimate in estimates:
                j = id_index[estimate.id]
                az_sum[i, j] += azimuth_error(estimate.azimuth, ref_az)
                el_sum[i, j] += elevation_error(estimate.elevation, ref_el)
                overlaps[i, j] += 1

    with np.errstate(invalid='ignore', divide='ignore'):
        costs = np.where(overlaps > 0, az_sum / np.maximum(overlaps, 1), SENTINEL_COST)
        elevation_costs = np.where(overlaps > 0, el_sum / np.maximum(overlaps, 1), SENTINEL_COST)
    return CostMatrix(labels, track_ids, costs, elevation_costs, overlaps)


def evaluate(tracks: Sequence[TrackFrame], truth: GroundTruth, name: str = 'recording') -> RecordingReport:
    """
    Evalúa una grabación.

    Args:
        tracks: Secuencia de TrackFrame (una por hop)
        truth: Referencia con la misma rejilla de hops
        name: Nombre de la grabación en el informe

    Returns:
        RecordingReport
    """
    matrix = build_cost_matrix(tracks, truth)
    hop = estimate_hop([frame.time for frame in tracks]) or estimate_hop([f.time for f in truth.frames]) or 0.0
    pairs = []
    for i, j in hungarian(matrix.costs):
        pairs.append(PairResult(
            truth_label=matrix.truth_labels[i],
            track_id=matrix.track_ids[j],
            azimuth_error=float(matrix.costs[i, j]),
            elevation_error=float(matrix.elevation_costs[i, j]),
            overlap_hops=int(matrix.overlaps[i, j]),
            overlap_seconds=float(matrix.overlaps[i, j] * hop),
        ))
    if pairs:
        az = float(np.mean([p.azimuth_error for p in pairs]))
        el = float(np.mean([p.elevation_error for p in pairs]))
    else:
        az = el = None
        logger.warning("%s: asignación vacía (sin pistas solapadas con la referencia)", name)
    return RecordingReport(name, az, el, pairs, len(matrix.truth_labels), len(matrix.track_ids))


def _mean_std(values: List[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {'mean': None, 'std': None, 'count': 0}
    array = np.asarray(values, dtype=float)
    return {'mean': float(array.mean()), 'std': float(array.std(ddof=0)), 'count': int(array.size)}


def aggregate_reports(reports: Sequence[RecordingReport]) -> Dict[str, Any]:
    """Media y desviación estándar (poblacional) de los errores sobre grabaciones."""
    return {
        'azimuth': _mean_std([r.azimuth_error for r in reports if r.azimuth_error is not None]),
        'elevation': _mean_std([r.elevation_error for r in reports if r.elevation_error is not None]),
        'recordings': len(reports),
    }


def build_report(reports: Sequence[RecordingReport]) -> Dict[str, Any]:
    """Informe completo serializable a JSON."""
    return {
        'recordings': [r.to_dict() for r in reports],
        'task': aggregate_reports(reports),
    }


def _fmt(value: Optional[float]) -> str:
    return '   -  ' if value is None else f"{value:6.2f}"


def format_table(reports: Sequence[RecordingReport]) -> str:
    """Tabla legible: una fila por grabación, detalle de pares y resumen de la tarea."""
    lines = [f"{'grabación':<24} {'azim(°)':>8} {'elev(°)':>8} {'pares':>6}"]
    lines.append('-' * len(lines[0]))
    for report in reports:
        lines.append(f"{report.name:<24} {_fmt(report.azimuth_error):>8} "
                     f"{_fmt(report.elevation_error):>8} {len(report.pairs):>6}")
        for pair in report.pairs:
            lines.append(f"  {pair.truth_label} ↔ pista {pair.track_id}: "
                         f"{pair.azimuth_error:.2f}° / {pair.elevation_error:.2f}° "
                         f"({pair.overlap_seconds:.2f} s solapados)")
    task = aggregate_reports(reports)
    lines.append('-' * len(lines[0]))
    az, el = task['azimuth'], task['elevation']
    lines.append(f"{'media ± std':<24} {_fmt(az['mean']):>8} {_fmt(el['mean']):>8}")
    lines.append(f"{'':<24} {_fmt(az['std']):>8} {_fmt(el['std']):>8}")
    return '\n'.join(lines)
