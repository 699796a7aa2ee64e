"""
Serialización de resultados del pipeline.

Permite exportar/importar:
- TrackFrame en JSON Lines ({"t", "sources": [{"id", "azimuth_deg", "elevation_deg", "activity"}]})
- Referencia del simulador en CSV (time, source_label, azimuth_deg, elevation_deg)
- Histograma esférico normalizado por trama en CSV (depuración)
- Nubes de partículas por fuente en CSV (depuración)
- Informe de evaluación en JSON
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

import numpy as np

try:
    from .errors import AudioIOError
    from .tracker import SourceEstimate, TrackFrame
except ImportError:
    from errors import AudioIOError
    from tracker import SourceEstimate, TrackFrame

PathLike = Union[str, Path]

TRUTH_COLUMNS = ('time', 'source_label', 'azimuth_deg', 'elevation_deg')
HISTOGRAM_COLUMNS = ('frame_index', 'time', 'node_index', 'theta', 'phi', 'value')
PARTICLE_COLUMNS = ('time', 'source_id', 'particle', 'x', 'y', 'z', 'weight')


def _open_for_write(path: PathLike):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, 'w', encoding='utf-8', newline='')
    except OSError as e:
        raise AudioIOError(f"No se pudo abrir '{path}' para escritura: {e}") from e


def track_frame_line(frame: TrackFrame) -> str:
    """Una línea JSON (sin salto final) para un TrackFrame."""
    return json.dumps(frame.to_dict(), ensure_ascii=False)


class TrackWriter:
    """Escritor incremental de TrackFrame en JSON Lines."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._handle = _open_for_write(self.path)
        self.frames = 0

    def write(self, frame: TrackFrame) -> None:
        try:
            self._handle.write(track_frame_line(frame) + '\n')
        except OSError as e:
            raise AudioIOError(f"Error escribiendo '{self.path}': {e}") from e
        self.frames += 1

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> 'TrackWriter':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_track_frames(path: PathLike, frames: Iterable[TrackFrame]) -> int:
    """Escribe todos los TrackFrame; devuelve cuántos se escribieron."""
    with TrackWriter(path) as writer:
        for frame in frames:
            writer.write(frame)
        return writer.frames


def read_track_frames(path: PathLike) -> List[TrackFrame]:
    """Lee un archivo JSON Lines de TrackFrame (ángulos de vuelta a radianes)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise AudioIOError(f"No se pudo leer '{path}': {e}") from e
    frames = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            sources = [
                SourceEstimate(
                    int(s['id']),
                    math.radians(float(s['azimuth_deg'])),
                    math.radians(float(s['elevation_deg'])),
                    float(s.get('activity', 0.0)),
                )
                for s in record['sources']
            ]
            frames.append(TrackFrame(float(record['t']), sources))
        except (ValueError, KeyError, TypeError) as e:
            raise AudioIOError(f"{path}:{number}: registro de pistas inválido ({e})") from e
    return frames


def write_truth_csv(path: PathLike, rows: Iterable[Tuple[float, str, float, float]]) -> int:
    """
    Escribe la referencia en CSV.

    Args:
        rows: (tiempo s, etiqueta, azimut rad, elevación rad)

    Returns:
        Número de filas escritas
    """
    count = 0
    with _open_for_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(TRUTH_COLUMNS)
        for time, label, azimuth, elevation in rows:
            writer.writerow([f"{time:.6f}", label, f"{math.degrees(azimuth):.6f}", f"{math.degrees(elevation):.6f}"])
            count += 1
    return count


def read_truth_csv(path: PathLike) -> List[Tuple[float, str, float, float]]:
    """Lee la referencia CSV como filas (tiempo, etiqueta, azimut rad, elevación rad)."""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8', newline='') as handle:
            reader = csv.DictReader(handle)
            missing = set(TRUTH_COLUMNS) - set(reader.fieldnames or [])
            if missing:
                raise AudioIOError(f"'{path}': faltan columnas {sorted(missing)}")
            rows = []
            for record in reader:
                rows.append((
                    float(record['time']),
                    record['source_label'],
                    math.radians(float(record['azimuth_deg'])),
                    math.radians(float(record['elevation_deg'])),
                ))
            return rows
    except OSError as e:
        raise AudioIOError(f"No se pudo leer '{path}': {e}") from e
    except ValueError as e:
        raise AudioIOError(f"'{path}': valor numérico inválido ({e})") from e


class HistogramCsvWriter:
    """Vuelca el histograma normalizado de cada trama (una fila por nodo)."""

    def __init__(self, path: PathLike, azimuth: np.ndarray, elevation: np.ndarray):
        self.path = Path(path)
        self._handle = _open_for_write(self.path)
        self._writer = csv.writer(self._handle)
        self._writer.writerow(HISTOGRAM_COLUMNS)
        self._azimuth = azimuth
        self._elevation = elevation

    def write(self, frame_index: int, time: float, values: np.ndarray) -> None:
        for node, value in enumerate(values):
            self._writer.writerow([
                frame_index, f"{time:.6f}", node,
                f"{self._azimuth[node]:.6f}", f"{self._elevation[node]:.6f}", f"{value:.6g}",
            ])

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> 'HistogramCsvWriter':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ParticleCsvWriter:
    """Vuelca las nubes de partículas de todas las fuentes por paso."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._handle = _open_for_write(self.path)
        self._writer = csv.writer(self._handle)
        self._writer.writerow(PARTICLE_COLUMNS)

    def write(self, time: float, rows: Iterable[Tuple[int, int, float, float, float, float]]) -> None:
        for source_id, particle, x, y, z, weight in rows:
            self._writer.writerow([f"{time:.6f}", source_id, particle, f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", f"{weight:.6g}"])

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> 'ParticleCsvWriter':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_report_json(path: PathLike, report: Dict[str, Any]) -> None:
    """Guarda un informe de evaluación en JSON."""
    with _open_for_write(path) as handle:
        json.dump(report, handle, ensure_ascii=False, indent=2)
        handle.write('\n')


def read_report_json(path: PathLike) -> Dict[str, Any]:
    """
    Lee un reporte escrito por write_report_json.

    Args:
        path: Ruta del archivo JSON

    Returns:
        Diccionario con las claves 'recordings' y 'task'

    Raises:
        AudioIOError: Si el archivo no existe, no se puede leer o no es JSON válido
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except OSError as e:
        raise AudioIOError(f"No se pudo leer '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise AudioIOError(f"'{path}' no es un JSON válido: {e}") from e
