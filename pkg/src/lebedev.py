"""
Rejilla de Lebedev de 974 nodos usada como diccionario de direcciones.

Los nodos se generan a partir de las órbitas del grupo octaédrico (signos y
permutaciones de coordenadas) del conjunto estándar de orden 26. Los pesos de
cuadratura no se usan.
"""

import itertools
import logging
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy.spatial import cKDTree

try:
    from .geometry import direction_angles, normalize
except ImportError:
    from geometry import direction_angles, normalize

logger = logging.getLogger(__name__)

GRID_SIZE = 974

# Parámetros de órbita del conjunto de 974 puntos
_AAB_ORBITS = (
    0.4292963545341347e-1, 0.1051426854086404e+0, 0.1750024867623087e+0,
    0.2477653379650257e+0, 0.3206567123955957e+0, 0.3916520749849983e+0,
    0.4590825874187624e+0, 0.5214563888415861e+0, 0.6253170244654199e+0,
    0.6637926744523170e+0, 0.6910410398498301e+0, 0.7052907007457760e+0,
)
_AB0_ORBITS = (
    0.1236686762657990e+0, 0.2940777114468387e+0,
    0.4697753849207649e+0, 0.6334563241139567e+0,
)
_ABC_ORBITS = (
    (0.5974048614181342e-1, 0.2029128752777523e+0),
    (0.1375760408473636e+0, 0.4602621942484054e+0),
    (0.3391016526336286e+0, 0.5030673999662036e+0),
    (0.1271675191439820e+0, 0.2817606422442134e+0),
    (0.2693120740413512e+0, 0.4331561291720157e+0),
    (0.1419786452601918e+0, 0.6256167358580814e+0),
    (0.6709284600738255e-1, 0.3798395216859157e+0),
    (0.7057738183256172e-1, 0.5517505421423520e+0),
    (0.2783888477882155e+0, 0.6029619156159187e+0),
    (0.1979578938917407e+0, 0.3589606329589096e+0),
    (0.2087307061103274e+0, 0.5348666438135476e+0),
    (0.4055122137872836e+0, 0.5674997546074373e+0),
)


def octahedral_orbit(x: float, y: float, z: float) -> List[Tuple[float, float, float]]:
    """
    Órbita de un punto bajo el grupo octaédrico completo: todas las
    permutaciones distintas de coordenadas con todos los signos de las no nulas.
    """
    points = []
    for perm in dict.fromkeys(itertools.permutations((x, y, z))):
        choices = [(c, -c) if c != 0.0 else (0.0,) for c in perm]
        points.extend(itertools.product(*choices))
    return points


def lebedev_974_nodes() -> np.ndarray:
    """
    Genera los 974 vectores unitarios de la rejilla.

    Returns:
        Arreglo (974, 3)
    """
    points = []
    points += octahedral_orbit(1.0, 0.0, 0.0)
    third = np.sqrt(1.0 / 3.0)
    points += octahedral_orbit(third, third, third)
    for a in _AAB_ORBITS:
        points += octahedral_orbit(a, a, np.sqrt(1.0 - 2.0 * a * a))
    for a in _AB0_ORBITS:
        points += octahedral_orbit(a, np.sqrt(1.0 - a * a), 0.0)
    for a, b in _ABC_ORBITS:
        points += octahedral_orbit(a, b, np.sqrt(1.0 - a * a - b * b))
    nodes = normalize(np.array(points, dtype=float))
    if nodes.shape[0] != GRID_SIZE:
        raise RuntimeError(f"La rejilla generada tiene {nodes.shape[0]} nodos, se esperaban {GRID_SIZE}")
    return nodes


class SphericalGrid:
    """
    Rejilla esférica inmutable con listas de vecinos precalculadas.

    Attributes:
        vectors: (N, 3) vectores unitarios
        azimuth, elevation: (N,) ángulos de cada nodo en radianes
        neighbors: (N, K) índices de los K nodos más cercanos, el propio nodo primero
        neighbor_distances: (N, K) distancias angulares correspondientes (radianes)
    """

    def __init__(self, vectors: np.ndarray, k_neighbors: int = 50):
        self.vectors = normalize(vectors)
        self.size = self.vectors.shape[0]
        if not 1 <= k_neighbors <= self.size:
            raise ValueError(f"k_neighbors debe estar en [1, {self.size}] (recibido {k_neighbors})")
        self.azimuth, self.elevation = direction_angles(self.vectors)
        self._tree = cKDTree(self.vectors)
        # la distancia de cuerda es monótona en el ángulo
        _, idx = self._tree.query(self.vectors, k=k_neighbors)
        idx = np.atleast_2d(np.asarray(idx).reshape(self.size, k_neighbors))
        self.neighbors = idx
        dots = np.einsum('nd,nkd->nk', self.vectors, self.vectors[idx])
        self.neighbor_distances = np.arccos(np.clip(dots, -1.0, 1.0))
        self.k_neighbors = k_neighbors
        for array in (self.vectors, self.azimuth, self.elevation, self.neighbors, self.neighbor_distances):
            array.setflags(write=False)
        logger.debug("Rejilla esférica: %d nodos, K=%d", self.size, k_neighbors)

    def quantize(self, directions: np.ndarray) -> np.ndarray:
        """
        Nodo más cercano (distancia angular) para cada dirección (n, 3).
        Las direcciones no necesitan norma 1 pero no pueden ser nulas.
        """
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        if directions.shape[0] == 0:
            return np.zeros(0, dtype=int)
        _, idx = self._tree.query(normalize(directions), k=1)
        return np.asarray(idx, dtype=int)

    def nearest_exhaustive(self, directions: np.ndarray) -> np.ndarray:
        """Búsqueda exhaustiva por máximo producto escalar sobre todos los nodos."""
        directions = normalize(np.atleast_2d(np.asarray(directions, dtype=float)))
        return np.argmax(directions @ self.vectors.T, axis=1)

    def node_angles(self, index: int) -> Tuple[float, float]:
        """(azimut, elevación) del nodo en radianes."""
        return float(self.azimuth[index]), float(self.elevation[index])

    def filter_weights(self, variance: float) -> np.ndarray:
        """
        Pesos gaussianos exp(-d²/(2·var)) sobre las distancias a los vecinos,
        normalizados a suma unitaria por nodo. Forma (N, K).
        """
        weights = np.exp(-self.neighbor_distances ** 2 / (2.0 * variance))
        return weights / weights.sum(axis=1, keepdims=True)


@lru_cache(maxsize=4)
def get_grid(k_neighbors: int = 50) -> SphericalGrid:
    """Obtiene una instancia compartida de la rejilla de 974 nodos."""
    return SphericalGrid(lebedev_974_nodes(), k_neighbors=k_neighbors)
