"""
Utilidades de geometría esférica: conversión entre (azimut, elevación) y
vectores unitarios, distancias angulares y envoltura de azimut.

Convención: θ azimut en (-π, π] medido desde +x hacia +y; φ elevación en
[-π/2, π/2] medida desde el plano xy.
"""

import numpy as np


def direction_vector(azimuth, elevation) -> np.ndarray:
    """Vector(es) unitario(s) para azimut/elevación en radianes. Forma (..., 3)."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    cos_el = np.cos(elevation)
    return np.stack([cos_el * np.cos(azimuth), cos_el * np.sin(azimuth), np.sin(elevation)], axis=-1)


def direction_angles(vectors) -> tuple:
    """
    Azimut y elevación de uno o varios vectores no nulos (no requiere norma 1).

    Returns:
        (azimut, elevación) en radianes, azimut en (-π, π]
    """
    v = np.asarray(vectors, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    azimuth = np.arctan2(v[..., 1], v[..., 0])
    azimuth = np.where(azimuth <= -np.pi, np.pi, azimuth)
    elevation = np.arcsin(np.clip(v[..., 2] / norm, -1.0, 1.0))
    return azimuth, elevation


def normalize(vectors) -> np.ndarray:
    v = np.asarray(vectors, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def angular_distance(u, v) -> np.ndarray:
    """Ángulo en radianes entre vectores unitarios (con broadcasting)."""
    dots = np.sum(np.asarray(u, dtype=float) * np.asarray(v, dtype=float), axis=-1)
    return np.arccos(np.clip(dots, -1.0, 1.0))


def wrap_angle(angle):
    """Lleva un ángulo (o arreglo) a (-π, π]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped <= -np.pi, np.pi, wrapped)
