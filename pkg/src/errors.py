"""
Jerarquía de excepciones del pipeline TRAMP.

Cada excepción corresponde a un código de salida del CLI:
- UsageError     -> 1 (argumentos inválidos)
- AudioIOError   -> 2 (lectura/escritura de archivos)
- ConfigError    -> 3 (configuración inválida)
- AlignmentError -> 3 (rejillas de tiempo incompatibles en la evaluación)
"""


class TrampError(Exception):
    """Error base del proyecto."""

    exit_code = 1


class UsageError(TrampError):
    """Subcomando o flags desconocidos."""

    exit_code = 1


class AudioIOError(TrampError, OSError):
    """Fallo al leer o escribir audio / archivos de resultados."""

    exit_code = 2


class ConfigError(TrampError, ValueError):
    """Configuración, matriz de codificación o escena inválida."""

    exit_code = 3


class AlignmentError(TrampError, ValueError):
    """Las pistas estimadas y la verdad de terreno no comparten rejilla de hops."""

    exit_code = 3
