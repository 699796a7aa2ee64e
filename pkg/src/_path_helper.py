"""
Helper para agregar src/ al path de Python y localizar archivos del proyecto.

Útil para scripts que necesitan importar módulos desde src/ sin instalar el paquete.
"""

import sys
from pathlib import Path
from typing import Optional


def add_src_to_path() -> str:
    """
    Agrega el directorio src/ al sys.path para permitir imports directos.

    Uso:
        from src._path_helper import add_src_to_path
        add_src_to_path()

        from cli import main
    """
    src_dir_str = str(Path(__file__).parent)
    if src_dir_str not in sys.path:
        sys.path.insert(0, src_dir_str)
    return src_dir_str


def project_root() -> Path:
    """Raíz del repositorio (carpeta que contiene src/)."""
    return Path(__file__).resolve().parent.parent


def default_config_path() -> Optional[Path]:
    """config/tramp.conf si existe en la raíz del proyecto."""
    path = project_root() / 'config' / 'tramp.conf'
    return path if path.exists() else None
