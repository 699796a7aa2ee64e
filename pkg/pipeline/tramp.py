"""
Lanzador del CLI de TRAMP sin instalar el paquete.

Uso:
    python pipeline/tramp.py simulate scenes/two_sources.scene -o outputs/two.wav
    python pipeline/tramp.py track outputs/two.wav -o outputs/two.tracks.jsonl --progress
    python pipeline/tramp.py eval outputs/two.tracks.jsonl outputs/two.csv -o outputs/two.report.json
"""

import sys
from pathlib import Path

# Importar módulos desde src/ (archivos simples, no paquete instalable)
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / 'src'))

from cli import main


if __name__ == '__main__':
    sys.exit(main())
