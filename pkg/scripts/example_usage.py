"""
Ejemplo de uso de TRAMP desde Python.

Sintetiza una escena, sigue las fuentes y evalúa el resultado contra la
referencia, todo sin pasar por el CLI.
"""

# Importar módulos desde src/ (archivos simples, no paquete instalable)
import sys
from pathlib import Path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / 'src'))

from config import load_pipeline_config
from metrics import evaluate, format_table
from serialize import read_track_frames
from simulator import load_scene_spec, synthesize, write_scene
from cli import run_track
from _path_helper import default_config_path


def ejemplo_simulacion(scene_path, output_dir):
    """Sintetiza una escena y guarda el WAV FOA y su referencia."""
    config = load_pipeline_config(default_config_path())
    spec = load_scene_spec(scene_path)
    buffer, truth = synthesize(spec, config.frontend)
    wav_path = output_dir / f"{Path(scene_path).stem}.wav"
    truth_path = output_dir / f"{Path(scene_path).stem}.csv"
    write_scene(wav_path, truth_path, buffer, truth)
    print(f"✓ Escena: {wav_path} ({buffer.duration:.1f} s, {len(truth.labels)} fuentes)")
    return config, wav_path, truth


def ejemplo_seguimiento(config, wav_path, output_dir):
    """Ejecuta el pipeline de seguimiento sobre un WAV FOA."""
    tracks_path = output_dir / f"{wav_path.stem}.tracks.jsonl"
    summary = run_track(wav_path, config, tracks_path, progress=True)
    print(f"✓ Pistas: {tracks_path} ({summary['frames']} tramas, "
          f"máx. {summary['max_visible']} fuentes visibles)")
    return tracks_path


def ejemplo_evaluacion(tracks_path, truth):
    """Compara las pistas con la referencia y muestra la tabla."""
    report = evaluate(read_track_frames(tracks_path), truth, name=tracks_path.stem)
    print(format_table([report]))
    return report


if __name__ == '__main__':
    output_dir = project_root / 'outputs'
    output_dir.mkdir(exist_ok=True)
    scene = project_root / 'scenes' / (sys.argv[1] if len(sys.argv) > 1 else 'two_sources.scene')

    print("=" * 60)
    print("1. Simulación")
    print("=" * 60)
    config, wav_path, truth = ejemplo_simulacion(scene, output_dir)

    print("\n" + "=" * 60)
    print("2. Seguimiento")
    print("=" * 60)
    tracks_path = ejemplo_seguimiento(config, wav_path, output_dir)

    print("\n" + "=" * 60)
    print("3. Evaluación")
    print("=" * 60)
    ejemplo_evaluacion(tracks_path, truth)
