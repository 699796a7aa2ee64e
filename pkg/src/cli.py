"""
Interfaz de línea de comandos de TRAMP.

Subcomandos:
    track           WAV FOA (o crudo + matriz) -> pistas en JSON Lines
    simulate        archivo de escena -> WAV FOA + CSV de referencia
    eval            pistas + referencia -> informe JSON y tabla
    dump-histogram  histograma esférico normalizado por trama en CSV

Códigos de salida: 0 éxito, 1 uso, 2 E/S, 3 configuración/alineación.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from dotenv import load_dotenv
from tqdm import tqdm

try:
    from .config import PipelineConfig, apply_overrides, load_pipeline_config
    from .errors import ConfigError, TrampError, UsageError
    from .frontend import (EncodingMatrix, FoaSpectrum, StftStream, frame_count, load_encoding_matrix,
                           read_wav_blocks, wav_info)
    from .localizer import DoaLocalizer
    from .metrics import build_report, evaluate, format_table
    from .serialize import (HistogramCsvWriter, ParticleCsvWriter, TrackWriter, read_track_frames,
                            read_truth_csv, write_report_json)
    from .simulator import GroundTruth, load_scene_spec, synthesize, write_scene
    from .tracker import Tracker
    from .vad import VadFrame, VoiceActivityDetector
except ImportError:
    from config import PipelineConfig, apply_overrides, load_pipeline_config
    from errors import ConfigError, TrampError, UsageError
    from frontend import (EncodingMatrix, FoaSpectrum, StftStream, frame_count, load_encoding_matrix,
                          read_wav_blocks, wav_info)
    from localizer import DoaLocalizer
    from metrics import build_report, evaluate, format_table
    from serialize import (HistogramCsvWriter, ParticleCsvWriter, TrackWriter, read_track_frames,
                           read_truth_csv, write_report_json)
    from simulator import GroundTruth, load_scene_spec, synthesize, write_scene
    from tracker import Tracker
    from vad import VadFrame, VoiceActivityDetector

logger = logging.getLogger(__name__)

BLOCK_SAMPLES = 8192


class TrampArgumentParser(argparse.ArgumentParser):
    """ArgumentParser que convierte los errores de uso en UsageError."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def configure_logging(verbose: bool = False) -> None:
    """Nivel desde --verbose o TRAMP_LOG_LEVEL (por defecto WARNING)."""
    load_dotenv()
    if verbose:
        level = logging.DEBUG
    else:
        level = getattr(logging, os.getenv('TRAMP_LOG_LEVEL', 'WARNING').upper(), logging.WARNING)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Archivo/entorno y después las flags de línea de comandos."""
    config = load_pipeline_config(getattr(args, 'config', None))
    overrides: Dict[str, str] = {}
    if getattr(args, 'seed', None) is not None:
        overrides['seed'] = str(args.seed)
    if getattr(args, 'max_sources', None) is not None:
        overrides['tracker.max_sources'] = str(args.max_sources)
    if getattr(args, 'max_observations', None) is not None:
        overrides['localizer.max_observations'] = str(args.max_observations)
    if getattr(args, 'ambix', False):
        overrides['frontend.channel_order'] = 'ambix'
    return apply_overrides(config, overrides, source='línea de comandos')


def foa_blocks(input_path: Path, config: PipelineConfig,
               matrix: Optional[EncodingMatrix] = None) -> Tuple[int, int, Iterator]:
    """
    Abre el WAV y devuelve (sample_rate, muestras, generador de bloques FOA (4, n)).

    Raises:
        ConfigError: si el número de canales no es 4 y no hay matriz compatible
    """
    sample_rate, channels, n_samples = wav_info(input_path)
    if matrix is not None:
        if matrix.cols != channels:
            raise ConfigError(
                f"La matriz tiene {matrix.cols} columnas pero '{input_path}' tiene {channels} canales"
            )
        blocks = (matrix.gains @ block for block in read_wav_blocks(input_path, BLOCK_SAMPLES))
    else:
        if channels != 4:
            raise ConfigError(
                f"'{input_path}' tiene {channels} canales; se requieren 4 (FOA) o una matriz (--matrix)"
            )
        blocks = read_wav_blocks(input_path, BLOCK_SAMPLES, config.frontend.channel_order)
    return sample_rate, n_samples, blocks


class HopLoop:
    """
    Bucle de hops común: STFT -> VAD -> acumulación en el histograma.

    La apertura del WAV y la validación de la configuración ocurren al construir
    el objeto, antes de crear cualquier archivo de salida.
    """

    def __init__(self, input_path, config: PipelineConfig, matrix: Optional[EncodingMatrix] = None):
        self.input_path = Path(input_path)
        sample_rate, n_samples, self._blocks = foa_blocks(self.input_path, config, matrix)
        self.config = config.bind(sample_rate)
        self.stream = StftStream(self.config.frontend, sample_rate)
        self.vad = VoiceActivityDetector(self.config.vad, self.stream.band.size)
        self.localizer = DoaLocalizer(self.config.localizer, self.config.frontend.encoding_constant)
        self.total_frames = frame_count(n_samples, self.stream.frame_samples, self.stream.hop_samples)
        logger.info("%s: %d Hz, %d tramas, hop %.3f s",
                    self.input_path, sample_rate, self.total_frames, self.stream.hop_seconds)

    def frames(self, progress: bool = False) -> Iterator[Tuple[FoaSpectrum, VadFrame]]:
        with tqdm(total=self.total_frames, desc='Tramas', unit='trama', disable=not progress) as bar:
            for block in self._blocks:
                for spectrum in self.stream.push(block):
                    vad_frame = self.vad.process(spectrum.W)
                    self.localizer.accumulate(spectrum, vad_frame)
                    yield spectrum, vad_frame
                    bar.update(1)


def run_track(input_path, config: PipelineConfig, output_path, matrix: Optional[EncodingMatrix] = None,
              histogram_path=None, particles_path=None, progress: bool = False) -> Dict[str, int]:
    """
    Ejecuta el pipeline completo en streaming y escribe un TrackFrame por hop.

    El tracker avanza en todos los hops; en las tramas inactivas del VAD recibe
    una lista vacía de observaciones, de modo que las fuentes se deshabilitan
    y acaban borradas si el silencio se prolonga.

    Returns:
        Resumen con tramas, tramas activas y máximo de fuentes visibles
    """
    loop = HopLoop(input_path, config, matrix)
    tracker = Tracker(loop.config.tracker, loop.config.seed)
    grid = loop.localizer.grid
    summary = {'frames': 0, 'active_frames': 0, 'max_visible': 0}
    histogram_writer = HistogramCsvWriter(histogram_path, grid.azimuth, grid.elevation) if histogram_path else None
    particle_writer = ParticleCsvWriter(particles_path) if particles_path else None
    try:
        with TrackWriter(output_path) as writer:
            for spectrum, vad_frame in loop.frames(progress):
                observations = loop.localizer.pick() if vad_frame.active else []
                frame = tracker.step(observations, spectrum.time)
                if vad_frame.active:
                    summary['active_frames'] += 1
                if particle_writer is not None:
                    particle_writer.write(spectrum.time, tracker.particle_snapshot())
                if histogram_writer is not None:
                    histogram_writer.write(spectrum.frame_index, spectrum.time, loop.localizer.normalized())
                writer.write(frame)
                summary['frames'] += 1
                summary['max_visible'] = max(summary['max_visible'], len(frame.sources))
    finally:
        for extra in (histogram_writer, particle_writer):
            if extra is not None:
                extra.close()
    logger.info("%d pasos del tracker, %d remuestreos", tracker.steps, tracker.resamples)
    return summary


def run_dump_histogram(input_path, config: PipelineConfig, output_path,
                       matrix: Optional[EncodingMatrix] = None, progress: bool = False) -> int:
    """Vuelca el histograma normalizado de cada trama; devuelve el número de tramas."""
    loop = HopLoop(input_path, config, matrix)
    grid = loop.localizer.grid
    frames = 0
    with HistogramCsvWriter(output_path, grid.azimuth, grid.elevation) as writer:
        for spectrum, _ in loop.frames(progress):
            writer.write(spectrum.frame_index, spectrum.time, loop.localizer.normalized())
            frames += 1
    return frames


def run_simulate(scene_path, config: PipelineConfig, wav_path, truth_path) -> GroundTruth:
    """Sintetiza una escena con la rejilla de hops de la configuración."""
    spec = load_scene_spec(scene_path)
    buffer, truth = synthesize(spec, config.frontend)
    write_scene(wav_path, truth_path, buffer, truth)
    return truth


def run_eval(pairs: Sequence[Tuple[str, str]], output_path=None) -> Dict:
    """Evalúa pares (pistas JSONL, referencia CSV) y construye el informe de la tarea."""
    reports = []
    for tracks_path, truth_path in pairs:
        tracks = read_track_frames(tracks_path)
        truth = GroundTruth.from_rows(read_truth_csv(truth_path))
        reports.append(evaluate(tracks, truth, name=Path(tracks_path).stem))
    report = build_report(reports)
    report['table'] = format_table(reports)
    if output_path is not None:
        write_report_json(output_path, {k: v for k, v in report.items() if k != 'table'})
    return report


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, default=None, help='Archivo de configuración clave-valor')
    parser.add_argument('--seed', type=int, default=None, help='Semilla del generador aleatorio')
    parser.add_argument('--verbose', '-v', action='store_true', help='Mensajes de depuración')


def _add_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('input', type=str, help='WAV de entrada (FOA de 4 canales o crudo con --matrix)')
    parser.add_argument('--ambix', action='store_true', help='La entrada está en orden AmbiX (W, Y, Z, X)')
    parser.add_argument('--matrix', type=str, default=None, help='Matriz de codificación 4xM en texto')
    parser.add_argument('--progress', action='store_true', help='Mostrar barra de progreso')


def build_parser() -> TrampArgumentParser:
    parser = TrampArgumentParser(prog='tramp', description='Localización y seguimiento de fuentes sonoras en FOA')
    subparsers = parser.add_subparsers(dest='command', metavar='{track,simulate,eval,dump-histogram}')
    subparsers.required = True

    track = subparsers.add_parser('track', help='Seguir fuentes en un WAV')
    _add_common(track)
    _add_input(track)
    track.add_argument('--output', '-o', type=str, default=None, help='Pistas JSONL (por defecto <input>.tracks.jsonl)')
    track.add_argument('--max-sources', type=int, default=None, help='S_max')
    track.add_argument('--max-observations', type=int, default=None, help='Q_max')
    track.add_argument('--debug-histogram', type=str, default=None, help='CSV con el histograma por trama')
    track.add_argument('--debug-particles', type=str, default=None, help='CSV con las partículas por paso')

    simulate = subparsers.add_parser('simulate', help='Sintetizar una escena')
    _add_common(simulate)
    simulate.add_argument('scene', type=str, help='Archivo de escena')
    simulate.add_argument('--output', '-o', type=str, required=True, help='WAV de salida')
    simulate.add_argument('--truth', type=str, default=None, help='CSV de referencia (por defecto <output>.csv)')

    evaluate_cmd = subparsers.add_parser('eval', help='Evaluar pistas contra la referencia')
    evaluate_cmd.add_argument('files', nargs='+', help='Pares: pistas.jsonl referencia.csv [...]')
    evaluate_cmd.add_argument('--output', '-o', type=str, default=None, help='Informe JSON')
    evaluate_cmd.add_argument('--verbose', '-v', action='store_true', help='Mensajes de depuración')

    dump = subparsers.add_parser('dump-histogram', help='Volcar el histograma esférico por trama')
    _add_common(dump)
    _add_input(dump)
    dump.add_argument('--output', '-o', type=str, required=True, help='CSV de salida')
    return parser


def _matrix(args) -> Optional[EncodingMatrix]:
    return load_encoding_matrix(args.matrix) if args.matrix else None


def _cmd_track(args) -> int:
    config = resolve_config(args)
    output = args.output or str(Path(args.input).with_suffix('.tracks.jsonl'))
    summary = run_track(args.input, config, output, matrix=_matrix(args),
                        histogram_path=args.debug_histogram, particles_path=args.debug_particles,
                        progress=args.progress)
    print(f"✓ {summary['frames']} tramas ({summary['active_frames']} activas), "
          f"máx. {summary['max_visible']} fuentes visibles -> {output}")
    if summary['frames'] == 0:
        print("⚠ La entrada es más corta que una trama: no se emitieron pistas")
    return 0


def _cmd_simulate(args) -> int:
    config = resolve_config(args)
    truth_path = args.truth or str(Path(args.output).with_suffix('.csv'))
    truth = run_simulate(args.scene, config, args.output, truth_path)
    print(f"✓ Escena sintetizada: {args.output} ({len(truth.frames)} hops, {len(truth.rows())} filas de referencia)")
    return 0


def _cmd_eval(args) -> int:
    if len(args.files) % 2 != 0:
        raise UsageError("eval espera pares 'pistas.jsonl referencia.csv'")
    pairs = list(zip(args.files[0::2], args.files[1::2]))
    report = run_eval(pairs, args.output)
    print(report['table'])
    if args.output:
        print(f"✓ Informe guardado en: {args.output}")
    return 0


def _cmd_dump(args) -> int:
    config = resolve_config(args)
    frames = run_dump_histogram(args.input, config, args.output, matrix=_matrix(args), progress=args.progress)
    print(f"✓ Histograma de {frames} tramas -> {args.output}")
    return 0


COMMANDS = {
    'track': _cmd_track,
    'simulate': _cmd_simulate,
    'eval': _cmd_eval,
    'dump-histogram': _cmd_dump,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Punto de entrada; devuelve el código de salida."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging(getattr(args, 'verbose', False))
        return COMMANDS[args.command](args)
    except TrampError as e:
        print(f"✗ {e}", file=sys.stderr)
        return e.exit_code


def main_entry() -> None:
    """Entrada del script de consola instalado por setup.py."""
    sys.exit(main())


if __name__ == '__main__':
    main_entry()
