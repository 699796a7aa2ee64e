"""Pruebas de extremo a extremo del CLI (simulate -> track -> eval)."""

import csv
import json

import numpy as np
import pytest

from cli import build_parser, main
from errors import AudioIOError
from frontend import AudioBuffer, write_wav
from serialize import read_report_json, read_track_frames, read_truth_csv, write_track_frames
from simulator import GroundTruth
from tracker import SourceEstimate, TrackFrame

SINGLE_SCENE = """\
scene.duration = 3
scene.sample_rate = 16000
scene.seed = 1
noise.type = diffuse_iso
noise.snr_db = 20
source.0.label = talker
source.0.signal = white_noise
source.0.level_db = -20
source.0.trajectory = 0:45:10
source.0.on_off = 1.0:3
"""

TWO_SCENE = """\
scene.duration = 3
scene.sample_rate = 16000
scene.seed = 2
noise.type = white
noise.snr_db = 25
source.0.label = left
source.0.signal = white_noise
source.0.level_db = -20
source.0.trajectory = 0:90:0
source.0.on_off = 1.0:3
source.1.label = front
source.1.signal = white_noise
source.1.level_db = -20
source.1.trajectory = 0:-20:0
source.1.on_off = 1.0:3
"""


@pytest.fixture
def single_scene(tmp_path):
    scene = tmp_path / 'single.scene'
    scene.write_text(SINGLE_SCENE, encoding='utf-8')
    wav = tmp_path / 'single.wav'
    assert main(['simulate', str(scene), '-o', str(wav)]) == 0
    return wav, tmp_path / 'single.csv'


def test_usage_errors_exit_one(capsys):
    assert main(['bogus']) == 1
    assert main([]) == 1
    assert main(['track']) == 1
    assert 'usage' in capsys.readouterr().err.lower()


def test_eval_needs_pairs(tmp_path):
    assert main(['eval', str(tmp_path / 'only_one.jsonl')]) == 1


def test_missing_input_exit_two(tmp_path):
    assert main(['track', str(tmp_path / 'nada.wav'), '-o', str(tmp_path / 'out.jsonl')]) == 2


def test_bad_config_exit_three(tmp_path, single_scene):
    wav, _ = single_scene
    config = tmp_path / 'bad.conf'
    config.write_text("tracker.unknown_constant = 3\n", encoding='utf-8')
    assert main(['track', str(wav), '--config', str(config), '-o', str(tmp_path / 'out.jsonl')]) == 3


def test_channel_mismatch_exit_three(tmp_path):
    wav = tmp_path / 'stereo.wav'
    write_wav(wav, AudioBuffer(16000, np.zeros((2, 1600))))
    assert main(['track', str(wav), '-o', str(tmp_path / 'out.jsonl')]) == 3


def test_simulate_track_eval_chain(tmp_path, single_scene):
    wav, truth = single_scene
    assert truth.exists()
    tracks = tmp_path / 'single.tracks.jsonl'
    report_path = tmp_path / 'report.json'
    assert main(['track', str(wav), '-o', str(tracks)]) == 0
    assert main(['eval', str(tracks), str(truth), '-o', str(report_path)]) == 0

    frames = read_track_frames(tracks)
    assert len(frames) == 149
    late = [frame for frame in frames if frame.time > 1.5]
    assert sum(1 for frame in late if frame.sources) >= 0.9 * len(late)
    assert len({s.id for frame in frames for s in frame.sources}) == 1

    report = read_report_json(report_path)
    recording = report['recordings'][0]
    assert not recording['empty_assignment']
    assert recording['azimuth_error'] < 10.0
    assert recording['elevation_error'] < 10.0
    assert report['task']['azimuth']['count'] == 1


def test_track_is_deterministic(tmp_path, single_scene):
    wav, _ = single_scene
    first, second = tmp_path / 'a.jsonl', tmp_path / 'b.jsonl'
    assert main(['track', str(wav), '--seed', '5', '-o', str(first)]) == 0
    assert main(['track', str(wav), '--seed', '5', '-o', str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_simulate_is_deterministic(tmp_path):
    scene = tmp_path / 's.scene'
    scene.write_text(SINGLE_SCENE, encoding='utf-8')
    assert main(['simulate', str(scene), '-o', str(tmp_path / 'x.wav')]) == 0
    assert main(['simulate', str(scene), '-o', str(tmp_path / 'y.wav')]) == 0
    assert (tmp_path / 'x.wav').read_bytes() == (tmp_path / 'y.wav').read_bytes()
    assert (tmp_path / 'x.csv').read_bytes() == (tmp_path / 'y.csv').read_bytes()


def test_max_sources_override(tmp_path):
    scene = tmp_path / 'two.scene'
    scene.write_text(TWO_SCENE, encoding='utf-8')
    wav = tmp_path / 'two.wav'
    assert main(['simulate', str(scene), '-o', str(wav)]) == 0
    tracks = tmp_path / 'two.jsonl'
    assert main(['track', str(wav), '--max-sources', '1', '-o', str(tracks)]) == 0
    frames = read_track_frames(tracks)
    assert frames
    assert all(len(frame.sources) <= 1 for frame in frames)


def test_silent_input_has_no_sources(tmp_path):
    wav = tmp_path / 'silence.wav'
    write_wav(wav, AudioBuffer(16000, np.zeros((4, 16000))))
    tracks = tmp_path / 'silence.jsonl'
    assert main(['track', str(wav), '-o', str(tracks)]) == 0
    lines = tracks.read_text(encoding='utf-8').splitlines()
    assert len(lines) == 49
    assert all(json.loads(line)['sources'] == [] for line in lines)


def test_identity_matrix_matches_direct_input(tmp_path, single_scene):
    wav, _ = single_scene
    matrix = tmp_path / 'identity.txt'
    matrix.write_text("4 4\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n", encoding='utf-8')
    direct, encoded = tmp_path / 'direct.jsonl', tmp_path / 'encoded.jsonl'
    assert main(['track', str(wav), '-o', str(direct)]) == 0
    assert main(['track', str(wav), '--matrix', str(matrix), '-o', str(encoded)]) == 0
    assert direct.read_bytes() == encoded.read_bytes()


def test_eval_alignment_error(tmp_path, single_scene):
    _, truth = single_scene
    tracks = tmp_path / 'short.jsonl'
    tracks.write_text(''.join(json.dumps({'t': 0.02 * k, 'sources': []}) + '\n' for k in range(10)),
                      encoding='utf-8')
    assert main(['eval', str(tracks), str(truth)]) == 3


def test_dump_histogram(tmp_path, single_scene):
    wav, _ = single_scene
    output = tmp_path / 'hist.csv'
    assert main(['dump-histogram', str(wav), '-o', str(output)]) == 0
    with open(output, encoding='utf-8', newline='') as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 149 * 974
    values = np.array([float(r['value']) for r in rows])
    assert values.min() >= 0.0 and values.max() <= 1.0


def test_debug_outputs(tmp_path, single_scene):
    wav, _ = single_scene
    particles = tmp_path / 'particles.csv'
    histogram = tmp_path / 'h.csv'
    assert main(['track', str(wav), '-o', str(tmp_path / 't.jsonl'),
                 '--debug-particles', str(particles), '--debug-histogram', str(histogram)]) == 0
    with open(particles, encoding='utf-8', newline='') as handle:
        header = next(csv.reader(handle))
    assert header == ['time', 'source_id', 'particle', 'x', 'y', 'z', 'weight']
    assert histogram.stat().st_size > 0


def test_parser_lists_subcommands():
    help_text = build_parser().format_help()
    for command in ('track', 'simulate', 'eval', 'dump-histogram'):
        assert command in help_text


def test_eval_of_truth_as_tracks_is_exact(tmp_path, single_scene):
    _, truth_path = single_scene
    truth = GroundTruth.from_rows(read_truth_csv(truth_path))
    labels = truth.labels
    frames = [
        TrackFrame(frame.time, [SourceEstimate(labels.index(label), az, el, 1.0)
                                for label, (az, el) in frame.sources.items()])
        for frame in truth.frames
    ]
    tracks = tmp_path / 'oracle.jsonl'
    assert write_track_frames(tracks, frames) == len(truth.frames)
    report_path = tmp_path / 'oracle.json'
    assert main(['eval', str(tracks), str(truth_path), '-o', str(report_path)]) == 0
    recording = read_report_json(report_path)['recordings'][0]
    assert recording['azimuth_error'] < 1e-3
    assert recording['elevation_error'] < 1e-3
    assert recording['pairs'][0]['overlap_seconds'] == pytest.approx(2.0, abs=0.05)


SILENCE_AFTER_SCENE = """\
scene.duration = 4
scene.sample_rate = 16000
scene.seed = 4
noise.type = diffuse_iso
noise.snr_db = 20
source.0.label = talker
source.0.signal = white_noise
source.0.level_db = -20
source.0.trajectory = 0:30:0
source.0.on_off = 1.0:2.0
"""


def test_source_disappears_when_silence_follows(tmp_path):
    scene = tmp_path / 'stop.scene'
    scene.write_text(SILENCE_AFTER_SCENE, encoding='utf-8')
    wav = tmp_path / 'stop.wav'
    assert main(['simulate', str(scene), '-o', str(wav)]) == 0
    tracks = tmp_path / 'stop.jsonl'
    assert main(['track', str(wav), '-o', str(tracks)]) == 0
    frames = read_track_frames(tracks)
    speaking = [frame for frame in frames if 1.5 <= frame.time < 2.0]
    assert sum(1 for frame in speaking if frame.sources) >= 0.8 * len(speaking)
    assert all(frame.sources == [] for frame in frames if frame.time >= 2.1)


def test_report_reader_errors(tmp_path):
    with pytest.raises(AudioIOError):
        read_report_json(tmp_path / 'no_existe.json')
    broken = tmp_path / 'roto.json'
    broken.write_text('{"recordings": [', encoding='utf-8')
    with pytest.raises(AudioIOError):
        read_report_json(broken)
