"""Pruebas del estimador de ruido y de la decisión de actividad."""

import numpy as np
import pytest

from config import VadConfig
from vad import NoiseState, VoiceActivityDetector, frame_vad, update_noise

N_BINS = 64


def _noise_frame(rng, variance=1.0, n_bins=N_BINS):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins))


def test_first_frame_initializes_to_periodogram(rng):
    state = NoiseState(n_bins=N_BINS, window_frames=10)
    frame = _noise_frame(rng)
    update_noise(state, frame)
    assert np.allclose(state.smoothed, np.abs(frame) ** 2)
    assert np.all(state.noise >= state.floor)


def test_stationary_noise_estimate_within_factor_two(rng):
    variance = 0.3
    state = NoiseState(n_bins=N_BINS, window_frames=75)
    for _ in range(100):
        update_noise(state, _noise_frame(rng, variance))
    ratio = state.noise / variance
    assert np.all(ratio >= 0.5 / 5.0)
    assert 0.5 <= float(np.mean(ratio)) <= 2.0


def test_zero_input_reaches_floor():
    state = NoiseState(n_bins=N_BINS, window_frames=10)
    for _ in range(200):
        update_noise(state, np.zeros(N_BINS, dtype=complex))
    assert np.all(state.noise == state.floor)


def test_burst_does_not_leak_into_noise(rng):
    state = NoiseState(n_bins=N_BINS, window_frames=75)
    for _ in range(100):
        update_noise(state, _noise_frame(rng))
    before = float(np.mean(state.noise))
    peak = before
    for _ in range(5):
        update_noise(state, _noise_frame(rng, variance=100.0))
        peak = max(peak, float(np.mean(state.noise)))
    assert 10.0 * np.log10(peak / before) < 3.0


def test_bin_mismatch_raises():
    state = NoiseState(n_bins=4, window_frames=3)
    with pytest.raises(ValueError):
        update_noise(state, np.zeros(5, dtype=complex))


def _frozen_state(noise):
    state = NoiseState(n_bins=noise.size, window_frames=3)
    state.noise = noise
    return state


def test_frame_at_noise_floor_is_inactive():
    noise = np.full(8, 2.0)
    result = frame_vad(_frozen_state(noise), np.sqrt(noise).astype(complex))
    assert np.allclose(result.gamma_bins, 0.0)
    assert result.gamma_frame == pytest.approx(0.0)
    assert not result.active


def test_eleven_times_noise_is_active():
    noise = np.full(8, 0.5)
    result = frame_vad(_frozen_state(noise), np.sqrt(11.0 * noise).astype(complex), threshold_db=7.0)
    assert np.allclose(result.gamma_bins, 10.0)
    assert result.gamma_frame == pytest.approx(10.0)
    assert result.gamma_frame_db == pytest.approx(10.0, abs=1e-6)
    assert result.active


def test_empty_bins_are_inactive():
    result = frame_vad(NoiseState(n_bins=0, window_frames=3), np.zeros(0, dtype=complex))
    assert result.gamma_frame == 0.0
    assert not result.active


def test_gamma_is_bounded_below():
    state = _frozen_state(np.full(4, 1.0))
    result = frame_vad(state, np.zeros(4, dtype=complex))
    assert np.all(result.gamma_bins >= -1.0)
    assert np.all(result.positive_gamma >= 0.0)
    assert result.gamma_frame >= 0.0


def test_decision_is_monotone_in_scale(rng):
    state = _frozen_state(rng.uniform(0.5, 2.0, 16))
    w = _noise_frame(rng, variance=3.0, n_bins=16)
    was_active = frame_vad(state, w).active
    for scale in (1.5, 3.0, 10.0):
        now_active = frame_vad(state, np.sqrt(scale) * w).active
        assert now_active or not was_active
        was_active = now_active


def test_false_alarm_rate_on_stationary_noise(rng):
    detector = VoiceActivityDetector(VadConfig(min_window_frames=75), N_BINS)
    for _ in range(1200):
        detector.process(_noise_frame(rng))
    assert detector.activation_rate < 0.05


def test_detector_fires_on_onset(rng):
    detector = VoiceActivityDetector(VadConfig(min_window_frames=75), N_BINS)
    for _ in range(100):
        detector.process(_noise_frame(rng))
    result = detector.process(_noise_frame(rng, variance=100.0))
    assert result.active


def test_sustained_source_keeps_detector_active(rng):
    detector = VoiceActivityDetector(VadConfig(min_window_frames=75), N_BINS)
    for _ in range(100):
        detector.process(_noise_frame(rng))
    before = float(np.mean(detector.state.noise))
    decisions = [detector.process(_noise_frame(rng, variance=31.6)).active for _ in range(500)]
    after = float(np.mean(detector.state.noise))
    assert np.mean(decisions) > 0.99
    assert all(decisions[-100:])
    assert 10.0 * np.log10(after / before) < 1.5


def test_estimate_resumes_after_sustained_source(rng):
    detector = VoiceActivityDetector(VadConfig(min_window_frames=75), N_BINS)
    for _ in range(100):
        detector.process(_noise_frame(rng))
    for _ in range(300):
        detector.process(_noise_frame(rng, variance=31.6))
    assert detector.state.speech_present
    tail = [detector.process(_noise_frame(rng)).active for _ in range(150)]
    assert not detector.state.speech_present
    assert not any(tail[-100:])


def test_presence_frozen_during_warmup(rng):
    state = NoiseState(n_bins=N_BINS, window_frames=75, warmup_frames=25)
    for _ in range(10):
        update_noise(state, _noise_frame(rng))
    for _ in range(10):
        update_noise(state, _noise_frame(rng, variance=100.0))
        assert not state.speech_present


def test_bound_config_sets_warmup_and_rise():
    config = VadConfig(warmup_frames=10, rise_factor=1.001)
    state = NoiseState.from_config(config, N_BINS)
    assert state.warmup_frames == 10
    assert state.rise == pytest.approx(1.001)
