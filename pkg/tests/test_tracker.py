"""Pruebas del banco de filtros de partículas y del ciclo de vida de las fuentes."""

import itertools
import math

import numpy as np
import pytest

from config import TrackerConfig
from geometry import direction_vector, normalize
from localizer import Observation
from tracker import (AssociationResult, Particle, TrackedSource, Tracker, activity_posterior, associate,
                     association_functions, effective_sample_size, existence_update, is_visible,
                     lifecycle, likelihood_variance, observability, observation_likelihood,
                     particle_likelihoods, predict, prune_sources, resample, suppress_redundant,
                     update_source_probability, update_weights)

FOUR_PI = 4.0 * math.pi


def _source(source_id, azimuth=0.0, elevation=0.0, n_particles=300, enabled_since=None, p_s=0.5):
    point = direction_vector(azimuth, elevation)
    return TrackedSource(
        id=source_id,
        positions=np.tile(point, (n_particles, 1)),
        velocities=np.zeros((n_particles, 3)),
        weights=np.full(n_particles, 1.0 / n_particles),
        p_s=p_s,
        p_exist=0.9,
        enabled=enabled_since is not None,
        enabled_since=enabled_since,
    )


def _observations(scores, rng):
    return [Observation(rng.uniform(-np.pi, np.pi), rng.uniform(-1.2, 1.2), float(s)) for s in scores]


# --- predicción -----------------------------------------------------------------

def test_predict_without_noise_or_motion(rng):
    config = TrackerConfig(langevin_a=1.0, langevin_b=0.0)
    source = _source(0, 0.3, 0.2, n_particles=5)
    before = source.positions.copy()
    predict(source, config, rng)
    assert np.allclose(source.positions, before, atol=1e-12)
    assert not np.any(source.velocities)


def test_predict_moves_along_great_circle(rng):
    config = TrackerConfig(dt=0.02, langevin_a=1.0, langevin_b=0.0)
    source = _source(0, n_particles=1)
    speed = 0.5
    source.velocities[:] = [0.0, speed, 0.0]
    predict(source, config, rng)
    angle = math.atan2(source.positions[0, 1], source.positions[0, 0])
    assert angle == pytest.approx(math.atan(config.dt * speed), rel=1e-12)
    assert angle == pytest.approx(config.dt * speed, rel=1e-3)
    assert abs(source.positions[0, 2]) < 1e-12


def test_predict_velocity_variance(rng):
    config = TrackerConfig(dt=0.02, langevin_a=0.0, langevin_b=0.2)
    source = _source(0, n_particles=100000)
    predict(source, config, rng)
    tangential = source.velocities[:, 1:]
    assert np.var(tangential[:, 0]) == pytest.approx(0.04, rel=0.05)
    assert np.var(tangential[:, 1]) == pytest.approx(0.04, rel=0.05)
    # componente radial eliminada
    radial = np.sum(source.velocities * normalize(source.positions), axis=1)
    assert np.max(np.abs(radial)) < 1e-12


def test_particles_stay_on_sphere(rng):
    config = TrackerConfig(dt=0.02, radius=2.0)
    source = _source(0, n_particles=50)
    source.positions *= 2.0
    for _ in range(2000):
        predict(source, config, rng)
    assert np.max(np.abs(np.linalg.norm(source.positions, axis=1) - 2.0)) < 1e-9


# --- verosimilitud ----------------------------------------------------------------

def test_likelihood_variance_values():
    config = TrackerConfig()
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 1.0, 0.0])
    assert float(likelihood_variance(x, x, config)) == pytest.approx(0.008)
    assert float(likelihood_variance(y, x, config)) == pytest.approx(0.008 / (1.0 + 0.1 * math.pi))
    assert float(likelihood_variance(y, x, config)) == pytest.approx(0.006085, abs=1e-5)
    assert float(likelihood_variance(np.zeros(3), x, config)) == pytest.approx(0.008 / (1.0 + 0.1 * math.pi))


def test_likelihood_mode_and_isotropy():
    config = TrackerConfig()
    position = np.array([1.0, 0.0, 0.0])
    particle = Particle(position, np.zeros(3), 1.0)
    variance = 0.008 / (1.0 + 0.1 * math.pi)
    peak = observation_likelihood(particle, position, position, config)
    assert peak == pytest.approx((2.0 * math.pi * variance) ** -1.5)
    left = observation_likelihood(particle, normalize(np.array([1.0, 0.05, 0.0])), position, config)
    right = observation_likelihood(particle, normalize(np.array([1.0, -0.05, 0.0])), position, config)
    assert left == pytest.approx(right)
    assert left < peak


def test_particle_likelihoods_shape():
    source = _source(0, n_particles=7)
    points = np.vstack([direction_vector(0.0, 0.0), direction_vector(1.0, 0.0)])
    densities = particle_likelihoods(source, points, TrackerConfig())
    assert densities.shape == (2, 7)
    assert np.all(densities[0] > densities[1])


# --- asociación -----------------------------------------------------------------

def test_associate_no_sources_certain_observation():
    result = associate([], [Observation(0.0, 0.0, 1.0)], TrackerConfig())
    assert result.new_source[0] == pytest.approx(1.0)
    assert result.false_alarm[0] == pytest.approx(0.0)
    assert result.n_functions == 2


def test_associate_no_observations():
    result = associate([_source(0)], [], TrackerConfig())
    assert result.n_observations == 0
    assert result.sources.shape == (0, 1)


def _brute_force(scores, p_obs, likelihoods, config):
    n_obs, n_src = likelihoods.shape
    marginals = np.zeros((n_obs, n_src + 2))
    total = 0.0
    for labels in itertools.product(range(n_src + 2), repeat=n_obs):
        probability = 1.0
        for q, label in enumerate(labels):
            if label == 0:
                probability *= config.prior_false_alarm * (1.0 - scores[q]) / FOUR_PI
            elif label == 1:
                probability *= config.prior_new_source * scores[q] / FOUR_PI
            else:
                s = label - 2
                probability *= scores[q] * p_obs[s] * likelihoods[q, s]
        total += probability
        for q, label in enumerate(labels):
            marginals[q, label] += probability
    return marginals / total


@pytest.mark.parametrize('n_src,n_obs', [(s, q) for s in range(3) for q in range(1, 4)])
def test_associate_matches_brute_force(n_src, n_obs):
    rng = np.random.default_rng(100 * n_src + n_obs)
    config = TrackerConfig()
    for _ in range(10):
        sources = [_source(s) for s in range(n_src)]
        for source in sources:
            source.p_obs = rng.uniform(0.05, 1.0)
        observations = _observations(rng.uniform(0.05, 0.95, n_obs), rng)
        likelihoods = rng.uniform(0.0, 50.0, (n_obs, n_src))
        result = associate(sources, observations, config, likelihoods)
        expected = _brute_force([o.score for o in observations], [s.p_obs for s in sources], likelihoods, config)
        assert result.n_functions == (n_src + 2) ** n_obs
        assert np.allclose(result.false_alarm, expected[:, 0], atol=1e-9)
        assert np.allclose(result.new_source, expected[:, 1], atol=1e-9)
        assert np.allclose(result.sources, expected[:, 2:], atol=1e-9)


def test_associate_marginals_sum_to_one(rng):
    config = TrackerConfig()
    for _ in range(30):
        n_src = int(rng.integers(0, 5))
        n_obs = int(rng.integers(1, 5))
        sources = [_source(s, rng.uniform(-3, 3), rng.uniform(-1, 1), n_particles=20) for s in range(n_src)]
        for source in sources:
            source.p_obs = rng.uniform(0.0, 1.0)
        result = associate(sources, _observations(rng.uniform(0.0, 1.0, n_obs), rng), config)
        assert np.allclose(result.totals(), 1.0, atol=1e-9)


def test_association_functions_enumeration():
    functions = association_functions(2, 3)
    assert functions.shape == (64, 3)
    assert len({tuple(row) for row in functions}) == 64


# --- probabilidad de fuente y pesos -------------------------------------------------

def _assoc(source_columns):
    columns = np.asarray(source_columns, dtype=float).reshape(len(source_columns), -1)
    rest = 1.0 - columns.sum(axis=1)
    return AssociationResult(rest, np.zeros(len(source_columns)), columns, 1)


def test_source_probability_examples():
    config = TrackerConfig()
    source = _source(0)
    assert update_source_probability(source, _assoc([[0.8], [0.0]]), 0, config, 1.0) == pytest.approx(0.4)
    assert source.enabled and source.enabled_since == 1.0
    assert update_source_probability(source, _assoc([[0.3]]), 0, config, 1.02) == pytest.approx(0.3)
    assert source.enabled and source.enabled_since == 1.0
    empty = AssociationResult(np.zeros(0), np.zeros(0), np.zeros((0, 1)), 1)
    assert update_source_probability(source, empty, 0, config, 1.04) == 0.0
    assert not source.enabled and source.disabled_since == 1.04


def test_weights_unchanged_when_unobserved():
    config = TrackerConfig()
    source = _source(0, n_particles=4)
    source.weights = np.array([0.1, 0.2, 0.3, 0.4])
    source.p_s = 0.0
    likelihoods = np.array([[1.0, 2.0, 3.0, 4.0]])
    update_weights(source, _assoc([[0.0]]), 0, likelihoods, config)
    assert np.allclose(source.weights, [0.1, 0.2, 0.3, 0.4])


def test_coincident_particle_gains_weight():
    config = TrackerConfig()
    source = _source(0, n_particles=3)
    source.positions = np.vstack([direction_vector(a, 0.0) for a in (0.0, 0.1, 0.2)])
    source.previous_positions = source.positions.copy()
    source.p_s = 1.0
    likelihoods = particle_likelihoods(source, source.positions[:1], config)
    update_weights(source, _assoc([[1.0]]), 0, likelihoods, config)
    assert source.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert source.weights[0] > source.weights[1] and source.weights[0] > source.weights[2]


# --- observabilidad ---------------------------------------------------------------

def test_existence_examples():
    config = TrackerConfig()
    assert existence_update(0.3, 1.0, config) == pytest.approx(1.0)
    assert existence_update(0.0, 0.0, config) == 0.0


def test_activity_fixed_point():
    config = TrackerConfig()
    assert activity_posterior(0.5, 0.5) == pytest.approx(0.5)
    source = _source(0, p_s=(0.5 - config.act_base) / config.act_gain)
    source.p_act = 0.5
    observability(source, config)
    assert source.p_act == pytest.approx(0.5)


def test_observability_is_product():
    config = TrackerConfig()
    source = _source(0, p_s=0.7)
    p_obs = observability(source, config)
    assert p_obs == pytest.approx(source.p_exist * source.p_act)
    assert 0.0 <= p_obs <= 1.0


# --- remuestreo -------------------------------------------------------------------

def test_uniform_weights_not_resampled(rng):
    source = _source(0)
    assert effective_sample_size(source.weights) == pytest.approx(300.0)
    assert not resample(source, TrackerConfig(), rng)


def test_degenerate_weights_resampled(rng):
    source = _source(0)
    source.positions = normalize(rng.standard_normal((300, 3)))
    source.weights = np.zeros(300)
    source.weights[17] = 1.0
    target = source.positions[17].copy()
    assert resample(source, TrackerConfig(), rng)
    assert np.allclose(source.positions, target)
    assert np.allclose(source.weights, 1.0 / 300)


@pytest.mark.parametrize('k,expected', [(150, True), (209, True), (211, False), (300, False)])
def test_resample_trigger_threshold(rng, k, expected):
    source = _source(0)
    source.weights = np.zeros(300)
    source.weights[:k] = 1.0 / k
    assert effective_sample_size(source.weights) == pytest.approx(k)
    assert resample(source, TrackerConfig(), rng) is expected


def test_two_point_resampling_counts(rng):
    sigma = math.sqrt(300 * 0.25)
    for _ in range(200):
        source = _source(0)
        source.positions = normalize(rng.standard_normal((300, 3)))
        source.weights = np.zeros(300)
        source.weights[:2] = 0.5
        first = source.positions[0].copy()
        resample(source, TrackerConfig(), rng)
        copies = int(np.sum(np.all(source.positions == first, axis=1)))
        assert abs(copies - 150) <= 3 * sigma


# --- ciclo de vida ----------------------------------------------------------------

def test_new_source_birth():
    config = TrackerConfig()
    ids = iter(range(10))
    observation = Observation(0.5, 0.2, 0.95)
    assoc = AssociationResult(np.array([0.15]), np.array([0.85]), np.zeros((1, 0)), 2)
    sources = lifecycle([], assoc, [observation], config, 1.0, lambda: next(ids))
    assert len(sources) == 1
    born = sources[0]
    assert born.id == 0
    assert born.n_particles == 300
    assert np.allclose(born.positions, observation.vector)
    assert not np.any(born.velocities)
    assert born.p_s == pytest.approx(0.85)
    assert born.enabled and not born.visible


def test_hangover_rule():
    config = TrackerConfig()
    source = _source(0, enabled_since=1.0)
    assert not is_visible(source, config, 1.05)
    assert is_visible(source, config, 1.12)


def test_pruning_drops_lowest_probability():
    sources = [_source(i, p_s=p) for i, p in enumerate([0.9, 0.2, 0.7, 0.5, 0.6])]
    kept = prune_sources(sources, 4)
    assert [s.id for s in kept] == [0, 2, 3, 4]


def test_deletion_after_disabled_period():
    config = TrackerConfig()
    source = _source(0)
    source.disabled_since = 1.0
    empty = AssociationResult(np.zeros(0), np.zeros(0), np.zeros((0, 1)), 1)
    assert lifecycle([source], empty, [], config, 1.1, lambda: 99)
    assert lifecycle([source], empty, [], config, 1.2, lambda: 99) == []


def test_suppression_rules():
    config = TrackerConfig()
    far = [_source(0, 0.0, enabled_since=1.0), _source(1, math.radians(10.0), enabled_since=2.0)]
    assert suppress_redundant(far, config, 3.0) == []
    assert far[1].p_exist == pytest.approx(0.9)
    close = [_source(0, 0.0, enabled_since=1.0), _source(1, math.radians(3.0), enabled_since=2.0)]
    assert suppress_redundant(close, config, 3.0) == [(0, 1)]
    assert close[0].p_exist == pytest.approx(0.9)
    assert close[1].p_exist == pytest.approx(0.9 * 0.95)
    assert suppress_redundant([_source(0)], config, 3.0) == []


# --- máquina de estados completa ----------------------------------------------------

def test_step_empty():
    frame = Tracker(TrackerConfig()).step([], 0.0)
    assert frame.time == 0.0 and frame.sources == []


def test_stationary_stream_gives_one_source():
    tracker = Tracker(TrackerConfig(dt=0.02), seed=3)
    target = (math.radians(40.0), math.radians(15.0))
    for k in range(50):
        frame = tracker.step([Observation(*target, 1.0)], 0.02 * (k + 1))
    assert len(frame.sources) == 1
    estimate = frame.sources[0]
    error = math.degrees(math.acos(np.clip(direction_vector(estimate.azimuth, estimate.elevation)
                                           @ direction_vector(*target), -1.0, 1.0)))
    assert error < 2.0
    assert 0.0 <= estimate.activity <= 1.0


def test_frame_alternating_streams_keep_ids():
    tracker = Tracker(TrackerConfig(dt=0.02), seed=5)
    a = Observation(0.0, 0.0, 1.0)
    b = Observation(math.pi / 2, 0.0, 1.0)
    for k in range(250):
        tracker.step([a if k % 2 == 0 else b], 0.02 * (k + 1))
        if k >= 1:
            assert sorted(s.id for s in tracker.sources) == [0, 1]


def test_block_alternating_streams_become_visible_with_stable_ids():
    # Bloques de 8 tramas (0.16 s): más que la retención y menos que el borrado.
    tracker = Tracker(TrackerConfig(dt=0.02), seed=9)
    streams = [Observation(0.0, 0.0, 1.0), Observation(math.pi / 2, 0.0, 1.0)]
    seen_visible = set()
    for k in range(250):
        current = (k // 8) % 2
        frame = tracker.step([streams[current]], 0.02 * (k + 1))
        if k >= 8:
            assert sorted(s.id for s in tracker.sources) == [0, 1]
        seen_visible.update(s.id for s in frame.sources)
        if k % 8 == 7:
            assert [s.id for s in frame.sources] == [current]
            expected = 0.0 if current == 0 else 90.0
            assert abs(math.degrees(frame.sources[0].azimuth) - expected) < 3.0
    assert seen_visible == {0, 1}


def test_simultaneous_streams_give_two_visible_sources():
    tracker = Tracker(TrackerConfig(dt=0.02), seed=7)
    observations = [Observation(0.0, 0.0, 1.0), Observation(math.pi / 2, 0.0, 1.0)]
    for k in range(100):
        frame = tracker.step(observations, 0.02 * (k + 1))
    assert sorted(s.id for s in frame.sources) == [0, 1]
    by_id = {s.id: s for s in frame.sources}
    assert abs(math.degrees(by_id[0].azimuth)) < 2.0
    assert abs(math.degrees(by_id[1].azimuth) - 90.0) < 2.0


def _run(seed, steps=120):
    rng = np.random.default_rng(11)
    tracker = Tracker(TrackerConfig(dt=0.02), seed=seed)
    frames = []
    for k in range(steps):
        n_obs = int(rng.integers(0, 4))
        scores = np.concatenate([[1.0], rng.uniform(0.0, 1.0, max(n_obs - 1, 0))])[:n_obs]
        observations = [Observation(0.3 + 0.01 * rng.standard_normal(), 0.1, float(s)) for s in scores]
        frames.append(tracker.step(observations, 0.02 * (k + 1)).to_dict())
    return frames, tracker


def test_determinism():
    first, _ = _run(seed=42)
    second, _ = _run(seed=42)
    assert first == second


def test_fuzzed_invariants():
    rng = np.random.default_rng(2024)
    config = TrackerConfig(dt=0.02, n_particles=60)
    tracker = Tracker(config, seed=1)
    for k in range(300):
        n_obs = int(rng.integers(0, 5))
        observations = _observations(rng.uniform(0.0, 1.0, n_obs), rng)
        tracker.step(observations, 0.02 * (k + 1))
        assert len(tracker.sources) <= config.max_sources
        for source in tracker.sources:
            assert abs(source.weights.sum() - 1.0) < 1e-9
            assert np.max(np.abs(np.linalg.norm(source.positions, axis=1) - 1.0)) < 1e-9
            for value in (source.p_s, source.p_exist, source.p_act, source.p_obs):
                assert 0.0 <= value <= 1.0


def test_observations_are_capped():
    tracker = Tracker(TrackerConfig(dt=0.02, max_observations=2))
    observations = [Observation(a, 0.0, 1.0) for a in (0.0, 1.5, 3.0)]
    tracker.step(observations, 0.02)
    assert len(tracker.sources) == 2


def test_silent_hops_disable_then_delete():
    tracker = Tracker(TrackerConfig(dt=0.02), seed=0)
    frame = None
    for k in range(24, 100):
        frame = tracker.step([Observation(1.0, 0.0, 1.0)], 0.02 * (k + 1))
    assert [s.id for s in frame.sources] == [0]

    first_silent = tracker.step([], 0.02 * 101)
    assert first_silent.sources == []
    assert len(tracker.sources) == 1
    assert not tracker.sources[0].enabled
    assert tracker.sources[0].disabled_since == pytest.approx(2.02)

    for k in range(101, 110):
        assert tracker.step([], 0.02 * (k + 1)).sources == []
    assert len(tracker.sources) == 1
    tracker.step([], 0.02 * 111)
    assert tracker.sources == []
    for k in range(111, 400):
        assert tracker.step([], 0.02 * (k + 1)).sources == []
