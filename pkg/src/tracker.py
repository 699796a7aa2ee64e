"""
Banco de filtros de partículas con asociación probabilística de datos.

Cada fuente seguida contiene P partículas con dinámica de Langevin sobre una
esfera de radio r. En cada paso las observaciones se asocian de forma
probabilística a {falsa alarma, nueva fuente, fuente existente} enumerando todas
las funciones de asociación, y con las marginales resultantes se actualizan los
pesos de las partículas y el ciclo de vida de las fuentes.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

try:
    from .config import TrackerConfig
    from .geometry import angular_distance, direction_angles, normalize
    from .localizer import Observation
except ImportError:
    from config import TrackerConfig
    from geometry import angular_distance, direction_angles, normalize
    from localizer import Observation

logger = logging.getLogger(__name__)

# columnas de hipótesis en las funciones de asociación; la fuente s ocupa 2 + s
FALSE_ALARM = 0
NEW_SOURCE = 1


@dataclass
class Particle:
    """Vista de una partícula: posición, velocidad y peso."""

    position: np.ndarray
    velocity: np.ndarray
    weight: float


@dataclass
class TrackedSource:
    """
    Fuente seguida: nube de partículas más probabilidades del ciclo de vida.

    Las partículas se guardan como arreglos (P, 3) para vectorizar; `particles`
    ofrece la vista por partícula.
    """

    id: int
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    p_s: float = 0.0
    p_exist: float = 0.0
    p_act: float = 0.5
    p_obs: float = 0.0
    enabled: bool = False
    enabled_since: Optional[float] = None
    disabled_since: Optional[float] = None
    visible: bool = False
    created_at: float = 0.0
    previous_positions: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.previous_positions is None:
            self.previous_positions = self.positions.copy()

    @classmethod
    def spawn(cls, source_id: int, point: np.ndarray, n_particles: int, p_new: float,
              config: TrackerConfig, now: float) -> 'TrackedSource':
        """Fuente nueva con todas las partículas en el punto observado y v = 0."""
        positions = np.tile(np.asarray(point, dtype=float), (n_particles, 1))
        source = cls(
            id=source_id,
            positions=positions,
            velocities=np.zeros((n_particles, 3)),
            weights=np.full(n_particles, 1.0 / n_particles),
            p_s=p_new,
            p_exist=p_new,
            p_act=config.init_p_act,
            created_at=now,
        )
        set_enabled(source, p_new >= config.enable_threshold, now)
        return source

    @property
    def n_particles(self) -> int:
        return self.weights.size

    @property
    def particles(self) -> List[Particle]:
        return [Particle(p, v, float(w)) for p, v, w in zip(self.positions, self.velocities, self.weights)]

    def enabled_duration(self, now: float) -> float:
        if not self.enabled or self.enabled_since is None:
            return 0.0
        return now - self.enabled_since


@dataclass
class AssociationResult:
    """
    Marginales por observación de cada hipótesis.

    Attributes:
        false_alarm: (Q,) P_q(H_FA)
        new_source: (Q,) P_q(H_new)
        sources: (Q, S) P_q(H_s)
        n_functions: número de funciones de asociación enumeradas, (S+2)^Q
    """

    false_alarm: np.ndarray
    new_source: np.ndarray
    sources: np.ndarray
    n_functions: int

    @property
    def n_observations(self) -> int:
        return self.false_alarm.size

    def totals(self) -> np.ndarray:
        """Suma de todas las marginales por observación (debe valer 1)."""
        return self.false_alarm + self.new_source + self.sources.sum(axis=1)


@dataclass
class SourceEstimate:
    """Estimación emitida para una fuente visible."""

    id: int
    azimuth: float
    elevation: float
    activity: float


@dataclass
class TrackFrame:
    """Registro de salida por hop: instante y fuentes visibles."""

    time: float
    sources: List[SourceEstimate] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            't': self.time,
            'sources': [
                {
                    'id': s.id,
                    'azimuth_deg': math.degrees(s.azimuth),
                    'elevation_deg': math.degrees(s.elevation),
                    'activity': s.activity,
                }
                for s in self.sources
            ],
        }


def predict(source: TrackedSource, config: TrackerConfig, rng: np.random.Generator) -> TrackedSource:
    """
    Paso de Langevin: v <- a·v + b·n, p <- p + ΔT·v, luego p se proyecta a la
    esfera de radio r y se elimina la componente radial de v.
    """
    source.previous_positions = source.positions.copy()
    noise = rng.standard_normal(source.velocities.shape)
    velocities = config.a * source.velocities + config.b * noise
    positions = source.positions + config.dt * velocities
    unit = normalize(positions)
    source.positions = config.radius * unit
    radial = np.sum(velocities * unit, axis=1, keepdims=True)
    source.velocities = velocities - radial * unit
    return source


def likelihood_variance(velocities: np.ndarray, displacements: np.ndarray, config: TrackerConfig) -> np.ndarray:
    """
    Varianza adaptativa σ² = var0/(1 + k·α), con α el ángulo entre la velocidad
    de la partícula y el desplazamiento hacia la observación (π/2 si alguno es nulo).
    """
    v_norm = np.linalg.norm(velocities, axis=-1)
    d_norm = np.linalg.norm(displacements, axis=-1)
    degenerate = (v_norm < 1e-9) | (d_norm < 1e-9)
    denom = np.where(degenerate, 1.0, v_norm * d_norm)
    cos_alpha = np.clip(np.sum(velocities * displacements, axis=-1) / denom, -1.0, 1.0)
    alpha = np.where(degenerate, np.pi / 2.0, np.arccos(cos_alpha))
    return config.likelihood_variance / (1.0 + config.velocity_factor * alpha)


def gaussian_density(squared_distance, variance) -> np.ndarray:
    """Densidad gaussiana isótropa 3-D."""
    variance = np.asarray(variance, dtype=float)
    return (2.0 * np.pi * variance) ** -1.5 * np.exp(-np.asarray(squared_distance) / (2.0 * variance))


def observation_likelihood(particle: Particle, observation: np.ndarray, prev_position: np.ndarray,
                           config: TrackerConfig) -> float:
    """
    Densidad p(o | partícula) para una partícula y una observación cartesiana.

    Args:
        particle: Partícula ya predicha
        observation: Punto de la observación sobre la esfera de radio r
        prev_position: Posición de la partícula en la trama anterior
    """
    observation = np.asarray(observation, dtype=float)
    variance = likelihood_variance(
        np.asarray(particle.velocity, dtype=float), observation - np.asarray(prev_position, dtype=float), config,
    )
    squared = float(np.sum((observation - particle.position) ** 2))
    return float(gaussian_density(squared, variance))


def particle_likelihoods(source: TrackedSource, points: np.ndarray, config: TrackerConfig) -> np.ndarray:
    """
    Densidades de todas las (observación, partícula).

    Args:
        points: (Q, 3) observaciones cartesianas

    Returns:
        (Q, P)
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if points.shape[0] == 0:
        return np.zeros((0, source.n_particles))
    displacements = points[:, None, :] - source.previous_positions[None, :, :]
    variance = likelihood_variance(source.velocities[None, :, :], displacements, config)
    squared = np.sum((points[:, None, :] - source.positions[None, :, :]) ** 2, axis=-1)
    return gaussian_density(squared, variance)


@lru_cache(maxsize=64)
def association_functions(n_sources: int, n_observations: int) -> np.ndarray:
    """
    Todas las funciones de asociación como arreglo (M, Q) de etiquetas de columna:
    0 = falsa alarma, 1 = nueva fuente, 2 + s = fuente s. M = (S+2)^Q.
    """
    labels = range(n_sources + 2)
    functions = np.array(list(itertools.product(labels, repeat=n_observations)), dtype=int)
    functions = functions.reshape(-1, n_observations)
    functions.setflags(write=False)
    return functions


def associate(sources: Sequence[TrackedSource], observations: Sequence[Observation],
              config: TrackerConfig, source_likelihoods: Optional[np.ndarray] = None) -> AssociationResult:
    """
    Marginales de asociación por enumeración exhaustiva de las (S+2)^Q funciones.

    Args:
        sources: Fuentes con P_obs ya calculado para esta trama
        observations: Observaciones con su P_q
        source_likelihoods: (Q, S) p(o_q | s) precalculadas; si es None se calculan

    Returns:
        AssociationResult
    """
    n_src = len(sources)
    n_obs = len(observations)
    if n_obs == 0:
        return AssociationResult(np.zeros(0), np.zeros(0), np.zeros((0, n_src)), 1)
    if source_likelihoods is None:
        points = config.radius * np.array([o.vector for o in observations])
        source_likelihoods = np.zeros((n_obs, n_src))
        for col, source in enumerate(sources):
            source_likelihoods[:, col] = particle_likelihoods(source, points, config) @ source.weights

    scores = np.array([o.score for o in observations], dtype=float)
    p_obs = np.array([s.p_obs for s in sources], dtype=float)
    factors = np.empty((n_obs, n_src + 2))
    factors[:, FALSE_ALARM] = config.prior_false_alarm * (1.0 - scores) * config.false_alarm_density
    factors[:, NEW_SOURCE] = config.prior_new_source * scores * config.new_source_density
    factors[:, 2:] = scores[:, None] * p_obs[None, :] * np.asarray(source_likelihoods).reshape(n_obs, n_src)
    with np.errstate(divide='ignore'):
        log_factors = np.log(factors)

    functions = association_functions(n_src, n_obs)
    log_scores = log_factors[np.arange(n_obs)[None, :], functions].sum(axis=1)
    log_norm = logsumexp(log_scores)
    if not np.isfinite(log_norm):
        # solo ocurre con P_q fuera de [0, 1]; se reparte la masa de forma uniforme
        logger.warning("Asociación degenerada: todas las funciones tienen probabilidad nula")
        posterior = np.full(functions.shape[0], 1.0 / functions.shape[0])
    else:
        posterior = np.exp(log_scores - log_norm)

    marginals = np.zeros((n_obs, n_src + 2))
    for q in range(n_obs):
        marginals[q] = np.bincount(functions[:, q], weights=posterior, minlength=n_src + 2)
    return AssociationResult(
        false_alarm=marginals[:, FALSE_ALARM],
        new_source=marginals[:, NEW_SOURCE],
        sources=marginals[:, 2:],
        n_functions=functions.shape[0],
    )


def set_enabled(source: TrackedSource, enabled: bool, now: float) -> None:
    """Actualiza la bandera de habilitación y sus temporizadores."""
    if enabled and not source.enabled:
        source.enabled_since = now
        source.disabled_since = None
    elif not enabled and (source.enabled or source.disabled_since is None):
        source.disabled_since = now
        source.enabled_since = None
    source.enabled = enabled


def update_source_probability(source: TrackedSource, assoc: AssociationResult, column: int,
                              config: TrackerConfig, now: float) -> float:
    """
    P_s = media de P_q(H_s) sobre las observaciones (0 si Q = 0). La fuente queda
    habilitada si P_s >= umbral.
    """
    n_obs = assoc.n_observations
    p_s = float(assoc.sources[:, column].sum() / n_obs) if n_obs > 0 else 0.0
    source.p_s = min(max(p_s, 0.0), 1.0)
    set_enabled(source, source.p_s >= config.enable_threshold, now)
    return source.p_s


def update_weights(source: TrackedSource, assoc: AssociationResult, column: int,
                   likelihoods: np.ndarray, config: TrackerConfig) -> TrackedSource:
    """
    Nuevo peso ∝ [(1-P_s)/P + P_s·Σ_q P_q(H_s)·p(o_q|p) / Σ_p Σ_q P_q(H_s)·p(o_q|p)] · peso previo.

    Args:
        likelihoods: (Q, P) densidades de las partículas ya predichas
    """
    n = source.n_particles
    if assoc.n_observations > 0:
        numerators = assoc.sources[:, column] @ np.asarray(likelihoods).reshape(assoc.n_observations, n)
    else:
        numerators = np.zeros(n)
    total = float(numerators.sum())
    if total > 0.0:
        density = (1.0 - source.p_s) / n + source.p_s * numerators / total
    else:
        density = np.full(n, 1.0 / n)
    weights = density * source.weights
    weight_sum = float(weights.sum())
    if weight_sum > 0.0:
        source.weights = weights / weight_sum
    else:
        logger.debug("Fuente %d: pesos nulos tras la actualización, se conservan los previos", source.id)
    return source


def existence_update(p_exist: float, p_s: float, config: TrackerConfig) -> float:
    """P_exist = P_s + (1 - P_s)·k·P_exist/(1 - k·P_exist), con k = 0.5."""
    ratio = config.exist_factor * p_exist / (1.0 - config.exist_factor * p_exist)
    return min(max(p_s + (1.0 - p_s) * ratio, 0.0), 1.0)


def activity_posterior(prior: float, instantaneous: float, floor: float = 1e-12) -> float:
    """Combinación bayesiana de la actividad previa con la evidencia instantánea."""
    denominator = max(prior * instantaneous, floor)
    return 1.0 / (1.0 + (1.0 - prior) * (1.0 - instantaneous) / denominator)


def observability(source: TrackedSource, config: TrackerConfig) -> float:
    """
    Recursiones de existencia y actividad con las cantidades de la trama anterior.

    Returns:
        P_obs = P_exist · P_act (también se guarda en la fuente)
    """
    p_s_prev = source.p_s
    source.p_exist = existence_update(source.p_exist, p_s_prev, config)
    instantaneous = config.act_base + config.act_gain * p_s_prev
    posterior = activity_posterior(source.p_act, instantaneous, config.floor)
    source.p_act = min(max(config.act_smoothing * posterior + config.act_offset, 0.0), 1.0)
    source.p_obs = source.p_exist * source.p_act
    return source.p_obs


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float(np.dot(weights, weights))


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Índices de remuestreo sistemático (una sola uniforme desplazada)."""
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.minimum(np.searchsorted(cumulative, positions, side='right'), n - 1)


def resample(source: TrackedSource, config: TrackerConfig, rng: np.random.Generator) -> bool:
    """
    Remuestreo sistemático si ESS < fracción·P; los pesos pasan a 1/P.

    Returns:
        True si se remuestreó
    """
    n = source.n_particles
    if effective_sample_size(source.weights) >= config.resample_fraction * n:
        return False
    idx = systematic_indices(source.weights, rng)
    source.positions = source.positions[idx]
    source.velocities = source.velocities[idx]
    source.previous_positions = source.previous_positions[idx]
    source.weights = np.full(n, 1.0 / n)
    return True


def estimate_position(source: TrackedSource) -> Tuple[np.ndarray, np.ndarray]:
    """Posición y velocidad como promedio ponderado de las partículas."""
    position = source.weights @ source.positions
    velocity = source.weights @ source.velocities
    return position, velocity


def estimate_direction(source: TrackedSource) -> Tuple[float, float]:
    position, _ = estimate_position(source)
    if not np.any(position):
        position = source.positions[int(np.argmax(source.weights))]
    azimuth, elevation = direction_angles(position)
    return float(azimuth), float(elevation)


def suppress_redundant(sources: Sequence[TrackedSource], config: TrackerConfig, now: float) -> List[Tuple[int, int]]:
    """
    Entre los pares más cercanos a menos de `merge_angle_deg`, la fuente habilitada
    hace menos tiempo ve su P_exist multiplicado por `merge_factor`.

    Returns:
        Lista de pares (id conservado, id penalizado)
    """
    if len(sources) < 2:
        return []
    units = []
    for source in sources:
        position, _ = estimate_position(source)
        if not np.any(position):
            position = source.positions[int(np.argmax(source.weights))]
        units.append(normalize(position))
    limit = math.radians(config.merge_angle_deg)
    pairs = []
    for i, j in itertools.combinations(range(len(sources)), 2):
        angle = float(angular_distance(units[i], units[j]))
        if angle < limit:
            pairs.append((angle, i, j))
    pairs.sort()
    used = set()
    penalized = []
    for angle, i, j in pairs:
        if i in used or j in used:
            continue
        used.update((i, j))
        a, b = sources[i], sources[j]
        da, db = a.enabled_duration(now), b.enabled_duration(now)
        if da > db or (da == db and a.id < b.id):
            keep, drop = a, b
        else:
            keep, drop = b, a
        drop.p_exist *= config.merge_factor
        penalized.append((keep.id, drop.id))
        logger.debug("Fuentes %d y %d a %.2f°: se penaliza %d", a.id, b.id, math.degrees(angle), drop.id)
    return penalized


def prune_sources(sources: List[TrackedSource], max_sources: int) -> List[TrackedSource]:
    """Conserva las max_sources fuentes de mayor P_s (en empate, la más antigua)."""
    if len(sources) <= max_sources:
        return sources
    ranked = sorted(sources, key=lambda s: (-s.p_s, s.id))
    kept = {s.id for s in ranked[:max_sources]}
    for source in sources:
        if source.id not in kept:
            logger.debug("Fuente %d descartada por exceso (P_s=%.3f)", source.id, source.p_s)
    return [s for s in sources if s.id in kept]


def is_visible(source: TrackedSource, config: TrackerConfig, now: float) -> bool:
    return bool(source.enabled and source.enabled_since is not None
                and now - source.enabled_since >= config.hangover - 1e-9)


def is_expired(source: TrackedSource, config: TrackerConfig, now: float) -> bool:
    return bool(not source.enabled and source.disabled_since is not None
                and now - source.disabled_since >= config.deletion_delay - 1e-9)


def lifecycle(sources: List[TrackedSource], assoc: AssociationResult, observations: Sequence[Observation],
              config: TrackerConfig, now: float, next_id) -> List[TrackedSource]:
    """
    Nacimientos (P_q(H_new) >= umbral), poda a S_max, visibilidad y borrado de
    fuentes deshabilitadas durante más de `deletion_delay`.

    Args:
        next_id: Callable que entrega el siguiente identificador
    """
    sources = list(sources)
    for q, observation in enumerate(observations):
        p_new = float(assoc.new_source[q])
        if p_new >= config.new_source_threshold:
            point = config.radius * observation.vector
            source = TrackedSource.spawn(next_id(), point, config.n_particles, p_new, config, now)
            logger.debug("Nueva fuente %d en (%.1f°, %.1f°), P_new=%.3f", source.id,
                         math.degrees(observation.azimuth), math.degrees(observation.elevation), p_new)
            sources.append(source)
    sources = prune_sources(sources, config.max_sources)
    survivors = []
    for source in sources:
        if is_expired(source, config, now):
            logger.debug("Fuente %d eliminada (deshabilitada desde %.3f s)", source.id, source.disabled_since)
            continue
        source.visible = is_visible(source, config, now)
        survivors.append(source)
    return survivors


class Tracker:
    """
    Máquina de estados del seguimiento: se avanza una vez por hop. Los hops
    sin voz llegan con Q = 0, lo que deshabilita todas las fuentes.

    El generador aleatorio es propio y sembrado, de modo que la misma semilla y
    el mismo flujo de observaciones producen la misma secuencia de TrackFrame.
    """

    def __init__(self, config: TrackerConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.sources: List[TrackedSource] = []
        self._next_id = 0
        self.steps = 0
        self.resamples = 0

    def _allocate_id(self) -> int:
        source_id = self._next_id
        self._next_id += 1
        return source_id

    def step(self, observations: Sequence[Observation], now: float) -> TrackFrame:
        """
        Un paso completo: predicción, observabilidad, asociación, P_s, pesos,
        remuestreo, nacimientos/poda, borrado, supresión y emisión.
        """
        config = self.config
        observations = list(observations)
        if len(observations) > config.max_observations:
            logger.warning("Se recibieron %d observaciones; se usan las %d primeras",
                           len(observations), config.max_observations)
            observations = observations[:config.max_observations]

        for source in self.sources:
            predict(source, config, self.rng)
        for source in self.sources:
            observability(source, config)

        points = config.radius * np.array([o.vector for o in observations]).reshape(-1, 3)
        likelihoods = [particle_likelihoods(source, points, config) for source in self.sources]
        source_likelihoods = np.zeros((len(observations), len(self.sources)))
        for col, source in enumerate(self.sources):
            source_likelihoods[:, col] = likelihoods[col] @ source.weights
        assoc = associate(self.sources, observations, config, source_likelihoods)

        for col, source in enumerate(self.sources):
            update_source_probability(source, assoc, col, config, now)
        for col, source in enumerate(self.sources):
            update_weights(source, assoc, col, likelihoods[col], config)
        for source in self.sources:
            if resample(source, config, self.rng):
                self.resamples += 1

        self.sources = lifecycle(self.sources, assoc, observations, config, now, self._allocate_id)
        suppress_redundant(self.sources, config, now)
        self.steps += 1
        return self.emit(now)

    def emit(self, now: float) -> TrackFrame:
        """TrackFrame con las estimaciones de las fuentes visibles."""
        estimates = []
        for source in self.sources:
            if not source.visible:
                continue
            azimuth, elevation = estimate_direction(source)
            estimates.append(SourceEstimate(source.id, azimuth, elevation, float(source.p_act)))
        return TrackFrame(now, estimates)

    def particle_snapshot(self) -> List[Tuple[int, int, float, float, float, float]]:
        """Filas (id fuente, índice partícula, x, y, z, peso) de todas las fuentes."""
        rows = []
        for source in self.sources:
            for k, (position, weight) in enumerate(zip(source.positions, source.weights)):
                rows.append((source.id, k, float(position[0]), float(position[1]), float(position[2]), float(weight)))
        return rows
