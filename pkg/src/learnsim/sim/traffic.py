"""Block-based traffic scene model with a feature-vector renderer.

A scene is a straight road of ``length`` blocks (8 to 18) ending in an L, T or
X intersection. Each block independently holds a car with probability
``car_presence`` (type drawn from ``car_type``) and a house with probability
``house_presence``. A weather type (1 to 4) sets the observation noise.

The renderer stands in for an image: each of the 18 block slots contributes
seven channels (car-type one-hot, house flag, road-present flag), followed by
an intersection one-hot and a weather one-hot. Gaussian noise whose standard
deviation depends on the weather is added to the 126 block channels only.
The label is the number of cars of each type.

Randomness layout. Scene uniforms, 57 per sample:
``[length, intersection, weather, (car, type, house) x 18 blocks]``.
Render noise, 126 standard normals per sample, from a separate stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..params import (
    ParamSchema,
    decode,
    decoded_to_jsonable,
    encode_bernoulli,
    encode_categorical,
)
from ..seeding import SeedLike, derive, normals_from_uniforms, seed_repr, uniform_rows
from .core import LabeledDataset, Simulator

N_CAR_TYPES = 5
N_WEATHER = 4
INTERSECTIONS = ("L", "T", "X")
MIN_LENGTH = 8
MAX_LENGTH = 18
CHANNELS_PER_BLOCK = N_CAR_TYPES + 2
BLOCK_FEATURES = MAX_LENGTH * CHANNELS_PER_BLOCK
N_FEATURES = BLOCK_FEATURES + len(INTERSECTIONS) + N_WEATHER
SCENE_UNIFORMS = 3 + 3 * MAX_LENGTH
DEFAULT_NOISE_STDS = (0.1, 0.3, 0.6, 1.0)

SCHEMA = ParamSchema.build(
    [
        ("car_presence", "bernoulli", 1),
        ("car_type", "categorical", N_CAR_TYPES),
        ("house_presence", "bernoulli", 1),
        ("length", "categorical", MAX_LENGTH - MIN_LENGTH + 1),
        ("weather", "categorical", N_WEATHER),
    ]
)

VALIDATION_CAR_TYPES = (0.35, 0.25, 0.2, 0.15, 0.05)
VALIDATION_WEATHER = (0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class SceneDescription:
    length: int
    intersection: str
    cars: tuple[int, ...]  # per block: 0 = empty, 1..5 = car type
    houses: tuple[bool, ...]
    weather: int

    def __post_init__(self):
        if not MIN_LENGTH <= self.length <= MAX_LENGTH:
            raise ValidationError(f"scene length {self.length} outside [{MIN_LENGTH}, {MAX_LENGTH}]")
        if len(self.cars) != self.length or len(self.houses) != self.length:
            raise ValidationError("per-block entries must match the scene length")
        if self.intersection not in INTERSECTIONS:
            raise ValidationError(f"unknown intersection {self.intersection!r}")
        if not 1 <= self.weather <= N_WEATHER:
            raise ValidationError(f"weather must be in 1..{N_WEATHER}")
        if any(not 0 <= c <= N_CAR_TYPES for c in self.cars):
            raise ValidationError("car types must be in 0..5")

    def counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.cars, dtype=np.int64), minlength=N_CAR_TYPES + 1)[1:]


@dataclass
class SceneBatch:
    """Column-wise storage for ``N`` scenes; blocks past ``length`` are empty."""

    length: np.ndarray  # (N,)
    intersection: np.ndarray  # (N,) index into INTERSECTIONS
    weather: np.ndarray  # (N,) 1..4
    cars: np.ndarray  # (N, MAX_LENGTH) 0..5
    houses: np.ndarray  # (N, MAX_LENGTH) bool

    def __len__(self) -> int:
        return self.length.shape[0]

    def counts(self) -> np.ndarray:
        onehot = self.cars[:, :, None] == np.arange(1, N_CAR_TYPES + 1)
        return onehot.sum(axis=1).astype(np.int64)

    def scene(self, i: int) -> SceneDescription:
        n = int(self.length[i])
        return SceneDescription(
            length=n,
            intersection=INTERSECTIONS[int(self.intersection[i])],
            cars=tuple(int(c) for c in self.cars[i, :n]),
            houses=tuple(bool(h) for h in self.houses[i, :n]),
            weather=int(self.weather[i]),
        )

    @classmethod
    def from_scenes(cls, scenes: list[SceneDescription]) -> "SceneBatch":
        n = len(scenes)
        cars = np.zeros((n, MAX_LENGTH), dtype=np.int64)
        houses = np.zeros((n, MAX_LENGTH), dtype=bool)
        for i, s in enumerate(scenes):
            cars[i, : s.length] = s.cars
            houses[i, : s.length] = s.houses
        return cls(
            np.array([s.length for s in scenes], dtype=np.int64),
            np.array([INTERSECTIONS.index(s.intersection) for s in scenes], dtype=np.int64),
            np.array([s.weather for s in scenes], dtype=np.int64),
            cars,
            houses,
        )


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right")


def sample_scenes(decoded: dict, u: np.ndarray) -> SceneBatch:
    """Scenes from decoded parameters and ``(N, 57)`` uniforms."""
    if u.ndim != 2 or u.shape[1] != SCENE_UNIFORMS:
        raise ValidationError(f"need (N, {SCENE_UNIFORMS}) uniforms, got {u.shape}")
    length = MIN_LENGTH + _inverse_cdf(decoded["length"], u[:, 0])
    intersection = np.minimum((u[:, 1] * len(INTERSECTIONS)).astype(np.int64), len(INTERSECTIONS) - 1)
    weather = 1 + _inverse_cdf(decoded["weather"], u[:, 2])
    blocks = u[:, 3:].reshape(len(u), MAX_LENGTH, 3)
    on_road = np.arange(MAX_LENGTH)[None, :] < length[:, None]
    has_car = (blocks[:, :, 0] < decoded["car_presence"]) & on_road
    car_type = 1 + _inverse_cdf(decoded["car_type"], blocks[:, :, 1])
    cars = np.where(has_car, car_type, 0)
    houses = (blocks[:, :, 2] < decoded["house_presence"]) & on_road
    return SceneBatch(length, intersection, weather, cars, houses)


def render_batch(scenes: SceneBatch, noise: np.ndarray, noise_stds=DEFAULT_NOISE_STDS) -> np.ndarray:
    """Feature rows for ``scenes``; ``noise`` holds ``(N, 126)`` standard normals."""
    n = len(scenes)
    slots = np.zeros((n, MAX_LENGTH, CHANNELS_PER_BLOCK))
    slots[:, :, :N_CAR_TYPES] = scenes.cars[:, :, None] == np.arange(1, N_CAR_TYPES + 1)
    slots[:, :, N_CAR_TYPES] = scenes.houses
    slots[:, :, N_CAR_TYPES + 1] = np.arange(MAX_LENGTH)[None, :] < scenes.length[:, None]
    std = np.asarray(noise_stds, dtype=np.float64)[scenes.weather - 1]
    block_part = slots.reshape(n, BLOCK_FEATURES) + std[:, None] * noise
    inter = np.eye(len(INTERSECTIONS))[scenes.intersection]
    weather = np.eye(N_WEATHER)[scenes.weather - 1]
    return np.concatenate([block_part, inter, weather], axis=1)


def sample_scene(decoded: dict, seed: SeedLike) -> SceneDescription:
    return sample_scenes(decoded, uniform_rows(seed, 1, SCENE_UNIFORMS)).scene(0)


def render_features(scene: SceneDescription, seed: SeedLike, noise_stds=DEFAULT_NOISE_STDS) -> np.ndarray:
    noise = normals_from_uniforms(uniform_rows(seed, 1, BLOCK_FEATURES))
    return render_batch(SceneBatch.from_scenes([scene]), noise, noise_stds)[0]


@dataclass
class TrafficSimulator(Simulator):
    noise_stds: tuple[float, ...] = DEFAULT_NOISE_STDS

    task_kind = "traffic_counting"
    n_features = N_FEATURES
    schema = SCHEMA

    def __post_init__(self):
        self.noise_stds = tuple(float(s) for s in self.noise_stds)
        if len(self.noise_stds) != N_WEATHER or any(s < 0 for s in self.noise_stds):
            raise ValueError(f"need {N_WEATHER} non-negative noise stds")

    def sample(self, theta, M: int, seed: SeedLike) -> tuple[SceneBatch, np.ndarray]:
        """Scenes and rendered features without packaging them as a dataset."""
        decoded = decode(self.schema, theta)
        scenes = sample_scenes(decoded, uniform_rows(derive(seed, "scene"), M, SCENE_UNIFORMS))
        noise = normals_from_uniforms(uniform_rows(derive(seed, "render"), M, BLOCK_FEATURES))
        return scenes, render_batch(scenes, noise, self.noise_stds)

    def _generate(self, theta, M, seed) -> LabeledDataset:
        scenes, x = self.sample(theta, M, seed)
        meta = {
            "source": "simulator",
            "seed": seed_repr(seed),
            "decoded": decoded_to_jsonable(decode(self.schema, theta)),
            "lengths": scenes.length.tolist(),
        }
        return LabeledDataset(x, scenes.counts(), meta)

    generate_counting = Simulator.generate


def make_theta(
    car_presence: float = 0.5,
    car_types=(0.2,) * N_CAR_TYPES,
    house_presence: float = 0.5,
    lengths=None,
    weather=(0.25,) * N_WEATHER,
) -> np.ndarray:
    """Encode interpretable scene probabilities as a parameter vector."""
    if lengths is None:
        lengths = np.full(MAX_LENGTH - MIN_LENGTH + 1, 1.0 / (MAX_LENGTH - MIN_LENGTH + 1))
    return np.concatenate(
        [
            [encode_bernoulli(car_presence)],
            encode_categorical(car_types),
            [encode_bernoulli(house_presence)],
            encode_categorical(lengths),
            encode_categorical(weather),
        ]
    )


def validation_theta() -> np.ndarray:
    """Moderately crowded scenes, unbalanced car types, mixed weather."""
    return make_theta(
        car_presence=0.5,
        car_types=VALIDATION_CAR_TYPES,
        house_presence=0.5,
        weather=VALIDATION_WEATHER,
    )


def adversarial_theta(strength: float = 3.0) -> np.ndarray:
    """Mass piled on the rarest validation car type and the noisiest weather."""
    theta = np.zeros(SCHEMA.total_dim)
    rare = int(np.argmin(VALIDATION_CAR_TYPES))
    theta[SCHEMA.block("car_type").offset + rare] = strength
    theta[SCHEMA.block("weather").offset + N_WEATHER - 1] = strength
    return theta


def expected_length(decoded: dict) -> float:
    return float(np.dot(np.arange(MIN_LENGTH, MAX_LENGTH + 1), decoded["length"]))
