"""Two-class Gaussian-mixture toy world.

The real distribution ``p(x, y)`` has three diagonal Gaussians per class with
fixed weights. The learnable simulator ``q(x, y | theta)`` has fewer
components per class (two by default), uniform mixture weights, a class prior
of one half, and exposes only component means and variances through theta.

Randomness layout (per sample, four uniforms): ``[class, component, z_0, z_1]``.
Class 1 is chosen when ``u_class < prior``; the component is the first index
whose cumulative weight exceeds ``u_component``; coordinates are
``mean + sqrt(var) * Phi^-1(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..params import ParamSchema, decode, decoded_to_jsonable, inverse_softplus
from ..seeding import SeedLike, normals_from_uniforms, seed_repr, uniform_rows
from .core import LabeledDataset, Simulator

UNIFORMS_PER_SAMPLE = 4

# XOR layout: every quadrant carries a quarter of the total mass, so one
# axis-aligned Gaussian per class cannot reach much beyond 0.75 accuracy.
DEFAULT_MEANS = (
    ((2.0, 2.0), (-2.0, -2.0), (-2.0, -4.0)),
    ((-2.0, 2.0), (2.0, -2.0), (4.0, -2.0)),
)
DEFAULT_WEIGHTS = ((0.5, 0.25, 0.25), (0.5, 0.25, 0.25))
DEFAULT_VARIANCE = 0.3


def _mixture_sample(u: np.ndarray, prior: float, means, variances, weights) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral sampling from uniforms; ``means``/``variances`` are ``(2, C, 2)``."""
    y = (u[:, 0] < prior).astype(np.int64)
    cum = np.cumsum(weights, axis=1)
    cum[:, -1] = 1.0
    comp = np.empty(len(u), dtype=np.int64)
    for c in (0, 1):
        rows = y == c
        comp[rows] = np.searchsorted(cum[c], u[rows, 1], side="right")
    z = normals_from_uniforms(u[:, 2:4])
    x = means[y, comp] + np.sqrt(variances[y, comp]) * z
    return x, y


@dataclass
class GmmWorld(Simulator):
    real_means: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_MEANS))
    real_variances: np.ndarray = field(
        default_factory=lambda: np.full((2, 3, 2), DEFAULT_VARIANCE)
    )
    real_weights: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_WEIGHTS))
    prior: float = 0.5
    n_sim_components: int = 2

    task_kind = "gmm_classification"
    n_features = 2
    sim_prior = 0.5

    def __post_init__(self):
        self.real_means = np.asarray(self.real_means, dtype=np.float64)
        self.real_variances = np.asarray(self.real_variances, dtype=np.float64)
        self.real_weights = np.asarray(self.real_weights, dtype=np.float64)
        n_real = self.real_means.shape[1]
        if self.real_means.shape != (2, n_real, 2) or self.real_variances.shape != (2, n_real, 2):
            raise ValueError("real means/variances must have shape (2, components, 2)")
        if self.real_weights.shape != (2, n_real):
            raise ValueError("real weights must have shape (2, components)")
        if np.any(self.real_weights < 0) or not np.allclose(self.real_weights.sum(axis=1), 1.0):
            raise ValueError("real component weights must be non-negative and sum to 1 per class")
        if np.any(self.real_variances < 0):
            raise ValueError("real variances must be non-negative")
        if not 0.0 <= self.prior <= 1.0:
            raise ValueError("class prior must lie in [0, 1]")
        if self.n_sim_components < 1:
            raise ValueError("simulator needs at least one component per class")
        self.schema = ParamSchema.build(
            (f"class{c}_comp{j}_{part}", kind, 2)
            for c in (0, 1)
            for j in range(self.n_sim_components)
            for part, kind in (("mean", "gaussian_mean"), ("var", "gaussian_variance"))
        )

    # -- simulator side ---------------------------------------------------

    def sim_components(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Decoded ``(means, variances)``, each ``(2, n_sim_components, 2)``."""
        d = decode(self.schema, theta)
        n = self.n_sim_components
        means = np.array([[d[f"class{c}_comp{j}_mean"] for j in range(n)] for c in (0, 1)])
        var = np.array([[d[f"class{c}_comp{j}_var"] for j in range(n)] for c in (0, 1)])
        return means, var

    def encode_sim(self, means, variances) -> np.ndarray:
        """Inverse of :meth:`sim_components`."""
        means = np.broadcast_to(np.asarray(means, float), (2, self.n_sim_components, 2))
        variances = np.broadcast_to(np.asarray(variances, float), (2, self.n_sim_components, 2))
        parts = []
        for c in (0, 1):
            for j in range(self.n_sim_components):
                parts.append(means[c, j])
                parts.append(inverse_softplus(variances[c, j]))
        return np.concatenate(parts)

    def _generate(self, theta, M, seed) -> LabeledDataset:
        means, var = self.sim_components(theta)
        weights = np.full((2, self.n_sim_components), 1.0 / self.n_sim_components)
        u = uniform_rows(seed, M, UNIFORMS_PER_SAMPLE)
        x, y = _mixture_sample(u, self.sim_prior, means, var, weights)
        meta = {
            "source": "simulator",
            "seed": seed_repr(seed),
            "decoded": decoded_to_jsonable(decode(self.schema, theta)),
        }
        return LabeledDataset(x, y, meta)

    generate_sim = Simulator.generate

    # -- real side --------------------------------------------------------

    def sample_real(self, N: int, seed: SeedLike) -> LabeledDataset:
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        u = uniform_rows(seed, N, UNIFORMS_PER_SAMPLE)
        x, y = _mixture_sample(u, self.prior, self.real_means, self.real_variances, self.real_weights)
        return LabeledDataset(x, y, {"source": "real", "seed": seed_repr(seed)})

