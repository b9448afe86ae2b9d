"""Gaussian search policy over simulator parameters, trained with REINFORCE.

The policy is ``N(mean, sigma_sq * I)`` over the unconstrained parameter
vector. Only the mean is learned. One update consumes a batch of ``K``
sampled vectors and their rewards:

    grad  = 1/K * sum_k (theta_k - mean) / sigma_sq * (R_k - b)
    mean <- mean + learning_rate * grad
    b    <- decay * b + (1 - decay) * mean(R)

``b`` is an exponential moving average of past rewards. A fresh policy has no
baseline yet; its first batch is scored against that batch's own mean reward,
so the first update moves nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ValidationError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PolicyState:
    mean: np.ndarray
    sigma_sq: float = 0.05
    baseline: float | None = None
    baseline_decay: float = 0.9
    learning_rate: float = 0.01
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        if self.mean.ndim != 1:
            raise ValidationError("policy mean must be a vector")
        if not np.all(np.isfinite(self.mean)):
            raise ValidationError("policy mean must be finite")
        if not (self.sigma_sq > 0 and math.isfinite(self.sigma_sq)):
            raise ValidationError(f"sigma_sq must be positive, got {self.sigma_sq}")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValidationError(f"baseline_decay must lie in [0, 1), got {self.baseline_decay}")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be non-negative")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class RolloutBatch:
    """Sampled parameter vectors with rewards and advantages.

    ``baseline_used`` is the baseline the advantages were computed against.
    """

    thetas: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray
    baseline_used: float = field(default=0.0)

    def __len__(self) -> int:
        return self.rewards.shape[0]


def sample_batch(policy: PolicyState, K: int, rng: np.random.Generator) -> list[np.ndarray]:
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")
    z = rng.standard_normal((K, policy.dim))
    thetas = policy.mean + math.sqrt(policy.sigma_sq) * z
    return [t for t in thetas]


def log_density(policy: PolicyState, theta: np.ndarray) -> float:
    theta = _check_dim(policy, theta)
    d = policy.dim
    r = theta - policy.mean
    return float(-0.5 * (r @ r) / policy.sigma_sq - 0.5 * d * math.log(2 * math.pi * policy.sigma_sq))


def score_gradient(policy: PolicyState, theta: np.ndarray) -> np.ndarray:
    """Gradient of ``log N(theta; mean, sigma_sq I)`` with respect to the mean."""
    theta = _check_dim(policy, theta)
    return (theta - policy.mean) / policy.sigma_sq


def make_batch(policy: PolicyState, thetas: Sequence[np.ndarray], rewards: Sequence[float]) -> RolloutBatch:
    rewards = np.asarray(rewards, dtype=np.float64)
    _check_rewards(rewards)
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 2 or thetas.shape[0] != rewards.shape[0]:
        raise ValidationError(
            f"{thetas.shape[0] if thetas.ndim else 0} thetas for {rewards.shape[0]} rewards"
        )
    b = float(rewards.mean()) if policy.baseline is None else float(policy.baseline)
    return RolloutBatch(thetas, rewards, rewards - b, b)


def policy_gradient(policy: PolicyState, batch: RolloutBatch) -> np.ndarray:
    """Score-function estimate of the gradient of expected reward."""
    if len(batch) == 0:
        raise ValidationError("empty rollout batch")
    scores = (np.asarray(batch.thetas) - policy.mean) / policy.sigma_sq
    if scores.shape[1] != policy.dim:
        raise ValidationError(f"theta dimension {scores.shape[1]} != policy dimension {policy.dim}")
    return (scores * batch.advantages[:, None]).mean(axis=0)


def update(policy: PolicyState, batch: RolloutBatch) -> PolicyState:
    if len(batch) == 0:
        raise ValidationError("empty rollout batch")
    _check_rewards(batch.rewards)
    if policy.baseline is not None and batch.baseline_used != policy.baseline:
        raise ValidationError(
            f"batch advantages use baseline {batch.baseline_used}, policy holds {policy.baseline}"
        )
    grad = policy_gradient(policy, batch)
    new_mean = policy.mean + policy.learning_rate * grad
    a = policy.baseline_decay
    new_baseline = a * batch.baseline_used + (1.0 - a) * float(batch.rewards.mean())
    return replace(policy, mean=new_mean, baseline=new_baseline, iteration=policy.iteration + 1)


def _check_dim(policy: PolicyState, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (policy.dim,):
        raise ValidationError(f"theta shape {theta.shape} != policy dimension ({policy.dim},)")
    return theta


def _check_rewards(rewards: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(rewards))
    if bad.size:
        k = int(bad[0])
        raise ValidationError(f"rollout {k} has non-finite reward {rewards[k]!r}")
