"""RBF-kernel binary classifier trained by subgradient descent.

The decision function is ``f(x) = sum_j coef_j k(s_j, x) + bias`` with
``k(a, b) = exp(-gamma |a - b|^2)`` over support points ``s_j``. Training
minimises the regularised hinge loss

    lam/2 * coef' K coef + mean_i max(0, 1 - y_i f(x_i)),    y_i in {-1, +1}

with minibatch subgradient steps on ``(coef, bias)``. The support set is the
training data; retaining a state appends the new data to its support with
zero coefficients, so the decision function is unchanged until training moves
it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..sim.core import LabeledDataset
from ..seeding import SeedLike, rng as make_rng
from .common import TrainConfig, minibatches


@dataclass
class KernelClassifierState:
    support: np.ndarray
    coef: np.ndarray
    bias: float
    gamma: float
    lam: float

    kind = "kernel_classifier"

    def __post_init__(self):
        if self.coef.shape[0] != self.support.shape[0]:
            raise ValidationError("one coefficient per support point required")

    def copy(self) -> "KernelClassifierState":
        return KernelClassifierState(self.support.copy(), self.coef.copy(), self.bias, self.gamma, self.lam)


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def hinge_objective(coef, bias, gram, rows, signs, lam) -> float:
    """Objective restricted to training ``rows`` of the support gram matrix."""
    margins = signs * (gram[rows] @ coef + bias)
    return float(0.5 * lam * coef @ gram @ coef + np.maximum(0.0, 1.0 - margins).mean())


def hinge_gradient(coef, bias, gram, rows, signs, lam) -> tuple[np.ndarray, float]:
    kr = gram[rows]
    active = signs * (kr @ coef + bias) < 1.0
    n = len(rows)
    g_coef = lam * (gram @ coef) - (signs[active] @ kr[active]) / n
    g_bias = -float(signs[active].sum()) / n
    return g_coef, g_bias


def _signs(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("classifier labels must be 0 or 1")
    return np.where(labels == 1, 1.0, -1.0)


class KernelClassifier:
    n_features = 2

    def __init__(self, gamma: float = 0.5, lam: float = 1e-3):
        if gamma <= 0 or lam <= 0:
            raise ValidationError("gamma and lam must be positive")
        self.gamma = gamma
        self.lam = lam

    def fresh(self, data: LabeledDataset) -> KernelClassifierState:
        return KernelClassifierState(
            data.features.copy(), np.zeros(len(data)), 0.0, self.gamma, self.lam
        )

    def train(self, state: KernelClassifierState | None, data: LabeledDataset, cfg: TrainConfig, seed: SeedLike):
        if len(data) == 0:
            raise ValidationError("cannot train on an empty dataset")
        if data.n_features != self.n_features:
            raise ValidationError(f"expected {self.n_features} features, got {data.n_features}")
        signs = _signs(data.labels)
        if cfg.mode == "retain" and state is not None:
            if state.support.shape[1] != data.n_features:
                raise ValidationError("retained state has a different feature dimension")
            n_old = state.support.shape[0]
            support = np.concatenate([state.support, data.features])
            coef = np.concatenate([state.coef, np.zeros(len(data))])
            bias = state.bias
        else:
            n_old = 0
            support, coef, bias = data.features.copy(), np.zeros(len(data)), 0.0

        gram = rbf_kernel(support, support, self.gamma)
        rows = n_old + np.arange(len(data))
        gen = make_rng(seed)
        lr = cfg.step_size
        for _ in range(cfg.epochs):
            for batch in minibatches(len(data), cfg.batch_size, gen):
                g_coef, g_bias = hinge_gradient(coef, bias, gram, rows[batch], signs[batch], self.lam)
                coef = coef - lr * g_coef
                bias = bias - lr * g_bias
        return KernelClassifierState(support, coef, float(bias), self.gamma, self.lam)

    def decision_function(self, state: KernelClassifierState, x: np.ndarray) -> np.ndarray:
        return rbf_kernel(np.asarray(x, dtype=np.float64), state.support, state.gamma) @ state.coef + state.bias

    def predict(self, state: KernelClassifierState, x: np.ndarray) -> np.ndarray:
        return (self.decision_function(state, x) > 0).astype(np.int64)

    def evaluate(self, state: KernelClassifierState, data: LabeledDataset) -> float:
        """Accuracy on ``data``."""
        if len(data) == 0:
            raise ValidationError("cannot evaluate on an empty dataset")
        if data.n_features != state.support.shape[1]:
            raise ValidationError("feature dimension mismatch")
        pred = self.predict(state, data.features)
        return float(np.mean(pred == np.asarray(data.labels).reshape(-1)))

    def objective(self, state: KernelClassifierState, data: LabeledDataset) -> float:
        """Regularised hinge objective of ``state`` on ``data`` (support == data)."""
        gram = rbf_kernel(state.support, state.support, state.gamma)
        n_old = state.support.shape[0] - len(data)
        rows = n_old + np.arange(len(data))
        return hinge_objective(state.coef, state.bias, gram, rows, _signs(data.labels), state.lam)
