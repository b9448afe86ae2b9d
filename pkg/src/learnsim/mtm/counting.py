"""Per-type car count regressor: one tanh hidden layer, mean absolute error, Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..seeding import SeedLike, rng as make_rng
from ..sim.core import LabeledDataset
from .common import TrainConfig, minibatches

PARAM_NAMES = ("w1", "b1", "w2", "b2")
BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass
class CountRegressorState:
    params: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray] = field(default_factory=dict)
    opt_v: dict[str, np.ndarray] = field(default_factory=dict)
    opt_t: int = 0

    kind = "count_regressor"

    def __post_init__(self):
        if self.params["w2"].shape[1] != self.params["b2"].shape[0]:
            raise ValidationError("output layer shape mismatch")
        if not self.opt_m:
            self.opt_m = {k: np.zeros_like(v) for k, v in self.params.items()}
            self.opt_v = {k: np.zeros_like(v) for k, v in self.params.items()}

    @property
    def n_inputs(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.params["w2"].shape[1]

    def copy(self) -> "CountRegressorState":
        cp = lambda d: {k: v.copy() for k, v in d.items()}
        return CountRegressorState(cp(self.params), cp(self.opt_m), cp(self.opt_v), self.opt_t)


def init_params(n_in: int, n_hidden: int, n_out: int, gen: np.random.Generator) -> dict[str, np.ndarray]:
    a1 = np.sqrt(6.0 / (n_in + n_hidden))
    a2 = np.sqrt(6.0 / (n_hidden + n_out))
    return {
        "w1": gen.uniform(-a1, a1, (n_in, n_hidden)),
        "b1": np.zeros(n_hidden),
        "w2": gen.uniform(-a2, a2, (n_hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def forward(params, x):
    h = np.tanh(x @ params["w1"] + params["b1"])
    return h, h @ params["w2"] + params["b2"]


def l1_loss(params, x, y) -> float:
    _, out = forward(params, x)
    return float(np.abs(out - y).mean())


def l1_loss_and_grad(params, x, y) -> tuple[float, dict[str, np.ndarray]]:
    h, out = forward(params, x)
    r = out - y
    d_out = np.sign(r) / r.size
    d_pre = (d_out @ params["w2"].T) * (1.0 - h * h)
    grads = {
        "w2": h.T @ d_out,
        "b2": d_out.sum(axis=0),
        "w1": x.T @ d_pre,
        "b1": d_pre.sum(axis=0),
    }
    return float(np.abs(r).mean()), grads


class CountRegressor:
    def __init__(self, n_features: int, n_outputs: int = 5, hidden: int = 64):
        if hidden < 1:
            raise ValidationError("hidden width must be >= 1")
        self.n_features = n_features
        self.n_outputs = n_outputs
        self.hidden = hidden

    def fresh(self, seed: SeedLike) -> CountRegressorState:
        return CountRegressorState(init_params(self.n_features, self.hidden, self.n_outputs, make_rng(seed, "init")))

    def _check(self, data: LabeledDataset) -> np.ndarray:
        if len(data) == 0:
            raise ValidationError("empty dataset")
        if data.n_features != self.n_features:
            raise ValidationError(f"expected {self.n_features} features, got {data.n_features}")
        y = data.label_matrix().astype(np.float64)
        if y.shape[1] != self.n_outputs:
            raise ValidationError(f"expected {self.n_outputs} count columns, got {y.shape[1]}")
        return y

    def train(self, state: CountRegressorState | None, data: LabeledDataset, cfg: TrainConfig, seed: SeedLike):
        y = self._check(data)
        if cfg.mode == "retain" and state is not None:
            if state.n_inputs != data.n_features:
                raise ValidationError("retained state has a different input dimension")
            state = state.copy()
        else:
            state = self.fresh(seed)
        x = data.features
        p, m, v = state.params, state.opt_m, state.opt_v
        t = state.opt_t
        gen = make_rng(seed, "shuffle")
        for _ in range(cfg.epochs):
            for batch in minibatches(len(data), cfg.batch_size, gen):
                _, grads = l1_loss_and_grad(p, x[batch], y[batch])
                t += 1
                c1 = 1.0 - BETA1**t
                c2 = 1.0 - BETA2**t
                for k in PARAM_NAMES:
                    g = grads[k]
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * g
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g
                    p[k] = p[k] - cfg.step_size * (m[k] / c1) / (np.sqrt(v[k] / c2) + ADAM_EPS)
        state.opt_t = t
        return state

    def predict(self, state: CountRegressorState, x: np.ndarray) -> np.ndarray:
        return forward(state.params, np.asarray(x, dtype=np.float64))[1]

    def evaluate(self, state: CountRegressorState, data: LabeledDataset) -> float:
        """Negative mean absolute count error over samples and car types."""
        y = self._check(data)
        return -float(np.abs(self.predict(state, data.features) - y).mean())
