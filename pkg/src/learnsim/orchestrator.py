"""Outer loop and comparison protocols.

Each protocol repeats *generate -> train -> validate* and records one
:class:`IterationRecord` per iteration:

``lts``
    Sample ``K`` parameter vectors from the policy, score each by the
    validation reward of a model trained on its data, and take a policy
    gradient step.
``random_params``
    Same loop, parameters drawn from a fixed wide Gaussian prior, no learning.
``random_search``
    One prior draw per iteration; keep the best by validation reward.
``fixed_params`` / ``validation_params``
    One dataset per iteration from a fixed vector, or from the distribution
    the validation set was drawn from.

With ``amtm`` enabled, an extra accumulated model is fine-tuned every
iteration and its validation/test rewards are recorded. It is observational:
the policy only ever sees the per-rollout rewards.

All randomness hangs off ``experiment.seed`` through :mod:`learnsim.seeding`
paths such as ``(seed, "iter", t, "rollout", k)``; results do not depend on
the order or parallelism with which rollouts run.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import policy as pg
from .config import ExperimentConfig
from .errors import ConfigError, ExperimentError
from .mtm import CountRegressor, KernelClassifier, TrainConfig
from .seeding import SeedLike, derive, rng
from .sim.core import LabeledDataset, Simulator
from .sim.gmm import GmmWorld
from .sim.traffic import TrafficSimulator, adversarial_theta, validation_theta

log = logging.getLogger(__name__)

HISTORY_CSV_VERSION = 1


# ---------------------------------------------------------------------------
# Tasks


@dataclass
class Task:
    """Everything a protocol needs besides the config."""

    name: str
    simulator: Simulator
    model: Any
    train_cfg: TrainConfig
    val: LabeledDataset
    test: LabeledDataset
    real_source: Callable[[int, SeedLike], LabeledDataset]
    base_theta: np.ndarray
    adversarial_theta: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.simulator.schema.total_dim


def build_task(cfg: ExperimentConfig) -> Task:
    e = cfg.experiment
    train_cfg = TrainConfig(
        epochs=cfg.train.epochs,
        batch_size=cfg.train.batch_size,
        step_size=cfg.kernel.step_size if e.task == "gmm" else cfg.counter.step_size,
        mode=cfg.train.mode,
    )
    if e.task == "gmm":
        g = cfg.gmm
        n_real = len(g.weights) // 2
        world = GmmWorld(
            real_means=np.reshape(g.means, (2, n_real, 2)),
            real_variances=np.reshape(g.variances, (2, n_real, 2)),
            real_weights=np.reshape(g.weights, (2, n_real)),
            prior=g.prior,
            n_sim_components=g.components,
        )
        base = world.encode_sim(np.zeros(2), np.ones(2))
        return Task(
            name="gmm",
            simulator=world,
            model=KernelClassifier(gamma=cfg.kernel.gamma, lam=cfg.kernel.lam),
            train_cfg=train_cfg,
            val=world.sample_real(g.val_size, derive(e.data_seed, "val")),
            test=world.sample_real(g.test_size, derive(e.data_seed, "test")),
            real_source=world.sample_real,
            base_theta=base,
        )
    if e.task == "traffic":
        t = cfg.traffic
        sim = TrafficSimulator(noise_stds=t.noise_stds)
        theta_real = validation_theta()
        return Task(
            name="traffic",
            simulator=sim,
            model=CountRegressor(sim.n_features, 5, cfg.counter.hidden),
            train_cfg=train_cfg,
            val=sim.generate(theta_real, t.val_size, derive(e.data_seed, "val")),
            test=sim.generate(theta_real, t.test_size, derive(e.data_seed, "test")),
            real_source=lambda n, seed: sim.generate(theta_real, n, seed),
            base_theta=np.zeros(sim.schema.total_dim),
            adversarial_theta=adversarial_theta(t.adversarial_strength),
        )
    raise ConfigError(f"unknown task {e.task!r}", field="experiment.task")


def initial_mean(cfg: ExperimentConfig, task: Task) -> np.ndarray:
    p = cfg.policy
    if p.init == "adversarial":
        if task.adversarial_theta is None:
            raise ConfigError(f"task {task.name!r} has no adversarial preset", field="policy.init")
        return task.adversarial_theta.copy()
    noise = rng(cfg.experiment.seed, "init").standard_normal(task.dim)
    return task.base_theta + p.init_scale * noise


# ---------------------------------------------------------------------------
# History


@dataclass
class IterationRecord:
    iteration: int
    thetas: np.ndarray  # (K, dim)
    rewards: np.ndarray  # (K,)
    baseline: float  # baseline the advantages were computed against; nan if none
    advantages: np.ndarray  # (K,)
    policy_mean: np.ndarray  # mean the thetas were drawn around
    amtm_val: float = math.nan
    amtm_test: float = math.nan
    wall_time: float = 0.0


@dataclass
class ExperimentHistory:
    protocol: str
    task: str
    seed: int
    records: list[IterationRecord] = field(default_factory=list)
    n_datasets: int = 0
    final_mean: Optional[np.ndarray] = None
    best_theta: Optional[np.ndarray] = None
    best_reward: float = math.nan
    best_test_reward: float = math.nan

    def __len__(self) -> int:
        return len(self.records)

    @property
    def mean_rewards(self) -> np.ndarray:
        return np.array([r.rewards.mean() for r in self.records])

    @property
    def max_rewards(self) -> np.ndarray:
        return np.array([r.rewards.max() for r in self.records])

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.max_rewards)

    @property
    def amtm_test(self) -> np.ndarray:
        return np.array([r.amtm_test for r in self.records])

    @property
    def amtm_val(self) -> np.ndarray:
        return np.array([r.amtm_val for r in self.records])

    def final_reward(self, window: int = 10) -> float:
        """Mean per-iteration reward over the last ``window`` iterations."""
        return float(self.mean_rewards[-window:].mean())

    def final_amtm_test(self, window: int = 10) -> float:
        return float(np.nanmean(self.amtm_test[-window:]))

    def same_as(self, other: "ExperimentHistory") -> bool:
        """Bit-identical comparison of everything except wall-clock times."""
        if (self.protocol, self.task, self.seed, self.n_datasets, len(self)) != (
            other.protocol,
            other.task,
            other.seed,
            other.n_datasets,
            len(other),
        ):
            return False
        for a, b in zip(self.records, other.records):
            if a.iteration != b.iteration:
                return False
            for x, y in (
                (a.thetas, b.thetas),
                (a.rewards, b.rewards),
                (a.advantages, b.advantages),
                (a.policy_mean, b.policy_mean),
                (np.array([a.baseline, a.amtm_val, a.amtm_test]), np.array([b.baseline, b.amtm_val, b.amtm_test])),
            ):
                if x.shape != y.shape or x.tobytes() != y.tobytes():
                    return False
        return _same_array(self.final_mean, other.final_mean) and _same_array(self.best_theta, other.best_theta)

    def write_csv(self, path: str | Path) -> Path:
        """One row per iteration.

        Columns: ``iteration, reward_mean, reward_max, reward_min, baseline,
        amtm_val, amtm_test, wall_time, reward_0..reward_{K-1},
        psi_0..psi_{dim-1}``. Missing values are empty.
        """
        path = Path(path)
        k = max((len(r.rewards) for r in self.records), default=0)
        dim = len(self.records[0].policy_mean) if self.records else 0
        header = (
            ["iteration", "reward_mean", "reward_max", "reward_min", "baseline", "amtm_val", "amtm_test", "wall_time"]
            + [f"reward_{i}" for i in range(k)]
            + [f"psi_{j}" for j in range(dim)]
        )
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"# learnsim history v{HISTORY_CSV_VERSION} protocol={self.protocol} task={self.task}"])
            w.writerow(header)
            for r in self.records:
                rewards = [_fmt(v) for v in r.rewards] + [""] * (k - len(r.rewards))
                w.writerow(
                    [r.iteration, _fmt(r.rewards.mean()), _fmt(r.rewards.max()), _fmt(r.rewards.min())]
                    + [_fmt(r.baseline), _fmt(r.amtm_val), _fmt(r.amtm_test), _fmt(r.wall_time)]
                    + rewards
                    + [_fmt(v) for v in r.policy_mean]
                )
        return path

    def write_rollouts_csv(self, path: str | Path) -> Path:
        """One row per rollout: ``iteration, rollout, reward, advantage, theta_0..``."""
        path = Path(path)
        dim = self.records[0].thetas.shape[1] if self.records else 0
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"# learnsim rollouts v{HISTORY_CSV_VERSION} protocol={self.protocol} task={self.task}"])
            w.writerow(["iteration", "rollout", "reward", "advantage"] + [f"theta_{j}" for j in range(dim)])
            for r in self.records:
                for k, th in enumerate(r.thetas):
                    w.writerow([r.iteration, k, _fmt(r.rewards[k]), _fmt(r.advantages[k])] + [_fmt(v) for v in th])
        return path

    def summary(self, window: int = 10) -> dict[str, Any]:
        out: dict[str, Any] = {
            "protocol": self.protocol,
            "task": self.task,
            "seed": self.seed,
            "iterations": len(self),
            "datasets_generated": self.n_datasets,
            "final_reward": self.final_reward(window) if self.records else None,
            "best_iteration_reward": float(self.max_rewards.max()) if self.records else None,
        }
        if self.records and not np.all(np.isnan(self.amtm_test)):
            out["final_amtm_val"] = float(np.nanmean(self.amtm_val[-window:]))
            out["final_amtm_test"] = self.final_amtm_test(window)
        if self.final_mean is not None:
            out["final_policy_mean"] = self.final_mean.tolist()
        if self.best_theta is not None:
            out["best_theta"] = self.best_theta.tolist()
            out["best_reward"] = self.best_reward
            out["best_test_reward"] = self.best_test_reward
        return out


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _same_array(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and a.tobytes() == b.tobytes()


# ---------------------------------------------------------------------------
# Rollout execution

_WORKER_TASK: Optional[Task] = None


def _init_worker(task: Task) -> None:
    global _WORKER_TASK
    _WORKER_TASK = task


def _rollout(task: Task, theta, M: int, seed, state, keep_data: bool):
    """Generate, train and validate one simulator parameter vector."""
    data = task.real_source(M, derive(seed, "data")) if theta is None else task.simulator.generate(
        theta, M, derive(seed, "data")
    )
    state = task.model.train(state, data, task.train_cfg, derive(seed, "train"))
    reward = task.model.evaluate(state, task.val)
    return reward, state, (data if keep_data else None)


def _rollout_in_worker(args):
    return _rollout(_WORKER_TASK, *args)


class _Executor:
    def __init__(self, task: Task, parallelism: int):
        self.task = task
        self.pool = (
            ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker, initargs=(task,))
            if parallelism > 1
            else None
        )

    def map(self, jobs: list[tuple]) -> list:
        if self.pool is None:
            return [_rollout(self.task, *job) for job in jobs]
        # map() returns results in submission order, so reductions stay fixed.
        return list(self.pool.map(_rollout_in_worker, jobs))

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Amtm:
    """Accumulated model fine-tuned on each iteration's selected data."""

    def __init__(self, task: Task, seed: int, feed: str):
        self.task = task
        self.seed = seed
        self.feed = feed
        self.state = None
        self.cfg = TrainConfig(
            epochs=task.train_cfg.epochs,
            batch_size=task.train_cfg.batch_size,
            step_size=task.train_cfg.step_size,
            mode="retain",
        )

    def step(self, t: int, datasets: list[LabeledDataset], rewards, selectable: bool = True) -> tuple[float, float]:
        if self.feed == "all":
            data = datasets[0]
            for d in datasets[1:]:
                data = data.concat(d)
        else:
            data = datasets[int(np.argmax(rewards))] if selectable else datasets[0]
        model = self.task.model
        self.state = model.train(self.state, data, self.cfg, derive(self.seed, "iter", t, "amtm"))
        return model.evaluate(self.state, self.task.val), model.evaluate(self.state, self.task.test)


# ---------------------------------------------------------------------------
# Protocols


def run(cfg: ExperimentConfig, task: Optional[Task] = None) -> ExperimentHistory:
    proto = cfg.experiment.protocol
    if proto == "lts":
        return run_lts(cfg, task)
    if proto == "random_params":
        return run_random_params(cfg, task)
    if proto == "random_search":
        return run_random_search(cfg, task)[1]
    if proto == "fixed_params":
        return run_fixed_params(cfg, np.asarray(cfg.experiment.fixed_theta), task)
    if proto == "validation_params":
        return run_fixed_params(cfg, None, task)
    raise ConfigError(f"unknown protocol {proto!r}", field="experiment.protocol")


def _rollout_seed(e, t: int, k: int):
    # With shared noise every rollout of an iteration reuses the same sampling
    # and training streams, so reward differences within a batch come from
    # the parameters rather than from the draw.
    if e.shared_noise:
        return derive(e.seed, "iter", t, "shared")
    return derive(e.seed, "iter", t, "rollout", k)


def _policy_from(cfg: ExperimentConfig, mean: np.ndarray) -> pg.PolicyState:
    p = cfg.policy
    return pg.PolicyState(
        mean=mean,
        sigma_sq=p.sigma_sq,
        baseline_decay=p.baseline_decay,
        learning_rate=p.learning_rate,
    )


def _loop(cfg: ExperimentConfig, task: Optional[Task], protocol: str, body) -> ExperimentHistory:
    task = task or build_task(cfg)
    e = cfg.experiment
    hist = ExperimentHistory(protocol=protocol, task=task.name, seed=e.seed)
    amtm = _Amtm(task, e.seed, e.amtm_feed) if e.amtm else None
    with _Executor(task, e.parallelism) as ex:
        for t in range(e.iterations):
            t0 = time.perf_counter()
            try:
                record = body(t, task, ex, amtm, hist)
                if not np.all(np.isfinite(record.rewards)):
                    raise ExperimentError("non-finite reward", iteration=t)
            except ExperimentError as exc:
                exc.partial = hist
                raise
            except Exception as exc:
                err = ExperimentError(f"{type(exc).__name__}: {exc}", iteration=t)
                err.partial = hist
                raise err from exc
            record.wall_time = time.perf_counter() - t0
            hist.records.append(record)
            if t % 25 == 0 or t == e.iterations - 1:
                log.info("%s %s iter %d reward %.4f", protocol, task.name, t, record.rewards.mean())
    return hist


def run_lts(cfg: ExperimentConfig, task: Optional[Task] = None) -> ExperimentHistory:
    e = cfg.experiment
    task = task or build_task(cfg)
    state = {"policy": _policy_from(cfg, initial_mean(cfg, task)), "models": [None] * e.rollouts}

    def body(t, task, ex, amtm, hist):
        policy = state["policy"]
        thetas = pg.sample_batch(policy, e.rollouts, rng(e.seed, "iter", t, "policy"))
        retain = task.train_cfg.mode == "retain"
        jobs = [
            (thetas[k], e.dataset_size, _rollout_seed(e, t, k), state["models"][k] if retain else None, amtm is not None)
            for k in range(e.rollouts)
        ]
        results = ex.map(jobs)
        hist.n_datasets += len(jobs)
        rewards = [r[0] for r in results]
        if retain:
            state["models"] = [r[1] for r in results]
        batch = pg.make_batch(policy, thetas, rewards)
        state["policy"] = pg.update(policy, batch)
        record = IterationRecord(
            t, batch.thetas, batch.rewards, batch.baseline_used, batch.advantages, policy.mean.copy()
        )
        if amtm is not None:
            record.amtm_val, record.amtm_test = amtm.step(t, [r[2] for r in results], rewards)
        return record

    hist = _loop(cfg, task, "lts", body)
    hist.final_mean = np.array(state["policy"].mean)
    return hist


def run_random_params(cfg: ExperimentConfig, task: Optional[Task] = None) -> ExperimentHistory:
    """Fresh prior draws every iteration; the AMTM is fed unselected draws."""
    e = cfg.experiment
    task = task or build_task(cfg)
    prior_mean = np.zeros(task.dim)

    def body(t, task, ex, amtm, hist):
        z = rng(e.seed, "iter", t, "prior").standard_normal((e.rollouts, task.dim))
        thetas = prior_mean + cfg.policy.prior_std * z
        jobs = [
            (thetas[k], e.dataset_size, _rollout_seed(e, t, k), None, amtm is not None)
            for k in range(e.rollouts)
        ]
        results = ex.map(jobs)
        hist.n_datasets += len(jobs)
        rewards = np.array([r[0] for r in results])
        nan = np.full(e.rollouts, math.nan)
        record = IterationRecord(t, thetas, rewards, math.nan, nan, prior_mean.copy())
        if amtm is not None:
            record.amtm_val, record.amtm_test = amtm.step(t, [r[2] for r in results], rewards, selectable=False)
        return record

    hist = _loop(cfg, task, "random_params", body)
    hist.final_mean = prior_mean
    return hist


def run_random_search(cfg: ExperimentConfig, task: Optional[Task] = None) -> tuple[np.ndarray, ExperimentHistory]:
    """One prior draw per iteration; returns the best vector by validation reward."""
    e = cfg.experiment
    task = task or build_task(cfg)
    prior_mean = np.zeros(task.dim)
    best: dict[str, Any] = {"reward": -math.inf}

    def body(t, task, ex, amtm, hist):
        theta = prior_mean + cfg.policy.prior_std * rng(e.seed, "iter", t, "prior").standard_normal(task.dim)
        (reward, model_state, data), = ex.map([(theta, e.dataset_size, derive(e.seed, "iter", t, "rollout", 0), None, amtm is not None)])
        hist.n_datasets += 1
        if reward > best["reward"]:
            best.update(reward=reward, theta=theta, state=model_state)
        record = IterationRecord(t, theta[None, :], np.array([reward]), math.nan, np.array([math.nan]), prior_mean.copy())
        if amtm is not None:
            record.amtm_val, record.amtm_test = amtm.step(t, [data], [reward])
        return record

    hist = _loop(cfg, task, "random_search", body)
    hist.best_theta = np.asarray(best["theta"])
    hist.best_reward = float(best["reward"])
    hist.best_test_reward = float(task.model.evaluate(best["state"], task.test))
    return hist.best_theta, hist


def run_fixed_params(
    cfg: ExperimentConfig, theta: Optional[np.ndarray] = None, task: Optional[Task] = None
) -> ExperimentHistory:
    """One dataset per iteration from ``theta``, or from the validation distribution if ``None``."""
    e = cfg.experiment
    task = task or build_task(cfg)
    if theta is not None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (task.dim,):
            raise ConfigError(f"fixed parameter vector must have length {task.dim}", field="experiment.fixed_theta")
    shown = theta if theta is not None else np.full(task.dim, math.nan)
    models: list = [None]

    def body(t, task, ex, amtm, hist):
        prev = models[0] if task.train_cfg.mode == "retain" else None
        (reward, model_state, data), = ex.map([(theta, e.dataset_size, derive(e.seed, "iter", t, "rollout", 0), prev, amtm is not None)])
        models[0] = model_state
        hist.n_datasets += 1
        record = IterationRecord(t, shown[None, :].copy(), np.array([reward]), math.nan, np.array([math.nan]), shown.copy())
        if amtm is not None:
            record.amtm_val, record.amtm_test = amtm.step(t, [data], [reward])
        return record

    protocol = "fixed_params" if theta is not None else "validation_params"
    hist = _loop(cfg, task, protocol, body)
    hist.final_mean = shown.copy()
    return hist


# ---------------------------------------------------------------------------
# Post-hoc evaluation


def retrain_reward(
    task: Task,
    theta: Optional[np.ndarray],
    size: int,
    train_cfg: TrainConfig,
    seed: SeedLike,
    repeats: int = 1,
    on: str = "test",
) -> float:
    """Mean reward of fresh models trained on ``size`` samples from ``theta``.

    ``theta=None`` samples from the validation distribution instead. ``on``
    picks the held-out set scored: ``"test"`` or ``"val"``.
    """
    if on not in ("test", "val"):
        raise ValueError(f"on must be 'test' or 'val', got {on!r}")
    target = task.test if on == "test" else task.val
    rewards = []
    for r in range(repeats):
        s = derive(seed, "retrain", r)
        data = task.real_source(size, derive(s, "data")) if theta is None else task.simulator.generate(theta, size, derive(s, "data"))
        state = task.model.train(None, data, TrainConfig(train_cfg.epochs, train_cfg.batch_size, train_cfg.step_size, "scratch"), derive(s, "train"))
        rewards.append(task.model.evaluate(state, target))
    return float(np.mean(rewards))


def iterations_to_reach(curve: np.ndarray, target: float, smooth: int = 1) -> int:
    """First index where the trailing ``smooth``-mean of ``curve`` reaches ``target``; ``len(curve)`` if never."""
    c = np.asarray(curve, dtype=np.float64)
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        c = np.convolve(c, kernel, mode="full")[: len(c)] * smooth / np.minimum(np.arange(1, len(c) + 1), smooth)
    hits = np.flatnonzero(c >= target)
    return int(hits[0]) if hits.size else len(c)


def write_summary(hist: ExperimentHistory, path: str | Path, window: int = 10, extra: Optional[dict] = None) -> Path:
    data = hist.summary(window)
    if extra:
        data.update(extra)
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
