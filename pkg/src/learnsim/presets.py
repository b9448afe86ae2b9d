"""Named experiment matrices behind ``learnsim reproduce``.

Each preset runs a small grid of experiments and reduces it to a comparison
table (a list of row dicts). Rows always carry the per-seed values next to the
aggregate so the table can be re-analysed without rerunning anything.

Definitions used throughout:

final reward
    mean per-iteration rollout reward over the last ``final_window`` iterations.
retrain reward
    test reward of fresh models trained on data drawn from a fixed parameter
    vector (or the validation distribution), averaged over a few draws.
revalidated reward
    the same, scored on the validation set with the run's own dataset size.
    Random search reports the maximum of many noisy rewards, which is biased
    upwards; re-scoring the returned parameters on fresh draws removes that.
"""

from __future__ import annotations

import csv
import functools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import orchestrator as orch
from .config import ExperimentConfig, default_config
from .seeding import derive

PRESETS: dict[str, Callable[..., "PresetResult"]] = {}

RETRAIN_REPEATS = 5
REVALIDATE_REPEATS = 20
RETRAIN_SIZE = {"gmm": 200, "traffic": 500}


@dataclass
class PresetResult:
    name: str
    rows: list[dict[str, Any]]
    histories: dict[str, orch.ExperimentHistory] = field(default_factory=dict)

    def row(self, label: str) -> dict[str, Any]:
        for r in self.rows:
            if r["label"] == label:
                return r
        raise KeyError(label)

    def write(self, out_dir: str | Path) -> list[Path]:
        """Write ``<name>_table.csv`` plus one history CSV per run."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [_write_table(self.rows, out / f"{self.name}_table.csv")]
        for key, hist in self.histories.items():
            written.append(hist.write_csv(out / f"{key}_history.csv"))
        return written


def _write_table(rows: list[dict[str, Any]], path: Path) -> Path:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return path


def preset(name: str):
    def register(fn):
        PRESETS[name] = fn
        return fn

    return register


def run_preset(name: str, **kwargs) -> PresetResult:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return PRESETS[name](**kwargs)


class _Runner:
    """Runs configs once and memoises by config digest."""

    def __init__(self, overrides: Optional[list[str]] = None, cache: Optional[dict] = None):
        self.overrides = overrides or []
        self.cache = {} if cache is None else cache
        self._tasks: dict[str, orch.Task] = {}

    def config(self, task: str, **sections) -> ExperimentConfig:
        return default_config(task, **sections).with_overrides(self.overrides)

    def task(self, cfg: ExperimentConfig) -> orch.Task:
        # validation/test sets depend only on the world and data seed
        key = json.dumps(
            [cfg.experiment.task, cfg.experiment.data_seed, cfg.to_mapping()["gmm"], cfg.to_mapping()["traffic"],
             cfg.to_mapping()["train"], cfg.to_mapping()["kernel"], cfg.to_mapping()["counter"]],
            sort_keys=True,
        )
        if key not in self._tasks:
            self._tasks[key] = orch.build_task(cfg)
        return self._tasks[key]

    def run(self, cfg: ExperimentConfig) -> orch.ExperimentHistory:
        key = cfg.digest()
        if key not in self.cache:
            self.cache[key] = orch.run(cfg, self.task(cfg))
        return self.cache[key]

    def retrain(self, cfg: ExperimentConfig, theta) -> float:
        task = self.task(cfg)
        return orch.retrain_reward(
            task, theta, RETRAIN_SIZE[task.name], task.train_cfg, derive(cfg.experiment.seed, "eval"), RETRAIN_REPEATS
        )


    def revalidate(self, cfg: ExperimentConfig, theta) -> float:
        task = self.task(cfg)
        return orch.retrain_reward(
            task, theta, cfg.experiment.dataset_size, task.train_cfg, derive(cfg.experiment.seed, "revalidate"), REVALIDATE_REPEATS, on="val"
        )


def _summary(values: list[float]) -> dict[str, Any]:
    v = np.asarray(values, dtype=np.float64)
    return {"median": float(np.median(v)), "mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0, "per_seed": v.tolist()}


# ---------------------------------------------------------------------------
# GMM


def _gmm_lts_rows(r: _Runner, seeds, components: list[int], iterations=None):
    rows, hists = [], {}
    for comps in components:
        tests, finals = [], []
        for s in seeds:
            exp = {"seed": s} | ({"iterations": iterations} if iterations else {})
            cfg = r.config("gmm", experiment=exp, gmm={"components": comps})
            h = r.run(cfg)
            hists[f"gmm_{comps}comp_seed{s}"] = h
            finals.append(h.final_reward(cfg.experiment.final_window))
            tests.append(r.retrain(cfg, h.final_mean))
        label = "1 gaussian" if comps == 1 else f"{comps} gaussians"
        rows.append({"label": label, "test_accuracy": _summary(tests)["median"], "test": _summary(tests), "final_val_reward": _summary(finals)})
    return rows, hists


def _gmm_val_row(r: _Runner, seeds):
    tests = []
    for s in seeds:
        cfg = r.config("gmm", experiment={"seed": s})
        tests.append(r.retrain(cfg, None))
    return {"label": "val params", "test_accuracy": _summary(tests)["median"], "test": _summary(tests)}


@preset("toy_gmm")
def toy_gmm(seeds=(0, 1, 2), overrides=None, cache=None, iterations=None) -> PresetResult:
    """Accuracy table: 1 and 2 simulator Gaussians per class vs real-data training."""
    r = _Runner(overrides, cache)
    rows, hists = _gmm_lts_rows(r, seeds, [1, 2], iterations)
    rows.append(_gmm_val_row(r, seeds))
    return PresetResult("toy_gmm", rows, hists)


@preset("toy_gmm_1comp")
def toy_gmm_1comp(seeds=(0, 1, 2), overrides=None, cache=None, iterations=None) -> PresetResult:
    r = _Runner(overrides, cache)
    rows, hists = _gmm_lts_rows(r, seeds, [1], iterations)
    return PresetResult("toy_gmm_1comp", rows, hists)


# ---------------------------------------------------------------------------
# Traffic


def traffic_protocol_config(r: _Runner, protocol: str, seed: int, iterations=None, **sections) -> ExperimentConfig:
    exp = {"seed": seed, "protocol": protocol, "amtm": True} | sections.pop("experiment", {})
    if iterations:
        exp["iterations"] = iterations
    return r.config("traffic", experiment=exp, **sections)


@preset("traffic_lts")
def traffic_lts(seeds=(0, 1, 2, 3, 4), overrides=None, cache=None, iterations=None) -> PresetResult:
    """Accumulated-model test reward: LTS vs validation params vs random params."""
    r = _Runner(overrides, cache)
    rows, hists = [], {}
    for proto in ("validation_params", "lts", "random_params"):
        amtm, finals = [], []
        for s in seeds:
            cfg = traffic_protocol_config(r, proto, s, iterations)
            h = r.run(cfg)
            hists[f"traffic_{proto}_seed{s}"] = h
            amtm.append(h.final_amtm_test(cfg.experiment.final_window))
            finals.append(h.final_reward(cfg.experiment.final_window))
        rows.append({"label": proto, "amtm_test": _summary(amtm), "final_val_reward": _summary(finals)})
    return PresetResult("traffic_lts", rows, hists)


def reach_target(final: float) -> float:
    """Reward level counted as "90% of" ``final``; rewards are negative errors here."""
    return final / 0.9 if final < 0 else 0.9 * final


@preset("traffic_adversarial")
def traffic_adversarial(seeds=(0, 1, 2), overrides=None, cache=None, iterations=None, smooth=10) -> PresetResult:
    """Standard vs adversarial initialisation: final reward and iterations to 90% of it."""
    r = _Runner(overrides, cache)
    hists, finals, curves = {}, {}, {}
    for init in ("standard", "adversarial"):
        for s in seeds:
            cfg = traffic_protocol_config(r, "lts", s, iterations, experiment={"amtm": False}, policy={"init": init})
            h = r.run(cfg)
            hists[f"traffic_{init}_seed{s}"] = h
            finals.setdefault(init, []).append(h.final_reward(cfg.experiment.final_window))
            curves.setdefault(init, []).append(h.mean_rewards)
    target = reach_target(float(np.median(finals["standard"])))
    rows = []
    for init in ("standard", "adversarial"):
        reach = [orch.iterations_to_reach(c, target, smooth) for c in curves[init]]
        rows.append(
            {
                "label": init,
                "final_reward": _summary(finals[init]),
                "target": target,
                "iterations_to_target": _summary(reach),
            }
        )
    return PresetResult("traffic_adversarial", rows, hists)


@preset("traffic_epoch_ablation")
def traffic_epoch_ablation(seeds=(0,), overrides=None, cache=None, iterations=None, epochs=(1, 3, 7, 10)) -> PresetResult:
    """LTS with the accumulated model for several training-epoch settings."""
    r = _Runner(overrides, cache)
    rows, hists = [], {}
    for xi in epochs:
        amtm, finals = [], []
        for s in seeds:
            cfg = traffic_protocol_config(r, "lts", s, iterations, train={"epochs": xi})
            h = r.run(cfg)
            hists[f"traffic_epochs{xi}_seed{s}"] = h
            amtm.append(h.final_amtm_test(cfg.experiment.final_window))
            finals.append(h.final_reward(cfg.experiment.final_window))
        rows.append({"label": f"epochs={xi}", "epochs": xi, "amtm_test": _summary(amtm), "final_val_reward": _summary(finals)})
    return PresetResult("traffic_epoch_ablation", rows, hists)


@preset("traffic_M_ablation")
def traffic_m_ablation(seeds=(0,), overrides=None, cache=None, iterations=None, sizes=(20, 50, 100, 200)) -> PresetResult:
    """LTS for several dataset sizes; final parameters scored by retraining at a common size."""
    r = _Runner(overrides, cache)
    rows, hists = [], {}
    for m in sizes:
        retrain, finals = [], []
        for s in seeds:
            cfg = traffic_protocol_config(r, "lts", s, iterations, experiment={"amtm": False, "dataset_size": m})
            h = r.run(cfg)
            hists[f"traffic_M{m}_seed{s}"] = h
            finals.append(h.final_reward(cfg.experiment.final_window))
            retrain.append(r.retrain(cfg, h.final_mean))
        rows.append({"label": f"M={m}", "dataset_size": m, "retrain_test": _summary(retrain), "final_val_reward": _summary(finals)})
    return PresetResult("traffic_M_ablation", rows, hists)


def lts_vs_random_search(task="traffic", seeds=(0, 1, 2, 3, 4), overrides=None, cache=None, iterations=None) -> PresetResult:
    """LTS against random search at the same number of policy iterations."""
    r = _Runner(overrides, cache)
    rows, hists = [], {}
    for proto in ("lts", "random_search"):
        raw, reval = [], []
        for s in seeds:
            if task == "traffic":
                # same runs as the baseline comparison, accumulated model included
                cfg = traffic_protocol_config(r, proto, s, iterations, experiment={"amtm": proto == "lts"})
            else:
                exp = {"seed": s, "protocol": proto} | ({"iterations": iterations} if iterations else {})
                cfg = r.config(task, experiment=exp)
            h = r.run(cfg)
            hists[f"{task}_{proto}_seed{s}"] = h
            if proto == "lts":
                raw.append(h.final_reward(cfg.experiment.final_window))
                reval.append(r.revalidate(cfg, h.final_mean))
            else:
                raw.append(h.best_reward)
                reval.append(r.revalidate(cfg, h.best_theta))
        rows.append({"label": proto, "reported_val_reward": _summary(raw), "revalidated": _summary(reval)})
    return PresetResult(f"lts_vs_random_search_{task}", rows, hists)


for _task in ("gmm", "traffic"):
    PRESETS[f"lts_vs_random_search_{_task}"] = functools.partial(lts_vs_random_search, _task)


@preset("seeds_repro")
def seeds_repro(seeds=(0, 1, 2), overrides=None, cache=None, iterations=None) -> PresetResult:
    """LTS on the counting task under several seeds, plus a rerun of the first seed."""
    r = _Runner(overrides, cache)
    rows, hists = [], {}
    for s in seeds:
        cfg = traffic_protocol_config(r, "lts", s, iterations)
        h = r.run(cfg)
        hists[f"traffic_seed{s}"] = h
        rows.append(
            {
                "label": f"seed={s}",
                "seed": s,
                "final_reward": h.final_reward(cfg.experiment.final_window),
                "amtm_test": h.final_amtm_test(cfg.experiment.final_window),
            }
        )
    # fresh run, bypassing the memo, to check determinism
    cfg = traffic_protocol_config(r, "lts", seeds[0], iterations)
    again = orch.run(cfg, r.task(cfg))
    rows.append({"label": "rerun", "seed": seeds[0], "identical": again.same_as(hists[f"traffic_seed{seeds[0]}"])})
    return PresetResult("seeds_repro", rows, hists)
