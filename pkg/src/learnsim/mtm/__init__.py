"""Main task models trained on simulated data."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .common import TrainConfig
from .counting import CountRegressor, CountRegressorState
from .kernel import KernelClassifier, KernelClassifierState

BLOB_FORMAT = "learnsim-mtm"
BLOB_VERSION = 1

__all__ = [
    "TrainConfig",
    "CountRegressor",
    "CountRegressorState",
    "KernelClassifier",
    "KernelClassifierState",
    "save_state",
    "load_state",
]


def save_state(state, path: str | Path) -> Path:
    """Write a model state to a versioned ``.npz`` blob."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {
        "format": np.array(BLOB_FORMAT),
        "version": np.array(BLOB_VERSION),
        "kind": np.array(state.kind),
    }
    if isinstance(state, KernelClassifierState):
        arrays.update(
            support=state.support,
            coef=state.coef,
            bias=np.array(state.bias),
            gamma=np.array(state.gamma),
            lam=np.array(state.lam),
        )
    elif isinstance(state, CountRegressorState):
        for k, v in state.params.items():
            arrays[f"param_{k}"] = v
            arrays[f"m_{k}"] = state.opt_m[k]
            arrays[f"v_{k}"] = state.opt_v[k]
        arrays["opt_t"] = np.array(state.opt_t)
    else:
        raise TypeError(f"cannot serialise {type(state).__name__}")
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_state(path: str | Path):
    with np.load(Path(path), allow_pickle=False) as z:
        if str(z["format"]) != BLOB_FORMAT:
            raise ValueError(f"{path} is not a model blob")
        version = int(z["version"])
        if version != BLOB_VERSION:
            raise ValueError(f"unsupported model blob version {version}")
        kind = str(z["kind"])
        if kind == KernelClassifierState.kind:
            return KernelClassifierState(
                z["support"], z["coef"], float(z["bias"]), float(z["gamma"]), float(z["lam"])
            )
        if kind == CountRegressorState.kind:
            names = [k[len("param_") :] for k in z.files if k.startswith("param_")]
            return CountRegressorState(
                {k: z[f"param_{k}"] for k in names},
                {k: z[f"m_{k}"] for k in names},
                {k: z[f"v_{k}"] for k in names},
                int(z["opt_t"]),
            )
    raise ValueError(f"unknown model kind {kind!r}")
