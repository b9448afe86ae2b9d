"""Unconstrained simulator parameter vectors and their decoding.

A simulator is driven by a flat real vector. A :class:`ParamSchema` cuts that
vector into named blocks, and :func:`decode` maps each block onto the
parameters of a probability distribution:

==================  =========  =========================================
kind                width      decoded value
==================  =========  =========================================
categorical(k)      k          probability vector (softmax)
bernoulli           1          probability (logistic sigmoid)
gaussian_mean(d)    d          real vector (identity)
gaussian_variance   d          positive vector (softplus)
==================  =========  =========================================
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError, ValidationError

PROB_FLOOR = 1e-12
VARIANCE_FLOOR = 1e-12


class BlockKind(str, Enum):
    CATEGORICAL = "categorical"
    BERNOULLI = "bernoulli"
    GAUSSIAN_MEAN = "gaussian_mean"
    GAUSSIAN_VARIANCE = "gaussian_variance"


def expected_width(kind: BlockKind, size: int) -> int:
    return 1 if kind is BlockKind.BERNOULLI else size


@dataclass(frozen=True)
class ParamBlock:
    """One named slice of the flat vector.

    ``size`` is the arity for categorical blocks and the dimension for the
    Gaussian kinds; bernoulli blocks have size 1.
    """

    name: str
    kind: BlockKind
    size: int
    offset: int
    width: int

    @property
    def stop(self) -> int:
        return self.offset + self.width

    def slice(self) -> slice:
        return slice(self.offset, self.stop)


@dataclass(frozen=True)
class ParamSchema:
    blocks: tuple[ParamBlock, ...]
    total_dim: int

    @classmethod
    def build(cls, spec: Iterable[tuple[str, str | BlockKind, int]]) -> "ParamSchema":
        """Lay out ``(name, kind, size)`` triples contiguously from offset 0."""
        blocks = []
        offset = 0
        for name, kind, size in spec:
            kind = BlockKind(kind)
            width = expected_width(kind, size)
            blocks.append(ParamBlock(name, kind, int(size), offset, width))
            offset += width
        schema = cls(tuple(blocks), offset)
        validate_schema(schema)
        return schema

    def block(self, name: str) -> ParamBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.blocks]

    def describe(self) -> list[dict]:
        return [{"name": b.name, "kind": b.kind.value, "size": b.size} for b in self.blocks]


def validate_schema(schema: ParamSchema) -> None:
    """Raise :class:`SchemaError` describing the first violation found.

    Checks positive sizes, kind-consistent widths, unique names, contiguous
    tiling from offset 0 and ``total_dim`` equal to the summed widths.
    """
    seen = set()
    cursor = 0
    for i, b in enumerate(schema.blocks):
        where = f"block {i} ({b.name!r})"
        if b.name in seen:
            raise SchemaError(f"{where}: duplicate block name")
        seen.add(b.name)
        if b.kind is BlockKind.CATEGORICAL and b.size < 1:
            raise SchemaError(f"{where}: categorical arity must be >= 1, got {b.size}")
        if b.size < 1:
            raise SchemaError(f"{where}: size must be >= 1, got {b.size}")
        if b.width != expected_width(b.kind, b.size):
            raise SchemaError(
                f"{where}: width {b.width} inconsistent with {b.kind.value}({b.size})"
            )
        if b.offset < cursor:
            raise SchemaError(f"{where}: overlaps previous block (offset {b.offset} < {cursor})")
        if b.offset > cursor:
            raise SchemaError(f"{where}: gap before block (offset {b.offset} > {cursor})")
        cursor = b.stop
    if schema.total_dim != cursor:
        raise SchemaError(f"total_dim {schema.total_dim} != sum of widths {cursor}")


def check_theta(schema: ParamSchema, theta: Sequence[float] | np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != schema.total_dim:
        raise SchemaError(
            f"parameter vector has shape {theta.shape}, schema expects ({schema.total_dim},)"
        )
    if not np.all(np.isfinite(theta)):
        bad = np.flatnonzero(~np.isfinite(theta)).tolist()
        raise ValidationError(f"parameter vector has non-finite entries at {bad}")
    return theta


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    p = e / e.sum()
    # Floor then renormalize: entries stay in (0, 1) and the sum stays 1.
    np.clip(p, PROB_FLOOR, 1.0, out=p)
    return p / p.sum()


def sigmoid(x: float) -> float:
    if x >= 0:
        p = 1.0 / (1.0 + np.exp(-x))
    else:
        e = np.exp(x)
        p = e / (1.0 + e)
    return float(min(max(p, PROB_FLOOR), 1.0 - PROB_FLOOR))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.logaddexp(0.0, x), VARIANCE_FLOOR)


def inverse_softplus(y: np.ndarray | float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def decode(schema: ParamSchema, theta: Sequence[float] | np.ndarray) -> dict[str, np.ndarray | float]:
    """Decode ``theta`` into per-block distribution parameters.

    Bernoulli blocks decode to a Python float, every other kind to a fresh
    1-D array.
    """
    theta = check_theta(schema, theta)
    out: dict[str, np.ndarray | float] = {}
    for b in schema.blocks:
        raw = theta[b.slice()]
        if b.kind is BlockKind.CATEGORICAL:
            out[b.name] = softmax(raw)
        elif b.kind is BlockKind.BERNOULLI:
            out[b.name] = sigmoid(float(raw[0]))
        elif b.kind is BlockKind.GAUSSIAN_MEAN:
            out[b.name] = raw.copy()
        else:
            out[b.name] = softplus(raw)
    return out


def encode_categorical(probs: Sequence[float]) -> np.ndarray:
    """Logits whose softmax is ``probs`` (up to the probability floor)."""
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError(f"not a strictly positive distribution: {probs}")
    return np.log(p)


def encode_bernoulli(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValidationError(f"bernoulli probability must lie in (0, 1), got {p}")
    return float(np.log(p) - np.log1p(-p))


def decoded_to_jsonable(decoded: dict[str, np.ndarray | float]) -> dict[str, list[float] | float]:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else float(v)) for k, v in decoded.items()}
