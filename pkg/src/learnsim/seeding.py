"""Deterministic, splittable randomness.

Every random draw in a run is addressed by a *seed path*: the master seed
followed by a tuple of labels (ints or short strings), e.g.
``(seed, "iter", 3, "rollout", 1, "data")``. A path maps to a
:class:`numpy.random.SeedSequence` whose spawn key is the label tuple, so two
different paths never share a stream and the mapping does not depend on the
order in which streams are requested.

Datasets use a stricter layout: :func:`uniform_rows` draws a fixed number of
uniforms per sample from a keyed Philox stream, row-major, so sample ``i`` is a
function of ``(path, i)`` only. Generating ``M`` samples yields a prefix of the
``M + 1`` sample set, and any contiguous chunk can be produced independently.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np
from scipy.special import ndtri

Label = Union[int, str]
SeedLike = Union[int, np.random.SeedSequence]

# Floor keeping every uniform strictly inside (0, 1) so ndtri stays finite;
# Generator.random already excludes 1.0.
_TINY = 2.0**-54


def _label_to_int(label: Label) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean seed labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"seed labels must be non-negative, got {label}")
        return int(label)
    if isinstance(label, str):
        # crc32 is stable across processes, unlike hash().
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"unsupported seed label {label!r}")


def derive(seed: SeedLike, *path: Label) -> np.random.SeedSequence:
    """Return the seed sequence for ``path`` below ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        key = tuple(seed.spawn_key) + tuple(_label_to_int(p) for p in path)
        return np.random.SeedSequence(seed.entropy, spawn_key=key)
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_label_to_int(p) for p in path))


def rng(seed: SeedLike, *path: Label) -> np.random.Generator:
    """A PCG64 generator for the stream at ``path``."""
    return np.random.Generator(np.random.PCG64(derive(seed, *path)))


def uniform_rows(seed: SeedLike, n: int, width: int) -> np.ndarray:
    """``(n, width)`` uniforms in the open interval (0, 1).

    Row ``i`` consumes draws ``[i * width, (i + 1) * width)`` of a Philox
    stream keyed by ``seed``; the result for ``n`` rows is a prefix of the
    result for any larger ``n``.
    """
    key = derive(seed).generate_state(2, dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random((n, width))
    np.maximum(u, _TINY, out=u)
    return u


def normals_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Standard normal deviates by inverse CDF."""
    return ndtri(u)


def seed_repr(seed: SeedLike):
    """JSON-friendly description of a seed, for dataset metadata."""
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": [int(k) for k in seed.spawn_key]}
    return int(seed)
