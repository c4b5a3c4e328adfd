"""Deterministic random streams.

Every random draw in the package flows through a Philox4x64 counter-based
generator with an explicit 128-bit key, so any artifact (dataset, initial
weights, dropout masks, shuffles) regenerates bit-identically from its seed.
The key layout is (seed, stream): independent streams of the same seed are
obtained by varying the second key word, e.g. per-sequence streams in the
data generators use stream = index_offset + sequence_index.

Gaussian variates use the classic Box-Muller transform over Philox uniforms
rather than numpy's ziggurat sampler, so the exact stream is reproducible
from the documented recipe in any language with a Philox implementation:

    u1 = 1 - random64()/2^64   (in (0, 1])
    u2 = random64()/2^64
    z0 = sqrt(-2 ln u1) * cos(2 pi u2)
    z1 = sqrt(-2 ln u1) * sin(2 pi u2)

drawn in pairs and consumed in order z0, z1, z0, z1, ...
"""

from __future__ import annotations

import numpy as np

__all__ = ["philox", "uniform", "standard_normals", "normals"]


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator over Philox4x64 keyed by (seed, stream)."""
    seed = int(seed)
    stream = int(stream)
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative integers")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniform(rng: np.random.Generator, shape, low: float, high: float) -> np.ndarray:
    """Uniform draws on [low, high)."""
    if high < low:
        raise ValueError("uniform: high < low")
    return low + (high - low) * rng.random(shape)


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via Box-Muller over the Philox stream."""
    if np.isscalar(shape):
        shape = (int(shape),)
    count = int(np.prod(shape)) if len(shape) else 1
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]: log is finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count].reshape(shape)


def normals(rng: np.random.Generator, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise ValueError("normals: std must be non-negative")
    return mean + std * standard_normals(rng, shape)
