"""Integer voxel indexing and packing of (a, b, c) triples into int64 keys.

Packed keys let voxel sets live in flat numpy arrays and plain ``set[int]``
objects instead of sets of tuples, which matters once a map holds a few
hundred thousand occupancy lists.
"""

from __future__ import annotations

import numpy as np

_BITS = 21
_OFFSET = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1

# Sorts after every valid key; used to pad ragged per-row key arrays.
SENTINEL = np.iinfo(np.int64).max


def voxel_index(p, delta: float) -> tuple[int, int, int]:
    """Return the integer cell ``floor(p / delta)`` containing point ``p``.

    Negative coordinates floor toward minus infinity, so ``-0.01`` with a
    ``0.03`` cell lands in cell ``-1``.
    """
    if delta <= 0:
        raise ValueError(f"voxel size must be positive, got {delta}")
    a, b, c = np.floor(np.asarray(p, dtype=float) / delta).astype(np.int64)
    return int(a), int(b), int(c)


def voxel_indices(points: np.ndarray, delta: float) -> np.ndarray:
    """Vectorised :func:`voxel_index` over an ``(..., 3)`` array."""
    return np.floor(np.asarray(points, dtype=float) / delta).astype(np.int64)


def pack(abc) -> np.ndarray | int:
    """Pack integer triples (last axis of length 3) into int64 keys."""
    arr = np.asarray(abc, dtype=np.int64)
    shifted = arr + _OFFSET
    if np.any(shifted < 0) or np.any(shifted > _MASK):
        raise ValueError("voxel index out of packable range (|i| < 2**20)")
    key = (shifted[..., 0] << (2 * _BITS)) | (shifted[..., 1] << _BITS) | shifted[..., 2]
    if key.ndim == 0:
        return int(key)
    return key


def unpack(keys) -> np.ndarray:
    """Inverse of :func:`pack`; returns an ``(..., 3)`` int64 array."""
    k = np.asarray(keys, dtype=np.int64)
    a = ((k >> (2 * _BITS)) & _MASK) - _OFFSET
    b = ((k >> _BITS) & _MASK) - _OFFSET
    c = (k & _MASK) - _OFFSET
    return np.stack([a, b, c], axis=-1)


def pack_points(points: np.ndarray, delta: float) -> np.ndarray:
    """Voxel keys of an ``(N, 3)`` point array."""
    return pack(voxel_indices(points, delta))


def to_tuples(keys) -> set[tuple[int, int, int]]:
    return {tuple(int(v) for v in row) for row in unpack(np.asarray(list(keys), dtype=np.int64).reshape(-1))}
