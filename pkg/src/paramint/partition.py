"""Dyadic cube geometry on [0,1]^d.

Level l splits the cube into 2^(d*l) congruent cells of side 2^-l.  Cells are
enumerated 1..2^(d*l) in row-major lexicographic order of the per-axis digits,
last axis fastest, so that the joint index of a product cell factors as
i = 2^(d2*l)*(i1-1) + i2.  A cell's anchor is its componentwise-least corner.

Point location uses half-open cells [a, b) except the last cell per axis,
which is closed; all functions are pure and accept vectorized inputs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "num_cells", "cell_anchor", "split_index", "join_index",
    "rescale_to_cell", "restrict_from_cell", "locate_cell",
]


def num_cells(level: int, dim: int) -> int:
    return 1 << (dim * level)


def _check_index(i, level, dim):
    n = num_cells(level, dim)
    i = np.asarray(i)
    if np.any((i < 1) | (i > n)):
        raise IndexError(f"cell index out of range [1, {n}] at level {level}")


def cell_anchor(level: int, i, dim: int) -> np.ndarray:
    """Componentwise-least corner of cell i at the given level.

    i may be a scalar or an integer array; returns shape (..., dim).
    Anchors 2^-l * k are exact binary floats for level <= 50.
    """
    _check_index(i, level, dim)
    idx = np.asarray(i, dtype=np.int64) - 1
    digits = np.empty(np.shape(idx) + (dim,), dtype=np.int64)
    for axis in range(dim - 1, -1, -1):
        digits[..., axis] = idx & ((1 << level) - 1)
        idx = idx >> level
    anchors = digits * (2.0 ** -level)
    return anchors if np.ndim(i) else anchors.reshape(dim)


def split_index(i, level: int, d1: int, d2: int):
    """Factor a joint cell index into its (parameter, integration) pair."""
    _check_index(i, level, d1 + d2)
    idx = np.asarray(i, dtype=np.int64) - 1
    n2 = num_cells(level, d2)
    i1 = idx // n2 + 1
    i2 = idx % n2 + 1
    if np.ndim(i):
        return i1, i2
    return int(i1), int(i2)


def join_index(i1, i2, level: int, d1: int, d2: int):
    """Inverse of split_index: i = 2^(d2*l)*(i1-1) + i2."""
    n2 = num_cells(level, d2)
    out = n2 * (np.asarray(i1, dtype=np.int64) - 1) + np.asarray(i2, dtype=np.int64)
    return out if np.ndim(out) else int(out)


def rescale_to_cell(level: int, i, s, dim: int) -> np.ndarray:
    """Map local coordinates in [0,1]^d to global coordinates in cell i."""
    s = np.asarray(s, dtype=np.float64)
    return cell_anchor(level, i, dim) + (2.0 ** -level) * s


def restrict_from_cell(level: int, i, s, dim: int) -> np.ndarray:
    """Inverse map of rescale_to_cell: global point -> local cell coordinate."""
    s = np.asarray(s, dtype=np.float64)
    return (2.0 ** level) * (s - cell_anchor(level, i, dim))


def locate_cell(level: int, s, dim: int):
    """Cell index (1-based) containing each point of s (shape (..., dim)).

    Faces are owned per the half-open convention; the top face per axis
    belongs to the last cell.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != dim:
        raise ValueError(f"points must have last dimension {dim}")
    n_axis = 1 << level
    digits = np.floor(s * n_axis).astype(np.int64)
    np.clip(digits, 0, n_axis - 1, out=digits)
    idx = np.zeros(s.shape[:-1], dtype=np.int64)
    for axis in range(dim):
        idx = (idx << level) | digits[..., axis]
    out = idx + 1
    return out if out.ndim else int(out)
