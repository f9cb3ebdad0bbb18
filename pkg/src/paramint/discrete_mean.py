"""Vector-valued mean computation: row means of an N1 x N2 value tensor.

Two randomized estimators are provided.  The non-adaptive one samples columns
uniformly with equal per-row budgets (at most 2n accesses, unbiased once every
row gets a sample).  The adaptive one runs m independent two-stage repetitions
per row -- an empirical moment scan followed by a truncated mean -- and takes
the per-row median; it is the data-driven-truncation mechanism that beats
non-adaptive sampling for 2 < p < q, at most 6mn accesses.

Both estimators are deterministic functions of (tensor, budget, seed), map the
zero tensor to the zero vector bitwise, and count every access.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problem import INF

__all__ = [
    "ValueTensor", "DenseTensor", "MeanEstimate",
    "discrete_norm", "exact_mean", "mc_mean_nonadaptive", "mc_mean_adaptive",
]


class ValueTensor:
    """Counted accessor for an N1 x N2 array of scalars.

    Subclasses implement _values(rows, cols) for 0-based index arrays.
    Access counting records the raw number of gathered entries and the set of
    distinct (row, col) pairs touched.
    """

    def __init__(self, n1: int, n2: int):
        if n1 < 1 or n2 < 1:
            raise ValueError("tensor must be non-empty")
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.raw_accesses = 0
        self._touched: list[np.ndarray] = []

    def _values(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gather(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        rows, cols = np.broadcast_arrays(rows, cols)
        self.raw_accesses += rows.size
        keys = np.unique(rows.ravel() * self.n2 + cols.ravel())
        self._touched.append(keys)
        return self._values(rows, cols)

    def value(self, i: int, j: int) -> float:
        """1-based single-entry access."""
        if not (1 <= i <= self.n1 and 1 <= j <= self.n2):
            raise IndexError("tensor index out of range")
        return float(self.gather(np.array([i - 1]), np.array([j - 1]))[0])

    def touch_marker(self) -> int:
        return len(self._touched)

    def distinct_since(self, marker: int = 0) -> int:
        segs = self._touched[marker:]
        if not segs:
            return 0
        if len(segs) == 1:
            return int(segs[0].size)
        return int(np.unique(np.concatenate(segs)).size)

    def distinct_accesses(self) -> int:
        return self.distinct_since(0)

    def reset_counts(self):
        self.raw_accesses = 0
        self._touched = []


class DenseTensor(ValueTensor):
    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("dense tensor needs a 2-d array")
        super().__init__(*values.shape)
        self.values = values

    def _values(self, rows, cols):
        return self.values[rows, cols]


@dataclass
class MeanEstimate:
    """Estimated row means plus the access accounting of the producing run."""

    row_means: np.ndarray
    eval_count: int          # distinct entries touched
    raw_count: int           # entries touched counting repetitions
    cap: int                 # declared cardinality cap of the estimator

    def __post_init__(self):
        assert self.raw_count <= self.cap, \
            f"cardinality cap violated: {self.raw_count} > {self.cap}"
        assert self.eval_count <= self.raw_count


def _as_tensor(f) -> ValueTensor:
    if isinstance(f, ValueTensor):
        return f
    return DenseTensor(f)


def discrete_norm(f, p) -> float:
    """L_p norm under the normalized counting measure; max norm for p = inf."""
    if isinstance(f, DenseTensor):
        vals = f.values
    elif isinstance(f, ValueTensor):
        raise ValueError("discrete_norm needs dense values")
    else:
        vals = np.asarray(f, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("empty tensor")
    if p == INF:
        return float(np.max(np.abs(vals)))
    p = float(p)
    if p < 1:
        raise ValueError("p must lie in [1, inf]")
    return float(np.mean(np.abs(vals) ** p) ** (1.0 / p))


def exact_mean(f) -> MeanEstimate:
    """Row means using every entry once."""
    f = _as_tensor(f)
    rows, cols = np.meshgrid(np.arange(f.n1), np.arange(f.n2), indexing="ij")
    vals = f.gather(rows, cols)
    total = f.n1 * f.n2
    return MeanEstimate(vals.mean(axis=1), eval_count=total, raw_count=total,
                        cap=total)


def mc_mean_nonadaptive(f, n: int, rng: np.random.Generator) -> MeanEstimate:
    """Uniform column sampling with equal per-row budgets; at most 2n accesses.

    For n >= N1 each row gets ceil(n/N1) i.i.d. uniform column samples and the
    estimator is unbiased.  For n < N1, n rows chosen without replacement get
    one sample each and the remaining rows return 0.
    """
    f = _as_tensor(f)
    n = int(n)
    if n < 1:
        raise ValueError("budget n must be >= 1")
    if n >= f.n1 * f.n2:
        raise ValueError("budget covers the tensor; use exact_mean")
    raw0, marker = f.raw_accesses, f.touch_marker()
    if n >= f.n1:
        k = -(-n // f.n1)
        cols = rng.integers(0, f.n2, size=(f.n1, k))
        rows = np.broadcast_to(np.arange(f.n1)[:, None], cols.shape)
        vals = f.gather(rows, cols)
        means = vals.mean(axis=1)
        cap = 2 * n
    else:
        rows = rng.choice(f.n1, size=n, replace=False)
        cols = rng.integers(0, f.n2, size=n)
        vals = f.gather(rows, cols)
        means = np.zeros(f.n1)
        means[rows] = vals
        cap = 2 * n
    raw = f.raw_accesses - raw0
    return MeanEstimate(means, eval_count=f.distinct_since(marker),
                        raw_count=raw, cap=cap)


def mc_mean_adaptive(f, n: int, m: int, p, rng: np.random.Generator) -> MeanEstimate:
    """Two-stage truncated estimation, median over m repetitions; cap 6mn.

    Stage 1 estimates a per-row p-th moment scale from ceil(n/N1) samples,
    stage 2 averages fresh samples with values above scale * k^(1/p) dropped;
    the per-row median over the m repetitions is returned.  Rows with zero
    stage-1 scale estimate to 0.  Defined for p > 2 only.
    """
    f = _as_tensor(f)
    n, m = int(n), int(m)
    if not (p == INF or p > 2):
        raise ValueError("adaptive estimator requires p > 2")
    if m < 1:
        raise ValueError("repetition count m must be >= 1")
    if n < 1:
        raise ValueError("budget n must be >= 1")
    if n >= f.n1 * f.n2:
        raise ValueError("budget covers the tensor; use exact_mean")
    p_float = float(p) if p != INF else math.inf
    raw0, marker = f.raw_accesses, f.touch_marker()
    subsampled = n < f.n1
    if subsampled:
        sub_rows = rng.choice(f.n1, size=n, replace=False)
        k = 1
        nrows = n
    else:
        sub_rows = None
        k = -(-n // f.n1)
        nrows = f.n1
    rep_estimates = np.empty((m, nrows))
    for rep in range(m):
        cols1 = rng.integers(0, f.n2, size=(nrows, k))
        cols2 = rng.integers(0, f.n2, size=(nrows, k))
        if subsampled:
            rows = np.broadcast_to(sub_rows[:, None], cols1.shape)
        else:
            rows = np.broadcast_to(np.arange(f.n1)[:, None], cols1.shape)
        stage1 = f.gather(rows, cols1)
        stage2 = f.gather(rows, cols2)
        if math.isinf(p_float):
            scale = np.max(np.abs(stage1), axis=1)
            cutoff = scale
        else:
            scale = np.mean(np.abs(stage1) ** p_float, axis=1) ** (1.0 / p_float)
            cutoff = scale * k ** (1.0 / p_float)
        kept = stage2 * (np.abs(stage2) <= cutoff[:, None])
        rep_estimates[rep] = kept.mean(axis=1)
    med = np.median(rep_estimates, axis=0)
    if subsampled:
        means = np.zeros(f.n1)
        means[sub_rows] = med
    else:
        means = med
    raw = f.raw_accesses - raw0
    return MeanEstimate(means, eval_count=f.distinct_since(marker),
                        raw_count=raw, cap=6 * m * n)
