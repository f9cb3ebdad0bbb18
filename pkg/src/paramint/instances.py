"""Test integrands with closed-form parametric integrals, and error measures.

The smooth family is an infinitely differentiable product whose integral over
the t-block is elementary.  The bump family tiles the cube with a compactly
supported mollifier at a chosen dyadic level and weights the tiles by a
coefficient tensor: dense random signs stress typical behaviour, sparse
heavy rows stress the regime in which data-driven truncation pays off.  The
integral of a tile over the t-block is the tile's s-profile times a constant,
so the family has closed-form references by linearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .partition import cell_anchor, locate_cell, num_cells
from .problem import INF, ProblemSpec

__all__ = [
    "TestInstance", "smooth_instance", "bump_instance",
    "lq_error", "LqErrorReport", "expected_error", "ErrorStats",
    "bump_profile_1d", "bump_mass_1d",
]


@dataclass
class TestInstance:
    """An integrand together with its exact parametric integral."""

    eval_joint: Callable[[np.ndarray], np.ndarray]  # points (M, d1+d2) -> (M,)
    exact_S: Callable[[np.ndarray], np.ndarray]     # points (M, d1) -> (M,)
    label: str
    spec: ProblemSpec
    note: str = ""

    def __call__(self, pts):
        return self.eval_joint(pts)

    def as_function(self):
        return self.eval_joint


def smooth_instance(spec: ProblemSpec) -> TestInstance:
    """Product of cosines in s and sines in t; integral (2/pi)^d2 * cos-product."""
    d1, d2 = spec.d1, spec.d2

    def eval_joint(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        s, t = pts[:, :d1], pts[:, d1:]
        return np.prod(np.cos(np.pi * s), axis=1) * np.prod(np.sin(np.pi * t), axis=1)

    def exact_S(u):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        return (2.0 / np.pi) ** d2 * np.prod(np.cos(np.pi * u), axis=1)

    return TestInstance(eval_joint, exact_S, "smooth", spec,
                        note="C-infinity; represents every (r, p) class")


# -- compactly supported tile ---------------------------------------------------


def bump_profile_1d(x: np.ndarray) -> np.ndarray:
    """exp(-1/(x(1-x))) on (0,1), zero outside; vectorized and overflow-safe."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (xi * (1.0 - xi)))
    return out


def _bump_profile(pts: np.ndarray) -> np.ndarray:
    return np.prod(bump_profile_1d(pts), axis=-1)


_BUMP_MASS_1D: Optional[float] = None


def bump_mass_1d() -> float:
    """Integral of the 1-d profile over [0,1], computed once to 1e-12."""
    global _BUMP_MASS_1D
    if _BUMP_MASS_1D is None:
        val, err = quad(lambda x: math.exp(-1.0 / (x * (1.0 - x))), 0.0, 1.0,
                        epsabs=1e-14, epsrel=1e-12)
        assert err < 1e-10
        _BUMP_MASS_1D = val
    return _BUMP_MASS_1D


def bump_instance(level: int, spec: ProblemSpec, rng: np.random.Generator,
                  mode: str = "dense", amplitude: float = 1.0) -> TestInstance:
    """Tile superposition at one dyadic level with closed-form integral.

    mode='dense': i.i.d. uniform sign coefficients on every tile.
    mode='sparse_rows': one heavy tile per parameter row at a uniform t-cell,
    magnitude N2^(1/p) so the coefficient tensor has unit normalized-counting
    p-norm; this is the shape that separates adaptive from non-adaptive
    estimation when q is large.

    Tiles are scaled by amplitude * 2^((-r + (d1+d2)/p) * level), which keeps
    the smoothness norm of each scaled tile bounded uniformly in the level.
    """
    if level < 1:
        raise ValueError("tile level must be >= 1")
    d1, d2 = spec.d1, spec.d2
    n1, n2 = num_cells(level, d1), num_cells(level, d2)
    if mode == "dense":
        g = rng.choice([-1.0, 1.0], size=(n1, n2))
    elif mode == "sparse_rows":
        g = np.zeros((n1, n2))
        cols = rng.integers(0, n2, size=n1)
        signs = rng.choice([-1.0, 1.0], size=n1)
        b = float(n2) ** float(spec.inv_p)
        g[np.arange(n1), cols] = signs * b
    else:
        raise ValueError(f"unknown tile mode {mode!r}")
    inv_p = float(spec.inv_p)
    scale = amplitude * 2.0 ** ((-spec.r + (d1 + d2) * inv_p) * level)
    tau2 = bump_mass_1d() ** d2
    row_sums = g.sum(axis=1)

    def eval_joint(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        s, t = pts[:, :d1], pts[:, d1:]
        i1 = locate_cell(level, s, d1)
        i2 = locate_cell(level, t, d2)
        loc_s = (2.0 ** level) * (s - cell_anchor(level, i1, d1))
        loc_t = (2.0 ** level) * (t - cell_anchor(level, i2, d2))
        return scale * g[i1 - 1, i2 - 1] * _bump_profile(loc_s) * _bump_profile(loc_t)

    def exact_S(u):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        i1 = locate_cell(level, u, d1)
        loc = (2.0 ** level) * (u - cell_anchor(level, i1, d1))
        return scale * tau2 / n2 * row_sums[i1 - 1] * _bump_profile(loc)

    inst = TestInstance(eval_joint, exact_S, f"bump-{mode}-l{level}", spec,
                        note="compact tiles; scaled for the (r, p) class")
    inst.coefficients = g
    inst.tile_level = level
    inst.tile_scale = scale
    return inst


# -- error measurement -----------------------------------------------------------


@dataclass
class LqErrorReport:
    value: float
    coarse_value: float
    refinement_flag: bool
    resolution: int

    def __float__(self):
        return self.value


def _grid_chunks(resolution: int, d1: int, chunk: int = 1 << 20):
    total = resolution ** d1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        pts = np.empty((idx.size, d1))
        rem = idx
        for axis in range(d1 - 1, -1, -1):
            pts[:, axis] = (rem % resolution + 0.5) / resolution
            rem = rem // resolution
        yield pts


def _grid_norm(diff_fn, q, resolution: int, d1: int) -> float:
    if q == INF:
        worst = 0.0
        for pts in _grid_chunks(resolution, d1):
            worst = max(worst, float(np.max(np.abs(diff_fn(pts)))))
        return worst
    qf = float(q)
    acc = 0.0
    total = 0
    for pts in _grid_chunks(resolution, d1):
        acc += float(np.sum(np.abs(diff_fn(pts)) ** qf))
        total += len(pts)
    return (acc / total) ** (1.0 / qf)


def lq_error(out, ref, q, resolution: int, min_resolution: int = 2,
             with_report: bool = False):
    """L_q distance on the parameter cube between an output and a reference.

    Composite midpoint rule on a uniform grid (max over the grid for q=inf),
    with a refinement-sensitivity flag comparing against the half-resolution
    value: a relative difference above 5 percent flags under-resolution.
    """
    resolution = int(resolution)
    if resolution < max(2, min_resolution):
        raise ValueError(f"resolution {resolution} below required minimum "
                         f"{max(2, min_resolution)}")
    ref_fn = ref.exact_S if isinstance(ref, TestInstance) else ref
    out_fn = out

    def diff(pts):
        return np.asarray(out_fn(pts), dtype=np.float64) - np.asarray(
            ref_fn(pts), dtype=np.float64)

    d1 = ref.spec.d1 if isinstance(ref, TestInstance) else None
    if d1 is None:
        raise ValueError("reference must be a TestInstance (for the dimension)")
    value = _grid_norm(diff, q, resolution, d1)
    coarse = _grid_norm(diff, q, max(2, resolution // 2), d1)
    denom = max(abs(value), abs(coarse), 1e-300)
    flag = abs(value - coarse) / denom > 0.05
    report = LqErrorReport(value=value, coarse_value=coarse,
                           refinement_flag=flag, resolution=resolution)
    return report if with_report else value


@dataclass
class ErrorStats:
    """Replicated error measurement: RMS, jackknife standard error, raw rows."""

    mean: float
    stderr: float
    errors: np.ndarray
    eval_totals: np.ndarray
    w: float = 2.0


def expected_error(runner, instance: TestInstance, spec: ProblemSpec, n: int,
                   replications: int, seed, q=None, resolution: int = 256,
                   w: float = 2.0, threads: int = 1) -> ErrorStats:
    """Moment-w error of a runner over independently seeded replications.

    runner(spec, n, f, rng) -> (output, ledger); the per-replication seeds are
    spawned from the master seed, so results do not depend on scheduling.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    q = spec.q if q is None else q
    seeds = np.random.SeedSequence(seed).spawn(replications)

    def one(idx):
        rng = np.random.default_rng(seeds[idx])
        out, card = runner(spec, n, instance.as_function(), rng)
        err = lq_error(out, instance, q, resolution)
        return err, card.total

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(replications)))
    else:
        rows = [one(i) for i in range(replications)]
    errors = np.array([r[0] for r in rows])
    totals = np.array([r[1] for r in rows])
    mean = float(np.mean(errors ** w) ** (1.0 / w))
    if replications == 1:
        stderr = 0.0
    else:
        loo = np.array([
            np.mean(np.delete(errors, i) ** w) ** (1.0 / w)
            for i in range(replications)])
        stderr = float(np.sqrt((replications - 1) / replications
                               * np.sum((loo - loo.mean()) ** 2)))
    return ErrorStats(mean=mean, stderr=stderr, errors=errors,
                      eval_totals=totals, w=w)
