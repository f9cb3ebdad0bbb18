"""Multilevel composition: exact coarse integral plus Monte Carlo details.

One run draws a single random grid shift, integrates the coarse-level
piecewise interpolant exactly over the integration coordinates, and corrects
it with per-level detail terms: the two-scale detail tensor of the integrand
is fed to a randomized mean estimator over the integration cells, and the
estimated row means weight the parametric integrals of the detail basis
functions.

Budgets follow a tent-shaped per-level schedule anchored at the coarse level;
all randomness is derived from the caller-supplied generator, and a ledger
records the exact number of distinct integrand evaluations, which is checked
against the composite cardinality bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import rates
from .discrete_mean import (MeanEstimate, ValueTensor, mc_mean_adaptive,
                            mc_mean_nonadaptive)
from .interpolation import (DetailFrame, LagrangeBasis, PiecewiseExpansion,
                            child_cell_index, detail_frame, shift_matrix)
from .partition import cell_anchor, join_index, locate_cell, num_cells, split_index
from .problem import INF, ProblemSpec, pos

__all__ = [
    "Schedule", "schedule", "min_budget", "damping_policy",
    "ThetaBlock", "theta_block", "DetailFunction", "detail_function",
    "ULevelTensor", "EvalLedger", "CardinalityLedger",
    "exact_base_integral", "MultilevelOutput",
    "run_nonadaptive", "run_adaptive", "run_deterministic",
    "BudgetError", "EmbeddingError",
]


class BudgetError(ValueError):
    """Budget below the least n for which the level schedule is valid."""

    def __init__(self, n, n_min):
        super().__init__(f"budget {n} below minimal admissible budget {n_min}")
        self.n_min = n_min


class EmbeddingError(ValueError):
    """Deterministic evaluation requested without continuous representatives."""


# -- level schedules ---------------------------------------------------------


def _l0_of(n: int, spec: ProblemSpec) -> int:
    return spec.d1 * math.ceil(math.log2(n) / (spec.d1 * spec.d))


def _l1_of(l0: int, spec: ProblemSpec) -> int:
    s1 = rates.sigma1_flag(spec)
    return math.ceil((spec.d * l0 - s1 * math.log2(l0)) / spec.d1)


def min_budget(spec: ProblemSpec) -> int:
    """Least n whose schedule satisfies 2 <= l0 < l1 (then all larger n do).

    The coarse level only needs to reach 2 (the gap to l1 then follows from
    d2 >= 1), and it is piecewise constant in log2 n, so the boundary is
    explicit.
    """
    m_star = -(-2 // spec.d1)  # smallest integer m with d1*m >= 2
    n = (1 << (spec.d1 * spec.d * (m_star - 1))) + 1 if m_star > 1 else 2
    l0 = _l0_of(n, spec)
    assert l0 >= 2 and _l1_of(l0, spec) > l0
    assert n == 2 or _l0_of(n - 1, spec) < 2
    return n


def damping_policy(spec: ProblemSpec, adaptive: bool) -> float:
    """Tent-schedule damping exponent.

    Zero on the boundary regimes (where the per-level error contributions are
    level-independent), otherwise half the admissible slack so the damped
    contribution stays strictly monotone across levels.
    """
    gap = pos(spec.inv_p - spec.inv_q)
    if not adaptive:
        weight = 1 - spec.inv_p_bar
        slope = -spec.r + (gap + weight) * spec.d1
        if rates.beta1_flag(spec) or slope == 0:
            return 0.0
        if weight == 0:
            return 1.0
        return abs(float(slope)) / (2.0 * float(weight))
    if rates.beta2_flag(spec):
        return 0.0
    weight = max(1 - spec.inv_p, Fraction(1, 2))
    branch = rates.adaptive_branch(spec)
    if branch == "deep":
        slope = -spec.r + Fraction(spec.d1, 2)
    else:
        slope = -spec.r + (1 - spec.inv_q) * spec.d1
    if slope == 0:
        return 0.0
    return abs(float(slope)) / (2.0 * float(weight))


@dataclass(frozen=True)
class Schedule:
    """Level range and per-level budgets for one total budget n."""

    n: int
    l0: int
    l1: int
    budgets: tuple
    damping: float
    sigma1: int
    n_min: int

    @property
    def levels(self) -> range:
        return range(self.l0, self.l1)


def schedule(n: int, spec: ProblemSpec, damping: Optional[float] = None,
             adaptive: bool = False) -> Schedule:
    """Level schedule at budget n; damping defaults to damping_policy."""
    n = int(n)
    n_min = min_budget(spec)
    if n < n_min:
        raise BudgetError(n, n_min)
    l0 = _l0_of(n, spec)
    l1 = _l1_of(l0, spec)
    assert 2 <= l0 < l1
    if damping is None:
        damping = damping_policy(spec, adaptive)
    if damping < 0:
        raise ValueError("damping must be >= 0")
    budgets = tuple(
        math.ceil(2.0 ** (spec.d * l0 - damping * min(l - l0, l1 - l)))
        for l in range(l0, l1))
    assert np.log2(n) / spec.d <= l0, "coarse level below budget root"
    return Schedule(n=n, l0=l0, l1=l1, budgets=budgets, damping=damping,
                    sigma1=rates.sigma1_flag(spec), n_min=n_min)


# -- parametric integrals of the detail basis --------------------------------


@dataclass
class ThetaBlock:
    """Parametric integrals of the detail basis functions.

    For detail index j the integral over the integration coordinates is a
    polynomial supported on one level-1 parameter sub-cell: sub-cell
    i01_of_j with shape factor tweight_of_j times the k1_of_j-th parameter
    basis polynomial.
    """

    basis: LagrangeBasis
    basis1: LagrangeBasis
    d1: int
    d2: int
    i01_of_j: np.ndarray
    k1_of_j: np.ndarray
    tweight_of_j: np.ndarray

    @property
    def kappa_prime(self) -> int:
        return self.i01_of_j.size

    def theta(self, j: int) -> Callable[[np.ndarray], np.ndarray]:
        """The j-th integral (1-based j) as a function on the parameter cube."""
        if not 1 <= j <= self.kappa_prime:
            raise IndexError("detail index out of range")
        i01 = int(self.i01_of_j[j - 1])
        k1 = int(self.k1_of_j[j - 1])
        w = float(self.tweight_of_j[j - 1])

        def theta_j(u):
            u = np.atleast_2d(np.asarray(u, dtype=np.float64))
            inside = locate_cell(1, u, self.d1) == i01
            local = 2.0 * (u - cell_anchor(1, i01, self.d1))
            vals = self.basis1.eval_basis(local)[:, k1]
            return w * vals * inside

        return theta_j


def theta_block(basis: LagrangeBasis, d1: int, d2: int) -> ThetaBlock:
    """Exact integration of every detail basis function over the t-block."""
    if basis.d != d1 + d2:
        raise ValueError("basis dimension must equal d1 + d2")
    basis1, basis2, k1_of_k, k2_of_k = basis.split(d1)
    kappa = basis.kappa
    nsub = 1 << basis.d
    i0 = np.repeat(np.arange(1, nsub + 1), kappa)
    j0 = np.tile(np.arange(kappa), nsub)
    i01, _ = split_index(i0, 1, d1, d2)
    int2 = np.array([float(v) for v in basis2.tensor_integrals])
    tweight = (2.0 ** -d2) * int2[k2_of_k[j0]]
    return ThetaBlock(basis=basis, basis1=basis1, d1=d1, d2=d2,
                      i01_of_j=np.asarray(i01, dtype=np.int64),
                      k1_of_j=k1_of_k[j0].astype(np.int64),
                      tweight_of_j=tweight)


class DetailFunction:
    """Weighted sum of rescaled detail integrals: one level's correction term.

    Coefficients g over (parameter cell, detail index) pairs; internally
    collapsed to a piecewise polynomial on the level+1 parameter cells.
    """

    def __init__(self, theta: ThetaBlock, level: int, g: np.ndarray):
        ncells = num_cells(level, theta.d1)
        g = np.asarray(g, dtype=np.float64).reshape(ncells, theta.kappa_prime)
        self.theta = theta
        self.level = level
        self.g = g
        kappa1 = theta.basis1.kappa
        fine = np.zeros((num_cells(level + 1, theta.d1), kappa1))
        cells = np.arange(1, ncells + 1)
        for j in range(theta.kappa_prime):
            # child indices are distinct for fixed j, so fancy += is safe
            child = child_cell_index(level, cells, int(theta.i01_of_j[j]), theta.d1)
            fine[child - 1, int(theta.k1_of_j[j])] += g[:, j] * theta.tweight_of_j[j]
        self._fine = fine

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        scalar = u.ndim == 1
        pts = u[None, :] if scalar else u
        cells = locate_cell(self.level + 1, pts, self.theta.d1)
        local = (2.0 ** (self.level + 1)) * (
            pts - cell_anchor(self.level + 1, cells, self.theta.d1))
        vals = self.theta.basis1.eval_basis(local)
        out = np.einsum("...k,...k->...", self._fine[cells - 1], vals)
        return float(out[0]) if scalar else out


def detail_function(g, level: int, theta: ThetaBlock) -> DetailFunction:
    """Expansion of estimated detail means in the rescaled integrals."""
    g = np.asarray(g, dtype=np.float64)
    expected = num_cells(level, theta.d1) * theta.kappa_prime
    if g.size != expected:
        raise ValueError(f"coefficient vector must have length {expected}")
    return DetailFunction(theta, level, g)


# -- evaluation ledger --------------------------------------------------------


class EvalLedger:
    """Distinct-integrand-evaluation accounting.

    Every point the composite algorithm requests is one of the kappa shifted
    nodes of some dyadic cell at some level; the ledger tracks the set of
    (level, cell) pairs and charges kappa points per new pair.  Counts are
    attributed to the stage active when the pair first appears.
    """

    def __init__(self, kappa: int):
        self.kappa = kappa
        self._cells: dict[int, np.ndarray] = {}
        self.stage_counts: dict[str, int] = {}
        self._stage = "init"

    def start_stage(self, name: str):
        self._stage = name
        self.stage_counts.setdefault(name, 0)

    def add_cells(self, level: int, cells: np.ndarray):
        cells = np.unique(np.asarray(cells, dtype=np.int64))
        have = self._cells.get(level)
        if have is None:
            merged = cells
            added = cells.size
        else:
            merged = np.union1d(have, cells)
            added = merged.size - have.size
        self._cells[level] = merged
        if added:
            self.stage_counts[self._stage] = (
                self.stage_counts.get(self._stage, 0) + added * self.kappa)

    @property
    def total(self) -> int:
        return sum(self.stage_counts.values())


@dataclass
class CardinalityLedger:
    """Per-stage distinct evaluation counts of one run, with the composite bound."""

    base_evals: int
    per_level_evals: list
    total: int
    u4_bound: int
    entry_draws: list
    entry_caps: list

    def check(self):
        assert self.total <= self.u4_bound, \
            f"composite cardinality bound violated: {self.total} > {self.u4_bound}"
        for draws, cap in zip(self.entry_draws, self.entry_caps):
            assert draws <= cap
        return True


# -- deferred detail tensor ----------------------------------------------------


def _node_points(level: int, cells: np.ndarray, offsets: np.ndarray,
                 d: int) -> np.ndarray:
    """Shifted node table anchor(cell) + 2^-level * offset, shape (E*kappa, d)."""
    anchors = cell_anchor(level, cells, d)
    pts = anchors[:, None, :] + (2.0 ** -level) * offsets[None, :, :]
    return pts.reshape(-1, d)


class ULevelTensor(ValueTensor):
    """Detail tensor of one level, evaluated on demand from integrand values.

    Row (i1, j) and column i2 address the detail coefficient of joint cell
    (i1, i2); one entry combines the kappa fine nodes of the j-th sub-cell
    (living on level+1 cells) with the kappa coarse nodes of the cell itself.
    Rows are laid out i1-major: row = (i1-1)*kappa' + (j-1).
    """

    def __init__(self, frame: DetailFrame, level: int, d1: int, d2: int,
                 f: Callable[[np.ndarray], np.ndarray],
                 ledger: Optional[EvalLedger] = None):
        basis = frame.basis
        if basis.d != d1 + d2:
            raise ValueError("frame dimension must equal d1 + d2")
        self.frame = frame
        self.level = int(level)
        self.d1, self.d2 = int(d1), int(d2)
        self.f = f
        self.ledger = ledger
        self.kappa_prime = frame.kappa_prime
        super().__init__(n1=self.kappa_prime * num_cells(level, d1),
                         n2=num_cells(level, d2))

    def _values(self, rows, cols):
        frame, basis = self.frame, self.frame.basis
        d, kappa = basis.d, basis.kappa
        shape = rows.shape
        rows = rows.ravel()
        cols = cols.ravel()
        i1 = rows // self.kappa_prime + 1
        j = rows % self.kappa_prime  # 0-based detail index
        joint = join_index(i1, cols + 1, self.level, self.d1, self.d2)
        sub = frame.sub_of_j[j]
        children = child_cell_index(self.level, joint, sub, d)

        uc, invc = np.unique(joint, return_inverse=True)
        uf, invf = np.unique(children, return_inverse=True)
        if self.ledger is not None:
            self.ledger.add_cells(self.level, uc)
            self.ledger.add_cells(self.level + 1, uf)
        coarse_vals = np.asarray(
            self.f(_node_points(self.level, uc, frame.coarse_offsets, d)),
            dtype=np.float64).reshape(-1, kappa)
        fine_vals = np.asarray(
            self.f(_node_points(self.level + 1, uf, frame.coarse_offsets, d)),
            dtype=np.float64).reshape(-1, kappa)
        w_fine = frame.weights[j, :kappa]
        w_coarse = frame.weights[j, kappa:]
        out = (np.einsum("ek,ek->e", fine_vals[invf], w_fine)
               + np.einsum("ek,ek->e", coarse_vals[invc], w_coarse))
        return out.reshape(shape)


# -- exact coarse-term integration ---------------------------------------------


def exact_base_integral(basis: LagrangeBasis, level: int, rho,
                        f: Callable[[np.ndarray], np.ndarray],
                        d1: int, d2: int,
                        ledger: Optional[EvalLedger] = None) -> PiecewiseExpansion:
    """Parametric integral of the level-l shifted interpolant, exactly.

    Interpolates f per joint cell and integrates the t-part of each tensor
    basis polynomial in closed form; the result is a piecewise polynomial in
    the parameter variable on the level-l parameter cells.
    """
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (basis.d,))
    d = basis.d
    if d != d1 + d2:
        raise ValueError("basis dimension must equal d1 + d2")
    a = shift_matrix(basis, rho)
    ncells = num_cells(level, d)
    cells = np.arange(1, ncells + 1)
    if ledger is not None:
        ledger.add_cells(level, cells)
    offsets = basis.nodes + basis.shift_margin * rho
    pts = _node_points(level, cells, offsets, d)
    fvals = np.asarray(f(pts), dtype=np.float64).reshape(ncells, basis.kappa)
    coeffs = fvals @ a.T
    basis1, basis2, k1_of_k, k2_of_k = basis.split(d1)
    n1c, n2c = num_cells(level, d1), num_cells(level, d2)
    k1c, k2c = basis1.kappa, basis2.kappa
    # joint enumeration is parameter-major, tensor index is parameter-major too
    blocks = coeffs.reshape(n1c, n2c, k1c, k2c)
    int2 = np.array([float(v) for v in basis2.tensor_integrals])
    base = (2.0 ** (-d2 * level)) * np.einsum("abjk,k->aj", blocks, int2)
    return PiecewiseExpansion(basis1, level, base)


# -- the composed algorithms -----------------------------------------------------


@dataclass
class MultilevelOutput:
    """Returned approximation: exact coarse integral plus detail corrections.

    Evaluation at a parameter point is linear in all stored coefficients.
    """

    base: PiecewiseExpansion
    details: list  # list[DetailFunction]
    rho: np.ndarray
    spec: ProblemSpec
    sched: Optional[Schedule]

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        out = self.base(u)
        for det in self.details:
            out = out + det(u)
        return out

    def evaluate(self, u):
        return self(u)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_solvable(spec: ProblemSpec):
    if spec.r < 1:
        raise ValueError("algorithm runs need smoothness order r >= 1")
    if not rates.solvable_check(spec):
        raise ValueError("spec is not solvable; no continuous target")


def _run_multilevel(spec: ProblemSpec, n: int, f, rng, adaptive: bool,
                    damping: Optional[float], ml_constant: float,
                    shift_margin: float):
    rng = _as_rng(rng)
    _check_solvable(spec)
    sched = schedule(n, spec, damping=damping, adaptive=adaptive)
    basis = LagrangeBasis(spec.r, spec.d, shift_margin)
    theta = theta_block(basis, spec.d1, spec.d2)
    ledger = EvalLedger(basis.kappa)
    rho = rng.uniform(size=spec.d)
    frame = detail_frame(basis, rho)

    ledger.start_stage("base")
    base = exact_base_integral(basis, sched.l0, rho, f, spec.d1, spec.d2, ledger)

    details = []
    entry_draws, entry_caps, mls = [], [], []
    for level, n_l in zip(sched.levels, sched.budgets):
        ledger.start_stage(f"level{level}")
        tensor = ULevelTensor(frame, level, spec.d1, spec.d2, f, ledger)
        if adaptive:
            m_l = max(1, math.ceil(ml_constant * math.log2(tensor.n1 + tensor.n2)))
            est = mc_mean_adaptive(tensor, n_l, m_l, spec.p, rng)
            mls.append(m_l)
        else:
            est = mc_mean_nonadaptive(tensor, n_l, rng)
        entry_draws.append(est.raw_count)
        entry_caps.append(est.cap)
        details.append(detail_function(est.row_means, level, theta))

    kappa, kappa2 = basis.kappa, 2 * basis.kappa
    u4 = kappa * num_cells(sched.l0, spec.d) + kappa2 * sum(entry_draws)
    card = CardinalityLedger(
        base_evals=ledger.stage_counts.get("base", 0),
        per_level_evals=[ledger.stage_counts.get(f"level{l}", 0)
                         for l in sched.levels],
        total=ledger.total,
        u4_bound=u4,
        entry_draws=entry_draws,
        entry_caps=entry_caps,
    )
    card.check()
    out = MultilevelOutput(base=base, details=details, rho=rho, spec=spec,
                           sched=sched)
    return out, card


def run_nonadaptive(spec: ProblemSpec, n: int, f, rng,
                    damping: Optional[float] = None,
                    shift_margin: float = 0.5):
    """Non-adaptive randomized multilevel run at budget n."""
    return _run_multilevel(spec, n, f, rng, adaptive=False, damping=damping,
                           ml_constant=1.0, shift_margin=shift_margin)


def run_adaptive(spec: ProblemSpec, n: int, f, rng,
                 damping: Optional[float] = None, ml_constant: float = 1.0,
                 shift_margin: float = 0.5):
    """Adaptive randomized multilevel run at budget n (2 < p < q only)."""
    if not (spec.p > 2 and spec.q > spec.p):
        raise ValueError("adaptive run requires 2 < p < q")
    return _run_multilevel(spec, n, f, rng, adaptive=True, damping=damping,
                           ml_constant=ml_constant, shift_margin=shift_margin)


def run_deterministic(spec: ProblemSpec, n: int, f,
                      shift_margin: float = 0.5):
    """Single-level deterministic run: exact integral of the unshifted
    interpolant at the level matched to the budget."""
    _check_solvable(spec)
    if not rates.embedding_check(spec.r, spec.p, spec.d):
        raise EmbeddingError(
            "deterministic evaluation requires the continuous-embedding regime")
    n = int(n)
    if n < 1:
        raise ValueError("budget must be >= 1")
    l0 = math.ceil(math.log2(n) / spec.d) if n > 1 else 0
    basis = LagrangeBasis(spec.r, spec.d, shift_margin)
    ledger = EvalLedger(basis.kappa)
    ledger.start_stage("base")
    rho = np.zeros(spec.d)
    base = exact_base_integral(basis, l0, rho, f, spec.d1, spec.d2, ledger)
    card = CardinalityLedger(
        base_evals=ledger.total, per_level_evals=[], total=ledger.total,
        u4_bound=basis.kappa * num_cells(l0, spec.d),
        entry_draws=[], entry_caps=[])
    card.check()
    out = MultilevelOutput(base=base, details=[], rho=rho, spec=spec, sched=None)
    return out, card
