"""Tensor-product Lagrange interpolation with a randomized grid shift.

The degree-(r-1) interpolation grid on the unit cube keeps a margin delta at
the top of each axis, so that shifting every node by delta*rho with
rho in [0,1]^d never leaves the cube.  Per dyadic cell the construction is the
same grid rescaled; the difference of two consecutive levels is expressed as a
fixed linear combination of point values (the detail operator), whose node
offsets and weights depend on rho only through the shift-mixing matrix.

Polynomials are stored as value vectors on the unshifted nodes (Lagrange
coefficients); conversion to monomials happens only inside exact integration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .partition import cell_anchor, locate_cell, num_cells, restrict_from_cell

__all__ = [
    "LagrangeBasis", "BasisExpansion", "PiecewiseExpansion", "DetailFrame",
    "base_interpolate", "shift_matrix", "level_interpolate",
    "detail_frame", "detail_apply", "child_cell_index",
]

DEFAULT_SHIFT_MARGIN = 0.5


def _axis_nodes(r: int, delta: float) -> np.ndarray:
    if r == 1:
        return np.zeros(1)
    return np.arange(r) * ((1.0 - delta) / (r - 1))


def _axis_nodes_exact(r: int, delta: Fraction) -> list[Fraction]:
    if r == 1:
        return [Fraction(0)]
    step = (1 - delta) / (r - 1)
    return [k * step for k in range(r)]


def _lagrange_axis_values(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """1-D Lagrange basis values; shape (len(x), r)."""
    r = len(nodes)
    if r == 1:
        return np.ones(x.shape + (1,))
    out = np.empty(x.shape + (r,))
    for m in range(r):
        num = np.ones_like(x)
        den = 1.0
        for i in range(r):
            if i == m:
                continue
            num = num * (x - nodes[i])
            den *= nodes[m] - nodes[i]
        out[..., m] = num / den
    return out


def _axis_integral_exact(nodes: list[Fraction]) -> list[Fraction]:
    """Exact integrals over [0,1] of the 1-D Lagrange basis polynomials."""
    r = len(nodes)
    ints = []
    for m in range(r):
        # numerator polynomial prod_{i != m} (x - nodes[i]), ascending coeffs
        asc = [Fraction(1)]
        den = Fraction(1)
        for i in range(r):
            if i == m:
                continue
            asc = ([Fraction(0)] + asc)  # times x ...
            for k in range(len(asc) - 1):
                asc[k] -= nodes[i] * asc[k + 1]  # ... minus node * poly
            den *= nodes[m] - nodes[i]
        total = sum(c / (k + 1) for k, c in enumerate(asc))
        ints.append(total / den)
    return ints


class LagrangeBasis:
    """Shifted-grid tensor Lagrange basis of maximum coordinate degree r-1.

    For r >= 2 the per-axis nodes form the uniform grid of mesh size
    (1-delta)/(r-1) on [0, 1-delta]; for r = 1 the single node is 0 and the
    basis is the constant 1.  kappa = r**d.
    """

    def __init__(self, r: int, d: int, shift_margin: float = DEFAULT_SHIFT_MARGIN):
        if r < 1:
            raise ValueError("interpolation needs r >= 1")
        if not 0.0 < shift_margin < 1.0:
            raise ValueError("shift margin must lie in (0,1)")
        self.r = int(r)
        self.d = int(d)
        self.shift_margin = float(shift_margin)
        self.axis_nodes = _axis_nodes(self.r, self.shift_margin)
        self.multi_index = np.array(
            list(itertools.product(range(self.r), repeat=self.d)), dtype=np.int64)
        self.kappa = self.r ** self.d
        self.nodes = self.axis_nodes[self.multi_index]  # (kappa, d)
        margin_exact = Fraction(shift_margin).limit_denominator(1 << 30)
        if float(margin_exact) != float(shift_margin):
            margin_exact = Fraction(shift_margin)
        self._axis_nodes_exact = _axis_nodes_exact(self.r, margin_exact)
        self.axis_integrals = _axis_integral_exact(self._axis_nodes_exact)
        self.tensor_integrals = np.array(
            [float(np.prod([float(self.axis_integrals[m]) for m in mi]))
             for mi in self.multi_index])

    def eval_basis(self, x) -> np.ndarray:
        """All kappa tensor basis values at points x of shape (..., d)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"points must have last dimension {self.d}")
        vals = np.ones(x.shape[:-1] + (self.kappa,))
        for axis in range(self.d):
            axis_vals = _lagrange_axis_values(self.axis_nodes, x[..., axis])
            vals = vals * axis_vals[..., self.multi_index[:, axis]]
        return vals

    def tensor_integral_exact(self, k: int) -> Fraction:
        out = Fraction(1)
        for m in self.multi_index[k]:
            out *= self.axis_integrals[m]
        return out

    def split(self, d1: int) -> tuple["LagrangeBasis", "LagrangeBasis", np.ndarray, np.ndarray]:
        """Factor the basis over the first d1 and remaining axes.

        Returns (basis1, basis2, k1_of_k, k2_of_k) with
        node_k = (node1_{k1}, node2_{k2}) and k = k1 * r**d2 + k2.
        """
        d2 = self.d - d1
        if not (1 <= d1 < self.d):
            raise ValueError("split needs 1 <= d1 < d")
        b1 = LagrangeBasis(self.r, d1, self.shift_margin)
        b2 = LagrangeBasis(self.r, d2, self.shift_margin)
        powers2 = self.r ** np.arange(d2 - 1, -1, -1, dtype=np.int64)
        powers1 = self.r ** np.arange(d1 - 1, -1, -1, dtype=np.int64)
        k1 = self.multi_index[:, :d1] @ powers1
        k2 = self.multi_index[:, d1:] @ powers2
        return b1, b2, k1, k2

    def __repr__(self):
        return (f"LagrangeBasis(r={self.r}, d={self.d}, "
                f"shift_margin={self.shift_margin})")


@dataclass
class BasisExpansion:
    """Polynomial on [0,1]^d stored by its values at the basis nodes."""

    basis: LagrangeBasis
    coeffs: np.ndarray  # (kappa,)

    def __call__(self, x):
        return self.basis.eval_basis(x) @ self.coeffs


@dataclass
class PiecewiseExpansion:
    """Per-cell polynomial expansion at one dyadic level.

    coeffs[i-1, j] multiplies the j-th basis polynomial rescaled to cell i;
    outside evaluation follows the half-open cell ownership.
    """

    basis: LagrangeBasis
    level: int
    coeffs: np.ndarray  # (2**(d*level), kappa)
    eval_points: Optional[np.ndarray] = field(default=None, repr=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        scalar_input = x.ndim == 1
        pts = x[None, :] if scalar_input else x
        cells = locate_cell(self.level, pts, self.basis.d)
        local = restrict_from_cell(self.level, cells, pts, self.basis.d)
        vals = self.basis.eval_basis(local)
        out = np.einsum("...k,...k->...", self.coeffs[cells - 1], vals)
        return float(out[0]) if scalar_input else out

    def __add__(self, other):
        if not isinstance(other, PiecewiseExpansion) or other.level != self.level:
            return NotImplemented
        return PiecewiseExpansion(self.basis, self.level, self.coeffs + other.coeffs)


def base_interpolate(basis: LagrangeBasis, samples) -> BasisExpansion:
    """Interpolant from one sample value per node.

    samples: array of length kappa ordered like basis.nodes, or a callable
    evaluated at the nodes.
    """
    if callable(samples):
        vals = np.asarray(samples(basis.nodes), dtype=np.float64)
    else:
        vals = np.asarray(samples, dtype=np.float64)
    if vals.shape != (basis.kappa,):
        raise ValueError(f"need exactly {basis.kappa} samples, one per node")
    return BasisExpansion(basis, vals)


def shift_matrix(basis: LagrangeBasis, rho) -> np.ndarray:
    """Mixing matrix a[j, k] of the shifted basis in the unshifted one.

    a[j, k] = phi_k(t_j - delta*rho): expanding a degree-(r-1) polynomial in
    the Lagrange basis reads off its values at the nodes.
    """
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (basis.d,))
    shifted = basis.nodes - basis.shift_margin * rho
    return basis.eval_basis(shifted)


def level_interpolate(basis: LagrangeBasis, level: int, rho,
                      f: Callable[[np.ndarray], np.ndarray]) -> PiecewiseExpansion:
    """Shifted piecewise interpolant of f at one dyadic level.

    Evaluates f at the kappa * 2^(d*level) shifted nodes and keeps the exact
    point list for cardinality accounting.
    """
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (basis.d,))
    a = shift_matrix(basis, rho)
    ncells = num_cells(level, basis.d)
    anchors = cell_anchor(level, np.arange(1, ncells + 1), basis.d)
    offsets = basis.nodes + basis.shift_margin * rho  # (kappa, d)
    points = anchors[:, None, :] + (2.0 ** -level) * offsets[None, :, :]
    flat = points.reshape(-1, basis.d)
    fvals = np.asarray(f(flat), dtype=np.float64).reshape(ncells, basis.kappa)
    coeffs = fvals @ a.T
    return PiecewiseExpansion(basis, level, coeffs, eval_points=flat)


def child_cell_index(level: int, i, sub, d: int):
    """Joint index at level+1 of sub-cell `sub` (level-1 index) of cell i."""
    i = np.asarray(i, dtype=np.int64) - 1
    sub = np.asarray(sub, dtype=np.int64) - 1
    out = np.zeros(np.broadcast_shapes(i.shape, sub.shape), dtype=np.int64)
    for axis in range(d - 1, -1, -1):
        ci = (i >> (level * (d - 1 - axis))) & ((1 << level) - 1)
        ei = (sub >> (d - 1 - axis)) & 1
        out |= ((ci << 1) | ei) << ((level + 1) * (d - 1 - axis))
    out = out + 1
    return out if out.ndim else int(out)


@dataclass
class DetailFrame:
    """Node offsets and weights of the two-scale detail operator.

    For j = kappa*(i0-1) + j0 the detail basis function psi_j is the j0-th
    basis polynomial rescaled to level-1 sub-cell i0.  Weights pair the fine
    nodes (k <= kappa, inside sub-cell i0) against the coarse nodes
    (k > kappa, shared by all sub-cells); annihilation of degree-(r-1)
    polynomials forces the minus sign on the coarse block.
    """

    basis: LagrangeBasis
    rho: np.ndarray
    mix: np.ndarray            # (kappa, kappa) shift-mixing matrix
    beta: np.ndarray           # (2^d, kappa, kappa): [i0, m, j0]
    weights: np.ndarray        # (kappa_prime, kappa_dprime)
    fine_offsets: np.ndarray   # (2^d, kappa, d)
    coarse_offsets: np.ndarray  # (kappa, d)
    sub_of_j: np.ndarray       # (kappa_prime,) level-1 sub-cell of each j
    j0_of_j: np.ndarray        # (kappa_prime,)

    @property
    def kappa_prime(self) -> int:
        return (1 << self.basis.d) * self.basis.kappa

    @property
    def kappa_dprime(self) -> int:
        return 2 * self.basis.kappa

    def node_offsets(self) -> np.ndarray:
        """Full offset table of shape (kappa', kappa'', d)."""
        kp, kd = self.kappa_prime, self.kappa_dprime
        out = np.empty((kp, kd, self.basis.d))
        out[:, :self.basis.kappa, :] = self.fine_offsets[self.sub_of_j - 1]
        out[:, self.basis.kappa:, :] = self.coarse_offsets[None, :, :]
        return out


def detail_frame(basis: LagrangeBasis, rho) -> DetailFrame:
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (basis.d,))
    a = shift_matrix(basis, rho)
    kappa, d = basis.kappa, basis.d
    nsub = 1 << d
    sub_anchors = cell_anchor(1, np.arange(1, nsub + 1), d).reshape(nsub, d)
    # beta[i0, m, j0] = phi_m(anchor_{i0} + t_{j0}/2)
    beta_pts = sub_anchors[:, None, :] + 0.5 * basis.nodes[None, :, :]
    beta = np.transpose(basis.eval_basis(beta_pts), (0, 2, 1))
    sub_of_j = np.repeat(np.arange(1, nsub + 1), kappa)
    j0_of_j = np.tile(np.arange(kappa), nsub)
    weights = np.empty((nsub * kappa, 2 * kappa))
    weights[:, :kappa] = a[j0_of_j, :]
    for i0 in range(nsub):
        blk = slice(i0 * kappa, (i0 + 1) * kappa)
        weights[blk, kappa:] = -(beta[i0].T @ a)
    shifted = basis.nodes + basis.shift_margin * rho
    fine_offsets = sub_anchors[:, None, :] + 0.5 * shifted[None, :, :]
    return DetailFrame(basis=basis, rho=rho, mix=a, beta=beta, weights=weights,
                       fine_offsets=fine_offsets, coarse_offsets=shifted,
                       sub_of_j=sub_of_j, j0_of_j=j0_of_j)


class DetailExpansion:
    """Result of applying the detail operator at one level.

    Stores the coefficient tensor c[i-1, j] over (cell, detail-basis) pairs
    and evaluates as the equivalent level-(l+1) piecewise polynomial.
    """

    def __init__(self, frame: DetailFrame, level: int, coeffs: np.ndarray,
                 eval_points: Optional[np.ndarray] = None):
        self.frame = frame
        self.level = level
        self.coeffs = coeffs
        self.eval_points = eval_points

    def as_level_expansion(self) -> PiecewiseExpansion:
        basis = self.frame.basis
        d, kappa = basis.d, basis.kappa
        ncells = num_cells(self.level, d)
        nsub = 1 << d
        fine = np.zeros((num_cells(self.level + 1, d), kappa))
        cells = np.arange(1, ncells + 1)
        for i0 in range(1, nsub + 1):
            children = child_cell_index(self.level, cells, i0, d)
            blk = slice((i0 - 1) * kappa, i0 * kappa)
            fine[children - 1] = self.coeffs[:, blk]
        return PiecewiseExpansion(basis, self.level + 1, fine)

    def __call__(self, x):
        return self.as_level_expansion()(x)


def detail_apply(frame: DetailFrame, level: int,
                 f: Callable[[np.ndarray], np.ndarray]) -> DetailExpansion:
    """Detail coefficients c[i, j] = sum_k weights[j, k] f(cell-rescaled node).

    Coincident nodes (the coarse block repeats across j, the fine block
    across j0) are evaluated once; eval_points keeps the distinct list.
    """
    basis = frame.basis
    d, kappa = basis.d, basis.kappa
    ncells = num_cells(level, d)
    nsub = 1 << d
    anchors = cell_anchor(level, np.arange(1, ncells + 1), d)
    h = 2.0 ** -level
    coarse_pts = anchors[:, None, :] + h * frame.coarse_offsets[None, :, :]
    fine_pts = (anchors[:, None, None, :]
                + h * frame.fine_offsets[None, :, :, :])  # (cells, nsub, kappa, d)
    coarse_vals = np.asarray(f(coarse_pts.reshape(-1, d)),
                             dtype=np.float64).reshape(ncells, kappa)
    fine_vals = np.asarray(f(fine_pts.reshape(-1, d)),
                           dtype=np.float64).reshape(ncells, nsub, kappa)
    w_fine = frame.weights[:, :kappa]     # (kappa', kappa)
    w_coarse = frame.weights[:, kappa:]   # (kappa', kappa)
    coeffs = np.empty((ncells, nsub * kappa))
    for i0 in range(nsub):
        blk = slice(i0 * kappa, (i0 + 1) * kappa)
        coeffs[:, blk] = (fine_vals[:, i0, :] @ w_fine[blk].T
                          + coarse_vals @ w_coarse[blk].T)
    pts = np.vstack([coarse_pts.reshape(-1, d), fine_pts.reshape(-1, d)])
    return DetailExpansion(frame, level, coeffs, eval_points=pts)
