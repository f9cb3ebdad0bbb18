"""Fast invariant suite: the identities every healthy build must satisfy.

Each check is a pure function returning a CheckResult, so single checks can be
run against deliberately corrupted inputs (mutation testing) as well as from
the command line.  The whole suite is sized to finish in well under five
minutes on a laptop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import rates
from .discrete_mean import DenseTensor, exact_mean, mc_mean_adaptive, mc_mean_nonadaptive
from .instances import smooth_instance
from .interpolation import (DetailFrame, LagrangeBasis, detail_apply,
                            detail_frame, level_interpolate, shift_matrix)
from .multilevel import (ULevelTensor, detail_function, run_adaptive,
                         run_nonadaptive, schedule, theta_block)
from .partition import num_cells
from .problem import INF, ProblemSpec

__all__ = ["CheckResult", "ALL_CHECKS", "run_all", "telescoping_check",
           "corrupted_frame"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name, passed, detail=""):
    return CheckResult(name, bool(passed), detail)


def _random_poly(rng, r, d):
    coef = rng.uniform(-1.0, 1.0, size=(r,) * d)

    def poly(x):
        x = np.atleast_2d(x)
        out = np.zeros(len(x))
        for mi in np.ndindex(*coef.shape):
            term = coef[mi] * np.ones(len(x))
            for a in range(d):
                term = term * x[:, a] ** mi[a]
            out += term
        return out

    return poly


def interpolation_reproduction_check(seed=101) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r in (1, 2, 3):
        for d in (1, 2):
            basis = LagrangeBasis(r, d)
            for _ in range(3):
                poly = _random_poly(rng, r, d)
                rho = rng.uniform(size=d)
                interp = level_interpolate(basis, 2, rho, poly)
                pts = rng.uniform(size=(400, d))
                ref = poly(pts)
                err = np.max(np.abs(interp(pts) - ref)) / (1 + np.max(np.abs(ref)))
                worst = max(worst, err)
    return _result("interpolation_reproduction", worst <= 1e-10, f"sup={worst:.2e}")


def telescoping_check(seed=102, frame: Optional[DetailFrame] = None) -> CheckResult:
    """Level l1 interpolant equals level l0 plus the detail corrections.

    An injected frame replaces the derived one (used to verify the check
    catches corrupted weights).
    """
    rng = np.random.default_rng(seed)
    basis = LagrangeBasis(2, 2)
    rho = rng.uniform(size=2)
    fr = frame if frame is not None else detail_frame(basis, rho)
    rho = fr.rho

    def f(x):
        x = np.atleast_2d(x)
        return np.sin(2.2 * x[:, 0] + 0.3) * np.exp(0.4 * x[:, 1])

    pts = rng.uniform(size=(500, 2))
    acc = level_interpolate(basis, 1, rho, f)(pts)
    for level in range(1, 4):
        acc = acc + detail_apply(fr, level, f)(pts)
    err = np.max(np.abs(acc - level_interpolate(basis, 4, rho, f)(pts)))
    return _result("telescoping_identity", err <= 1e-9, f"sup={err:.2e}")


def decomposition_check(seed=103) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r in (1, 2):
        basis = LagrangeBasis(r, 2)
        rho = rng.uniform(size=2)
        fr = detail_frame(basis, rho)
        theta = theta_block(basis, 1, 1)

        def f(x):
            x = np.atleast_2d(x)
            return np.sin(2.3 * x[:, 0] + 0.4) * np.cos(1.7 * x[:, 1])

        level = 2
        det = detail_apply(fr, level, f)
        n2c = num_cells(level, 1)
        g_exact = (2.0 ** -level) * det.coeffs.reshape(
            num_cells(level, 1), n2c, -1).sum(axis=1)
        lhs = detail_function(g_exact.ravel(), level, theta)
        est = exact_mean(ULevelTensor(fr, level, 1, 1, f))
        rhs = detail_function(est.row_means, level, theta)
        grid = (np.arange(256) + 0.5).reshape(-1, 1) / 256
        worst = max(worst, float(np.max(np.abs(lhs(grid) - rhs(grid)))))
    return _result("mean_decomposition_identity", worst <= 1e-9, f"sup={worst:.2e}")


def shift_consistency_check(seed=104) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r, d in ((2, 1), (3, 2)):
        basis = LagrangeBasis(r, d)
        rho = rng.uniform(size=d)
        a = shift_matrix(basis, rho)
        delta = basis.shift_margin
        pts = rng.uniform(size=(200, d))
        direct = basis.eval_basis(pts - delta * rho)       # phi_k(t - delta rho)
        mixed = basis.eval_basis(pts) @ a                  # sum_j a_jk phi_j(t)
        worst = max(worst, float(np.max(np.abs(direct - mixed))))
    return _result("shift_consistency", worst <= 1e-12, f"sup={worst:.2e}")


def exact_mean_oracle_check(seed=105) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        n1, n2 = rng.integers(1, 9, size=2)
        vals = rng.integers(-3, 4, size=(n1, n2)).astype(np.float64)
        est = exact_mean(DenseTensor(vals))
        want = vals.sum(axis=1, dtype=np.int64)
        if not np.array_equal(est.row_means * n2, want.astype(np.float64)):
            return _result("exact_mean_oracle", False, "scaled-integer mismatch")
        if est.eval_count != n1 * n2:
            return _result("exact_mean_oracle", False, "eval count mismatch")
    return _result("exact_mean_oracle", True, "1000 tensors exact")


def unbiasedness_check(seed=106, runs=20000) -> CheckResult:
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(4, 8))
    truth = vals.mean(axis=1)
    acc = np.zeros(4)
    acc2 = np.zeros(4)
    tensor_vals = vals
    for _ in range(runs):
        est = mc_mean_nonadaptive(DenseTensor(tensor_vals), 8, rng)
        acc += est.row_means
        acc2 += est.row_means ** 2
    mean = acc / runs
    sd = np.sqrt(np.maximum(acc2 / runs - mean ** 2, 1e-30))
    z = np.max(np.abs(mean - truth) / (sd / math.sqrt(runs)))
    return _result("nonadaptive_unbiasedness", z <= 4.0, f"max|z|={z:.2f}")


def cardinality_caps_check(seed=107) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(100):
        n1 = int(rng.integers(1, 40))
        n2 = int(rng.integers(2, 40))
        vals = rng.normal(size=(n1, n2))
        n = int(rng.integers(1, n1 * n2))
        m = int(rng.integers(1, 6))
        e2 = mc_mean_nonadaptive(DenseTensor(vals), n, rng)
        if e2.raw_count > 2 * n:
            return _result("cardinality_caps", False, "non-adaptive cap broken")
        e3 = mc_mean_adaptive(DenseTensor(vals), n, m, 4, rng)
        if e3.raw_count > 6 * m * n:
            return _result("cardinality_caps", False, "adaptive cap broken")
    spec = ProblemSpec(1, 4, INF, 1, 1)
    f = smooth_instance(spec).as_function()
    _, card4 = run_nonadaptive(spec, 64, f, rng)
    _, card5 = run_adaptive(spec, 64, f, rng)
    ok = card4.check() and card5.check()
    return _result("cardinality_caps", ok, "contract caps and composite bound hold")


def rates_consistency_check(seed=108) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        r = int(rng.integers(0, 6))
        d1 = int(rng.integers(1, 4))
        d2 = int(rng.integers(1, 4))
        p = Fraction(int(rng.integers(2, 13)), int(rng.integers(1, 5)))
        if p < 1:
            p = 1 / p
        q_inf = rng.random() < 0.3
        q = INF if q_inf else p + Fraction(int(rng.integers(1, 9)), 3)
        spec = ProblemSpec(r, p, q, d1, d2)
        if spec.p > 2 and spec.q > spec.p:
            # boundary-equality propagation between the adaptive branch tests
            lhs_a = Fraction(-spec.r - Fraction(spec.d2, 2), spec.d1 + spec.d2)
            lhs_b = Fraction(-spec.r + (spec.inv_p - spec.inv_q) * spec.d1
                             - (1 - spec.inv_p) * spec.d2, spec.d1 + spec.d2)
            lhs_c = -spec.smoothness_ratio + spec.inv_p - spec.inv_q
            e1 = lhs_a == lhs_b
            e2 = ((Fraction(1, 2) - spec.inv_p) * spec.d2
                  == (spec.inv_p - spec.inv_q) * spec.d1)
            if e1 != e2:
                return _result("rates_branch_consistency", False, f"{spec}")
            e3 = lhs_a == lhs_c
            thr = (spec.inv_p - spec.inv_q) * (
                Fraction(spec.d1, spec.d2) + 1) + Fraction(1, 2)
            if e3 != (spec.smoothness_ratio == thr):
                return _result("rates_branch_consistency", False, f"{spec}")
            e4 = lhs_b == lhs_c
            if e4 != (spec.smoothness_ratio == 1 - spec.inv_q):
                return _result("rates_branch_consistency", False, f"{spec}")
            if rates.gap_exponent(spec) > Fraction(1, 8):
                return _result("rates_branch_consistency", False,
                               f"speedup exponent above 1/8 at {spec}")
    exact = rates.gap_exponent(ProblemSpec(1, 4, INF, 1, 1))
    return _result("rates_branch_consistency", exact == Fraction(1, 8),
                   "boundary equalities propagate; maximizer exact")


def zero_and_polynomial_check(seed=109) -> CheckResult:
    rng = np.random.default_rng(seed)
    zero = lambda pts: np.zeros(len(pts))
    spec4 = ProblemSpec(2, 2, 2, 1, 1)
    spec5 = ProblemSpec(2, 4, INF, 1, 1)
    fpoly = lambda x: 2 * x[:, 0] - 3 * x[:, 1] + x[:, 0] * x[:, 1]
    sf = lambda s: 2 * s[:, 0] - 1.5 + 0.5 * s[:, 0]
    grid = rng.uniform(size=(64, 1))
    for s in range(3):
        out, _ = run_nonadaptive(spec4, 64, zero, np.random.default_rng(s))
        if not np.all(out(grid) == 0.0):
            return _result("zero_and_polynomial_exactness", False, "zero broken")
        out, _ = run_adaptive(spec5, 64, zero, np.random.default_rng(s))
        if not np.all(out(grid) == 0.0):
            return _result("zero_and_polynomial_exactness", False, "zero broken")
        out4, _ = run_nonadaptive(spec4, 128, fpoly, np.random.default_rng(s))
        out5, _ = run_adaptive(spec5, 128, fpoly, np.random.default_rng(s))
        err = max(np.max(np.abs(out4(grid) - sf(grid))),
                  np.max(np.abs(out5(grid) - sf(grid))))
        if err > 1e-10:
            return _result("zero_and_polynomial_exactness", False,
                           f"poly err {err:.2e}")
    return _result("zero_and_polynomial_exactness", True, "3 seeds exact")


def schedule_check(seed=110) -> CheckResult:
    s = schedule(16, ProblemSpec(1, 2, 2, 1, 1), damping=0.0)
    ok = (s.l0, s.l1, s.budgets) == (2, 4, (16, 16))
    s2 = schedule(256, ProblemSpec(1, INF, INF, 1, 1), damping=0.0)
    ok = ok and (s2.l0, s2.l1) == (4, 6)
    for n in (5, 64, 1000, 4096):
        sc = schedule(n, ProblemSpec(1, 2, 2, 1, 1))
        ok = ok and n ** 0.5 <= 2 ** sc.l0 and 2 <= sc.l0 < sc.l1
    return _result("schedule_examples", ok, "closed-form values match")


def corrupted_frame(basis: LagrangeBasis, rho) -> DetailFrame:
    """Detail frame with a single flipped weight sign (test fixture)."""
    fr = detail_frame(basis, rho)
    bad = fr.weights.copy()
    bad[0, -1] = -bad[0, -1]
    return DetailFrame(basis=fr.basis, rho=fr.rho, mix=fr.mix, beta=fr.beta,
                       weights=bad, fine_offsets=fr.fine_offsets,
                       coarse_offsets=fr.coarse_offsets, sub_of_j=fr.sub_of_j,
                       j0_of_j=fr.j0_of_j)


ALL_CHECKS = [
    interpolation_reproduction_check,
    telescoping_check,
    decomposition_check,
    shift_consistency_check,
    exact_mean_oracle_check,
    unbiasedness_check,
    cardinality_caps_check,
    rates_consistency_check,
    zero_and_polynomial_check,
    schedule_check,
]


def run_all(printer: Callable[[str], None] = print) -> bool:
    ok = True
    for check in ALL_CHECKS:
        res = check()
        status = "PASS" if res.passed else "FAIL"
        printer(f"[{status}] {res.name}: {res.detail}")
        ok = ok and res.passed
    return ok
