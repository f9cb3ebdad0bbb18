"""Regime flags and convergence-rate envelopes, in exact rational arithmetic.

Every branch condition below is an equality/inequality between rationals
(reciprocals of p, q with 1/inf = 0), so the comparisons are done with
Fraction arithmetic; floats enter only when an envelope is evaluated at a
concrete budget n.  log means log2 throughout.

The envelopes are normalized with constant 1: they are used for slope and
ratio comparisons only, never as absolute error predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .problem import INF, ProblemSpec, inv, pos

__all__ = [
    "embedding_check", "solvable_check", "compact_check",
    "sigma1_flag", "beta1_flag", "beta2_flag", "sigma2_flag",
    "RegimeReport", "regime_report",
    "nonadaptive_rate_exponents", "adaptive_rate_exponents",
    "phi1", "phi2", "deterministic_rate_exponent",
    "gap_exponent", "theory_envelopes",
]


def embedding_check(r: int, p, d: int) -> bool:
    """Whether functions with r derivatives in L_p on [0,1]^d have continuous
    representatives (so that pointwise evaluation is classically defined)."""
    rd = Fraction(r, d)
    if p == 1:
        return rd >= 1
    return rd > inv(p)


def solvable_check(spec: ProblemSpec) -> bool:
    """Continuity of the parametric-integration operator into L_q."""
    rd1 = spec.smoothness_ratio
    gap = pos(spec.inv_p - spec.inv_q)
    if spec.q != INF:
        return rd1 >= gap
    if spec.p == 1 or spec.p == INF:
        return rd1 >= spec.inv_p
    return rd1 > spec.inv_p


def compact_check(spec: ProblemSpec) -> bool:
    """Strict version of solvability (compact embedding)."""
    return spec.smoothness_ratio > pos(spec.inv_p - spec.inv_q)


def sigma1_flag(spec: ProblemSpec) -> int:
    return 1 if (spec.p == INF and spec.q == INF) else 0


def beta1_flag(spec: ProblemSpec) -> int:
    boundary = 1 - spec.inv_p_bar + pos(spec.inv_p - spec.inv_q)
    return 1 if spec.smoothness_ratio == boundary else 0


def beta2_flag(spec: ProblemSpec) -> int:
    lhs = (Fraction(1, 2) - spec.inv_p) * spec.d2
    rhs = (spec.inv_p - spec.inv_q) * spec.d1
    return 1 if (lhs <= rhs and spec.smoothness_ratio == 1 - spec.inv_q) else 0


def sigma2_flag(spec: ProblemSpec) -> int:
    lhs = (Fraction(1, 2) - spec.inv_p) * spec.d2
    rhs = (spec.inv_p - spec.inv_q) * spec.d1
    thr = (spec.inv_p - spec.inv_q) * (Fraction(spec.d1, spec.d2) + 1) + Fraction(1, 2)
    return 1 if (lhs >= rhs and spec.smoothness_ratio >= thr and spec.q == INF) else 0


# -- rate envelopes ----------------------------------------------------------
#
# Each envelope is n^a * (log2(n+1))^b; the exponent pair (a, b) is exact.


def nonadaptive_rate_exponents(spec: ProblemSpec, branch: Optional[int] = None
                               ) -> tuple[Fraction, Fraction]:
    """Exponent pair (a, b) of the non-adaptive randomized envelope.

    branch=1 forces the volume-limited formula, branch=2 the
    smoothness-limited one; by default the branch is selected from spec.
    Forcing a branch is used by the boundary-continuity tests.
    """
    s1 = sigma1_flag(spec)
    gap = pos(spec.inv_p - spec.inv_q)
    rd1 = spec.smoothness_ratio
    threshold = 1 - spec.inv_p_bar + gap
    if branch is None:
        branch = 1 if rd1 > threshold else 2
    if branch == 1:
        a = Fraction(-spec.r + gap * spec.d1 - (1 - spec.inv_p_bar) * spec.d2,
                     spec.d1 + spec.d2)
        b = Fraction(s1, 2)
    else:
        a = -rd1 + gap
        b = s1 * (rd1 - gap)
    return a, b


def adaptive_rate_exponents(spec: ProblemSpec, branch: Optional[str] = None
                            ) -> tuple[Fraction, Fraction]:
    """Exponent pair of the adaptive randomized envelope (needs 2 < p < q).

    Branches: 'deep' (variance-limited, steepest), 'row' (row-count-limited),
    'flat' (smoothness-limited).  Default selects from spec; the boundary
    identities make the selection continuous.
    """
    if not (spec.p > 2 and spec.q > spec.p):
        raise ValueError("adaptive envelope defined only for 2 < p < q")
    rd1 = spec.smoothness_ratio
    gap = spec.inv_p - spec.inv_q
    half_minus = Fraction(1, 2) - spec.inv_p
    if branch is None:
        if half_minus * spec.d2 > gap * spec.d1:
            thr = gap * (Fraction(spec.d1, spec.d2) + 1) + Fraction(1, 2)
            branch = "deep" if rd1 > thr else "flat"
        else:
            branch = "row" if rd1 > 1 - spec.inv_q else "flat"
    if branch == "deep":
        a = Fraction(-spec.r - Fraction(spec.d2, 2), spec.d1 + spec.d2)
    elif branch == "row":
        a = Fraction(-spec.r + gap * spec.d1 - (1 - spec.inv_p) * spec.d2,
                     spec.d1 + spec.d2)
    elif branch == "flat":
        a = -rd1 + gap
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return a, Fraction(0)


def adaptive_branch(spec: ProblemSpec) -> str:
    """Which adaptive-envelope branch a spec falls in."""
    rd1 = spec.smoothness_ratio
    gap = spec.inv_p - spec.inv_q
    half_minus = Fraction(1, 2) - spec.inv_p
    if half_minus * spec.d2 > gap * spec.d1:
        thr = gap * (Fraction(spec.d1, spec.d2) + 1) + Fraction(1, 2)
        return "deep" if rd1 > thr else "flat"
    return "row" if rd1 > 1 - spec.inv_q else "flat"


def _power_log(n, a: Fraction, b: Fraction) -> float:
    ln = math.log2(n + 1)
    return float(n) ** float(a) * (ln ** float(b) if b != 0 else 1.0)


def phi1(n, spec: ProblemSpec) -> float:
    """Non-adaptive randomized envelope at budget n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = nonadaptive_rate_exponents(spec)
    return _power_log(n, a, b)


def phi2(n, spec: ProblemSpec) -> float:
    """Adaptive randomized envelope at budget n (2 < p < q only)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = adaptive_rate_exponents(spec)
    return _power_log(n, a, b)


def deterministic_rate_exponent(spec: ProblemSpec) -> Fraction:
    return Fraction(-spec.r + spec.d1 * pos(spec.inv_p - spec.inv_q),
                    spec.d1 + spec.d2)


def gap_exponent(spec: ProblemSpec):
    """Power of n separating non-adaptive from adaptive randomized errors.

    Exact rational; maximal value 1/8, attained exactly at p=4, q=inf,
    r >= d1 = d2.
    """
    if not (spec.p > 2 and spec.q > spec.p):
        raise ValueError("speedup exponent defined only for 2 < p < q")
    if not solvable_check(spec):
        raise ValueError("spec is not solvable")
    rd1 = spec.smoothness_ratio
    gap = spec.inv_p - spec.inv_q
    half_minus = Fraction(1, 2) - spec.inv_p
    if rd1 <= gap + Fraction(1, 2):
        return Fraction(0)
    if half_minus * spec.d2 > gap * spec.d1:
        thr = gap * (Fraction(spec.d1, spec.d2) + 1) + Fraction(1, 2)
        if rd1 <= thr:
            return Fraction((rd1 - (gap + Fraction(1, 2))) * spec.d2,
                            spec.d1 + spec.d2)
        return Fraction(gap * spec.d1, spec.d1 + spec.d2)
    if rd1 <= 1 - spec.inv_q:
        return Fraction((rd1 - (gap + Fraction(1, 2))) * spec.d2,
                        spec.d1 + spec.d2)
    return Fraction(half_minus * spec.d2, spec.d1 + spec.d2)


@dataclass(frozen=True)
class RegimeReport:
    """All regime flags of a spec plus branch tags of the envelopes."""

    spec: ProblemSpec
    p_bar: Union[Fraction, float]
    sigma1: int
    beta1: int
    beta2: int
    sigma2: int
    embedded: bool
    solvable: bool
    compact: bool
    phi1_branch: int
    phi2_branch: Optional[str]

    def as_dict(self) -> dict:
        return {
            "spec": self.spec.as_dict(),
            "p_bar": float(self.p_bar),
            "sigma1": self.sigma1,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "sigma2": self.sigma2,
            "embedded": self.embedded,
            "solvable": self.solvable,
            "compact": self.compact,
            "phi1_branch": self.phi1_branch,
            "phi2_branch": self.phi2_branch,
        }


def regime_report(spec: ProblemSpec) -> RegimeReport:
    gap = pos(spec.inv_p - spec.inv_q)
    branch1 = 1 if spec.smoothness_ratio > 1 - spec.inv_p_bar + gap else 2
    in_gap_regime = spec.p > 2 and spec.q > spec.p
    return RegimeReport(
        spec=spec,
        p_bar=spec.p_bar,
        sigma1=sigma1_flag(spec),
        beta1=beta1_flag(spec),
        beta2=beta2_flag(spec) if in_gap_regime else 0,
        sigma2=sigma2_flag(spec) if in_gap_regime else 0,
        embedded=embedding_check(spec.r, spec.p, spec.d),
        solvable=solvable_check(spec),
        compact=compact_check(spec),
        phi1_branch=branch1,
        phi2_branch=adaptive_branch(spec) if in_gap_regime else None,
    )


def theory_envelopes(n, spec: ProblemSpec) -> dict:
    """Upper/lower envelope values at budget n for each algorithm setting.

    Pure powers of n and log2(n+1) with constant 1; the adaptive upper
    envelope uses the shrunken budget n/log2(n+1) and is only reported for
    n >= 4 (the shrunken argument drops below 1 otherwise).
    """
    if not solvable_check(spec):
        raise ValueError("spec is not solvable")
    out: dict = {}
    s1 = sigma1_flag(spec)
    b1 = beta1_flag(spec)
    ln = math.log2(n + 1)
    out["phi1"] = phi1(n, spec)
    in_gap_regime = spec.p > 2 and spec.q > spec.p
    # log-factor exponent of the non-adaptive upper bound differs between
    # the two regimes (2 - 1/p_bar vs 2 - 1/p).
    nn_exp = (2 - float(spec.inv_p)) if in_gap_regime else (2 - float(spec.inv_p_bar))
    out["ran_non_lower"] = out["phi1"]
    out["ran_non_upper"] = out["phi1"] * ln ** (b1 * nn_exp)
    if in_gap_regime:
        s2 = sigma2_flag(spec)
        b2 = beta2_flag(spec)
        out["phi2"] = phi2(n, spec)
        out["ran_lower"] = out["phi2"] * ln ** (s2 / 2.0)
        if n >= 4:
            out["ran_upper"] = phi2(n / ln, spec) * ln ** (b2 * (2 - float(spec.inv_p)))
        else:
            out["ran_upper"] = None
    else:
        out["phi2"] = None
        out["ran_lower"] = out["phi1"]
        out["ran_upper"] = out["ran_non_upper"]
    out["det"] = float(n) ** float(deterministic_rate_exponent(spec))
    return out
