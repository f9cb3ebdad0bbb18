"""Problem description: smoothness/integrability parameters of one instance class.

A problem is the tuple (r, p, q, d1, d2): integrands live on the product cube
[0,1]^(d1+d2) and have r derivatives in L_p; the parametric integral over the
last d2 coordinates is approximated in L_q over the first d1 coordinates.

Exponents p, q are kept as exact rationals (math.inf allowed) so that all
regime comparisons downstream are exact; reciprocals use the convention
1/inf = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

Exponent = Union[int, float, Fraction, str]

INF = math.inf


def _parse_exponent(x: Exponent) -> Union[Fraction, float]:
    """Normalize an integrability exponent to Fraction or math.inf."""
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity", "oo"):
            return INF
        return Fraction(x)
    if x == INF:
        return INF
    f = Fraction(x)
    return f


def inv(x) -> Fraction:
    """Exact reciprocal with 1/inf = 0."""
    if x == INF:
        return Fraction(0)
    return 1 / Fraction(x)


def pos(x: Fraction) -> Fraction:
    """Positive part."""
    return x if x > 0 else Fraction(0)


@dataclass(frozen=True)
class ProblemSpec:
    """Parameters (r, p, q, d1, d2) of one parametric-integration problem."""

    r: int
    p: Union[Fraction, float]
    q: Union[Fraction, float]
    d1: int
    d2: int

    def __init__(self, r: int, p: Exponent, q: Exponent, d1: int, d2: int):
        object.__setattr__(self, "r", int(r))
        object.__setattr__(self, "p", _parse_exponent(p))
        object.__setattr__(self, "q", _parse_exponent(q))
        object.__setattr__(self, "d1", int(d1))
        object.__setattr__(self, "d2", int(d2))
        self._validate()

    def _validate(self):
        if self.r < 0:
            raise ValueError("smoothness order r must be a non-negative integer")
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("d1 and d2 must be >= 1 (degenerate factors unsupported)")
        for name in ("p", "q"):
            v = getattr(self, name)
            if v != INF and not (1 <= v):
                raise ValueError(f"{name} must lie in [1, inf]")

    # -- derived quantities -------------------------------------------------

    @property
    def d(self) -> int:
        return self.d1 + self.d2

    @property
    def inv_p(self) -> Fraction:
        return inv(self.p)

    @property
    def inv_q(self) -> Fraction:
        return inv(self.q)

    @property
    def p_bar(self) -> Union[Fraction, float]:
        """min(p, 2), the exponent governing plain Monte Carlo mean rates."""
        return self.p if self.p != INF and self.p < 2 else Fraction(2)

    @property
    def inv_p_bar(self) -> Fraction:
        return inv(self.p_bar)

    @property
    def smoothness_ratio(self) -> Fraction:
        """r / d1, compared against integrability thresholds everywhere."""
        return Fraction(self.r, self.d1)

    def as_dict(self) -> dict:
        def enc(v):
            if v == INF:
                return "inf"
            return str(v) if isinstance(v, Fraction) and v.denominator != 1 else int(v)

        return {"r": self.r, "p": enc(self.p), "q": enc(self.q),
                "d1": self.d1, "d2": self.d2}

    def __repr__(self):
        def s(v):
            return "inf" if v == INF else str(v)

        return (f"ProblemSpec(r={self.r}, p={s(self.p)}, q={s(self.q)}, "
                f"d1={self.d1}, d2={self.d2})")
