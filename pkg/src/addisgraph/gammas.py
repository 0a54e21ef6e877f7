"""Catalog of gamma sequences used to seed significance-level budgets.

Every spec describes a nonnegative sequence ``gamma_1, gamma_2, ...`` whose
infinite sum is at most one.  The proportional forms (``logq``, ``power``)
are normalized so the infinite sum equals one; the normalization constant is
computed once by partial summation plus an integral tail bound and cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import polygamma, zeta

from .errors import DomainError, InvalidSpec, NonMonotoneGamma

_BASEL = 6.0 / math.pi**2
_PARTIAL_SUM_TERMS = 10**6


@lru_cache(maxsize=None)
def _logq_norm() -> float:
    """1 / sum_{i>=1} 1/((i+1) ln^2(i+1)), partial sum + midpoint tail integral."""
    i = np.arange(1, _PARTIAL_SUM_TERMS + 1, dtype=np.float64)
    partial = math.fsum(1.0 / ((i + 1.0) * np.log(i + 1.0) ** 2))
    tail = 1.0 / math.log(_PARTIAL_SUM_TERMS + 1.5)
    return 1.0 / (partial + tail)


@lru_cache(maxsize=None)
def _logq_prefix(m: int) -> float:
    """Unnormalized partial sum of the logq sequence up to index m."""
    i = np.arange(1, m + 1, dtype=np.float64)
    return math.fsum(1.0 / ((i + 1.0) * np.log(i + 1.0) ** 2))


@dataclass(frozen=True)
class GammaSpec:
    """Specification of a gamma sequence.

    kind:
      * ``"logq"``       gamma_i = c / ((i+1) ln^2(i+1))
      * ``"power"``      gamma_i = i^(-s) / zeta(s), s > 1
      * ``"basel"``      gamma_i = 6 / (pi^2 i^2)
      * ``"geometric"``  gamma_i = q^(i-1) (1-q), q in (0, 1)
      * ``"custom"``     explicit finite table, zero beyond it
    """

    kind: str = "basel"
    s: float | None = None
    q: float | None = None
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "power":
            if self.s is None or self.s <= 1.0:
                raise InvalidSpec(f"power spec needs exponent s > 1, got {self.s}")
        elif self.kind == "geometric":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise InvalidSpec(f"geometric spec needs ratio q in (0,1), got {self.q}")
        elif self.kind == "custom":
            if not self.table:
                raise InvalidSpec("custom spec needs a nonempty table")
            vals = np.asarray(self.table, dtype=np.float64)
            if np.any(vals < 0.0):
                raise InvalidSpec("custom gamma values must be nonnegative")
            if vals.sum() > 1.0 + 1e-12:
                raise InvalidSpec("custom gamma table sums beyond 1")
        elif self.kind not in ("logq", "basel"):
            raise InvalidSpec(f"unknown gamma kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "power":
            return f"power:{self.s:g}"
        if self.kind == "geometric":
            return f"geometric:{self.q:g}"
        if self.kind == "custom":
            return "custom"
        return self.kind

    def value(self, i: int) -> float:
        """gamma_i for a single 1-based index."""
        if i < 1:
            raise DomainError(f"gamma index must be >= 1, got {i}")
        return float(self.values(i)[i - 1])

    def values(self, n: int) -> np.ndarray:
        """Array of gamma_1 .. gamma_n."""
        return _gamma_values(self, n)

    def prefix_sum(self, m: int) -> float:
        """sum_{i<=m} gamma_i (exact for geometric, high precision otherwise)."""
        if m <= 0:
            return 0.0
        if self.kind == "geometric":
            return 1.0 - self.q**m
        return 1.0 - self.tail_sum(m)

    def tail_sum(self, m: int) -> float:
        """sum_{i>m} gamma_i."""
        if m <= 0:
            m = 0
        if self.kind == "geometric":
            return float(self.q**m) if m else 1.0
        if self.kind == "basel":
            return float(_BASEL * polygamma(1, m + 1))
        if self.kind == "power":
            return float(zeta(self.s, m + 1) / zeta(self.s))
        if self.kind == "logq":
            if m >= _PARTIAL_SUM_TERMS:
                return float(_logq_norm() / math.log(m + 1.5))
            return 1.0 - float(_logq_norm() * _logq_prefix(m)) if m else 1.0
        # custom: finite support
        vals = np.asarray(self.table, dtype=np.float64)
        return float(vals[m:].sum())

    def is_nonincreasing(self, n: int = 1000) -> bool:
        vals = self.values(n)
        return bool(np.all(np.diff(vals) <= 0.0))

    def require_nonincreasing(self, n: int = 1000) -> None:
        if not self.is_nonincreasing(n):
            raise NonMonotoneGamma(f"gamma spec {self.name} is not nonincreasing")

    @classmethod
    def parse(cls, text: str) -> "GammaSpec":
        """Parse strings like ``basel``, ``logq``, ``power:1.6``, ``geometric:0.6``."""
        parts = text.strip().split(":")
        kind = parts[0]
        if kind in ("basel", "logq"):
            return cls(kind=kind)
        if kind == "power":
            return cls(kind="power", s=float(parts[1]))
        if kind == "geometric":
            return cls(kind="geometric", q=float(parts[1]))
        raise InvalidSpec(f"cannot parse gamma spec {text!r}")


@lru_cache(maxsize=256)
def _gamma_values(spec: GammaSpec, n: int) -> np.ndarray:
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    i = np.arange(1, n + 1, dtype=np.float64)
    if spec.kind == "basel":
        out = _BASEL / i**2
    elif spec.kind == "geometric":
        out = spec.q ** (i - 1.0) * (1.0 - spec.q)
    elif spec.kind == "power":
        out = i ** (-spec.s) / zeta(spec.s)
    elif spec.kind == "logq":
        out = _logq_norm() / ((i + 1.0) * np.log(i + 1.0) ** 2)
    else:  # custom
        out = np.zeros(n)
        table = np.asarray(spec.table, dtype=np.float64)
        k = min(n, table.size)
        out[:k] = table[:k]
    out.setflags(write=False)
    return out


def gamma_value(spec: GammaSpec, i: int) -> float:
    """Functional alias for :meth:`GammaSpec.value`."""
    return spec.value(i)
