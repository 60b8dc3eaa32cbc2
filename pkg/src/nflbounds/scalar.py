"""Special functions and l_q norm helpers shared by every other module."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


@dataclass(frozen=True)
class LqExponent:
    """Exponent q in [1, inf] of an l_q norm.

    ``math.inf`` is stored as-is and treated as the max-norm; no large sentinel
    floats are used anywhere.
    """

    value: float

    def __post_init__(self):
        v = float(self.value)
        if math.isnan(v) or v < 1:
            raise DomainError(f"l_q exponent must lie in [1, inf], got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.value)

    @property
    def reciprocal(self) -> float:
        """1/q with 1/inf = 0."""
        return 0.0 if self.is_inf else 1.0 / self.value

    def dual(self) -> "LqExponent":
        return dual_exponent(self)

    def __str__(self):
        if self.is_inf:
            return "inf"
        return f"{self.value:g}"

    @classmethod
    def parse(cls, text: str) -> "LqExponent":
        t = text.strip().lower()
        if t in ("inf", "infinity", "oo", "max"):
            return cls(math.inf)
        return cls(float(t))


QLike = Union[LqExponent, float, int, str]


def as_exponent(q: QLike) -> LqExponent:
    if isinstance(q, LqExponent):
        return q
    if isinstance(q, str):
        return LqExponent.parse(q)
    return LqExponent(q)


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays."""
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(a):
    """Inverse of :func:`std_normal_cdf` on (0, 1).

    The rational approximation from scipy is polished with one Newton step so
    that ``std_normal_cdf(std_normal_quantile(a))`` reproduces ``a`` to 1e-12.
    """
    a_arr = np.asarray(a, dtype=float)
    if np.any(~((a_arr > 0.0) & (a_arr < 1.0))):
        raise DomainError("normal quantile requires a in (0, 1)")
    x = special.ndtri(a_arr)
    dens = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = (special.ndtr(x) - a_arr) / dens
    x = np.where(np.isfinite(step), x - step, x)
    return float(x) if x.ndim == 0 else x


def crude_quantile_approx(a):
    """sqrt(2 log(1/(1-a))), the tail-bound surrogate for the normal quantile."""
    a_arr = np.asarray(a, dtype=float)
    if np.any(~((a_arr >= 0.0) & (a_arr < 1.0))):
        raise DomainError("crude quantile requires a in [0, 1)")
    out = np.sqrt(-2.0 * np.log1p(-a_arr))
    return float(out) if out.ndim == 0 else out


def dual_exponent(q: QLike) -> LqExponent:
    """Conjugate exponent: 1/q + 1/q* = 1, with 1 <-> inf."""
    q = as_exponent(q)
    if q.is_inf:
        return LqExponent(1.0)
    if q.value == 1.0:
        return LqExponent(math.inf)
    return LqExponent(q.value / (q.value - 1.0))


def lq_norm(x, q: QLike, axis=-1):
    """l_q norm along ``axis`` (the last one by default)."""
    q = as_exponent(q)
    a = np.abs(np.asarray(x, dtype=float))
    if q.is_inf:
        out = a.max(axis=axis) if a.size else np.zeros(np.delete(a.shape, axis))
    elif q.value == 1.0:
        out = a.sum(axis=axis)
    elif q.value == 2.0:
        out = np.sqrt((a * a).sum(axis=axis))
    else:
        # scale by the max entry so large q does not overflow
        m = a.max(axis=axis, keepdims=True) if a.size else a
        safe = np.where(m > 0, m, 1.0)
        out = np.squeeze(safe, axis=axis) * ((a / safe) ** q.value).sum(axis=axis) ** (1.0 / q.value)
    return float(out) if np.ndim(out) == 0 else out


def dimension_factor(p: int, q: QLike) -> float:
    """p^(1/q - 1/2): converts l_2 scales into l_q scales in R^p."""
    q = as_exponent(q)
    return float(p) ** (q.reciprocal - 0.5)
