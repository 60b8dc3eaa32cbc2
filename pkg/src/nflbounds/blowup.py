"""Exact blowup masses for half-spaces and spherical caps, and a checker for
the concentration lower bound on sets whose enlargements are computable."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
from scipy import optimize, special

from .bounds import BelowThresholdError, blowup_lower_bound, blowup_threshold
from .scalar import DomainError, QLike, dual_exponent, lq_norm, std_normal_cdf, std_normal_quantile


def _wnorm(w) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not np.any(w):
        raise DomainError("half-space normal must be nonzero")
    return w


def halfspace_mass(p: int, sigma: float, w, t: float) -> float:
    """N(0, sigma^2 I_p) mass of {x : w.x >= t}."""
    w = _wnorm(w)
    return std_normal_cdf(-t / (sigma * np.linalg.norm(w)))


def halfspace_blowup_mass(p: int, sigma: float, w, t: float, eps: float, q: QLike = 2) -> float:
    """Mass of the l_q eps-blowup {w.x >= t - eps ||w||_{q*}}."""
    w = _wnorm(w)
    shift = eps * lq_norm(w, dual_exponent(q))
    return std_normal_cdf((shift - t) / (sigma * np.linalg.norm(w)))


def cap_mass(p: int, theta: float) -> float:
    """Uniform mass of a geodesic cap of polar angle theta on the unit sphere in R^p."""
    if p < 2:
        raise DomainError("sphere needs p >= 2")
    if not 0.0 <= theta <= math.pi:
        raise DomainError("cap angle must lie in [0, pi]")
    if theta > math.pi / 2:
        return 1.0 - cap_mass(p, math.pi - theta)
    s2 = math.sin(theta) ** 2
    return 0.5 * float(special.betainc((p - 1) / 2.0, 0.5, s2))


def cap_blowup_mass(p: int, r: float, theta: float, eps: float) -> float:
    """A geodesic eps-blowup of a cap is the cap of angle theta + eps / r."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    cap_mass(p, theta)  # validates arguments
    return cap_mass(p, min(theta + eps / r, math.pi))


def cap_angle_for_mass(p: int, mass: float) -> float:
    if not 0.0 < mass < 1.0:
        raise DomainError("cap mass must lie in (0, 1)")
    return optimize.brentq(lambda th: cap_mass(p, th) - mass, 0.0, math.pi, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True)
class GaussianSpace:
    p: int
    sigma: float = 1.0

    @property
    def c(self) -> float:
        return self.sigma ** 2


@dataclass(frozen=True)
class SphereSpace:
    p: int
    r: float = 1.0

    @property
    def c(self) -> float:
        return self.r ** 2 / (self.p - 1)


@dataclass(frozen=True)
class HalfSpace:
    w: tuple
    t: float


@dataclass(frozen=True)
class Cap:
    theta: float


@dataclass(frozen=True)
class BlowupCase:
    space: Union[GaussianSpace, SphereSpace]
    set: Union[HalfSpace, Cap]
    case_id: str = ""

    @property
    def c(self) -> float:
        return self.space.c

    @property
    def mass(self) -> float:
        return self.blowup_mass(0.0)

    def blowup_mass(self, eps: float) -> float:
        sp, st = self.space, self.set
        if isinstance(sp, GaussianSpace) and isinstance(st, HalfSpace):
            return halfspace_blowup_mass(sp.p, sp.sigma, np.asarray(st.w), st.t, eps, 2)
        if isinstance(sp, SphereSpace) and isinstance(st, Cap):
            return cap_blowup_mass(sp.p, sp.r, st.theta, eps)
        raise TypeError("half-spaces live in Gaussian spaces, caps on spheres")

    @classmethod
    def gaussian_halfspace(cls, p: int, sigma: float, mass: float, case_id: str = ""):
        """Half-space along the first axis with the requested mass."""
        w = np.zeros(p)
        w[0] = 1.0
        t = -sigma * std_normal_quantile(mass)
        return cls(GaussianSpace(p, sigma), HalfSpace(tuple(w), t), case_id)

    @classmethod
    def sphere_cap(cls, p: int, r: float, mass: float, case_id: str = ""):
        return cls(SphereSpace(p, r), Cap(cap_angle_for_mass(p, mass)), case_id)


@dataclass(frozen=True)
class Violation:
    case_id: str
    eps: float
    exact: float
    bound: float

    @property
    def slack(self) -> float:
        return self.exact - self.bound


def blowup_rows(case: BlowupCase, eps_grid: Sequence[float]) -> List[Violation]:
    """(eps, exact mass, lower bound) for every grid point; slack < 0 means violation."""
    mass = case.mass
    rows = []
    for eps in eps_grid:
        rows.append(Violation(case.case_id, float(eps), case.blowup_mass(eps), blowup_lower_bound(case.c, mass, eps)))
    return rows


def verify_blowup_lemma(case: BlowupCase, eps_grid: Sequence[float], tol: float = 1e-12) -> List[Violation]:
    """Grid points where the exact blowup mass falls below the concentration bound."""
    return [v for v in blowup_rows(case, eps_grid) if v.slack < -tol]


def default_grid(case: BlowupCase, points: int = 50, span: float = 6.0) -> np.ndarray:
    """``points`` tolerances from the bound's threshold up to threshold + span * sqrt(c)."""
    thr = blowup_threshold(case.c, case.mass)
    return np.linspace(thr, thr + span * math.sqrt(case.c), points)


LEMMA_MASSES = (0.001, 0.01, 0.1, 0.5)


def lemma_case_matrix(sigma_scale: float = 1.0) -> List[BlowupCase]:
    """Gaussian half-spaces (p in 1, 10, 100) and sphere caps (p in 3, 10, 500).

    ``sigma_scale`` shrinks the assumed T2 constant for fault injection; the
    true spaces are unchanged.
    """
    cases = []
    for p in (1, 10, 100):
        for m in LEMMA_MASSES:
            c = BlowupCase.gaussian_halfspace(p, 1.0, m, f"gauss-p{p}-m{m:g}")
            if sigma_scale != 1.0:
                c = _ScaledCase(c.space, c.set, c.case_id, sigma_scale ** 2)
            cases.append(c)
    for p in (3, 10, 500):
        for m in LEMMA_MASSES:
            c = BlowupCase.sphere_cap(p, 1.0, m, f"sphere-p{p}-m{m:g}")
            if sigma_scale != 1.0:
                c = _ScaledCase(c.space, c.set, c.case_id, sigma_scale ** 2)
            cases.append(c)
    return cases


@dataclass(frozen=True)
class _ScaledCase(BlowupCase):
    c_factor: float = 1.0

    @property
    def c(self) -> float:
        return self.space.c * self.c_factor


def run_lemma_matrix(points: int = 50, sigma_scale: float = 1.0, tol: float = 1e-12):
    """Every row of the lemma matrix and the list of violations."""
    rows, bad = [], []
    for case in lemma_case_matrix(sigma_scale):
        r = blowup_rows(case, default_grid(case, points))
        rows.extend(r)
        bad.extend(v for v in r if v.slack < -tol)
    return rows, bad
