"""Closed-form impossibility bounds and T2 noise-scale constructors.

Conventions: ``sigma`` is the square root of the T2 constant of a class
conditional, ``err_std``/``acc_std`` are the class-conditional standard error
and accuracy of a classifier, ``eps`` is the attack tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate

from .scalar import DomainError, LqExponent, QLike, as_exponent, dimension_factor, std_normal_cdf

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
# relative slack when comparing eps against a threshold computed elsewhere
_THRESHOLD_RTOL = 1e-9


class VacuousBoundError(ValueError):
    """The classifier is perfect on the class (err = 0): every bound is infinite."""


class BelowThresholdError(ValueError):
    """Tolerance below the point where a bound starts to apply."""


def _check_err(err_std: float) -> float:
    err_std = float(err_std)
    if err_std == 0.0:
        raise VacuousBoundError("err(h|k) = 0: classifier is perfect on this class, bound is vacuous")
    if not 0.0 < err_std <= 1.0:
        raise DomainError(f"err(h|k) must lie in (0, 1], got {err_std}")
    return err_std


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not sigma > 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return sigma


def _above(eps: float, threshold: float) -> bool:
    return eps >= threshold * (1.0 - _THRESHOLD_RTOL) - 1e-300


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def critical_epsilon(err_std: float, sigma: float) -> float:
    """sigma * sqrt(2 log(1/err)): tolerance at which accuracy starts to collapse."""
    err_std = _check_err(err_std)
    sigma = _check_sigma(sigma)
    return sigma * math.sqrt(2.0 * math.log(1.0 / err_std))


def critical_epsilon_q(err_std: float, sigma: float, p: int, q: QLike) -> float:
    if p < 1:
        raise DomainError("dimension p must be >= 1")
    return critical_epsilon(err_std, sigma) * dimension_factor(p, q)


def _decay_bound(acc_std: float, crit: float, rate_scale: float, sigma: float, eps: float) -> float:
    if not _above(eps, crit):
        raise BelowThresholdError(f"eps={eps} is below the phase transition at {crit}")
    gap = max(eps - crit, 0.0)
    return _clip01(min(acc_std, math.exp(-rate_scale * (gap * gap) / (2.0 * sigma * sigma))))


def _check_acc(acc_std: float) -> float:
    acc_std = float(acc_std)
    if not 0.0 <= acc_std < 1.0:
        raise VacuousBoundError(f"acc(h|k) must lie in [0, 1), got {acc_std}")
    return acc_std


def adv_acc_bound_geodesic(acc_std: float, sigma: float, eps: float) -> float:
    """Upper bound on adversarial accuracy under the geodesic (or l_2) threat model."""
    acc_std = _check_acc(acc_std)
    return _decay_bound(acc_std, critical_epsilon(1.0 - acc_std, sigma), 1.0, sigma, eps)


def adv_acc_bound_lq(acc_std: float, sigma: float, p: int, q: QLike, eps: float) -> float:
    """Flat-space l_q version of :func:`adv_acc_bound_geodesic`."""
    acc_std = _check_acc(acc_std)
    q = as_exponent(q)
    crit = critical_epsilon_q(1.0 - acc_std, sigma, p, q)
    return _decay_bound(acc_std, crit, float(p) ** (1.0 - 2.0 * q.reciprocal), sigma, eps)


def acc_bound_curve(acc_std: float, sigma: float, eps_grid: Sequence[float],
                    p: Optional[int] = None, q: Optional[QLike] = None) -> np.ndarray:
    """Bound values on a grid; below the critical tolerance the trivial bound acc_std is used."""
    out = np.empty(len(eps_grid))
    for i, eps in enumerate(eps_grid):
        try:
            if q is None:
                out[i] = adv_acc_bound_geodesic(acc_std, sigma, eps)
            else:
                out[i] = adv_acc_bound_lq(acc_std, sigma, p, q, eps)
        except BelowThresholdError:
            out[i] = acc_std
    return out


def distance_bound_geodesic(err_std: float, sigma: float) -> float:
    """eps(h|k) + sigma*sqrt(pi/2), the bound on mean distance to the error set."""
    return critical_epsilon(err_std, sigma) + sigma * SQRT_HALF_PI


def distance_bound_lq(err_std: float, sigma: float, p: int, q: QLike) -> float:
    return distance_bound_geodesic(err_std, sigma) * dimension_factor(p, q)


@dataclass
class BoundReport:
    sigma: float
    err_std: float
    eps_crit: float
    dist_bound: float
    p: Optional[int] = None
    q: Optional[LqExponent] = None
    curve: list = field(default_factory=list)


def bound_report(err_std: float, sigma: float, eps_grid: Sequence[float] = (),
                 p: Optional[int] = None, q: Optional[QLike] = None) -> BoundReport:
    if q is None:
        crit = critical_epsilon(err_std, sigma)
        dist = distance_bound_geodesic(err_std, sigma)
        qq = None
    else:
        qq = as_exponent(q)
        if p is None:
            raise DomainError("an l_q report needs the dimension p")
        crit = critical_epsilon_q(err_std, sigma, p, qq)
        dist = distance_bound_lq(err_std, sigma, p, qq)
    vals = acc_bound_curve(1.0 - err_std, sigma, eps_grid, p, qq) if len(eps_grid) else []
    return BoundReport(sigma=sigma, err_std=err_std, eps_crit=crit, dist_bound=dist, p=p, q=qq,
                       curve=list(zip(map(float, eps_grid), map(float, vals))))


# -- T2 constants of the analytic families -----------------------------------

def sphere_t2_sigma(r: float, p: int) -> float:
    """sigma of the uniform measure on a sphere of radius r: r / sqrt(p - 1)."""
    if p < 2:
        raise DomainError("sphere needs p >= 2")
    if not r > 0:
        raise DomainError("radius must be positive")
    return r / math.sqrt(p - 1)


def ricci_uniform_sigma(ricci_min: float) -> float:
    if not ricci_min > 0:
        raise DomainError("uniform-measure bound needs strictly positive Ricci curvature")
    return 1.0 / math.sqrt(ricci_min)


def pushforward_sigma(lipschitz: float, sigma_base: float) -> float:
    if not (lipschitz > 0 and sigma_base > 0):
        raise DomainError("Lipschitz constant and base sigma must be positive")
    return lipschitz * sigma_base


def holley_stroock_sigma(sigma: float, osc: float) -> float:
    """Noise scale after a bounded perturbation u of the log-density, osc = sup u - inf u."""
    if osc < 0:
        raise DomainError("oscillation is sup - inf and cannot be negative")
    return _check_sigma(sigma) * math.exp(osc)


HYPERCUBE_LIPSCHITZ = 1.0 / math.sqrt(2.0 * math.pi)


# -- the motivating toy problem ------------------------------------------------

class ClaimedBound(NamedTuple):
    value: float
    bound: float


class NflBound(NamedTuple):
    value: float
    vacuous: bool


def basic_nfl_bound(delta: float) -> NflBound:
    """7*delta/3 cap on adversarial accuracy (l_inf, eps >= 2 eta) given accuracy >= 1 - delta."""
    if not 0.0 <= delta <= 1.0:
        raise DomainError("delta must be a probability")
    v = 7.0 * delta / 3.0
    return NflBound(min(v, 1.0), v > 1.0)


def toy_std_acc(p: int, eta: float) -> ClaimedBound:
    """Exact accuracy of the averaging classifier and its exponential lower bound."""
    if p < 2:
        raise DomainError("toy problem needs p >= 2")
    exact = std_normal_cdf(eta * math.sqrt(p - 1))
    return ClaimedBound(exact, 1.0 - math.exp(-(p - 1) * eta * eta / 2.0))


def toy_adv_acc(p: int, eta: float, eps: float) -> ClaimedBound:
    """Exact l_inf adversarial accuracy of the averaging classifier and its upper bound."""
    if p < 2:
        raise DomainError("toy problem needs p >= 2")
    if eps < eta:
        raise BelowThresholdError(f"closed form derived for eps >= eta, got eps={eps} < eta={eta}")
    exact = std_normal_cdf((eta - eps) * math.sqrt(p - 1))
    return ClaimedBound(exact, math.exp(-(p - 1) * (eps - eta) ** 2 / 2.0))


def toy_eta_for_delta(p: int, delta: float) -> float:
    """Smallest eta for which the averaging classifier is guaranteed accuracy 1 - delta."""
    return math.sqrt(2.0 * math.log(1.0 / delta) / (p - 1))


def _log_cosh(z):
    z = np.abs(z)
    small = z < 1.0
    out = np.empty_like(z)
    out[small] = np.log1p(2.0 * np.sinh(z[small] / 2.0) ** 2)
    zb = z[~small]
    out[~small] = zb + np.log1p(np.exp(-2.0 * zb)) - math.log(2.0)
    return out


def mixture_entropy_correction(eta: float) -> float:
    """The integral r in MI = eta^2 - r for the two-component mixture N(+-eta, 1)."""
    if eta == 0.0:
        return 0.0
    norm = 2.0 / (math.sqrt(2.0 * math.pi) * eta)

    def f(z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        # e^{-z^2/2eta^2} e^{-eta^2/2} cosh z  ==  e^{-(z-eta^2)^2/2eta^2} (1+e^{-2z})/2
        g = np.exp(-((z - eta * eta) ** 2) / (2.0 * eta * eta)) * 0.5 * (1.0 + np.exp(-2.0 * z))
        return float((norm * g * _log_cosh(z))[0])

    upper = eta * eta + 12.0 * eta
    val, _ = integrate.quad(f, 0.0, upper, points=[min(eta * eta, upper)] if eta * eta > 0 else None,
                            epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


def toy_mutual_information(eta: float) -> float:
    """Mutual information (nats) between one Gaussian toy feature and the label."""
    if eta < 0:
        raise DomainError("eta must be nonnegative")
    if eta == 0:
        return 0.0
    mi = eta * eta - mixture_entropy_correction(eta)
    return min(max(mi, 0.0), eta * eta)


# -- blowup ------------------------------------------------------------------

def blowup_threshold(c: float, mass: float) -> float:
    if not 0.0 < mass <= 1.0:
        raise DomainError("mass must lie in (0, 1]")
    return math.sqrt(2.0 * c * math.log(1.0 / mass))


def blowup_lower_bound(c: float, mass: float, eps: float) -> float:
    """Concentration lower bound on the measure of the eps-blowup of a set of given mass."""
    if not c > 0:
        raise DomainError("T2 constant must be positive")
    thr = blowup_threshold(c, mass)
    if not _above(eps, thr):
        raise BelowThresholdError(f"eps={eps} below blowup threshold {thr}")
    gap = max(eps - thr, 0.0)
    return _clip01(1.0 - math.exp(-gap * gap / (2.0 * c)))
