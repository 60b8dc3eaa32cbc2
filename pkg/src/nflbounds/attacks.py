"""Adversarial perturbation search and empirical robustness estimates.

Linear classifiers get exact answers through their margin; everything else is
attacked with l_inf PGD, which can only over-estimate robust accuracy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import bounds
from .classifiers import CapClassifier, ConstantClassifier, LinearClassifier, wilson_interval
from .distributions import Gaussian, RngStream, ToyFeatureBlock, sample_conditional
from .scalar import QLike, as_exponent, dual_exponent, lq_norm, std_normal_cdf, std_normal_pdf


@dataclass(frozen=True)
class ThreatModel:
    """l_q ball (``q`` set) or geodesic ball on a sphere of ``radius``."""

    eps: float
    q: Optional[QLike] = math.inf
    radius: Optional[float] = None

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.radius is not None:
            object.__setattr__(self, "q", None)
        else:
            object.__setattr__(self, "q", as_exponent(self.q))

    @property
    def geodesic(self) -> bool:
        return self.radius is not None


@dataclass(frozen=True)
class PgdConfig:
    steps: int = 40
    step_fraction: float = 2.5  # step size = step_fraction * eps / steps
    restarts: int = 1


def _cond_label(cond) -> int:
    return cond.y if isinstance(cond, ToyFeatureBlock) else cond.label


def _gaussian_params(h: LinearClassifier, cond):
    if isinstance(cond, Gaussian):
        return cond.mean, cond.scales
    if isinstance(cond, ToyFeatureBlock) and h.w[0] == 0.0:
        m = np.full(cond.p, cond.eta * cond.y)
        s = np.ones(cond.p)
        return m, s
    raise TypeError(f"closed form needs a Gaussian conditional, got {type(cond).__name__}")


# -- linear geometry -----------------------------------------------------------

def linear_margin_distance(h: LinearClassifier, x, q: QLike, label=None) -> np.ndarray:
    """l_q distance from x to the error set of ``label`` (positive label by default)."""
    label = h.positive_label if label is None else label
    signed = h.label_sign(label) * h.decision(x)
    return np.maximum(signed, 0.0) / lq_norm(h.w, dual_exponent(q))


def linear_optimal_attack(h: LinearClassifier, x, y, eps: float) -> np.ndarray:
    """Worst-case l_inf perturbation: move every coordinate by eps against the label."""
    x = np.asarray(x, dtype=float)
    ysign = h.label_sign(y)
    return x - eps * np.multiply.outer(ysign, np.sign(h.w))


def _linear_robust(h: LinearClassifier, x, label, eps: float, q) -> np.ndarray:
    s = h.decision(x)
    shift = eps * lq_norm(h.w, dual_exponent(q))
    if label == h.positive_label:
        return s - shift > 0
    return s + shift <= 0


def linear_robust_acc_closed_form(h: LinearClassifier, cond, eps: float, q: QLike, label=None) -> float:
    m, s = _gaussian_params(h, cond)
    label = _cond_label(cond) if label is None else label
    a = float(h.label_sign(label)) * (h.w @ m + h.b)
    sd = float(np.linalg.norm(h.w * s))
    return std_normal_cdf((a - eps * lq_norm(h.w, dual_exponent(q))) / sd)


def linear_mean_distance_closed_form(h: LinearClassifier, cond, q: QLike, label=None) -> float:
    """E[(a + sd Z)_+] / ||w||_{q*} = (a Phi(a/sd) + sd phi(a/sd)) / ||w||_{q*}."""
    m, s = _gaussian_params(h, cond)
    label = _cond_label(cond) if label is None else label
    a = float(h.label_sign(label)) * (h.w @ m + h.b)
    sd = float(np.linalg.norm(h.w * s))
    return (a * std_normal_cdf(a / sd) + sd * std_normal_pdf(a / sd)) / lq_norm(h.w, dual_exponent(q))


def geodesic_distance_sphere(x, x2, r: float, atol: float = 1e-9):
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    for v in (x, x2):
        if np.any(np.abs(np.linalg.norm(v, axis=-1) - r) > atol * max(1.0, r)):
            raise ValueError("points must lie on the sphere of radius r")
    cos = np.clip(np.sum(x * x2, axis=-1) / (r * r), -1.0, 1.0)
    out = r * np.arccos(cos)
    return float(out) if np.ndim(out) == 0 else out


# -- PGD -------------------------------------------------------------------------

def pgd_linf(h, x, y, eps, steps: int = 40, step_size=None, rng: Optional[RngStream] = None,
             restarts: int = 0, box=None, sample_index=None):
    """Projected sign-gradient ascent on the classifier loss inside an l_inf ball.

    ``eps`` may be a scalar or a per-sample array. With ``restarts = 0`` a
    single run starts at x; otherwise there are ``restarts`` runs, each from
    a uniform point of the ball drawn from ``rng`` at the sample's absolute
    index (``sample_index``, default 0..n-1), so nested tolerance grids reuse
    the same noise.
    Returns ``(found, x_adv)``; ``x_adv`` is the first misclassified iterate
    where found, the last iterate otherwise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y))
    n = x.shape[0]
    if steps < 1:
        raise ValueError("steps must be >= 1")
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (n,)).copy()
    if np.any(eps < 0):
        raise ValueError("eps must be nonnegative")
    alpha = 2.5 * eps / steps if step_size is None else np.broadcast_to(np.asarray(step_size, float), (n,))
    if restarts and rng is None:
        raise ValueError("random restarts need an rng stream")
    lo, hi = x - eps[:, None], x + eps[:, None]
    if box is not None:
        lo, hi = np.maximum(lo, box[0]), np.minimum(hi, box[1])

    sample_index = np.arange(n) if sample_index is None else np.asarray(sample_index)
    found = np.asarray(h.predict(x)) != y
    x_adv = x.copy()
    fused = getattr(h, "predict_and_input_gradient", None)
    for run in (range(1, restarts + 1) if restarts else (0,)):
        active = np.flatnonzero(~found)
        if active.size == 0:
            break
        cur = x[active].copy()
        if run > 0:
            first = int(sample_index.min())
            u = rng.child(run).uniforms(int(sample_index.max()) + 1 - first, x.shape[1], first)
            u = u[sample_index[active] - first]
            cur = np.clip(cur + (2.0 * u - 1.0) * eps[active, None], lo[active], hi[active])
        for t in range(steps + 1):
            if fused is not None and t < steps:
                pred, g = fused(cur, y[active])
            else:
                pred, g = h.predict(cur), None
            hit = np.asarray(pred) != y[active]
            if np.any(hit):
                found[active[hit]] = True
                x_adv[active[hit]] = cur[hit]
                keep = ~hit
                active, cur = active[keep], cur[keep]
                g = g[keep] if g is not None else None
                if active.size == 0:
                    break
            if t == steps:
                break
            if g is None:
                g = h.input_gradient(cur, y[active])
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite input gradient during PGD")
            cur = np.clip(cur + alpha[active, None] * np.sign(g), lo[active], hi[active])
        if active.size:
            x_adv[active] = cur
    return found, x_adv


# -- empirical estimates ----------------------------------------------------------

def _attack_stream(rng: RngStream) -> RngStream:
    return rng.child(0xA77AC4)


def _robust_mask(h, x, k, threat: ThreatModel, rng: RngStream, attack: PgdConfig, box):
    correct = np.asarray(h.predict(x)) == k
    if threat.eps == 0:
        return correct
    if isinstance(h, ConstantClassifier):
        return correct
    if isinstance(h, LinearClassifier) and not threat.geodesic:
        return _linear_robust(h, x, k, threat.eps, threat.q)
    if isinstance(h, CapClassifier) and threat.geodesic:
        return correct & (h.geodesic_distance_to_error(x, k) > threat.eps)
    if threat.geodesic or not threat.q.is_inf:
        raise ValueError("attack-based estimates support the l_inf threat model only")
    found, _ = pgd_linf(h, x, np.full(x.shape[0], k), threat.eps, attack.steps,
                        attack.step_fraction * threat.eps / attack.steps, _attack_stream(rng),
                        attack.restarts, box)
    return ~found


def empirical_adv_accuracy(h, cond, k, threat: ThreatModel, n: int, rng: RngStream,
                           attack: PgdConfig = PgdConfig(), box=None):
    """Fraction of n class-k samples that survive the threat, with a Wilson interval."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = sample_conditional(cond, rng, n)
    ok = int(np.count_nonzero(_robust_mask(h, x, k, threat, rng, attack, box)))
    return ok / n, wilson_interval(ok, n)


@dataclass
class CurvePoint:
    epsilon: float
    n: int
    acc_hat: float
    ci_lo: float
    ci_hi: float
    bound: float
    below_bound: bool


@dataclass
class RobustnessCurve:
    points: List[CurvePoint]
    err_std: float
    eps_crit: float
    exact: bool = False
    label: Optional[int] = None
    notes: List[str] = field(default_factory=list)

    HEADER = "epsilon,n,acc_hat,ci_lo,ci_hi,bound,err_std,eps_crit"

    @property
    def eps(self) -> np.ndarray:
        return np.array([pt.epsilon for pt in self.points])

    @property
    def acc(self) -> np.ndarray:
        return np.array([pt.acc_hat for pt in self.points])

    def to_csv(self) -> str:
        rows = [self.HEADER]
        for pt in self.points:
            rows.append(",".join([
                f"{pt.epsilon:.10g}", str(pt.n), f"{pt.acc_hat:.10g}", f"{pt.ci_lo:.10g}",
                f"{pt.ci_hi:.10g}", f"{pt.bound:.10g}", f"{self.err_std:.10g}", f"{self.eps_crit:.10g}"]))
        return "\n".join(rows) + "\n"


def robustness_curve_from_samples(h, x, k, eps_grid: Sequence[float], sigma: Optional[float], q: QLike = math.inf,
                                  p: Optional[int] = None, rng: Optional[RngStream] = None,
                                  attack: PgdConfig = PgdConfig(), box=None) -> RobustnessCurve:
    """Sweep an increasing tolerance grid over fixed class-k samples.

    A sample fooled at some tolerance stays fooled at every larger one (the
    balls are nested), so attacks only run on survivors and the curve is
    non-increasing by construction. ``k`` may be one class or a per-sample
    label array (pooled curve, exact classifiers excluded).
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b <= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("tolerance grid must be strictly increasing")
    q = as_exponent(q)
    n = x.shape[0]
    p = x.shape[1] if p is None else p
    labels = np.broadcast_to(np.asarray(k), (n,))
    correct = np.asarray(h.predict(x)) == labels
    err = 1.0 - correct.mean()
    exact = isinstance(h, (LinearClassifier, ConstantClassifier))
    if sigma is None:
        # no known T2 constant (real data): report the curve without a bound
        eps_crit = math.nan
        bvals = np.full(len(eps_grid), math.nan)
    elif err > 0:
        eps_crit = bounds.critical_epsilon_q(err, sigma, p, q)
        bvals = bounds.acc_bound_curve(1.0 - err, sigma, eps_grid, p, q)
    else:
        eps_crit = math.inf
        bvals = np.ones(len(eps_grid))
    fooled = ~correct
    rng = rng if rng is not None else RngStream(0)
    points = []
    for eps, bnd in zip(eps_grid, bvals):
        alive = np.flatnonzero(~fooled)
        if alive.size and eps > 0:
            if exact:
                survive = _robust_mask(h, x[alive], k, ThreatModel(eps, q), rng, attack, box)
                fooled[alive[~survive]] = True
            else:
                if not q.is_inf:
                    raise ValueError("PGD sweeps support l_inf only")
                found, _ = pgd_linf(h, x[alive], labels[alive], eps, attack.steps,
                                    attack.step_fraction * eps / attack.steps, _attack_stream(rng),
                                    attack.restarts, box, sample_index=alive)
                fooled[alive[found]] = True
        ok = int(n - np.count_nonzero(fooled))
        lo, hi = wilson_interval(ok, n)
        acc = ok / n
        points.append(CurvePoint(eps, n, acc, lo, hi, float(bnd), not acc > bnd))
    return RobustnessCurve(points, float(err), float(eps_crit), exact=exact, label=k if np.ndim(k) == 0 else None)


def robustness_curve(h, cond, k, eps_grid, n: int, rng: RngStream, q: QLike = math.inf,
                     attack: PgdConfig = PgdConfig(), box=None) -> RobustnessCurve:
    x = sample_conditional(cond, rng, n)
    return robustness_curve_from_samples(h, x, k, eps_grid, cond.sigma, q, cond.dim, rng, attack, box)


@dataclass
class DistanceEstimate:
    mean: float
    ci: tuple
    censored: int = 0
    upper_estimate: bool = False
    distances: Optional[np.ndarray] = None


def _mean_ci(d: np.ndarray):
    m = float(d.mean())
    half = 1.96 * float(d.std(ddof=1)) / math.sqrt(d.size) if d.size > 1 else math.inf
    return m, (m - half, m + half)


def distances_to_error(h, x, k, q: QLike = 2, eps_max: Optional[float] = None, tol: float = 1e-3,
                       rng: Optional[RngStream] = None, attack: PgdConfig = PgdConfig(), box=None):
    """Per-sample distance to the error set of class k and the number of censored samples."""
    if isinstance(h, LinearClassifier):
        return linear_margin_distance(h, x, q, k), 0
    if isinstance(h, CapClassifier):
        return h.geodesic_distance_to_error(x, k), 0
    if not as_exponent(q).is_inf:
        raise ValueError("attack-based distances support l_inf only")
    if eps_max is None:
        raise ValueError("bisection needs eps_max")
    rng = rng if rng is not None else RngStream(0)
    n = x.shape[0]
    labels = np.full(n, k)
    wrong = np.asarray(h.predict(x)) != k
    found_max, _ = pgd_linf(h, x, labels, eps_max, attack.steps, None, _attack_stream(rng), attack.restarts, box)
    lo = np.zeros(n)
    hi = np.full(n, float(eps_max))
    live = found_max & ~wrong
    while True:
        idx = np.flatnonzero(live & (hi - lo > tol))
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        found, _ = pgd_linf(h, x[idx], labels[idx], mid, attack.steps, None, _attack_stream(rng),
                            attack.restarts, box, sample_index=idx)
        hi[idx[found]] = mid[found]
        lo[idx[~found]] = mid[~found]
    d = np.where(wrong, 0.0, hi)
    return d, int(np.count_nonzero(~found_max & ~wrong))


def empirical_distance_to_error(h, cond, k, q: QLike, n: int, rng: RngStream, eps_max: Optional[float] = None,
                                tol: float = 1e-3, attack: PgdConfig = PgdConfig(), box=None) -> DistanceEstimate:
    """Monte-Carlo mean distance from class-k samples to the error set.

    Exact for linear and cap classifiers. Otherwise each sample's distance is
    bisected on PGD success, which over-estimates it; samples that survive
    ``eps_max`` are recorded at ``eps_max`` and counted as censored.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = sample_conditional(cond, rng, n)
    d, censored = distances_to_error(h, x, k, q, eps_max, tol, rng, attack, box)
    m, ci = _mean_ci(d)
    upper = not isinstance(h, (LinearClassifier, CapClassifier))
    return DistanceEstimate(m, ci, censored, upper, d)
