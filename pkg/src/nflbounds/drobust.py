"""Wasserstein-1 distributional robustness on empirical distributions.

An instance is a list of atoms (mass, distance to the error set of its own
label). Mass never moves across labels, so only label-local distances matter.
The worst-case error under a transport budget eps is a fractional knapsack
(``greedy_primal``); its Lagrangian dual is the convex piecewise-linear
function minimised exactly by ``solve_dual``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bounds
from .attacks import distances_to_error
from .distributions import RngStream, sample_conditional
from .scalar import QLike, as_exponent


@dataclass(frozen=True)
class DrInstance:
    masses: np.ndarray
    distances: np.ndarray
    eps: float

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        d = np.asarray(self.distances, dtype=float)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "distances", d)
        if m.shape != d.shape or m.ndim != 1:
            raise ValueError("masses and distances must be 1-D arrays of equal length")
        if np.any(m <= 0) or m.sum() > 1 + 1e-12:
            raise ValueError("masses must be positive with total at most 1")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite and nonnegative")
        if self.eps < 0:
            raise ValueError("budget must be nonnegative")

    def with_eps(self, eps: float) -> "DrInstance":
        return DrInstance(self.masses, self.distances, eps)

    @property
    def total(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True)
class DrSolution:
    lambda_star: float
    dual_value: float
    primal_value: float

    @property
    def duality_gap(self) -> float:
        return self.dual_value - self.primal_value


def dual_objective(lam: float, inst: DrInstance) -> float:
    """sum_i p_i (1 - lam d_i)_+ + lam eps."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if math.isinf(lam):
        return math.inf if inst.eps > 0 else float(inst.masses[inst.distances == 0].sum())
    return float(np.sum(inst.masses * np.maximum(1.0 - lam * inst.distances, 0.0)) + lam * inst.eps)


def _breakpoint_values(inst: DrInstance):
    """Candidate lambdas {0} u {1/d_i} and the dual objective at each."""
    order = np.argsort(inst.distances, kind="stable")
    d = inst.distances[order]
    m = inst.masses[order]
    pos = d > 0
    dp, mp = d[pos], m[pos]
    zero_mass = float(m[~pos].sum())
    # at lam = 1/d_j only atoms with d_i < d_j contribute; equal d_i contribute 0
    cm = np.concatenate([[0.0], np.cumsum(mp)])
    cmd = np.concatenate([[0.0], np.cumsum(mp * dp)])
    uniq, first = np.unique(dp, return_index=True)
    with np.errstate(over="ignore", divide="ignore"):  # subnormal distances give lambda = inf
        vals = zero_mass + cm[first] + (inst.eps - cmd[first]) / uniq
        lams = np.concatenate([[0.0], 1.0 / uniq])
    vals = np.concatenate([[inst.total], vals])
    return lams, vals


def solve_dual(inst: DrInstance) -> DrSolution:
    """Exact minimiser over breakpoints; ties go to the smallest lambda."""
    lams, vals = _breakpoint_values(inst)
    best = vals.min()
    tied = np.flatnonzero(vals <= best + 1e-12 * max(1.0, abs(best)))
    j = tied[np.argmin(lams[tied])]
    return DrSolution(float(lams[j]), float(min(max(vals[j], 0.0), 1.0)), greedy_primal(inst))


def greedy_primal(inst: DrInstance) -> float:
    """Largest error mass reachable with transport cost at most eps.

    Cheapest atoms (smallest distance) are moved first; the cutoff atom moves
    fractionally. Optimal because gain per unit mass is 1 and cost is d_i.
    """
    order = np.argsort(inst.distances, kind="stable")
    d = inst.distances[order]
    m = inst.masses[order]
    step = m * d
    # a positive cost must not underflow to a free move
    step[(d > 0) & (step == 0)] = np.finfo(float).smallest_subnormal
    cost = np.cumsum(step)
    full = int(np.searchsorted(cost, inst.eps, side="right"))
    moved = float(m[:full].sum())
    if full < d.size:
        spent = float(cost[full - 1]) if full else 0.0
        moved += float(min(m[full], (inst.eps - spent) / d[full]))
    return min(moved, 1.0)


def adversarial_error(inst: DrInstance) -> float:
    """Mass within distance eps of the error set (the pointwise adversarial error)."""
    return float(inst.masses[inst.distances <= inst.eps].sum())


def dual_bracket(inst: DrInstance, lam: float):
    """(P(d < 1/lam), P(d <= 1/lam)), which sandwich the dual value at an interior optimum."""
    if lam <= 0:
        raise ValueError("bracket needs lambda > 0")
    rad = 1.0 / lam
    slack = 4 * np.finfo(float).eps * rad  # 1 / (1 / d) may miss d by an ulp
    d, m = inst.distances, inst.masses
    return float(m[d < rad - slack].sum()), float(m[d <= rad + slack].sum())


@dataclass
class DrRow:
    eps: float
    err_adv: float
    err_dr: float
    bound: float
    lambda_star: float


DR_HEADER = "eps,err_adv,err_dr,bound,lambda_star"


def dr_rows_from_distances(d: np.ndarray, eps_grid: Sequence[float], sigma: float, p: int,
                           q: QLike = 2, masses: Optional[np.ndarray] = None):
    """Adversarial and distributional error per budget, with the error-side lower bound.

    ``bound`` is 1 - (accuracy bound): both errors must sit above it once eps
    passes the critical tolerance. Below it the trivial value err is reported.
    """
    d = np.asarray(d, dtype=float)
    masses = np.full(d.size, 1.0 / d.size) if masses is None else masses
    err = float(masses[d == 0].sum())
    rows = []
    if err > 0:
        bvals = 1.0 - bounds.acc_bound_curve(1.0 - err, sigma, eps_grid, p, as_exponent(q))
    else:
        bvals = np.zeros(len(eps_grid))
    for eps, b in zip(eps_grid, bvals):
        inst = DrInstance(masses, d, float(eps))
        sol = solve_dual(inst)
        rows.append(DrRow(float(eps), adversarial_error(inst), sol.primal_value, float(b), sol.lambda_star))
    return rows


def dr_error_curve(h, cond, k, eps_grid: Sequence[float], n: int, q: QLike, rng: RngStream):
    """Empirical distributional vs adversarial error of a classifier with exact distances."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = sample_conditional(cond, rng, n)
    d, censored = distances_to_error(h, x, k, q)
    if censored:
        raise ValueError("distributional curve needs exact distances; got censored samples")
    return dr_rows_from_distances(d, eps_grid, cond.sigma, cond.dim, q)


def rows_to_csv(rows) -> str:
    out = [DR_HEADER]
    for r in rows:
        out.append(f"{r.eps:.10g},{r.err_adv:.10g},{r.err_dr:.10g},{r.bound:.10g},{r.lambda_star:.10g}")
    return "\n".join(out) + "\n"
