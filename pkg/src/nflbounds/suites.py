"""Self-checking invariant suites shared by ``nflbounds verify`` and the tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from . import blowup, bounds, drobust
from .attacks import linear_mean_distance_closed_form, linear_robust_acc_closed_form
from .classifiers import LinearClassifier, MlpClassifier
from .distributions import DiagonalGaussian, IsotropicGaussian
from .scalar import as_exponent, std_normal_cdf, std_normal_quantile

TOL = 1e-12


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    details: List[str] = field(default_factory=list)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.summary}"


def _gen(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


# -- concentration lemma -----------------------------------------------------------

def blowup_suite(points: int = 50, sigma_scale: float = 1.0, tol: float = TOL) -> SuiteResult:
    rows, bad = blowup.run_lemma_matrix(points, sigma_scale, tol)
    slack = min(r.slack for r in rows)
    details = [f"{v.case_id} eps={v.eps:.6g} exact={v.exact:.6g} bound={v.bound:.6g}" for v in bad[:10]]
    return SuiteResult("blowup", not bad, f"{len(rows)} points, {len(bad)} violations, min slack {slack:.3g}", details)


# -- linear classifiers on Gaussians ---------------------------------------------

@dataclass
class LinearCase:
    h: LinearClassifier
    cond: object
    err: float
    family: str


def random_linear_case(family: str, sigma: float, p: int, gen: np.random.Generator) -> LinearCase:
    """Random direction and mean; the offset is set so that err(h|k) is uniform in [0.01, 0.45]."""
    w = gen.standard_normal(p)
    mean = sigma * gen.standard_normal(p)
    if family == "isotropic":
        cond = IsotropicGaussian(mean, sigma)
    else:
        scales = sigma * gen.uniform(0.1, 1.0, p)
        scales[gen.integers(p)] = sigma
        cond = DiagonalGaussian(mean, scales)
    target = gen.uniform(0.01, 0.45)
    sd = float(np.linalg.norm(w * cond.scales))
    b = sd * std_normal_quantile(1.0 - target) - float(w @ mean)
    h = LinearClassifier(w, b)
    err = 1.0 - std_normal_cdf((w @ mean + b) / sd)
    return LinearCase(h, cond, float(err), family)


@dataclass
class DominanceTally:
    checked: int = 0
    bound: int = 0
    collapse: int = 0
    distance: int = 0
    worst: str = ""
    worst_excess: float = 0.0

    @property
    def violations(self) -> int:
        return self.bound + self.collapse + self.distance

    def note(self, excess: float, text: str):
        if excess > self.worst_excess:
            self.worst_excess, self.worst = excess, text


def dominance_checks(case: LinearCase, q, sigma_scale: float = 1.0, grid_points: int = 20,
                     tally: DominanceTally = None) -> DominanceTally:
    """Exact robust accuracy and mean distance against the theorem's bounds for one case.

    ``sigma_scale`` multiplies the assumed noise scale (fault injection).
    """
    tally = tally if tally is not None else DominanceTally()
    q = as_exponent(q)
    p = case.cond.dim
    sigma = case.cond.sigma * sigma_scale
    crit = bounds.critical_epsilon_q(case.err, sigma, p, q)
    tag = f"{case.family} sigma={case.cond.sigma:g} p={p} q={q} err={case.err:.4f}"
    for eps in crit * np.linspace(1.0, 4.0, grid_points):
        acc = linear_robust_acc_closed_form(case.h, case.cond, eps, q)
        bnd = bounds.adv_acc_bound_lq(1.0 - case.err, sigma, p, q, eps)
        tally.checked += 1
        if acc > bnd + TOL:
            tally.bound += 1
            tally.note(acc - bnd, f"{tag} eps={eps:.4g} acc={acc:.4g} > bound={bnd:.4g}")
        if eps >= 2.0 * crit and acc > case.err + TOL:
            tally.collapse += 1
            tally.note(acc - case.err, f"{tag} eps={eps:.4g} acc={acc:.4g} > err")
    dist = linear_mean_distance_closed_form(case.h, case.cond, q)
    dbound = bounds.distance_bound_lq(case.err, sigma, p, q)
    if dist > dbound + TOL:
        tally.distance += 1
        tally.note(dist - dbound, f"{tag} d={dist:.4g} > distance bound {dbound:.4g}")
    return tally


DOMINANCE_SIGMAS = (0.5, 1.0, 2.0)
DOMINANCE_DIMS = (10, 100, 1000)
DOMINANCE_QS = (1, 2, math.inf)


def dominance_tallies(n_classifiers: int = 50, sigma_scale: float = 1.0, qs: Sequence = DOMINANCE_QS,
                      sigmas=DOMINANCE_SIGMAS, dims=DOMINANCE_DIMS, seed: int = 0) -> Dict[str, DominanceTally]:
    """One tally per exponent q over both Gaussian families, all sigmas and dimensions."""
    tallies = {str(as_exponent(q)): DominanceTally() for q in qs}
    for fi, family in enumerate(("isotropic", "diagonal")):
        for si, sigma in enumerate(sigmas):
            for p in dims:
                for i in range(n_classifiers):
                    case = random_linear_case(family, sigma, p, _gen(seed, fi, si, p, i))
                    for q in qs:
                        dominance_checks(case, q, sigma_scale, tally=tallies[str(as_exponent(q))])
    return tallies


def dominance_suite(n_classifiers: int = 50, sigma_scale: float = 1.0, qs: Sequence = DOMINANCE_QS,
                    seed: int = 0) -> SuiteResult:
    tallies = dominance_tallies(n_classifiers, sigma_scale, qs, seed=seed)
    parts, details = [], []
    for q, t in tallies.items():
        parts.append(f"q={q}: {t.violations}/{t.checked}")
        if t.violations:
            details.append(f"q={q} worst: {t.worst}")
    ok = all(t.violations == 0 for t in tallies.values())
    return SuiteResult("dominance", ok, "violations " + ", ".join(parts), details)


# -- distributional robustness ---------------------------------------------------

def random_dr_instance(gen: np.random.Generator, max_atoms: int = 1000) -> drobust.DrInstance:
    """Random simplex masses (total in [0.5, 1]), log-uniform distances on [1e-3, 1e3]
    with some zero (misclassified) atoms and ties, and a budget on the scale of the
    full transport cost."""
    m = int(gen.integers(1, max_atoms + 1))
    masses = gen.dirichlet(np.ones(m)) * gen.uniform(0.5, 1.0)
    masses = np.maximum(masses, 1e-300)
    d = 10.0 ** gen.uniform(-3.0, 3.0, m)
    d[gen.random(m) < 0.1] = 0.0
    if m > 2 and gen.random() < 0.3:
        d[gen.integers(m, size=m // 3 + 1)] = d[0]
    eps = float(gen.uniform(0.0, 1.2) * (masses @ d))
    return drobust.DrInstance(masses / max(1.0, masses.sum()), d, eps)


WORKED_INSTANCE = drobust.DrInstance(np.array([0.5, 0.5]), np.array([1.0, 3.0]), 1.0)


def drobust_suite(n_instances: int = 10_000, seed: int = 0, tol: float = 1e-9) -> SuiteResult:
    gap_bad = order_bad = 0
    worst = 0.0
    for i in range(n_instances):
        inst = random_dr_instance(_gen(seed, 7, i))
        sol = drobust.solve_dual(inst)
        gap = abs(sol.duality_gap)
        worst = max(worst, gap)
        gap_bad += gap > tol
        order_bad += sol.primal_value < drobust.adversarial_error(inst) - tol
    w = drobust.solve_dual(WORKED_INSTANCE)
    worked_ok = abs(w.dual_value - 2 / 3) <= tol and abs(w.primal_value - 2 / 3) <= tol
    ok = gap_bad == 0 and order_bad == 0 and worked_ok
    summary = (f"{n_instances} instances, max |dual - primal| {worst:.2g}, {gap_bad} gap failures, "
               f"{order_bad} order failures, worked instance {w.dual_value:.12g}/{w.primal_value:.12g}")
    return SuiteResult("drobust", ok, summary)


# -- backprop ---------------------------------------------------------------------

def gradcheck(h: MlpClassifier, x: np.ndarray, labels: np.ndarray, step: float = 1e-5):
    """Relative error of the analytic input gradient against central differences, per point."""
    g = h.input_gradient(x, labels)
    fd = np.empty_like(g)
    rows = np.arange(x.shape[0])

    def per_sample_loss(z):
        # log1p form keeps relative accuracy when the loss is near zero (confident points),
        # otherwise rounding in logsumexp swamps tiny gradients
        t = h.scores(z)
        t = t - t[rows, labels][:, None]
        m = t.max(axis=1)
        e = np.exp(t - m[:, None])
        e[rows, labels] = 0.0
        return m + np.log1p(np.expm1(-m) + e.sum(axis=1))

    for j in range(x.shape[1]):
        xp, xm = x.copy(), x.copy()
        xp[:, j] += step
        xm[:, j] -= step
        fd[:, j] = (per_sample_loss(xp) - per_sample_loss(xm)) / (2 * step)
    return np.linalg.norm(g - fd, axis=1) / np.maximum(np.linalg.norm(g, axis=1), 1e-12)


def param_gradcheck(h: MlpClassifier, x: np.ndarray, labels: np.ndarray, gen: np.random.Generator,
                    step: float = 1e-5) -> float:
    """Relative error of the parameter gradient along a random direction (central differences)."""
    _, dws, dbs, _ = h.loss_and_grads(x, labels)
    vw = [gen.standard_normal(w.shape) for w in h.weights]
    vb = [gen.standard_normal(b.shape) for b in h.biases]
    analytic = sum(float((d * v).sum()) for d, v in zip(dws + dbs, vw + vb))

    def shifted(t):
        net = h.copy()
        for w, v in zip(net.weights + net.biases, vw + vb):
            w += t * v
        return net.loss_and_grads(x, labels)[0]

    numeric = (shifted(step) - shifted(-step)) / (2 * step)
    return abs(analytic - numeric) / max(abs(analytic), 1e-12)


def gradcheck_suite(n_points: int = 1000, seed: int = 0, tol: float = 1e-5) -> SuiteResult:
    gen = _gen(seed, 11)
    h = MlpClassifier.init([12, 16, 10, 4], gen)
    for b in h.biases:
        b += 0.1 * gen.standard_normal(b.shape)
    x = gen.standard_normal((n_points, 12))
    labels = gen.integers(0, 4, n_points)
    rel = gradcheck(h, x, labels)
    prel = max(param_gradcheck(h, x[i:i + 50], labels[i:i + 50], gen) for i in range(0, n_points, 50))
    ok = bool(rel.max() < tol and prel < tol)
    return SuiteResult("gradcheck", ok, f"{n_points} points, max input rel err {rel.max():.2g}, "
                                        f"max param rel err {prel:.2g}")


SUITES = ("blowup", "dominance", "drobust", "gradcheck")


def run_suites(names: Sequence[str] = SUITES, sigma_scale: float = 1.0, qs: Sequence = DOMINANCE_QS,
               seed: int = 0) -> List[SuiteResult]:
    out = []
    for name in names:
        if name == "blowup":
            out.append(blowup_suite(sigma_scale=sigma_scale))
        elif name == "dominance":
            out.append(dominance_suite(sigma_scale=sigma_scale, qs=qs, seed=seed))
        elif name == "drobust":
            out.append(drobust_suite(seed=seed))
        elif name == "gradcheck":
            out.append(gradcheck_suite(seed=seed))
        else:
            raise ValueError(f"unknown suite {name!r}")
    return out
