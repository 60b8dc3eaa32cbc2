"""Command-line driver: bound tables, toy-problem checks, simulation and MNIST
robustness curves, blowup and distributional-robustness reports, and the
self-verification suites.

Exit codes: 0 success, 1 experiment or invariant failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import blowup, bounds, drobust, suites
from .attacks import PgdConfig, robustness_curve_from_samples
from .classifiers import (LinearClassifier, TrainConfig, TrainingDiverged, save_checkpoint, train_mlp,
                          wilson_interval)
from .distributions import IsotropicGaussian, RngStream, sample_toy, sample_toy_conditional
from .idx import IdxError, load_dataset, load_mnist_dir
from .scalar import DomainError, LqExponent, std_normal_cdf

log = logging.getLogger("nflbounds")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- configuration ---------------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed: int = 0
    p: int = 1000
    eta: Optional[float] = None  # None: sqrt(2 ln(1/delta) / (p - 1))
    delta: float = 0.01
    sigma: Optional[float] = 1.0
    n_train: int = 10_000
    n_test: int = 10_000
    eps_min: float = 0.0
    eps_max: Optional[float] = None  # None: 4 * eps_inf(h|k), measured after training
    eps_steps: int = 40
    q: str = "inf"
    k: int = 0
    attack_steps: int = 40
    step_fraction: float = 2.5
    restarts: int = 1
    hidden: Tuple[int, ...] = (200, 100)
    lr: float = 0.01
    epochs: int = 30
    batch: int = 128
    momentum: float = 0.9
    classifier: str = "linear"
    data_dir: Optional[str] = None
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    manifest: Optional[str] = None

    def validate(self):
        for name in ("p", "n_train", "n_test", "eps_steps", "attack_steps", "epochs", "batch"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if self.restarts < 0:
            raise UsageError("restarts must be >= 0")
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise UsageError("hidden widths must be positive")
        if self.eps_min < 0 or (self.eps_max is not None and self.eps_max < self.eps_min):
            raise UsageError("need 0 <= eps_min <= eps_max")
        if self.eps_max is not None and self.eps_steps > 1 and self.eps_max == self.eps_min:
            raise UsageError("eps grid must be increasing")
        if self.sigma is not None and not self.sigma > 0:
            raise UsageError("sigma must be positive")
        try:
            LqExponent.parse(self.q)
        except (ValueError, DomainError) as exc:
            raise UsageError(f"bad q: {exc}") from None
        return self

    def eps_grid(self, eps_max: Optional[float] = None) -> np.ndarray:
        hi = self.eps_max if eps_max is None else eps_max
        if self.eps_steps == 1:
            return np.array([self.eps_min])
        return np.linspace(self.eps_min, hi, self.eps_steps)

    def pgd(self) -> PgdConfig:
        return PgdConfig(self.attack_steps, self.step_fraction, self.restarts)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch, seed=self.seed,
                           momentum=self.momentum)


MNIST_DEFAULTS = dict(hidden=(256,), lr=0.1, epochs=40, batch=32, eps_max=0.5, eps_steps=11,
                      sigma=None, data_dir="data/mnist5k")

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, text: str):
    if name not in _FIELDS:
        raise UsageError(f"unknown config key {name!r}")
    text = text.strip()
    if name == "hidden":
        try:
            return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
        except ValueError:
            raise UsageError(f"hidden must be comma-separated integers, got {text!r}") from None
    if text.lower() in ("none", ""):
        return None
    kind = _FIELDS[name].type
    try:
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise UsageError(f"{name}: cannot parse {text!r}") from None
    return text


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def build_config(args, defaults: Optional[dict] = None) -> ExperimentConfig:
    """Dataclass defaults, then command defaults, then the config file, then flags."""
    values = dict(defaults or {})
    if getattr(args, "config", None):
        try:
            values.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    for key, val in vars(args).items():
        if key in _FIELDS and val is not None:
            values[key] = _coerce(key, val) if isinstance(val, str) else val
    return ExperimentConfig(**values).validate()


def _add_config_flags(ap: argparse.ArgumentParser):
    ap.add_argument("--config", help="key = value config file")
    for name, f in _FIELDS.items():
        flag = "--" + name.replace("_", "-")
        ap.add_argument(flag, dest=name, default=None, type=str, metavar=name.upper())
    ap.add_argument("--out", help="CSV output path (default: stdout)")


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------------

def cmd_bounds(args) -> int:
    q = None
    if args.q is not None:
        q = LqExponent.parse(args.q)
        if args.p is None and q.value != 2.0:
            raise UsageError("an l_q bound with q != 2 needs --p")
    p = args.p if args.p is not None else 1
    try:
        if q is None:
            crit = bounds.critical_epsilon(args.err, args.sigma)
            dist = bounds.distance_bound_geodesic(args.err, args.sigma)
        else:
            crit = bounds.critical_epsilon_q(args.err, args.sigma, p, q)
            dist = bounds.distance_bound_lq(args.err, args.sigma, p, q)
    except bounds.VacuousBoundError as exc:
        print(f"error: vacuous bound: {exc}", file=sys.stderr)
        return EXIT_USAGE
    grid = np.linspace(crit, args.eps_max if args.eps_max is not None else 3 * crit + 1e-300, args.eps_steps)
    curve = bounds.acc_bound_curve(1.0 - args.err, args.sigma, grid, p, q)
    print(f"eps_crit\t{crit:.6f}")
    print(f"dist_bound\t{dist:.6f}")
    print("epsilon,acc_bound")
    for e, b in zip(grid, curve):
        print(f"{e:.6f},{b:.6f}")
    return EXIT_OK


def cmd_toy(args) -> int:
    eta = args.eta if args.eta is not None else bounds.toy_eta_for_delta(args.p, args.delta)
    eps = args.eps if args.eps is not None else 2 * eta
    std = bounds.toy_std_acc(args.p, eta)
    print(f"p\t{args.p}")
    print(f"eta\t{eta:.6g}")
    print(f"std_acc\t{std.value:.6g}\t(claim >= {std.bound:.6g})")
    try:
        adv = bounds.toy_adv_acc(args.p, eta, eps)
        print(f"adv_acc@{eps:.6g}\t{adv.value:.6g}\t(claim <= {adv.bound:.6g})")
    except bounds.BelowThresholdError as exc:
        adv = None
        print(f"adv_acc@{eps:.6g}\tn/a\t({exc})")
    mi = bounds.toy_mutual_information(eta)
    print(f"mutual_info\t{mi:.6g}\t(<= eta^2 = {eta * eta:.6g})")
    if args.mc:
        x, y = sample_toy(args.p, eta, RngStream(args.seed), args.mc)
        w = np.r_[0.0, np.ones(args.p - 1)]
        margin = y * (x @ w)
        for name, ok in (("std_acc", margin > 0), ("adv_acc", margin - eps * (args.p - 1) > 0)):
            hits = int(ok.sum())
            lo, hi = wilson_interval(hits, args.mc)
            print(f"mc_{name}\t{hits / args.mc:.6g}\t[{lo:.6g}, {hi:.6g}]")
    failed = std.value < std.bound or (adv is not None and adv.value > adv.bound)
    return EXIT_FAIL if failed else EXIT_OK


def _toy_labels_to_classes(y):
    """Toy labels +1 / -1 become MLP classes 1 / 0."""
    return (np.asarray(y) > 0).astype(int)


def run_simulation(cfg: ExperimentConfig, checkpoint: Optional[str] = None):
    """Train on the toy problem and sweep l_inf PGD over class k. Returns the curve."""
    eta = cfg.eta if cfg.eta is not None else bounds.toy_eta_for_delta(cfg.p, cfg.delta)
    if cfg.k not in (0, 1):
        raise UsageError("toy classes are 0 (Y = -1) and 1 (Y = +1)")
    root = RngStream(cfg.seed)
    x, y = sample_toy(cfg.p, eta, root.child(1), cfg.n_train)
    t0 = time.time()
    h = train_mlp(x, _toy_labels_to_classes(y), cfg.train_config(), cfg.hidden, 2)
    log.info("trained %s in %.1fs, final loss %.4g", cfg.hidden, time.time() - t0, h.loss_trace[-1])
    if checkpoint:
        save_checkpoint(h, checkpoint)
    xt = sample_toy_conditional(cfg.p, eta, 1 if cfg.k == 1 else -1, root.child(2), cfg.n_test)
    q = LqExponent.parse(cfg.q)
    eps_max = cfg.eps_max
    if eps_max is None:
        err = float(np.mean(h.predict(xt) != cfg.k))
        # a perfect test split has no finite critical tolerance; one miss is assumed for the grid
        err = max(err, 1.0 / cfg.n_test)
        eps_max = 4.0 * bounds.critical_epsilon_q(err, cfg.sigma, cfg.p, q)
    grid = cfg.eps_grid(eps_max)
    return robustness_curve_from_samples(h, xt, cfg.k, grid, cfg.sigma, q, cfg.p, root.child(3), cfg.pgd())


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    try:
        curve = run_simulation(cfg, args.save_model)
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(curve.to_csv(), args.out)
    return EXIT_OK


def _load_mnist(cfg: ExperimentConfig):
    if cfg.train_images:
        paths = (cfg.train_images, cfg.train_labels, cfg.test_images, cfg.test_labels)
        if not all(paths):
            raise UsageError("explicit MNIST paths need train/test images and labels")
        return (load_dataset(paths[0], paths[1], "train", cfg.manifest),
                load_dataset(paths[2], paths[3], "test", cfg.manifest))
    return load_mnist_dir(cfg.data_dir, "train"), load_mnist_dir(cfg.data_dir, "test")


def run_mnist(cfg: ExperimentConfig, checkpoint: Optional[str] = None):
    train, test = _load_mnist(cfg)
    n_train = min(cfg.n_train, len(train))
    n_test = min(cfg.n_test, len(test))
    t0 = time.time()
    h = train_mlp(train.images[:n_train], train.labels[:n_train], cfg.train_config(), cfg.hidden, 10)
    log.info("trained %s in %.1fs", cfg.hidden, time.time() - t0)
    if checkpoint:
        save_checkpoint(h, checkpoint)
    grid = cfg.eps_grid()
    return robustness_curve_from_samples(h, test.images[:n_test], test.labels[:n_test], grid, cfg.sigma,
                                         "inf", test.images.shape[1], RngStream(cfg.seed).child(3),
                                         cfg.pgd(), box=(0.0, 1.0))


def cmd_mnist(args) -> int:
    cfg = build_config(args, MNIST_DEFAULTS)
    try:
        curve = run_mnist(cfg, args.save_model)
    except (IdxError, OSError) as exc:
        print(f"error: cannot load MNIST: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(curve.to_csv(), args.out)
    return EXIT_OK


def cmd_blowup(args) -> int:
    rows, bad = blowup.run_lemma_matrix(args.points, args.sigma_scale, args.tol)
    lines = ["case_id,eps,exact,bound,slack"]
    for v in rows if args.all_rows else bad:
        lines.append(f"{v.case_id},{v.eps:.10g},{v.exact:.10g},{v.bound:.10g},{v.slack:.10g}")
    _emit("\n".join(lines) + "\n", args.out)
    print(f"{len(rows)} points, {len(bad)} violations", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def drobust_rows(cfg: ExperimentConfig):
    """Isotropic Gaussian classes N(+-eta 1, sigma^2 I) under the averaging linear classifier."""
    eta = cfg.eta if cfg.eta is not None else bounds.toy_eta_for_delta(cfg.p, cfg.delta)
    sigma = 1.0 if cfg.sigma is None else cfg.sigma
    sign = 1.0 if cfg.k == 1 else -1.0
    h = LinearClassifier(np.full(cfg.p, 1.0 / cfg.p), 0.0, positive_label=1, negative_label=0)
    cond = IsotropicGaussian(np.full(cfg.p, sign * eta), sigma, label=cfg.k)
    q = LqExponent.parse(cfg.q)
    eps_max = cfg.eps_max
    if eps_max is None:
        a = eta * math.sqrt(cfg.p) / sigma
        err = max(std_normal_cdf(-a), 1.0 / cfg.n_test)
        eps_max = 4.0 * bounds.critical_epsilon_q(err, sigma, cfg.p, q)
    grid = cfg.eps_grid(eps_max)
    return drobust.dr_error_curve(h, cond, cfg.k, grid, cfg.n_test, q, RngStream(cfg.seed).child(4))


def cmd_drobust(args) -> int:
    cfg = build_config(args, dict(p=100, n_test=2000, sigma=1.0, q="2"))
    if cfg.classifier != "linear":
        print(f"error: distributional robustness needs exact distances; classifier {cfg.classifier!r} "
              "is not supported (MLP distances are censored)", file=sys.stderr)
        return EXIT_USAGE
    _emit(drobust.rows_to_csv(drobust_rows(cfg)), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.suite or list(suites.SUITES)
    qs = [LqExponent.parse(q).value for q in args.q] if args.q else suites.DOMINANCE_QS
    ok = True
    for name in names:
        t0 = time.time()
        res = suites.run_suites([name], args.sigma_scale, qs, args.seed)[0]
        print(f"{res.line()} ({time.time() - t0:.1f}s)")
        for d in res.details:
            print(f"    {d}")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_FAIL


# -- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nflbounds", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="critical tolerance, accuracy bound curve and distance bound")
    b.add_argument("--err", type=float, required=True, help="class-conditional error err(h|k)")
    b.add_argument("--sigma", type=float, default=1.0)
    b.add_argument("--p", type=int)
    b.add_argument("--q", help="l_q exponent (1, 2, ..., inf); omit for the geodesic bound")
    b.add_argument("--eps-max", type=float)
    b.add_argument("--eps-steps", type=int, default=11)
    b.set_defaults(func=cmd_bounds)

    t = sub.add_parser("toy", help="closed-form toy-problem claims")
    t.add_argument("--p", type=int, default=1001)
    t.add_argument("--delta", type=float, default=0.01)
    t.add_argument("--eta", type=float)
    t.add_argument("--eps", type=float, help="attack tolerance (default 2 eta)")
    t.add_argument("--mc", type=int, default=0, help="Monte-Carlo sample count")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_toy)

    s = sub.add_parser("simulate", help="toy-problem robustness curve of a trained MLP")
    _add_config_flags(s)
    s.add_argument("--save-model", help="write the trained network as a checkpoint")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mnist", help="MNIST robustness curve of a trained MLP")
    _add_config_flags(m)
    m.add_argument("--save-model")
    m.set_defaults(func=cmd_mnist)

    bl = sub.add_parser("blowup", help="exact blowup masses against the concentration bound")
    bl.add_argument("--points", type=int, default=50)
    bl.add_argument("--sigma-scale", type=float, default=1.0)
    bl.add_argument("--tol", type=float, default=1e-12)
    bl.add_argument("--all-rows", action="store_true", help="print every row, not only violations")
    bl.add_argument("--out")
    bl.set_defaults(func=cmd_blowup)

    d = sub.add_parser("drobust", help="distributional vs adversarial error of a linear classifier")
    _add_config_flags(d)
    d.set_defaults(func=cmd_drobust)

    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--suite", action="append", choices=suites.SUITES)
    v.add_argument("--sigma-scale", type=float, default=1.0, help="scale the assumed sigma (fault injection)")
    v.add_argument("--q", action="append", help="restrict the dominance suite to these exponents")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
