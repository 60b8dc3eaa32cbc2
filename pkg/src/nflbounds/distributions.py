"""Labeled samplers for the distribution families the bounds cover.

Randomness comes from counter-based Philox streams keyed by (seed, stream
index, block). Every sample owns a fixed slice of its block's uniforms, so a
sample's value depends only on (seed, stream index, sample index): drawing in
chunks, in parallel, or as a prefix of a longer run gives identical numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import bounds
from .scalar import DomainError, std_normal_cdf, std_normal_quantile

BLOCK = 4096
_HALF_ULP = 2.0 ** -54


@dataclass(frozen=True)
class RngStream:
    seed: int
    index: int = 0

    def _block_generator(self, block: int) -> np.random.Generator:
        key = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, self.index & 0xFFFFFFFFFFFFFFFF, block])
        k = key.generate_state(2, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=int(k[0]) | (int(k[1]) << 64)))

    def child(self, tag: int) -> "RngStream":
        """A statistically independent stream derived from this one."""
        mixed = np.random.SeedSequence([self.seed, self.index, tag]).generate_state(1, dtype=np.uint64)[0]
        return RngStream(self.seed, int(mixed))

    def uniforms(self, n: int, width: int, start: int = 0) -> np.ndarray:
        """Uniforms in (0, 1) for samples ``start .. start+n-1``, ``width`` per sample."""
        out = np.empty((n, width))
        i = start
        while i < start + n:
            b, row = divmod(i, BLOCK)
            rows = min(BLOCK - row, start + n - i)
            u = self._block_generator(b).random((row + rows, width))[row:]
            out[i - start:i - start + rows] = u + _HALF_ULP
            i += rows
        return out

    def normals(self, n: int, width: int, start: int = 0) -> np.ndarray:
        """Standard normals by inverse CDF, one uniform per coordinate."""
        return std_normal_quantile(self.uniforms(n, width, start))


def _as_stream(rng: Union[RngStream, int]) -> RngStream:
    return rng if isinstance(rng, RngStream) else RngStream(int(rng))


# -- class conditionals -----------------------------------------------------

@dataclass(frozen=True)
class IsotropicGaussian:
    mean: np.ndarray
    sigma: float
    label: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        if not self.sigma > 0:
            raise DomainError("Gaussian scale must be positive")

    @property
    def scales(self) -> np.ndarray:
        return np.full(self.mean.shape, float(self.sigma))

    @property
    def support_dim(self) -> int:
        return self.mean.size

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: np.ndarray
    scales: np.ndarray
    label: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "scales", np.asarray(self.scales, dtype=float))
        if self.scales.shape != self.mean.shape:
            raise DomainError("mean and scales must have the same shape")
        if np.any(self.scales <= 0):
            raise DomainError("Gaussian scales must be positive")

    @property
    def sigma(self) -> float:
        # covariance eigenvalues are scales**2, all <= sigma**2
        return float(self.scales.max())

    @property
    def support_dim(self) -> int:
        return self.mean.size

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SphereUniform:
    radius: float
    p: int
    label: int = 1

    @property
    def sigma(self) -> float:
        return bounds.sphere_t2_sigma(self.radius, self.p)

    @property
    def support_dim(self) -> int:
        return self.p - 1

    @property
    def dim(self) -> int:
        return self.p


@dataclass(frozen=True)
class HypercubePushforward:
    p: int
    label: int = 1

    @property
    def sigma(self) -> float:
        return bounds.pushforward_sigma(bounds.HYPERCUBE_LIPSCHITZ, 1.0)

    @property
    def support_dim(self) -> int:
        return self.p

    @property
    def dim(self) -> int:
        return self.p


@dataclass(frozen=True)
class ToyFeatureBlock:
    """Features of the toy problem conditioned on Y = y (y in {-1, +1})."""

    p: int
    eta: float
    y: int = 1
    label: int = 1

    @property
    def sigma(self) -> float:
        # the Gaussian block has unit scale; X^1 is ignored by the theorems
        return 1.0

    @property
    def support_dim(self) -> int:
        return self.p

    @property
    def dim(self) -> int:
        return self.p


ClassConditional = Union[IsotropicGaussian, DiagonalGaussian, SphereUniform, HypercubePushforward, ToyFeatureBlock]
Gaussian = (IsotropicGaussian, DiagonalGaussian)


def t2_sigma_of(cond: ClassConditional) -> float:
    return float(cond.sigma)


def sample_gaussian(cond, rng, n: int = 1, start: int = 0) -> np.ndarray:
    if not isinstance(cond, Gaussian):
        raise TypeError(f"expected a Gaussian conditional, got {type(cond).__name__}")
    z = _as_stream(rng).normals(n, cond.mean.size, start)
    return cond.mean + z * cond.scales


def sample_sphere_uniform(r: float, p: int, rng, n: int = 1, start: int = 0) -> np.ndarray:
    if p < 2:
        raise DomainError("sphere needs p >= 2")
    z = _as_stream(rng).normals(n, p, start)
    return r * z / np.linalg.norm(z, axis=1, keepdims=True)


def hypercube_pushforward(z) -> np.ndarray:
    """Coordinatewise normal CDF; maps the standard Gaussian to the uniform cube."""
    return np.asarray(std_normal_cdf(np.asarray(z, dtype=float)))


def _toy_from_uniforms(u: np.ndarray, p: int, eta: float, y: np.ndarray) -> np.ndarray:
    x = np.empty((u.shape[0], p))
    x[:, 0] = np.where(u[:, 0] < 0.7, y, -y)
    x[:, 1:] = eta * y[:, None] + std_normal_quantile(u[:, 1:])
    return x


def sample_toy(p: int, eta: float, rng, n: int = 1, start: int = 0):
    """Draw n (features, label) pairs of the toy problem. Labels are +-1.

    Layout per sample: one uniform for the label, one for the flip of X^1,
    then p - 1 for the Gaussian block.
    """
    if p < 2:
        raise DomainError("toy problem needs p >= 2")
    u = _as_stream(rng).uniforms(n, p + 1, start)
    y = np.where(u[:, 0] < 0.5, 1.0, -1.0)
    return _toy_from_uniforms(u[:, 1:], p, eta, y), y.astype(int)


def sample_toy_conditional(p: int, eta: float, y: int, rng, n: int = 1, start: int = 0) -> np.ndarray:
    if y not in (-1, 1):
        raise DomainError("toy labels are -1 and +1")
    u = _as_stream(rng).uniforms(n, p, start)
    return _toy_from_uniforms(u, p, eta, np.full(n, float(y)))


def sample_conditional(cond: ClassConditional, rng, n: int = 1, start: int = 0) -> np.ndarray:
    """Dispatch to the sampler that matches ``cond``."""
    if isinstance(cond, Gaussian):
        return sample_gaussian(cond, rng, n, start)
    if isinstance(cond, SphereUniform):
        return sample_sphere_uniform(cond.radius, cond.p, rng, n, start)
    if isinstance(cond, HypercubePushforward):
        return hypercube_pushforward(_as_stream(rng).normals(n, cond.p, start))
    if isinstance(cond, ToyFeatureBlock):
        return sample_toy_conditional(cond.p, cond.eta, cond.y, rng, n, start)
    raise TypeError(f"unknown conditional {cond!r}")


@dataclass
class LabeledSampler:
    conditionals: Sequence[ClassConditional]
    priors: np.ndarray = field(default=None)

    def __post_init__(self):
        k = len(self.conditionals)
        if self.priors is None:
            self.priors = np.full(k, 1.0 / k)
        self.priors = np.asarray(self.priors, dtype=float)
        if self.priors.shape != (k,) or np.any(self.priors <= 0) or abs(self.priors.sum() - 1) > 1e-12:
            raise DomainError("priors must be a strictly positive probability vector")

    @property
    def labels(self) -> list:
        return [c.label for c in self.conditionals]

    def sample(self, rng, n: int, start: int = 0):
        """Mixture draw. Labels come from stream child 0, features of class j from child j + 1."""
        rng = _as_stream(rng)
        u = rng.child(0).uniforms(n, 1, start)[:, 0]
        cls = np.searchsorted(np.cumsum(self.priors)[:-1], u, side="right")
        x = np.empty((n, self.conditionals[0].dim))
        for j, cond in enumerate(self.conditionals):
            idx = np.flatnonzero(cls == j)
            if idx.size:
                # full-width draw keeps each sample tied to its own index
                x[idx] = sample_conditional(cond, rng.child(j + 1), n, start)[idx]
        return x, np.asarray(self.labels)[cls]
