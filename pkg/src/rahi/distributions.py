"""Gaussian, Beta and Uniform primitives with seeded, reproducible sampling.

Samplers are written against a raw uniform stream so that the algorithms
(Box-Muller normals, Marsaglia-Tsang gamma) are explicit and the output is
fully determined by a :class:`SeededRng`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import expit, gammaln

_MASK64 = (1 << 64) - 1
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Raised when a density is evaluated outside its support."""


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance >= 0.0) or not math.isfinite(self.mean):
            raise ValueError(f"invalid Gaussian({self.mean}, {self.variance})")


@dataclass(frozen=True)
class Beta:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise ValueError(f"invalid Beta({self.alpha}, {self.beta})")


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"invalid Uniform({self.lo}, {self.hi})")


Distribution = Union[Gaussian, Beta, Uniform]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class SeededRng:
    """An immutable (seed, stream) pair.

    Every call to :meth:`generator` returns a fresh generator positioned at
    the start of the stream, so functions taking a ``SeededRng`` are pure.
    Independent sub-streams come from :meth:`child`.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, offset: int) -> "SeededRng":
        mixed = _splitmix64(self.stream_id ^ _splitmix64(offset & _MASK64))
        return SeededRng(self.seed, mixed)


def clamp_unit(x, margin: float):
    """Clamp into ``[margin, 1 - margin]``; works on scalars and arrays."""
    if not 0.0 < margin < 0.5:
        raise ValueError("margin must lie in (0, 0.5)")
    out = np.clip(x, margin, 1.0 - margin)
    return float(out) if np.ndim(out) == 0 else out


def log_pdf(dist: Distribution, x):
    """Natural-log density of ``dist`` at ``x`` (scalar or array)."""
    xa = np.asarray(x, dtype=np.float64)
    if isinstance(dist, Gaussian):
        if dist.variance <= 0.0:
            raise DomainError("log_pdf of a degenerate Gaussian is undefined")
        out = -0.5 * (xa - dist.mean) ** 2 / dist.variance - 0.5 * math.log(dist.variance) - LOG_SQRT_2PI
    elif isinstance(dist, Beta):
        if np.any((xa <= 0.0) | (xa >= 1.0)):
            raise DomainError("Beta log_pdf requires x in (0, 1); clamp first")
        a, b = dist.alpha, dist.beta
        norm = gammaln(a + b) - gammaln(a) - gammaln(b)
        out = norm + (a - 1.0) * np.log(xa) + (b - 1.0) * np.log1p(-xa)
    elif isinstance(dist, Uniform):
        inside = (xa >= dist.lo) & (xa <= dist.hi)
        out = np.where(inside, -math.log(dist.hi - dist.lo), -np.inf)
    else:
        raise TypeError(f"unsupported distribution {type(dist).__name__}")
    return float(out) if out.ndim == 0 else out


def moments(dist: Distribution) -> tuple[float, float]:
    if isinstance(dist, Gaussian):
        return dist.mean, dist.variance
    if isinstance(dist, Beta):
        s = dist.alpha + dist.beta
        return dist.alpha / s, dist.alpha * dist.beta / (s * s * (s + 1.0))
    if isinstance(dist, Uniform):
        return 0.5 * (dist.lo + dist.hi), (dist.hi - dist.lo) ** 2 / 12.0
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def _open_uniform(gen: np.random.Generator, n: int) -> np.ndarray:
    # (0, 1]: safe under log
    return 1.0 - gen.random(n)


def standard_normal(gen: np.random.Generator, n: int) -> np.ndarray:
    """Box-Muller transform, both branches used."""
    m = (n + 1) // 2
    r = np.sqrt(-2.0 * np.log(_open_uniform(gen, m)))
    theta = 2.0 * math.pi * gen.random(m)
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]


def log_standard_gamma(gen: np.random.Generator, shape, n: Optional[int] = None) -> np.ndarray:
    """Log of Gamma(shape, 1) draws; ``shape`` may be a scalar or an array.

    Marsaglia-Tsang squeeze/rejection for shape >= 1. For shape < 1 the
    draw is boosted: G(a) = G(a + 1) * U**(1/a), kept in log space because
    U**(1/a) underflows for the small shapes the crowd Beta can produce.
    A scalar shape with ``n`` gives ``n`` draws; an array gives one per entry.
    """
    shapes = np.asarray(shape, dtype=np.float64)
    if shapes.ndim == 0:
        shapes = np.full(1 if n is None else n, float(shapes))
    shapes = shapes.ravel()
    if np.any(shapes <= 0.0):
        raise ValueError("gamma shape must be positive")
    boost = shapes < 1.0
    a = np.where(boost, shapes + 1.0, shapes)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(shapes.size)
    pending = np.arange(shapes.size)
    while pending.size:
        # acceptance rate exceeds 0.95 for every a >= 1
        dp, cp = d[pending], c[pending]
        z = standard_normal(gen, pending.size)
        u = _open_uniform(gen, pending.size)
        v = (1.0 + cp * z) ** 3
        ok = v > 0.0
        vs = np.where(ok, v, 1.0)
        accept = ok & (
            (u < 1.0 - 0.0331 * z**4) | (np.log(u) < 0.5 * z * z + dp * (1.0 - vs + np.log(vs)))
        )
        out[pending[accept]] = np.log(dp[accept] * vs[accept])
        pending = pending[~accept]
    if boost.any():
        idx = np.flatnonzero(boost)
        out[idx] += np.log(_open_uniform(gen, idx.size)) / shapes[idx]
    return out


def sample_beta_many(alpha, beta, rng: SeededRng) -> np.ndarray:
    """One Beta draw per (alpha, beta) entry, broadcast together."""
    a, b = np.broadcast_arrays(np.asarray(alpha, dtype=np.float64), np.asarray(beta, dtype=np.float64))
    gen = rng.generator()
    lx = log_standard_gamma(gen, a)
    ly = log_standard_gamma(gen, b)
    return expit(lx - ly).reshape(a.shape)


def sample_gaussian_many(mean, variance, rng: SeededRng) -> np.ndarray:
    m, v = np.broadcast_arrays(np.asarray(mean, dtype=np.float64), np.asarray(variance, dtype=np.float64))
    z = standard_normal(rng.generator(), m.size).reshape(m.shape)
    return m + np.sqrt(v) * z


def sample(dist: Distribution, rng: SeededRng, count: int) -> np.ndarray:
    """Draw ``count`` samples; identical ``rng`` gives identical output."""
    if count < 1:
        raise ValueError("count must be positive")
    gen = rng.generator()
    if isinstance(dist, Gaussian):
        if dist.variance == 0.0:
            return np.full(count, float(dist.mean))
        return dist.mean + math.sqrt(dist.variance) * standard_normal(gen, count)
    if isinstance(dist, Beta):
        lx = log_standard_gamma(gen, dist.alpha, count)
        ly = log_standard_gamma(gen, dist.beta, count)
        # X / (X + Y) computed as a logistic of the log-ratio
        return expit(lx - ly)
    if isinstance(dist, Uniform):
        return dist.lo + (dist.hi - dist.lo) * gen.random(count)
    raise TypeError(f"unsupported distribution {type(dist).__name__}")
