"""Likelihood-maximization fusion of the machine Gaussian and the crowd Beta.

Both source distributions are turned into a sample pool; a small tanh
encoder maps the four summary statistics ``[E_machine, std_machine,
E_crowd, std_crowd]`` to ``(mu, log_sigma)`` of a fused distribution and is
trained so that the fused density explains the pool. The fused mean is the
veracity score.

A uniform fused form is parameterized by the same head: the interval
``[mu - sqrt(3) sigma, mu + sqrt(3) sigma]`` has mean ``mu`` and variance
``sigma**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .crowd import CrowdAssessment
from .distributions import (
    LOG_SQRT_2PI,
    Beta,
    Gaussian,
    SeededRng,
    Uniform,
    clamp_unit,
    moments,
    sample,
    sample_beta_many,
    sample_gaussian_many,
)
from .machine import MachineAssessment

SIGMA_FLOOR = 1e-6
DELTA = 1e-4
SQRT3 = math.sqrt(3.0)
SOFT_EDGE = 0.01
FALLBACK_BETA = Beta(1.0, 1.0)
FORMS = ("gaussian", "uniform")


@dataclass
class FusionEncoderParams:
    V_h: np.ndarray  # (4, H_f)
    b_h: np.ndarray  # (H_f,)
    V_o: np.ndarray  # (H_f, 2)
    b_o: np.ndarray  # (2,)

    @property
    def hidden(self) -> int:
        return self.V_h.shape[1]

    def copy(self) -> "FusionEncoderParams":
        return FusionEncoderParams(self.V_h.copy(), self.b_h.copy(), self.V_o.copy(), self.b_o.copy())

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.V_h.ravel(), self.b_h, self.V_o.ravel(), self.b_o])

    @classmethod
    def unravel(cls, flat: np.ndarray, hidden: int) -> "FusionEncoderParams":
        i = 4 * hidden
        V_h = flat[:i].reshape(4, hidden)
        b_h = flat[i : i + hidden]
        V_o = flat[i + hidden : i + 3 * hidden].reshape(hidden, 2)
        b_o = flat[i + 3 * hidden : i + 3 * hidden + 2]
        return cls(V_h.copy(), b_h.copy(), V_o.copy(), b_o.copy())


def init_encoder(hidden: int, rng: SeededRng) -> FusionEncoderParams:
    gen = rng.generator()
    V_h = gen.normal(0.0, 1.0, size=(4, hidden))
    V_o = gen.normal(0.0, 0.1 / math.sqrt(hidden), size=(hidden, 2))
    # start near the middle of the unit interval with a broad sigma
    return FusionEncoderParams(V_h, np.zeros(hidden), V_o, np.array([0.5, math.log(0.25)]))


@dataclass(frozen=True)
class FusedParams:
    mu: float
    log_sigma: float
    form: str = "gaussian"

    @property
    def sigma(self) -> float:
        return max(math.exp(self.log_sigma), SIGMA_FLOOR)

    def distribution(self) -> Union[Gaussian, Uniform]:
        if self.form == "gaussian":
            return Gaussian(self.mu, self.sigma**2)
        half = SQRT3 * self.sigma
        return Uniform(self.mu - half, self.mu + half)


@dataclass(frozen=True)
class SamplePool:
    gaussian_samples: np.ndarray
    beta_samples: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.gaussian_samples, self.beta_samples])


@dataclass(frozen=True)
class Prediction:
    y_hat: float
    label: int  # 1 = fake
    reliability: float  # fused standard deviation; lower is more reliable


def crowd_beta(crowd: Optional[CrowdAssessment]) -> Beta:
    return FALLBACK_BETA if crowd is None else crowd.beta_dist


def fusion_input(machine: MachineAssessment, crowd: Optional[CrowdAssessment]) -> np.ndarray:
    """Encoder input; an unavailable crowd (``None``) is replaced by Beta(1, 1)."""
    beta = crowd_beta(crowd)
    e_c = 0.5 if crowd is None else crowd.e_crowd
    return np.array([machine.mean, machine.std, e_c, math.sqrt(moments(beta)[1])])


def draw_pool(machine: Union[MachineAssessment, Gaussian], beta: Beta, t_per_side: int, rng: SeededRng, delta: float = DELTA) -> SamplePool:
    """``t_per_side`` draws from each source, clamped to ``[delta, 1 - delta]``."""
    gauss = machine if isinstance(machine, Gaussian) else machine.gaussian()
    g = clamp_unit(sample(gauss, rng.child(0), t_per_side), delta)
    b = clamp_unit(sample(beta, rng.child(1), t_per_side), delta)
    return SamplePool(np.atleast_1d(g), np.atleast_1d(b))


def draw_pools(means, variances, alphas, betas, t_per_side: int, rng: SeededRng, delta: float = DELTA) -> np.ndarray:
    """Vectorized pools: row ``i`` holds ``t_per_side`` Gaussian then Beta draws."""
    n = len(means)
    col = lambda v: np.asarray(v, dtype=np.float64).reshape(n, 1)
    shape = (n, t_per_side)
    g = sample_gaussian_many(np.broadcast_to(col(means), shape), np.broadcast_to(col(variances), shape), rng.child(0))
    b = sample_beta_many(np.broadcast_to(col(alphas), shape), np.broadcast_to(col(betas), shape), rng.child(1))
    return clamp_unit(np.concatenate([g, b], axis=1), delta)


@dataclass(frozen=True)
class SourceStats:
    """Per-instance source distributions in column form, plus the encoder inputs."""

    A: np.ndarray  # (n, 4)
    means: np.ndarray
    variances: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray

    def __len__(self):
        return self.A.shape[0]

    def pools(self, t_per_side: int, rng: SeededRng, delta: float = DELTA) -> np.ndarray:
        return draw_pools(self.means, self.variances, self.alphas, self.betas, t_per_side, rng, delta)

    @classmethod
    def concat(cls, parts) -> "SourceStats":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("A", "means", "variances", "alphas", "betas")))


def source_stats(machines, crowds) -> SourceStats:
    """Bundle assessments (``None`` crowd entries fall back to Beta(1, 1))."""
    A = np.array([fusion_input(m, c) for m, c in zip(machines, crowds)]).reshape(-1, 4)
    betas = [crowd_beta(c) for c in crowds]
    return SourceStats(
        A,
        np.array([m.mean for m in machines]),
        np.array([m.variance for m in machines]),
        np.array([b.alpha for b in betas]),
        np.array([b.beta for b in betas]),
    )


def random_source_stats(n: int, rng: SeededRng, max_users: int = 40, max_std: float = 0.2, alpha_min: float = 0.05) -> SourceStats:
    """Random (Gaussian, Beta) pairs spread over the range the pipeline produces.

    A tenth of the crowd entries are the Beta(1, 1) fallback.
    """
    gen = rng.generator()
    means = gen.uniform(0.02, 0.98, n)
    stds = gen.uniform(0.0, max_std, n)
    e_c = gen.uniform(1e-3, 1.0 - 1e-3, n)
    users = gen.integers(1, max_users + 1, n).astype(float)
    alphas = np.maximum(e_c * users, alpha_min)
    betas = np.maximum((1.0 - e_c) * users, alpha_min)
    fallback = gen.random(n) < 0.1
    alphas[fallback] = betas[fallback] = 1.0
    e_c[fallback] = 0.5
    s = alphas + betas
    crowd_std = np.sqrt(alphas * betas / (s * s * (s + 1.0)))
    A = np.stack([means, stds, e_c, crowd_std], axis=1)
    return SourceStats(A, means, stds**2, alphas, betas)


def _encode_batch(params: FusionEncoderParams, A: np.ndarray):
    H = np.tanh(A @ params.V_h + params.b_h)
    return H, H @ params.V_o + params.b_o


def encode(params: FusionEncoderParams, a: np.ndarray, form: str = "gaussian") -> FusedParams:
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    _, out = _encode_batch(params, np.asarray(a, dtype=np.float64)[None, :])
    return FusedParams(float(out[0, 0]), float(out[0, 1]), form)


def encode_many(params: FusionEncoderParams, A: np.ndarray, form: str = "gaussian") -> list[FusedParams]:
    _, out = _encode_batch(params, np.asarray(A, dtype=np.float64))
    return [FusedParams(float(m), float(s), form) for m, s in out]


def _as_values(pool) -> np.ndarray:
    return pool.values if isinstance(pool, SamplePool) else np.asarray(pool, dtype=np.float64)


def fused_nll(fused: FusedParams, pool, smooth: bool = False) -> float:
    """Negative log-likelihood of every pooled sample under the fused distribution.

    The uniform form uses the hard density unless ``smooth`` is set, in which
    case samples outside the interval pay a quadratic penalty instead of
    an infinite one (the training objective).
    """
    s = _as_values(pool)
    if s.size == 0:
        raise ValueError("empty pool")
    sigma = fused.sigma
    if fused.form == "gaussian":
        z = (s - fused.mu) / sigma
        return float(np.sum(0.5 * z * z + math.log(sigma) + LOG_SQRT_2PI))
    half = SQRT3 * sigma
    width = 2.0 * half
    if smooth:
        dist = np.maximum(np.maximum(fused.mu - half - s, 0.0), s - fused.mu - half)
        return float(np.sum(math.log(width) + 0.5 * (dist / SOFT_EDGE) ** 2))
    if np.any((s < fused.mu - half) | (s > fused.mu + half)):
        return math.inf
    return float(s.size * math.log(width))


def gaussian_mle_oracle(pool) -> FusedParams:
    """Closed-form Gaussian fit: pooled mean and population std (floored)."""
    s = _as_values(pool)
    std = float(np.sqrt(np.mean((s - s.mean()) ** 2)))
    return FusedParams(float(s.mean()), math.log(max(std, SIGMA_FLOOR)), "gaussian")


def uniform_mle_oracle(pool) -> tuple[float, float]:
    s = _as_values(pool)
    return float(s.min()), float(s.max())


def _nll_and_output_grad(out: np.ndarray, S: np.ndarray, form: str):
    """Per-instance NLL rows and d(loss)/d(mu, log_sigma) for pooled samples ``S`` (n x m)."""
    mu = out[:, :1]
    raw_sigma = np.exp(out[:, 1:])
    floored = raw_sigma < SIGMA_FLOOR
    sigma = np.maximum(raw_sigma, SIGMA_FLOOR)
    m = S.shape[1]
    if form == "gaussian":
        z = (S - mu) / sigma
        nll = np.sum(0.5 * z * z, axis=1) + m * (np.log(sigma[:, 0]) + LOG_SQRT_2PI)
        d_mu = -np.sum(z / sigma, axis=1)
        d_ls = m - np.sum(z * z, axis=1)
    else:
        half = SQRT3 * sigma
        below = np.maximum(mu - half - S, 0.0)
        above = np.maximum(S - mu - half, 0.0)
        dist = below + above
        nll = m * np.log(2.0 * half[:, 0]) + np.sum(0.5 * (dist / SOFT_EDGE) ** 2, axis=1)
        k = 1.0 / SOFT_EDGE**2
        d_mu = np.sum(k * (below - above), axis=1)
        d_ls = m - np.sum(k * dist * half, axis=1)
    d_ls = np.where(floored[:, 0], 0.0, d_ls)
    return nll, np.stack([d_mu, d_ls], axis=1)


def fusion_loss_grad(params: FusionEncoderParams, A: np.ndarray, S: np.ndarray, form: str = "gaussian"):
    """Mean per-instance pooled NLL (smoothed for the uniform form) and its gradient."""
    A = np.asarray(A, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    n = A.shape[0]
    H, out = _encode_batch(params, A)
    nll, d_out = _nll_and_output_grad(out, S, form)
    d_out /= n
    g_Vo = H.T @ d_out
    g_bo = d_out.sum(axis=0)
    d_pre = (d_out @ params.V_o.T) * (1.0 - H * H)
    g_Vh = A.T @ d_pre
    g_bh = d_pre.sum(axis=0)
    return float(nll.mean()), FusionEncoderParams(g_Vh, g_bh, g_Vo, g_bo)


PoolSource = Union[np.ndarray, Callable[[int], np.ndarray]]


def train_fusion(
    params: FusionEncoderParams,
    A: np.ndarray,
    pools: PoolSource,
    epochs: int,
    lr: float,
    form: str = "gaussian",
    optimizer: str = "adam",
    momentum: float = 0.9,
) -> FusionEncoderParams:
    """Full-batch gradient descent on the mean pooled NLL.

    ``pools`` is either a fixed (n x 2T) sample array or a callable mapping
    the epoch index to a freshly drawn one. ``optimizer`` is ``"adam"`` or
    ``"sgd"`` (heavy-ball momentum).
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if optimizer not in ("adam", "sgd"):
        raise ValueError("optimizer must be 'adam' or 'sgd'")
    hidden = params.hidden
    flat = params.ravel()
    if lr == 0.0:
        return params.copy()
    m1 = np.zeros_like(flat)
    m2 = np.zeros_like(flat)
    b1, b2 = 0.9, 0.999
    for epoch in range(epochs):
        S = pools(epoch) if callable(pools) else pools
        _, g = fusion_loss_grad(FusionEncoderParams.unravel(flat, hidden), A, S, form)
        gv = g.ravel()
        if optimizer == "sgd":
            m1 = momentum * m1 - lr * gv
            flat = flat + m1
        else:
            m1 = b1 * m1 + (1.0 - b1) * gv
            m2 = b2 * m2 + (1.0 - b2) * gv * gv
            t = epoch + 1
            step = (m1 / (1.0 - b1**t)) / (np.sqrt(m2 / (1.0 - b2**t)) + 1e-8)
            flat = flat - lr * step
    return FusionEncoderParams.unravel(flat, hidden)


def predict(fused: FusedParams) -> Prediction:
    """Fused mean as the score; fake iff strictly above 0.5."""
    y_hat = fused.mu  # interval midpoint for the uniform form
    return Prediction(y_hat, int(y_hat > 0.5), fused.sigma)
