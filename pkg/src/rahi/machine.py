"""MC-dropout text classifier producing a Gaussian veracity assessment.

The network is one hidden layer with dropout in front of both weight
layers::

    p = sigmoid(W2 . drop(tanh(W1^T drop(x) + b1)) + b2)

Dropout is inverted (kept units are scaled by ``1 / (1 - rate)``), so a
pass without a mask needs no rescaling.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import expit

from .distributions import Gaussian, SeededRng

P_CLAMP = 1e-12
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not ``[a-z0-9]``."""
    return _TOKEN_RE.findall(text.lower())


def token_bucket(token: str, dim: int, seed: int = 0) -> int:
    """Bucket index: keyed BLAKE2b-64 of the UTF-8 token, little-endian, mod ``dim``."""
    key = int(seed).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") & (dim - 1)


def featurize(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Hashed bag-of-words counts, L2-normalized (zero vector for no tokens)."""
    if dim < 1 or dim & (dim - 1):
        raise ValueError("dim must be a power of two")
    vec = np.zeros(dim)
    for tok in tokenize(text):
        vec[token_bucket(tok, dim, seed)] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def featurize_many(texts, dim: int, seed: int = 0) -> np.ndarray:
    return np.stack([featurize(t, dim, seed) for t in texts]) if texts else np.zeros((0, dim))


@dataclass
class ClassifierParams:
    W1: np.ndarray  # (D, H)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (H,)
    b2: float

    @property
    def dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), float(self.b2))

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2, [self.b2]])

    @classmethod
    def unravel(cls, flat: np.ndarray, dim: int, hidden: int) -> "ClassifierParams":
        i = dim * hidden
        W1 = flat[:i].reshape(dim, hidden)
        b1 = flat[i : i + hidden]
        W2 = flat[i + hidden : i + 2 * hidden]
        return cls(W1.copy(), b1.copy(), W2.copy(), float(flat[i + 2 * hidden]))


def init_params(dim: int, hidden: int, rng: SeededRng) -> ClassifierParams:
    gen = rng.generator()
    # inputs are unit-norm, so the first layer can start large
    W1 = gen.normal(0.0, 1.0, size=(dim, hidden))
    W2 = gen.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden)
    return ClassifierParams(W1, np.zeros(hidden), W2, 0.0)


def zero_params(dim: int, hidden: int) -> ClassifierParams:
    return ClassifierParams(np.zeros((dim, hidden)), np.zeros(hidden), np.zeros(hidden), 0.0)


@dataclass
class DropoutMask:
    input_kept: np.ndarray  # bool (D,)
    hidden_kept: np.ndarray  # bool (H,)
    rate: float

    def scales(self) -> tuple[np.ndarray, np.ndarray]:
        keep = 1.0 / (1.0 - self.rate)
        return self.input_kept * keep, self.hidden_kept * keep


def draw_mask(dim: int, hidden: int, rate: float, gen: np.random.Generator) -> DropoutMask:
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    return DropoutMask(gen.random(dim) >= rate, gen.random(hidden) >= rate, rate)


def _forward_batch(params: ClassifierParams, X, in_scale, hid_scale):
    a0 = X if in_scale is None else X * in_scale
    h = np.tanh(a0 @ params.W1 + params.b1)
    a1 = h if hid_scale is None else h * hid_scale
    return a0, h, a1, expit(a1 @ params.W2 + params.b2)


def forward(params: ClassifierParams, mask: Optional[DropoutMask], x: np.ndarray) -> float:
    """Fake-probability of one feature vector; ``mask=None`` is the deterministic pass."""
    if mask is None:
        s_in = s_hid = None
    else:
        s_in, s_hid = mask.scales()
    return float(_forward_batch(params, x[None, :], s_in, s_hid)[3][0])


@dataclass
class MachineAssessment:
    mean: float
    variance: float
    passes: int
    pass_outputs: np.ndarray = field(repr=False)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def gaussian(self) -> Gaussian:
        return Gaussian(self.mean, self.variance)


def assessment_from_outputs(outputs) -> MachineAssessment:
    """Mean and population variance of the pass outputs."""
    out = np.asarray(outputs, dtype=np.float64)
    mean = float(out.mean())
    if np.ptp(out) == 0.0:
        # identical passes: report the exact value and zero spread
        return MachineAssessment(float(out[0]), 0.0, out.size, out)
    return MachineAssessment(mean, float(np.mean((out - mean) ** 2)), out.size, out)


def mc_predict(params: ClassifierParams, x: np.ndarray, n_passes: int, rate: float, rng: SeededRng) -> MachineAssessment:
    """Run ``n_passes`` masked forward passes, pass ``n`` on stream ``rng.child(n)``."""
    if n_passes < 1:
        raise ValueError("n_passes must be >= 1")
    outputs = np.empty(n_passes)
    for n in range(n_passes):
        mask = draw_mask(params.dim, params.hidden, rate, rng.child(n).generator())
        outputs[n] = forward(params, mask, x)
    return assessment_from_outputs(outputs)


def mc_predict_many(params: ClassifierParams, X, n_passes: int, rate: float, rng: SeededRng) -> list[MachineAssessment]:
    """Batched MC-dropout over the rows of ``X``.

    Input dropout is drawn only at nonzero feature positions: dropping a
    zero input is a no-op, so the pass distribution is the same as with a
    full mask while the cost scales with the number of tokens.
    """
    if n_passes < 1:
        raise ValueError("n_passes must be >= 1")
    Xs = sparse.csr_matrix(X)
    n_items = Xs.shape[0]
    outputs = np.empty((n_items, n_passes))
    keep = 1.0 / (1.0 - rate)
    for n in range(n_passes):
        gen = rng.child(n).generator()
        Xm = Xs.copy()
        Xm.data = Xm.data * ((gen.random(Xm.nnz) >= rate) * keep)
        h = np.tanh(np.asarray(Xm @ params.W1) + params.b1)
        h = h * ((gen.random(h.shape) >= rate) * keep)
        outputs[:, n] = expit(h @ params.W2 + params.b2)
    return [assessment_from_outputs(row) for row in outputs]


def deterministic_predict_many(params: ClassifierParams, X) -> np.ndarray:
    h = np.tanh(np.asarray(sparse.csr_matrix(X) @ params.W1) + params.b1)
    return expit(h @ params.W2 + params.b2)


def machine_loss_grad(params: ClassifierParams, X: np.ndarray, y: np.ndarray, masks=None):
    """Mean binary cross-entropy over the batch and its gradient.

    ``masks`` is ``None`` (deterministic) or one :class:`DropoutMask` per row.
    Returns ``(loss, grad)`` with ``grad`` shaped like ``params``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if masks is None:
        s_in = s_hid = None
    else:
        pairs = [m.scales() for m in masks]
        s_in = np.stack([p[0] for p in pairs])
        s_hid = np.stack([p[1] for p in pairs])
    a0, h, a1, p = _forward_batch(params, X, s_in, s_hid)
    pc = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    loss = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))

    dz2 = (p - y) / n
    dz2[(p < P_CLAMP) | (p > 1.0 - P_CLAMP)] = 0.0
    gW2 = a1.T @ dz2
    gb2 = float(dz2.sum())
    da1 = np.outer(dz2, params.W2)
    dh = da1 if s_hid is None else da1 * s_hid
    dz1 = dh * (1.0 - h * h)
    gW1 = a0.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, ClassifierParams(gW1, gb1, gW2, gb2)


def sgd_step(params: ClassifierParams, grad: ClassifierParams, lr: float) -> ClassifierParams:
    return ClassifierParams(
        params.W1 - lr * grad.W1,
        params.b1 - lr * grad.b1,
        params.W2 - lr * grad.W2,
        params.b2 - lr * grad.b2,
    )


def train_machine(
    params: ClassifierParams,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    lr: float,
    rate: float,
    rng: SeededRng,
    batch_size: int = 32,
) -> ClassifierParams:
    """Mini-batch SGD on the dropout-active cross-entropy.

    Epoch ``e`` shuffles and draws masks from ``rng.child(e)``; callers that
    train one epoch at a time should pass a distinct ``rng`` per call.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    params = params.copy()
    n = X.shape[0]
    if lr == 0.0 or n == 0:
        return params
    for epoch in range(epochs):
        gen = rng.child(epoch).generator()
        order = gen.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            masks = [draw_mask(params.dim, params.hidden, rate, gen) for _ in idx] if rate > 0 else None
            _, grad = machine_loss_grad(params, X[idx], y[idx], masks)
            params = sgd_step(params, grad, lr)
    return params
