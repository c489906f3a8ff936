"""Crowd assessment: news difficulty, user reliability, weighted aggregation.

Reliabilities are stored as log-weights ``rho`` (``c = exp(rho)``) so that
gradient steps can never make a weight non-positive.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import sparse

from .distributions import Beta

EPS = 1e-6
C_MIN = 0.01
ALPHA_MIN = 0.05
# weights live in log space, so rescaling them rounds; side sums this close are a tie
TIE_RTOL = 1e-9


class Stance(str, enum.Enum):
    SUPPORT = "support"  # believes the news is true
    OPPOSE = "oppose"  # believes the news is fake


class Verdict(str, enum.Enum):
    FAKE = "fake"
    TRUE = "true"
    TIE = "tie"


class CrowdUnavailable(LookupError):
    """A news item has no usable comments."""


@dataclass(frozen=True)
class Comment:
    news_id: str
    user_id: str
    stance: Stance
    time_offset_seconds: int = 0


def is_correct(stance: Stance, label: int) -> bool:
    return (stance is Stance.OPPOSE) == (label == 1)


@dataclass(frozen=True)
class NewsDifficulty:
    news_id: str
    d: float
    n_users: int
    n_correct: int


@dataclass(frozen=True)
class CrowdAssessment:
    news_id: str
    e_crowd: float
    n_users: int
    beta_dist: Beta


class Reliabilities:
    """Per-user log-reliabilities; unknown users read as ``c = 1``."""

    def __init__(self, users: Sequence[str], rho):
        self.users = list(users)
        self.rho = np.array(rho, dtype=np.float64)
        if self.rho.shape != (len(self.users),):
            raise ValueError("rho must have one entry per user")
        self.index = {u: k for k, u in enumerate(self.users)}

    @property
    def c(self) -> np.ndarray:
        return np.exp(self.rho)

    def weight(self, user_id: str) -> float:
        k = self.index.get(user_id)
        return 1.0 if k is None else math.exp(self.rho[k])

    def with_rho(self, rho) -> "Reliabilities":
        return Reliabilities(self.users, rho)

    def scaled(self, factor: float) -> "Reliabilities":
        return self.with_rho(self.rho + math.log(factor))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.users, np.exp(self.rho).tolist()))

    def __len__(self):
        return len(self.users)


def group_by_news(comments: Iterable[Comment]) -> dict[str, list[Comment]]:
    out: dict[str, list[Comment]] = defaultdict(list)
    for c in comments:
        out[c.news_id].append(c)
    return dict(out)


def compute_difficulty(comments_by_news: Mapping[str, Sequence[Comment]], labels: Mapping[str, int]) -> dict[str, NewsDifficulty]:
    """Fraction of commenters who judged each labelled news correctly."""
    out = {}
    for news_id, label in labels.items():
        cs = comments_by_news.get(news_id, ())
        if not cs:
            continue
        n_correct = sum(is_correct(c.stance, label) for c in cs)
        out[news_id] = NewsDifficulty(news_id, n_correct / len(cs), len(cs), n_correct)
    return out


def init_reliability(
    comments_by_news: Mapping[str, Sequence[Comment]],
    difficulties: Mapping[str, NewsDifficulty],
    labels: Mapping[str, int],
    c_min: float = C_MIN,
    exclude_users: Optional[set] = None,
) -> Reliabilities:
    """Mean inverse difficulty over the news a user judged correctly.

    Only news present in ``difficulties`` (the training split) count toward
    a user's total; a user correct on nothing is floored at ``c_min``.
    """
    inv_sum: dict[str, float] = defaultdict(float)
    n_seen: dict[str, int] = defaultdict(int)
    for news_id, diff in difficulties.items():
        label = labels[news_id]
        for c in comments_by_news.get(news_id, ()):
            if exclude_users and c.user_id in exclude_users:
                continue
            n_seen[c.user_id] += 1
            if is_correct(c.stance, label):
                inv_sum[c.user_id] += 1.0 / diff.d
    users = sorted(n_seen)
    c = np.array([inv_sum[u] / n_seen[u] for u in users])
    return Reliabilities(users, np.log(np.maximum(c, c_min)))


def accuracy_weights(
    comments_by_news: Mapping[str, Sequence[Comment]],
    labels: Mapping[str, int],
    c_min: float = C_MIN,
) -> Reliabilities:
    """Per-user training accuracy as a voting weight (the weighted-vote baseline)."""
    hits: dict[str, int] = defaultdict(int)
    seen: dict[str, int] = defaultdict(int)
    for news_id, label in labels.items():
        for c in comments_by_news.get(news_id, ()):
            seen[c.user_id] += 1
            hits[c.user_id] += is_correct(c.stance, label)
    users = sorted(seen)
    acc = np.array([hits[u] / seen[u] for u in users])
    return Reliabilities(users, np.log(np.maximum(acc, c_min)))


def _side_weights(comments: Sequence[Comment], reliab: Reliabilities) -> tuple[float, float]:
    fake = sum(reliab.weight(c.user_id) for c in comments if c.stance is Stance.OPPOSE)
    true = sum(reliab.weight(c.user_id) for c in comments if c.stance is Stance.SUPPORT)
    return fake, true


def aggregate(comments: Sequence[Comment], reliab: Reliabilities, eps: float = EPS) -> float:
    """Reliability-weighted share of commenters calling the news fake, clamped to ``[eps, 1-eps]``."""
    if not comments:
        raise CrowdUnavailable("no comments")
    fake, true = _side_weights(comments, reliab)
    return min(max(fake / (fake + true), eps), 1.0 - eps)


def to_beta(e_crowd: float, n_users: int, alpha_min: float = ALPHA_MIN) -> Beta:
    if n_users < 0:
        raise ValueError("n_users must be nonnegative")
    if n_users == 0:
        return Beta(1.0, 1.0)
    return Beta(max(e_crowd * n_users, alpha_min), max((1.0 - e_crowd) * n_users, alpha_min))


def assess(
    news_id: str,
    comments: Sequence[Comment],
    reliab: Reliabilities,
    eps: float = EPS,
    alpha_min: float = ALPHA_MIN,
    n_users: Optional[int] = None,
) -> CrowdAssessment:
    e = aggregate(comments, reliab, eps)
    n = len(comments) if n_users is None else n_users
    return CrowdAssessment(news_id, e, n, to_beta(e, n, alpha_min))


def _verdict(fake: float, true: float) -> Verdict:
    if abs(fake - true) <= TIE_RTOL * (fake + true):
        return Verdict.TIE
    return Verdict.FAKE if fake > true else Verdict.TRUE


def resolve(verdict: Verdict, tie_rule: str = "fake") -> int:
    """Map a verdict to a label (1 = fake); ties follow ``tie_rule``."""
    if verdict is Verdict.TIE:
        if tie_rule not in ("fake", "true"):
            raise ValueError("tie_rule must be 'fake' or 'true'")
        return int(tie_rule == "fake")
    return int(verdict is Verdict.FAKE)


def majority_vote(comments: Sequence[Comment]) -> Verdict:
    if not comments:
        raise CrowdUnavailable("no comments")
    n_fake = sum(c.stance is Stance.OPPOSE for c in comments)
    return _verdict(n_fake, len(comments) - n_fake)


def weighted_vote(comments: Sequence[Comment], reliab: Reliabilities) -> Verdict:
    if not comments:
        raise CrowdUnavailable("no comments")
    return _verdict(*_side_weights(comments, reliab))


@dataclass
class VoteMatrix:
    """Stances of the training crowd in matrix form.

    ``fake`` and ``total`` are (news x users) indicator matrices over users
    with a learnable reliability; votes by other users enter as constant
    unit-weight offsets.
    """

    news_ids: list[str]
    fake: sparse.csr_matrix
    total: sparse.csr_matrix
    fake_const: np.ndarray
    total_const: np.ndarray

    @classmethod
    def build(cls, news_ids: Sequence[str], comments_by_news: Mapping[str, Sequence[Comment]], reliab: Reliabilities) -> "VoteMatrix":
        rows, cols, oppose = [], [], []
        fake_const = np.zeros(len(news_ids))
        total_const = np.zeros(len(news_ids))
        for i, nid in enumerate(news_ids):
            for c in comments_by_news.get(nid, ()):
                k = reliab.index.get(c.user_id)
                is_fake = c.stance is Stance.OPPOSE
                if k is None:
                    fake_const[i] += is_fake
                    total_const[i] += 1.0
                else:
                    rows.append(i)
                    cols.append(k)
                    oppose.append(1.0 if is_fake else 0.0)
        shape = (len(news_ids), len(reliab))
        total = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=shape)
        fake = sparse.csr_matrix((oppose, (rows, cols)), shape=shape)
        fake.eliminate_zeros()
        return cls(list(news_ids), fake, total, fake_const, total_const)

    def e_crowd(self, rho: np.ndarray, eps: float = EPS) -> np.ndarray:
        c = np.exp(rho)
        num = self.fake @ c + self.fake_const
        den = self.total @ c + self.total_const
        return np.clip(num / den, eps, 1.0 - eps)


def crowd_loss_grad(votes: VoteMatrix, y: np.ndarray, rho: np.ndarray, eps: float = EPS) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of the aggregated crowd prediction and its gradient in ``rho``.

    The clamp acts as a stop-gradient: news whose prediction sits on the
    boundary contribute to the loss but not to the gradient.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n == 0:
        raise ValueError("empty training set")
    c = np.exp(rho)
    num = votes.fake @ c + votes.fake_const
    den = votes.total @ c + votes.total_const
    raw = num / den
    e = np.clip(raw, eps, 1.0 - eps)
    loss = float(-np.mean(y * np.log(e) + (1.0 - y) * np.log1p(-e)))

    w = (e - y) / (e * (1.0 - e)) / n
    w[(raw <= eps) | (raw >= 1.0 - eps)] = 0.0
    # d e_i / d c_j = (F_ij - e_i A_ij) / den_i
    g_c = votes.fake.T @ (w / den) - votes.total.T @ (w * raw / den)
    return loss, g_c * c


def crowd_accuracy(votes: VoteMatrix, y: np.ndarray, rho: np.ndarray, eps: float = EPS) -> float:
    return float(np.mean((votes.e_crowd(rho, eps) > 0.5) == (np.asarray(y) == 1)))


def adjust_reliability(
    reliab: Reliabilities,
    votes: VoteMatrix,
    y: np.ndarray,
    epochs: int,
    lr: float,
    eps: float = EPS,
) -> Reliabilities:
    """Gradient descent on the training crowd loss, one full-batch step per epoch."""
    rho = reliab.rho.copy()
    if lr == 0.0:
        return reliab.with_rho(rho)
    for _ in range(epochs):
        _, g = crowd_loss_grad(votes, y, rho, eps)
        rho -= lr * g
    return reliab.with_rho(rho)
