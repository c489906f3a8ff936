"""Synthetic news/comment corpus with known user abilities.

Each news item gets a label, a latent difficulty ``b_i`` and a set of
commenters. On crowd-informative items a user answers correctly with
probability ``sigmoid(a_j - b_i)`` (a one-parameter logistic response
model with log-normal abilities ``a_j``); on the rest stances are fair
coin flips. Text of machine-informative items mixes label-specific
signal words into a neutral vocabulary; other items draw only neutral
words. ``q_m`` and ``q_c`` are the informative fractions; with
``disjoint`` the two uninformative subsets do not overlap, so every item
is judged well by at least one source.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .config import SyntheticSpec
from .crowd import Comment, Stance
from .dataio import NewsRecord, PathLike, write_comments, write_news
from .distributions import SeededRng

MIN_OFFSET = 60
MAX_OFFSET = 7 * 86400
BASE_TIME = 1_600_000_000


@dataclass
class SyntheticCorpus:
    news: list[NewsRecord]
    comments: list[Comment]
    abilities: dict[str, float]
    difficulties: dict[str, float]
    machine_informative: dict[str, bool]
    crowd_informative: dict[str, bool]


def _uninformative_masks(spec: SyntheticSpec, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = spec.n_news
    k_m = int(round((1.0 - spec.q_m) * n))
    k_c = int(round((1.0 - spec.q_c) * n))
    un_m = np.zeros(n, bool)
    un_c = np.zeros(n, bool)
    if spec.disjoint and k_m + k_c <= n:
        order = gen.permutation(n)
        un_m[order[:k_m]] = True
        un_c[order[k_m : k_m + k_c]] = True
    else:
        un_m[gen.choice(n, k_m, replace=False)] = True
        un_c[gen.choice(n, k_c, replace=False)] = True
    return un_m, un_c


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    spec.validate()
    root = SeededRng(spec.seed)
    g_lab, g_lat, g_txt, g_com = (root.child(k).generator() for k in range(4))

    n_fake = int(round(spec.fake_fraction * spec.n_news))
    labels = np.zeros(spec.n_news, int)
    labels[:n_fake] = 1
    labels = g_lab.permutation(labels)
    un_m, un_c = _uninformative_masks(spec, g_lab)

    abilities = np.exp(g_lat.normal(spec.ability_log_mean, spec.ability_log_sd, spec.n_users))
    difficulties = g_lat.normal(spec.difficulty_mean, spec.difficulty_sd, spec.n_news)

    user_ids = [f"u{j:04d}" for j in range(spec.n_users)]
    news_ids = [f"n{i:05d}" for i in range(spec.n_news)]
    half = max(spec.vocab_signal // 2, 1)

    news = []
    for i, nid in enumerate(news_ids):
        length = int(g_txt.integers(spec.tokens_min, spec.tokens_max + 1))
        words = [f"w{k}" for k in g_txt.integers(0, spec.vocab_neutral, length)]
        if not un_m[i]:
            offset = 0 if labels[i] == 1 else half
            for pos in np.flatnonzero(g_txt.random(length) < spec.signal_rate):
                words[pos] = f"s{offset + int(g_txt.integers(0, half))}"
        news.append(NewsRecord(nid, " ".join(words), int(labels[i]), BASE_TIME + 3600 * i))

    comments = []
    log_lo, log_hi = math.log(MIN_OFFSET), math.log(MAX_OFFSET)
    for i, nid in enumerate(news_ids):
        k = int(g_com.integers(spec.comments_min, spec.comments_max + 1))
        users = np.sort(g_com.choice(spec.n_users, k, replace=False))
        if un_c[i]:
            oppose = g_com.random(k) < 0.5
        else:
            correct = g_com.random(k) < expit(abilities[users] - difficulties[i])
            oppose = correct == (labels[i] == 1)
        offsets = np.exp(g_com.uniform(log_lo, log_hi, k)).astype(int)
        for j, opp, off in zip(users, oppose, offsets):
            stance = Stance.OPPOSE if opp else Stance.SUPPORT
            comments.append(Comment(nid, user_ids[j], stance, int(off)))

    return SyntheticCorpus(
        news,
        comments,
        dict(zip(user_ids, abilities.tolist())),
        dict(zip(news_ids, difficulties.tolist())),
        {nid: not bool(u) for nid, u in zip(news_ids, un_m)},
        {nid: not bool(u) for nid, u in zip(news_ids, un_c)},
    )


def write_corpus(corpus: SyntheticCorpus, out_dir: PathLike) -> dict[str, Path]:
    """Write ``news.jsonl``, ``comments.jsonl`` and the ``truth.jsonl`` sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"news": out / "news.jsonl", "comments": out / "comments.jsonl", "truth": out / "truth.jsonl"}
    write_news(paths["news"], corpus.news)
    write_comments(paths["comments"], corpus.comments)
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        for uid, a in corpus.abilities.items():
            fh.write(json.dumps({"user_id": uid, "ability": a}) + "\n")
        for nid, b in corpus.difficulties.items():
            row = {
                "news_id": nid,
                "difficulty": b,
                "machine_informative": corpus.machine_informative[nid],
                "crowd_informative": corpus.crowd_informative[nid],
            }
            fh.write(json.dumps(row) + "\n")
    return paths


def read_truth(path: PathLike) -> tuple[dict[str, float], dict[str, float]]:
    abilities, difficulties = {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if "user_id" in row:
                abilities[row["user_id"]] = row["ability"]
            else:
                difficulties[row["news_id"]] = row["difficulty"]
    return abilities, difficulties
