"""Line-delimited JSON news/comment files and ingestion.

news file, one object per line::

    {"id": "n1", "text": "...", "label": 1, "publish_time": 1700000000}

comments file::

    {"news_id": "n1", "user_id": "u7", "stance": "oppose", "time_offset_seconds": 930}

``label`` is 1 for fake and 0 for true; ``stance`` is ``"oppose"`` (the
commenter thinks the news is fake) or ``"support"``.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from .crowd import Comment, Stance, group_by_news
from .machine import tokenize

log = logging.getLogger(__name__)

PathLike = Union[str, Path]
NEWS_FIELDS = ("id", "text", "label", "publish_time")
COMMENT_FIELDS = ("news_id", "user_id", "stance", "time_offset_seconds")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class NewsRecord:
    id: str
    text: str
    label: int  # 1 = fake
    publish_time: int = 0


@dataclass
class Dataset:
    news: list[NewsRecord]
    comments_by_news: dict[str, list[Comment]]
    # users below the activity threshold kept only for |U_i| counts
    inactive_users: set = field(default_factory=set)

    @property
    def labels(self) -> dict[str, int]:
        return {n.id: n.label for n in self.news}

    def by_id(self) -> dict[str, NewsRecord]:
        return {n.id: n for n in self.news}

    def comments(self) -> list[Comment]:
        return [c for n in self.news for c in self.comments_by_news.get(n.id, ())]


@dataclass
class IngestReport:
    duplicates: int = 0
    empty_news: int = 0
    orphan_comments: int = 0
    inactive_users: int = 0
    dropped_comments: int = 0


def _records(path: PathLike, required: tuple) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: malformed record ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise IngestError(f"{path}:{lineno}: expected an object")
            missing = [k for k in required if k not in obj]
            if missing:
                raise IngestError(f"{path}:{lineno}: missing field(s) {', '.join(missing)}")
            yield lineno, obj


def read_news(path: PathLike) -> list[NewsRecord]:
    out = []
    for lineno, obj in _records(path, NEWS_FIELDS):
        label = obj["label"]
        if label not in (0, 1) or isinstance(label, bool):
            raise IngestError(f"{path}:{lineno}: label must be 0 or 1")
        try:
            out.append(NewsRecord(str(obj["id"]), str(obj["text"]), int(label), int(obj["publish_time"])))
        except (TypeError, ValueError) as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return out


def read_comments(path: PathLike) -> list[Comment]:
    out = []
    for lineno, obj in _records(path, COMMENT_FIELDS):
        try:
            stance = Stance(obj["stance"])
        except ValueError:
            raise IngestError(f"{path}:{lineno}: unknown stance {obj['stance']!r}") from None
        offset = obj["time_offset_seconds"]
        if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0:
            raise IngestError(f"{path}:{lineno}: time_offset_seconds must be a nonnegative integer")
        out.append(Comment(str(obj["news_id"]), str(obj["user_id"]), stance, offset))
    return out


def _write_lines(path: PathLike, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=False) + "\n")


def write_news(path: PathLike, news: Iterable[NewsRecord]) -> None:
    _write_lines(path, ({"id": n.id, "text": n.text, "label": n.label, "publish_time": n.publish_time} for n in news))


def write_comments(path: PathLike, comments: Iterable[Comment]) -> None:
    _write_lines(
        path,
        (
            {"news_id": c.news_id, "user_id": c.user_id, "stance": c.stance.value, "time_offset_seconds": c.time_offset_seconds}
            for c in comments
        ),
    )


def build_dataset(
    news: list[NewsRecord],
    comments: list[Comment],
    activity_threshold: int = 5,
    activity_mode: str = "exclude",
    report: Optional[IngestReport] = None,
) -> Dataset:
    """Clean and index records.

    Drops news with no tokens, comments on unknown news and repeated
    (user, news) pairs (first occurrence wins). Users with fewer than
    ``activity_threshold`` remaining comments are removed along with their
    comments (``"exclude"``), or kept only as headcount
    (``"count-in-denominator"``).
    """
    report = report if report is not None else IngestReport()
    seen_ids = set()
    kept_news = []
    for n in news:
        if n.id in seen_ids:
            raise IngestError(f"duplicate news id {n.id!r}")
        seen_ids.add(n.id)
        if tokenize(n.text):
            kept_news.append(n)
        else:
            report.empty_news += 1
    valid = {n.id for n in kept_news}

    pairs = set()
    cleaned = []
    for c in comments:
        if c.news_id not in valid:
            report.orphan_comments += 1
            continue
        key = (c.user_id, c.news_id)
        if key in pairs:
            report.duplicates += 1
            continue
        pairs.add(key)
        cleaned.append(c)
    if report.duplicates:
        log.warning("rejected %d duplicate (user, news) comments", report.duplicates)

    activity = Counter(c.user_id for c in cleaned)
    inactive = {u for u, k in activity.items() if k < activity_threshold}
    report.inactive_users = len(inactive)
    if activity_mode == "exclude":
        report.dropped_comments = sum(activity[u] for u in inactive)
        cleaned = [c for c in cleaned if c.user_id not in inactive]
        inactive = set()
    elif activity_mode != "count-in-denominator":
        raise IngestError(f"unknown activity mode {activity_mode!r}")
    by_news = group_by_news(cleaned)
    return Dataset(kept_news, {n.id: by_news.get(n.id, []) for n in kept_news}, inactive)


def ingest(
    news_path: PathLike,
    comments_path: PathLike,
    activity_threshold: int = 5,
    activity_mode: str = "exclude",
) -> tuple[Dataset, IngestReport]:
    report = IngestReport()
    ds = build_dataset(read_news(news_path), read_comments(comments_path), activity_threshold, activity_mode, report)
    return ds, report


def export(ds: Dataset, news_path: PathLike, comments_path: PathLike) -> None:
    """Normalized re-export; ingesting it again reproduces ``ds``."""
    write_news(news_path, ds.news)
    write_comments(comments_path, ds.comments())


METRICS_HEADER = ("arm", "threshold_seconds", "accuracy", "precision", "recall", "f1", "auc")


def write_metrics_csv(path: PathLike, rows) -> None:
    """``rows`` yields ``(arm, threshold_seconds, MetricsReport)``; static rows use -1.

    An undefined AUC is written as an empty field.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for arm, threshold, rep in rows:
            auc = "" if rep.auc is None else f"{rep.auc:.6f}"
            w.writerow([arm, threshold, f"{rep.accuracy:.6f}", f"{rep.precision:.6f}", f"{rep.recall:.6f}", f"{rep.f1:.6f}", auc])


def read_metrics_csv(path: PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
