import json

import pytest

from rahi.crowd import Comment, Stance
from rahi.dataio import (
    IngestError,
    NewsRecord,
    build_dataset,
    export,
    ingest,
    read_comments,
    read_metrics_csv,
    write_comments,
    write_metrics_csv,
    write_news,
)
from rahi.metrics import evaluate


def _news(*ids, text="some words here"):
    return [NewsRecord(i, text, k % 2, 1000 + k) for k, i in enumerate(ids)]


def _c(news, user, stance="oppose", t=10):
    return Comment(news, user, Stance(stance), t)


def test_activity_threshold_boundary():
    news = _news(*(f"n{k}" for k in range(5)))
    comments = [_c(f"n{k}", "busy") for k in range(5)] + [_c(f"n{k}", "quiet") for k in range(4)]
    ds = build_dataset(news, comments, activity_threshold=5)
    users = {c.user_id for c in ds.comments()}
    assert users == {"busy"}
    kept = build_dataset(news, comments, 5, "count-in-denominator")
    assert kept.inactive_users == {"quiet"}
    assert len(kept.comments()) == 9
    with pytest.raises(IngestError):
        build_dataset(news, comments, 5, "other")


def test_duplicates_rejected_with_count(caplog):
    news = _news("a")
    comments = [_c("a", "u", "oppose", 5), _c("a", "u", "support", 9), _c("a", "v")]
    from rahi.dataio import IngestReport

    report = IngestReport()
    ds = build_dataset(news, comments, 1, report=report)
    assert report.duplicates == 1
    assert [c.stance for c in ds.comments_by_news["a"] if c.user_id == "u"] == [Stance.OPPOSE]
    assert "duplicate" in caplog.text


def test_empty_news_and_orphans_dropped():
    news = _news("a") + [NewsRecord("b", " !!! ", 0, 0)]
    report_ds = build_dataset(news, [_c("b", "u"), _c("zz", "u"), _c("a", "u")], 1)
    assert [n.id for n in report_ds.news] == ["a"]
    assert len(report_ds.comments()) == 1
    with pytest.raises(IngestError):
        build_dataset(_news("a", "a"), [], 1)


def test_malformed_lines_report_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps({"news_id": "a", "user_id": "u", "stance": "oppose", "time_offset_seconds": 1}) + "\n{oops\n")
    with pytest.raises(IngestError, match=":2:"):
        read_comments(p)
    p.write_text(json.dumps({"news_id": "a", "user_id": "u", "stance": "maybe", "time_offset_seconds": 1}) + "\n")
    with pytest.raises(IngestError, match="stance"):
        read_comments(p)
    p.write_text(json.dumps({"news_id": "a", "user_id": "u", "stance": "oppose", "time_offset_seconds": -3}) + "\n")
    with pytest.raises(IngestError, match=":1:"):
        read_comments(p)
    n = tmp_path / "n.jsonl"
    n.write_text('{"id": "a", "text": "x", "label": 1, "publish_time": 0}\n{"id": "b", "text": "x", "label": 2, "publish_time": 0}\n')
    with pytest.raises(IngestError, match=":2:"):
        ingest(n, p)


def test_ingest_is_idempotent(tmp_path):
    news = _news("a", "b", "c")
    comments = [_c(n, u, s, t) for n in "abc" for u, s, t in (("u1", "oppose", 5), ("u2", "support", 70), ("u1", "support", 8))]
    write_news(tmp_path / "news.jsonl", news)
    write_comments(tmp_path / "comments.jsonl", comments)
    ds, report = ingest(tmp_path / "news.jsonl", tmp_path / "comments.jsonl", 1)
    assert report.duplicates == 3
    export(ds, tmp_path / "n2.jsonl", tmp_path / "c2.jsonl")
    again, _ = ingest(tmp_path / "n2.jsonl", tmp_path / "c2.jsonl", 1)
    assert again == ds
    export(again, tmp_path / "n3.jsonl", tmp_path / "c3.jsonl")
    assert (tmp_path / "n3.jsonl").read_bytes() == (tmp_path / "n2.jsonl").read_bytes()
    assert (tmp_path / "c3.jsonl").read_bytes() == (tmp_path / "c2.jsonl").read_bytes()


def test_metrics_csv(tmp_path):
    p = tmp_path / "m.csv"
    write_metrics_csv(p, [("hybrid", -1, evaluate([1, 0], [0.9, 0.1])), ("crowd", 60, evaluate([1, 1], [0.9, 0.1]))])
    assert p.read_text().splitlines()[0] == "arm,threshold_seconds,accuracy,precision,recall,f1,auc"
    rows = read_metrics_csv(p)
    assert rows[0]["threshold_seconds"] == "-1" and float(rows[0]["auc"]) == 1.0
    assert rows[1]["auc"] == ""
