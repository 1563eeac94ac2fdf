import shutil
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from newsburst.embed import ArticleVector
from newsburst.ingest import Article, article_id_for

FIXTURES = Path(__file__).parent / "fixtures"
BURST = FIXTURES / "burst"
NOW = datetime(2020, 10, 1, 12, 0, tzinfo=timezone.utc)


def make_article(guid="g1", source="src-a", title="Titulek", body="Tělo článku.", *, minutes_ago=60,
                 categories=(), image_url=None, perex="", now=NOW):
    published = now - timedelta(minutes=minutes_ago)
    return Article(
        article_id=article_id_for(source, guid),
        source_id=source,
        url=f"https://{source}.example/{guid}",
        title=title,
        perex=perex,
        body=body,
        image_url=image_url,
        published_at=published,
        fetched_at=now,
        categories=tuple(categories),
    )


def unit(*xs):
    v = np.asarray(xs, dtype=float)
    return v / np.linalg.norm(v)


def vec(article_id, *xs):
    return ArticleVector(article_id, unit(*xs))


@pytest.fixture
def burst_dir(tmp_path):
    """Private copy of the bundled fixture corpus (runs write state next to the config)."""
    dst = tmp_path / "burst"
    shutil.copytree(BURST, dst, ignore=shutil.ignore_patterns("state", "out"))
    return dst


def pytest_terminal_summary(terminalreporter):
    lines = [
        value
        for reports in terminalreporter.stats.values()
        for rep in reports
        if getattr(rep, "when", None) == "call"
        for key, value in getattr(rep, "user_properties", ())
        if key == "acceptance"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
