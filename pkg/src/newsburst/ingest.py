"""Feed polling, article page extraction and the on-disk article store."""
from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from email.utils import parsedate_to_datetime
from pathlib import Path
from typing import Protocol
from urllib.parse import urljoin
from xml.etree import ElementTree as ET

from bs4 import BeautifulSoup

log = logging.getLogger(__name__)

NATIONAL = "National"
INTERNATIONAL = "International"
REGIONS = (NATIONAL, INTERNATIONAL)

_ATOM = "{http://www.w3.org/2005/Atom}"


class MalformedFeed(ValueError):
    pass


class ExtractionFailed(ValueError):
    pass


class FetchError(OSError):
    pass


@dataclass(frozen=True)
class ExtractionRules:
    """CSS selectors locating the parts of a publisher's article page."""

    perex: str = "p.perex"
    body: str = "article p"
    image: str = "meta[property='og:image']"


@dataclass(frozen=True)
class FeedSource:
    source_id: str
    name: str
    feed_url: str
    category_map: dict[str, str] = field(default_factory=dict)
    rules: ExtractionRules = field(default_factory=ExtractionRules)

    def __post_init__(self):
        if not self.source_id:
            raise ValueError("source_id must be non-empty")
        if not self.feed_url:
            raise ValueError(f"source {self.source_id!r}: feed_url must be non-empty")
        bad = {v for v in self.category_map.values() if v not in REGIONS}
        if bad:
            raise ValueError(f"source {self.source_id!r}: unknown regions {sorted(bad)}")

    def region_of(self, categories) -> str | None:
        for cat in categories:
            if cat in self.category_map:
                return self.category_map[cat]
        return None


@dataclass(frozen=True)
class FeedEntry:
    guid: str
    link: str
    title: str
    published_at: datetime
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class Article:
    article_id: str
    source_id: str
    url: str
    title: str
    perex: str
    body: str
    image_url: str | None
    published_at: datetime
    fetched_at: datetime
    categories: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["published_at"] = self.published_at.isoformat()
        d["fetched_at"] = self.fetched_at.isoformat()
        d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Article":
        return cls(
            article_id=d["article_id"],
            source_id=d["source_id"],
            url=d["url"],
            title=d["title"],
            perex=d["perex"],
            body=d["body"],
            image_url=d.get("image_url"),
            published_at=datetime.fromisoformat(d["published_at"]),
            fetched_at=datetime.fromisoformat(d["fetched_at"]),
            categories=tuple(d.get("categories", ())),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for part in (self.url, self.title, self.perex, self.body, self.image_url or "", *self.categories):
            h.update(part.encode("utf-8"))
            h.update(b"\x1f")
        return h.hexdigest()


def article_id_for(source_id: str, guid: str) -> str:
    return hashlib.sha256(f"{source_id}\x1f{guid}".encode("utf-8")).hexdigest()[:20]


def as_utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def parse_timestamp(text: str | None) -> datetime | None:
    """RFC 822 (RSS) or ISO 8601 (Atom) timestamp as aware UTC, ``None`` if unparseable."""
    if not text or not text.strip():
        return None
    text = text.strip()
    try:
        return as_utc(parsedate_to_datetime(text))
    except (TypeError, ValueError, IndexError):
        pass
    try:
        return as_utc(datetime.fromisoformat(text.replace("Z", "+00:00")))
    except ValueError:
        return None


# ------------------------------------------------------------------- feeds


def _text(el) -> str:
    return (el.text or "").strip() if el is not None else ""


def _rss_items(channel):
    for item in channel.iter("item"):
        link = _text(item.find("link"))
        yield (
            _text(item.find("guid")) or link,
            link,
            _text(item.find("title")),
            _text(item.find("pubDate")) or _text(item.find("{http://purl.org/dc/elements/1.1/}date")),
            [_text(c) for c in item.findall("category") if _text(c)],
        )


def _atom_entries(feed):
    for entry in feed.iter(f"{_ATOM}entry"):
        link = ""
        for l in entry.findall(f"{_ATOM}link"):
            if l.get("rel", "alternate") == "alternate" and l.get("href"):
                link = l.get("href").strip()
                break
        yield (
            _text(entry.find(f"{_ATOM}id")) or link,
            link,
            _text(entry.find(f"{_ATOM}title")),
            _text(entry.find(f"{_ATOM}published")) or _text(entry.find(f"{_ATOM}updated")),
            [c.get("term").strip() for c in entry.findall(f"{_ATOM}category") if c.get("term")],
        )


def poll_feed(source: FeedSource, raw_xml: bytes) -> list[FeedEntry]:
    """Parse an RSS 2.0 or Atom document into entries, in feed order."""
    try:
        root = ET.fromstring(raw_xml)
    except ET.ParseError as e:
        raise MalformedFeed(f"{source.source_id}: {e}") from e

    if root.tag == "rss":
        raw = _rss_items(root)
    elif root.tag == f"{_ATOM}feed":
        raw = _atom_entries(root)
    else:
        raise MalformedFeed(f"{source.source_id}: unsupported root element <{root.tag}>")

    entries = []
    for guid, link, title, date_text, cats in raw:
        if not guid:
            log.warning("%s: skipping entry without guid or link (%r)", source.source_id, title)
            continue
        published = parse_timestamp(date_text)
        if published is None:
            log.warning("%s: skipping %s, missing or bad publication date", source.source_id, guid)
            continue
        entries.append(FeedEntry(guid, link or guid, title, published, tuple(cats)))
    return entries


# ------------------------------------------------------------------ pages

_WS = re.compile(r"\s+")


def _block_text(el) -> str:
    return _WS.sub(" ", el.get_text()).strip()


def read_article(
    entry: FeedEntry,
    html: bytes | str,
    rules: ExtractionRules,
    source_id: str,
    fetched_at: datetime,
) -> Article:
    soup = BeautifulSoup(html, "html.parser")
    for br in soup.find_all("br"):
        br.replace_with(" ")

    perex_el = next((el for el in soup.select(rules.perex) if _block_text(el) or el.get("content")), None)
    if perex_el is None:
        perex = ""
    elif perex_el.name == "meta":
        perex = _WS.sub(" ", perex_el.get("content", "")).strip()
    else:
        perex = _block_text(perex_el)

    perex_ids = {id(el) for el in soup.select(rules.perex)}
    blocks = [_block_text(el) for el in soup.select(rules.body) if id(el) not in perex_ids]
    blocks = [b for b in blocks if b]
    if not blocks:
        raise ExtractionFailed(f"{entry.link}: body selector {rules.body!r} matched no text")

    image_url = None
    img = soup.select_one(rules.image) if rules.image else None
    if img is not None:
        ref = img.get("content") or img.get("src") or img.get("href")
        if ref:
            image_url = urljoin(entry.link, ref.strip())

    title = entry.title
    if not title:
        h1 = soup.find("h1") or soup.find("title")
        title = _block_text(h1) if h1 else ""
    if not title:
        raise ExtractionFailed(f"{entry.link}: no title in feed or page")

    fetched_at = as_utc(fetched_at)
    return Article(
        article_id=article_id_for(source_id, entry.guid),
        source_id=source_id,
        url=entry.link,
        title=title,
        perex=perex,
        body="\n\n".join(blocks),
        image_url=image_url,
        # feed clocks run ahead sometimes; never publish in the future of the fetch
        published_at=min(entry.published_at, fetched_at),
        fetched_at=fetched_at,
        categories=entry.categories,
    )


# ------------------------------------------------------------------ store


class UpsertResult(enum.Enum):
    INSERTED = "inserted"
    UPDATED = "updated"


class ArticleStore:
    """Articles keyed by id; with a directory, one JSON document per article.

    Writes go through a lock (single writer); each document is replaced
    atomically so a crash never leaves a half-written record.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._articles: dict[str, Article] = {}
        self._lock = threading.Lock()
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.directory.glob("*.json")):
                art = Article.from_dict(json.loads(path.read_text(encoding="utf-8")))
                self._articles[art.article_id] = art

    def __len__(self):
        return len(self._articles)

    def __contains__(self, article_id):
        return article_id in self._articles

    def __iter__(self):
        return iter(list(self._articles.values()))

    def get(self, article_id: str) -> Article | None:
        return self._articles.get(article_id)

    def upsert(self, article: Article) -> UpsertResult:
        with self._lock:
            existed = article.article_id in self._articles
            if self.directory is not None:
                path = self.directory / f"{article.article_id}.json"
                tmp = path.with_suffix(".json.tmp")
                tmp.write_text(json.dumps(article.to_dict(), ensure_ascii=False, sort_keys=True, indent=1), encoding="utf-8")
                os.replace(tmp, path)
            self._articles[article.article_id] = article
        return UpsertResult.UPDATED if existed else UpsertResult.INSERTED


def upsert_article(store: ArticleStore, article: Article) -> UpsertResult:
    return store.upsert(article)


def merge_update(previous: Article | None, fresh: Article) -> Article:
    """Updated articles keep their original publication time."""
    if previous is None:
        return fresh
    return replace(fresh, published_at=previous.published_at)


def select_window(store, now: datetime, duration: timedelta) -> list[Article]:
    """Articles with ``now - duration < published_at <= now``, oldest first."""
    if duration <= timedelta(0):
        raise ValueError("window duration must be positive")
    now = as_utc(now)
    start = now - duration
    picked = [a for a in store if start < a.published_at <= now]
    picked.sort(key=lambda a: (a.published_at, a.article_id))
    return picked


# --------------------------------------------------------------- fetchers


class Fetcher(Protocol):
    def fetch(self, url: str) -> bytes: ...


class HttpFetcher:
    def __init__(self, timeout: float = 10.0, user_agent: str = "newsburst/0.1"):
        import requests

        self._session = requests.Session()
        self._session.headers["User-Agent"] = user_agent
        self.timeout = timeout

    def fetch(self, url: str) -> bytes:
        import requests

        try:
            resp = self._session.get(url, timeout=self.timeout)
            resp.raise_for_status()
        except requests.RequestException as e:
            raise FetchError(f"{url}: {e}") from e
        return resp.content


class DirectoryFetcher:
    """Offline fetcher: ``manifest.json`` in ``root`` maps URLs to files under ``root``."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        manifest = self.root / "manifest.json"
        try:
            self.manifest = json.loads(manifest.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise FetchError(f"no manifest.json in {self.root}") from e

    def fetch(self, url: str) -> bytes:
        rel = self.manifest.get(url)
        if rel is None:
            raise FetchError(f"{url}: not in fixture manifest")
        try:
            return (self.root / rel).read_bytes()
        except OSError as e:
            raise FetchError(f"{url}: {e}") from e
