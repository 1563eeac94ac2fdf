"""Post delivery channels, the output RSS feed, the image host and the delivery ledger."""
from __future__ import annotations

import functools
import hashlib
import json
import logging
import os
import sqlite3
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from email.utils import format_datetime
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from xml.etree import ElementTree as ET

from .compose import ELLIPSIS, Post

log = logging.getLogger(__name__)

SHORT_TEXT_MIN_LIMIT = 30


class ConfigError(ValueError):
    pass


@dataclass
class Receipt:
    channel: str
    post_id: str
    ok: bool
    detail: str = ""
    paths: tuple[str, ...] = ()
    response_id: str | None = None
    attempts: int = 0
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "post_id": self.post_id,
            "ok": self.ok,
            "skipped": self.skipped,
            "attempts": self.attempts,
            "response_id": self.response_id,
            "detail": self.detail,
            "paths": list(self.paths),
        }


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------- file sink


def publish_file(post: Post, png: bytes, directory, channel: str = "file") -> Receipt:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        png_path = directory / f"{post.post_id}.png"
        json_path = directory / f"{post.post_id}.json"
        _atomic_write(png_path, png)
        payload = json.dumps(post.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        _atomic_write(json_path, payload.encode("utf-8"))
    except OSError as e:
        return Receipt(channel, post.post_id, False, f"IoError: {e}", attempts=1)
    return Receipt(channel, post.post_id, True, paths=(str(png_path), str(json_path)), attempts=1)


# ------------------------------------------------------------ http channels


def _post_with_retry(send, channel: str, post_id: str, attempts: int, backoff: float, sleep) -> Receipt:
    """Call ``send()`` until it returns a 2xx response, at most ``attempts`` times."""
    import requests

    detail = ""
    for attempt in range(1, attempts + 1):
        try:
            resp = send()
        except requests.RequestException as e:
            detail = f"{type(e).__name__}: {e}"
        else:
            if 200 <= resp.status_code < 300:
                try:
                    body = resp.json()
                    rid = body.get("id") if isinstance(body, dict) else None
                except ValueError:
                    rid = None
                return Receipt(channel, post_id, True, f"HTTP {resp.status_code}",
                               response_id=None if rid is None else str(rid), attempts=attempt)
            detail = f"HTTP {resp.status_code}"
        log.warning("%s: attempt %d/%d for %s failed (%s)", channel, attempt, attempts, post_id, detail)
        if attempt < attempts:
            sleep(backoff * 2 ** (attempt - 1))
    return Receipt(channel, post_id, False, detail, attempts=attempts)


def publish_webhook(
    post: Post,
    png: bytes,
    endpoint: str,
    token: str | None,
    *,
    session=None,
    attempts: int = 3,
    backoff: float = 0.5,
    timeout: float = 10.0,
    sleep=time.sleep,
    channel: str = "webhook",
) -> Receipt:
    """Multipart POST: ``image`` (PNG) and ``caption`` parts, bearer token header."""
    if not token:
        raise ConfigError(f"{channel}: missing access token")
    if not endpoint:
        raise ConfigError(f"{channel}: missing endpoint")
    import requests

    http = session or requests.Session()

    def send():
        return http.post(
            endpoint,
            files={"image": (f"{post.post_id}.png", png, "image/png")},
            data={"caption": post.description, "post_id": post.post_id},
            headers={"Authorization": f"Bearer {token}"},
            timeout=timeout,
        )

    return _post_with_retry(send, channel, post.post_id, attempts, backoff, sleep)


def short_text(title: str, link: str, limit: int = 280) -> str:
    """``"title link"`` within ``limit`` characters; only the title is ever shortened."""
    if limit < len(link) + 2:
        raise ValueError(f"limit {limit} leaves no room for the link ({len(link)} chars)")
    title = " ".join(title.split())
    budget = limit - len(link) - 1
    if len(title) > budget:
        room = budget - len(ELLIPSIS)
        head = title[:room]
        if room < len(title) and not title[room].isspace() and " " in head:
            head = head[: head.rfind(" ")]
        title = head.rstrip() + ELLIPSIS
    return f"{title} {link}"


def format_short_text(post: Post, limit: int = 280) -> str:
    return short_text(post.title, post.link, limit)


def publish_short_text(
    post: Post,
    endpoint: str,
    token: str | None,
    limit: int = 280,
    *,
    session=None,
    attempts: int = 3,
    backoff: float = 0.5,
    timeout: float = 10.0,
    sleep=time.sleep,
    channel: str = "short_text",
) -> Receipt:
    if not token:
        raise ConfigError(f"{channel}: missing access token")
    import requests

    http = session or requests.Session()
    text = format_short_text(post, limit)

    def send():
        return http.post(endpoint, json={"text": text}, headers={"Authorization": f"Bearer {token}"}, timeout=timeout)

    return _post_with_retry(send, channel, post.post_id, attempts, backoff, sleep)


# ------------------------------------------------------------- image host


@dataclass(frozen=True)
class ImageHost:
    directory: Path
    base_url: str

    def __post_init__(self):
        if not self.base_url.endswith("/"):
            object.__setattr__(self, "base_url", self.base_url + "/")


def host_image(png: bytes, host: ImageHost) -> str:
    """Store ``png`` under its SHA-256 name and return its public URL."""
    digest = hashlib.sha256(png).hexdigest()
    directory = Path(host.directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{digest}.png"
    if not path.exists():
        _atomic_write(path, png)
    return f"{host.base_url}{digest}.png"


# ------------------------------------------------------------------ RSS


@dataclass(frozen=True)
class PostRecord:
    image_url: str
    publish_date: datetime
    title: str
    link: str = ""
    guid: str = ""
    image_length: int = 0

    def __post_init__(self):
        if not self.image_url or not self.title or self.publish_date is None:
            raise ValueError("a post record needs image_url, publish_date and title")

    def to_dict(self) -> dict:
        return {
            "ImageUrl": self.image_url,
            "PublishDate": self.publish_date.isoformat(),
            "Title": self.title,
            "Link": self.link,
            "Guid": self.guid,
            "ImageLength": self.image_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PostRecord":
        return cls(d["ImageUrl"], datetime.fromisoformat(d["PublishDate"]), d["Title"],
                   d.get("Link", ""), d.get("Guid", ""), d.get("ImageLength", 0))


@dataclass(frozen=True)
class FeedMeta:
    title: str = "newsburst"
    link: str = "http://127.0.0.1:8080/"
    description: str = "Most covered stories of the day"
    language: str = "cs"


def _rfc822(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return format_datetime(dt.astimezone(timezone.utc), usegmt=True)


def emit_rss(records, meta: FeedMeta = FeedMeta()) -> bytes:
    """RSS 2.0 document, newest record first; one image enclosure per item."""
    rss = ET.Element("rss", version="2.0")
    channel = ET.SubElement(rss, "channel")
    ET.SubElement(channel, "title").text = meta.title
    ET.SubElement(channel, "link").text = meta.link
    ET.SubElement(channel, "description").text = meta.description
    ET.SubElement(channel, "language").text = meta.language
    ordered = sorted(records, key=lambda r: (r.publish_date, r.guid or r.image_url), reverse=True)
    for rec in ordered:
        item = ET.SubElement(channel, "item")
        ET.SubElement(item, "title").text = rec.title
        ET.SubElement(item, "link").text = rec.link or rec.image_url
        ET.SubElement(item, "enclosure", url=rec.image_url, length=str(rec.image_length), type="image/png")
        ET.SubElement(item, "pubDate").text = _rfc822(rec.publish_date)
        ET.SubElement(item, "guid", isPermaLink="false").text = rec.guid or rec.image_url
    ET.indent(rss)
    return ET.tostring(rss, encoding="utf-8", xml_declaration=True) + b"\n"


class PostStore:
    """Published post records in one JSON file, keyed by guid."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def records(self) -> list[PostRecord]:
        if not self.path.exists():
            return []
        return [PostRecord.from_dict(d) for d in json.loads(self.path.read_text(encoding="utf-8"))]

    def add(self, record: PostRecord) -> None:
        with self._lock:
            kept = [r for r in self.records() if (r.guid or r.image_url) != (record.guid or record.image_url)]
            kept.append(record)
            kept.sort(key=lambda r: (r.publish_date, r.guid or r.image_url), reverse=True)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            data = json.dumps([r.to_dict() for r in kept], ensure_ascii=False, indent=1)
            _atomic_write(self.path, data.encode("utf-8"))


# --------------------------------------------------------------- channels


@dataclass
class FileSinkChannel:
    directory: Path
    name: str = "file"

    def deliver(self, post: Post, png: bytes) -> Receipt:
        return publish_file(post, png, self.directory, channel=self.name)


@dataclass
class WebhookChannel:
    endpoint: str
    token: str | None
    name: str = "webhook"
    attempts: int = 3
    backoff: float = 0.5
    sleep: object = time.sleep
    session: object = None

    def deliver(self, post: Post, png: bytes) -> Receipt:
        return publish_webhook(post, png, self.endpoint, self.token, session=self.session,
                               attempts=self.attempts, backoff=self.backoff, sleep=self.sleep, channel=self.name)


@dataclass
class ShortTextChannel:
    endpoint: str
    token: str | None
    limit: int = 280
    name: str = "short_text"
    attempts: int = 3
    backoff: float = 0.5
    sleep: object = time.sleep
    session: object = None

    def __post_init__(self):
        if self.limit < SHORT_TEXT_MIN_LIMIT:
            raise ConfigError(f"{self.name}: character limit must be >= {SHORT_TEXT_MIN_LIMIT}")

    def deliver(self, post: Post, png: bytes) -> Receipt:
        return publish_short_text(post, self.endpoint, self.token, self.limit, session=self.session,
                                  attempts=self.attempts, backoff=self.backoff, sleep=self.sleep, channel=self.name)


@dataclass
class RssFeedChannel:
    """Hosts the image, records the post and rewrites the feed file.

    Hashtags are appended to the item title, which feed consumers use as the
    caption.
    """

    feed_path: Path
    host: ImageHost
    store: PostStore
    meta: FeedMeta = field(default_factory=FeedMeta)
    name: str = "rss"

    def deliver(self, post: Post, png: bytes) -> Receipt:
        try:
            url = host_image(png, self.host)
            title = post.title if not post.hashtags else f"{post.title} {' '.join(post.hashtags)}"
            record = PostRecord(url, post.created_at or datetime.now(timezone.utc), title,
                                link=post.link, guid=post.post_id, image_length=len(png))
            self.store.add(record)
            self.feed_path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(self.feed_path, emit_rss(self.store.records(), self.meta))
        except OSError as e:
            return Receipt(self.name, post.post_id, False, f"IoError: {e}", attempts=1)
        return Receipt(self.name, post.post_id, True, response_id=url,
                       paths=(str(self.feed_path),), attempts=1)


# ----------------------------------------------------------------- ledger


class DeliveryLedger:
    """Successful (post_id, channel) deliveries, persisted in SQLite.

    :meth:`claim` and :meth:`complete` bracket a delivery; a pair that is
    delivered or in flight cannot be claimed again.
    """

    def __init__(self, path=":memory:"):
        self.path = str(path)
        if self.path != ":memory:":
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        self._db = sqlite3.connect(self.path, check_same_thread=False, isolation_level=None)
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS deliveries ("
            " post_id TEXT NOT NULL, channel TEXT NOT NULL, delivered_at TEXT NOT NULL, detail TEXT,"
            " PRIMARY KEY (post_id, channel))"
        )
        self._lock = threading.Lock()
        self._inflight: set[tuple[str, str]] = set()

    def close(self):
        self._db.close()

    def delivered(self, post_id: str, channel: str) -> bool:
        with self._lock:
            return self._has(post_id, channel)

    def _has(self, post_id, channel) -> bool:
        row = self._db.execute("SELECT 1 FROM deliveries WHERE post_id=? AND channel=?", (post_id, channel)).fetchone()
        return row is not None

    def claim(self, post_id: str, channel: str) -> bool:
        with self._lock:
            key = (post_id, channel)
            if key in self._inflight or self._has(post_id, channel):
                return False
            self._inflight.add(key)
            return True

    def complete(self, receipt: Receipt, when: datetime | None = None) -> None:
        with self._lock:
            self._inflight.discard((receipt.post_id, receipt.channel))
            if receipt.ok:
                when = when or datetime.now(timezone.utc)
                self._db.execute(
                    "INSERT OR IGNORE INTO deliveries VALUES (?, ?, ?, ?)",
                    (receipt.post_id, receipt.channel, when.isoformat(), receipt.detail),
                )

    def entries(self) -> list[tuple[str, str]]:
        with self._lock:
            return self._db.execute("SELECT post_id, channel FROM deliveries ORDER BY post_id, channel").fetchall()


def deliver(post: Post, png: bytes, channels, ledger: DeliveryLedger, when: datetime | None = None) -> list[Receipt]:
    """Send ``post`` to every channel not already served, in parallel.

    Channels fail independently; the receipts come back in channel order.
    """

    def one(ch) -> Receipt:
        if not ledger.claim(post.post_id, ch.name):
            return Receipt(ch.name, post.post_id, True, "already delivered", skipped=True)
        try:
            receipt = ch.deliver(post, png)
        except ConfigError as e:
            receipt = Receipt(ch.name, post.post_id, False, f"ConfigError: {e}")
        except Exception as e:  # one broken channel must not stop the others
            log.exception("%s: delivery of %s crashed", ch.name, post.post_id)
            receipt = Receipt(ch.name, post.post_id, False, f"{type(e).__name__}: {e}")
        ledger.complete(receipt, when)
        return receipt

    if not channels:
        return []
    with ThreadPoolExecutor(max_workers=min(4, len(channels))) as pool:
        return list(pool.map(one, channels))


# ------------------------------------------------------------ static host


def make_server(directory, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """HTTP server for the feed file and hosted images under ``directory``."""
    handler = functools.partial(_QuietHandler, directory=str(directory))
    return ThreadingHTTPServer((host, port), handler)


class _QuietHandler(SimpleHTTPRequestHandler):
    extensions_map = {**SimpleHTTPRequestHandler.extensions_map, ".xml": "application/rss+xml", ".png": "image/png"}

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)
