"""Configuration and the end-to-end window run."""
from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from filelock import FileLock
from PIL import Image

from . import embed
from .cluster import DEFAULT_MAX_NODES, DEFAULT_THRESHOLD, cluster_articles
from .compose import (
    DEFAULT_PALETTE,
    DecodeFailed,
    FontRules,
    build_post,
    bundled_placeholder,
    render_image,
    select_representative,
)
from .ingest import (
    ArticleStore,
    DirectoryFetcher,
    ExtractionFailed,
    ExtractionRules,
    FeedSource,
    FetchError,
    HttpFetcher,
    MalformedFeed,
    as_utc,
    merge_update,
    poll_feed,
    read_article,
    select_window,
)
from .publish import (
    ConfigError,
    DeliveryLedger,
    FeedMeta,
    FileSinkChannel,
    ImageHost,
    PostStore,
    RssFeedChannel,
    ShortTextChannel,
    WebhookChannel,
    deliver,
)
from .score import PublishPolicy, classify, score_cluster, should_publish
from .textpipe import Lexicon, StopList, demo_lexicon, demo_stoplist

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingSpec:
    kind: str = "hash"  # "hash" or "table"
    dimension: int = embed.DEFAULT_DIMENSION
    seed: int = 0
    path: Path | None = None

    def build(self):
        if self.kind == "hash":
            return embed.hash_provider(self.dimension, self.seed)
        return embed.load_table_provider(self.path)


@dataclass(frozen=True)
class ChannelSpec:
    kind: str  # file | webhook | short_text | rss
    name: str
    settings: dict


@dataclass(frozen=True)
class PipelineConfig:
    sources: tuple[FeedSource, ...] = ()
    state_dir: Path = Path("state")
    window_hours: float = 24.0
    threshold: float = DEFAULT_THRESHOLD
    max_nodes: int = DEFAULT_MAX_NODES
    n_tokens: int = embed.DEFAULT_N_TOKENS
    embedding: EmbeddingSpec = EmbeddingSpec()
    lexicon_path: Path | None = None
    stopwords_path: Path | None = None
    policy: PublishPolicy = PublishPolicy()
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    font: FontRules = FontRules()
    placeholder_image: Path | None = None
    hashtags: tuple[str, ...] = ()
    channels: tuple[ChannelSpec, ...] = ()
    fixture_dir: Path | None = None
    fetch_timeout: float = 10.0

    @property
    def article_dir(self) -> Path:
        return self.state_dir / "articles"

    @property
    def ledger_path(self) -> Path:
        return self.state_dir / "ledger.sqlite"

    def fetcher(self):
        if self.fixture_dir is not None:
            return DirectoryFetcher(self.fixture_dir)
        return HttpFetcher(self.fetch_timeout)

    def lexicon(self) -> Lexicon:
        return Lexicon.from_file(self.lexicon_path) if self.lexicon_path else demo_lexicon()

    def stoplist(self) -> StopList:
        return StopList.from_file(self.stopwords_path) if self.stopwords_path else demo_stoplist()

    def placeholder(self) -> Path:
        return self.placeholder_image or bundled_placeholder()


# ------------------------------------------------------------ config file

_CHANNEL_KINDS = ("file", "webhook", "short_text", "rss")


def _path(base: Path, value) -> Path | None:
    if value is None or value == "":
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def _take(table: dict, key: str, kind, default, where: str):
    if key not in table:
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def parse_config(data: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    """Validate a config mapping (as loaded from TOML) into a :class:`PipelineConfig`."""
    base_dir = Path(base_dir)
    try:
        sources = []
        seen = set()
        for i, s in enumerate(data.get("sources", [])):
            where = f"sources[{i}]"
            sid = _take(s, "id", str, "", where)
            if sid in seen:
                raise ConfigError(f"{where}: duplicate source id {sid!r}")
            seen.add(sid)
            rules = s.get("rules", {})
            defaults = ExtractionRules()
            sources.append(
                FeedSource(
                    source_id=sid,
                    name=_take(s, "name", str, sid, where),
                    feed_url=_take(s, "feed_url", str, "", where),
                    category_map=dict(s.get("category_map", {})),
                    rules=ExtractionRules(
                        perex=_take(rules, "perex", str, defaults.perex, where + ".rules"),
                        body=_take(rules, "body", str, defaults.body, where + ".rules"),
                        image=_take(rules, "image", str, defaults.image, where + ".rules"),
                    ),
                )
            )

        store = data.get("store", {})
        window = data.get("window", {})
        clus = data.get("cluster", {})
        emb = data.get("embedding", {})
        text = data.get("text", {})
        pol = data.get("policy", {})
        comp = data.get("compose", {})
        ing = data.get("ingest", {})

        kind = _take(emb, "kind", str, "hash", "embedding")
        if kind not in ("hash", "table"):
            raise ConfigError(f"embedding.kind: expected 'hash' or 'table', got {kind!r}")
        emb_spec = EmbeddingSpec(
            kind=kind,
            dimension=_take(emb, "dimension", int, embed.DEFAULT_DIMENSION, "embedding"),
            seed=_take(emb, "seed", int, 0, "embedding"),
            path=_path(base_dir, emb.get("path")),
        )
        if kind == "table" and (emb_spec.path is None or not emb_spec.path.is_file()):
            raise ConfigError(f"embedding.path: vector file {emb_spec.path} not found")
        if kind == "hash" and emb_spec.dimension < 1:
            raise ConfigError("embedding.dimension must be >= 1")

        palette = dict(DEFAULT_PALETTE)
        for name, rgb in comp.get("palette", {}).items():
            if name not in DEFAULT_PALETTE or len(rgb) != 3 or not all(isinstance(c, int) and 0 <= c <= 255 for c in rgb):
                raise ConfigError(f"compose.palette.{name}: expected blue/orange/yellow = [r, g, b]")
            palette[name] = tuple(rgb)

        font = FontRules(
            path=str(_path(base_dir, comp["font"])) if comp.get("font") else None,
            tier_threshold=_take(comp, "tier_threshold", int, 60, "compose"),
            large_pt=_take(comp, "large_pt", float, 64.0, "compose"),
            small_pt=_take(comp, "small_pt", float, 44.0, "compose"),
            frame_ratio=_take(comp, "frame_ratio", float, 0.04, "compose"),
        )

        channels = []
        names = set()
        for i, c in enumerate(data.get("channels", [])):
            where = f"channels[{i}]"
            ckind = _take(c, "kind", str, "", where)
            if ckind not in _CHANNEL_KINDS:
                raise ConfigError(f"{where}.kind: expected one of {_CHANNEL_KINDS}, got {ckind!r}")
            name = _take(c, "name", str, ckind, where)
            if name in names:
                raise ConfigError(f"{where}: duplicate channel name {name!r}")
            names.add(name)
            settings = {k: v for k, v in c.items() if k not in ("kind", "name")}
            for key in ("dir", "feed_path", "image_dir", "store_path"):
                if key in settings:
                    settings[key] = _path(base_dir, settings[key])
            if ckind == "file" and "dir" not in settings:
                raise ConfigError(f"{where}: file channel needs 'dir'")
            if ckind in ("webhook", "short_text") and not settings.get("endpoint"):
                raise ConfigError(f"{where}: {ckind} channel needs 'endpoint'")
            if ckind == "short_text" and _take(settings, "limit", int, 280, where) < 30:
                raise ConfigError(f"{where}.limit: must be >= 30")
            if ckind == "rss" and "feed_path" not in settings:
                raise ConfigError(f"{where}: rss channel needs 'feed_path'")
            channels.append(ChannelSpec(ckind, name, settings))

        cfg = PipelineConfig(
            sources=tuple(sources),
            state_dir=_path(base_dir, store.get("dir", "state")),
            window_hours=_take(window, "hours", float, 24.0, "window"),
            threshold=_take(clus, "threshold", float, DEFAULT_THRESHOLD, "cluster"),
            max_nodes=_take(clus, "max_nodes", int, DEFAULT_MAX_NODES, "cluster"),
            n_tokens=_take(emb, "n_tokens", int, embed.DEFAULT_N_TOKENS, "embedding"),
            embedding=emb_spec,
            lexicon_path=_path(base_dir, text.get("lexicon")),
            stopwords_path=_path(base_dir, text.get("stopwords")),
            policy=PublishPolicy(
                min_size=_take(pol, "min_size", int, 3, "policy"),
                min_distinct_sources=_take(pol, "min_distinct_sources", int, 2, "policy"),
                important_min_size=_take(pol, "important_min_size", int, 5, "policy"),
                important_min_sources=_take(pol, "important_min_sources", int, 3, "policy"),
            ),
            palette=palette,
            font=font,
            placeholder_image=_path(base_dir, comp.get("placeholder_image")),
            hashtags=tuple(data.get("hashtags", ())),
            channels=tuple(channels),
            fixture_dir=_path(base_dir, ing.get("fixture_dir")),
            fetch_timeout=_take(ing, "timeout", float, 10.0, "ingest"),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, AttributeError) as e:
        raise ConfigError(str(e)) from e

    if cfg.window_hours <= 0:
        raise ConfigError("window.hours must be positive")
    if not 0.0 < cfg.threshold < 1.0:
        raise ConfigError("cluster.threshold must lie in (0, 1)")
    if cfg.n_tokens < 1:
        raise ConfigError("embedding.n_tokens must be >= 1")
    if cfg.max_nodes < 1:
        raise ConfigError("cluster.max_nodes must be >= 1")
    for p in (cfg.lexicon_path, cfg.stopwords_path, cfg.placeholder_image):
        if p is not None and not p.is_file():
            raise ConfigError(f"file not found: {p}")
    if cfg.font.path and not Path(cfg.font.path).is_file():
        raise ConfigError(f"compose.font: file not found: {cfg.font.path}")
    if cfg.fixture_dir is not None and not (cfg.fixture_dir / "manifest.json").is_file():
        raise ConfigError(f"ingest.fixture_dir: no manifest.json in {cfg.fixture_dir}")
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(data, path.parent)


def build_channels(cfg: PipelineConfig) -> list:
    out = []
    for spec in cfg.channels:
        s = spec.settings
        if spec.kind == "file":
            out.append(FileSinkChannel(Path(s["dir"]), name=spec.name))
        elif spec.kind == "webhook":
            out.append(WebhookChannel(s["endpoint"], s.get("token"), name=spec.name,
                                      attempts=int(s.get("attempts", 3)), backoff=float(s.get("backoff", 0.5))))
        elif spec.kind == "short_text":
            out.append(ShortTextChannel(s["endpoint"], s.get("token"), int(s.get("limit", 280)), name=spec.name,
                                        attempts=int(s.get("attempts", 3)), backoff=float(s.get("backoff", 0.5))))
        else:
            feed_path = Path(s["feed_path"])
            image_dir = Path(s.get("image_dir") or feed_path.parent / "images")
            base_url = s.get("base_url", "http://127.0.0.1:8080/images/")
            store_path = Path(s.get("store_path") or cfg.state_dir / "posts.json")
            meta = FeedMeta(
                title=s.get("title", FeedMeta.title),
                link=s.get("link", FeedMeta.link),
                description=s.get("description", FeedMeta.description),
                language=s.get("language", FeedMeta.language),
            )
            out.append(RssFeedChannel(feed_path, ImageHost(image_dir, base_url), PostStore(store_path), meta, spec.name))
    return out


# ------------------------------------------------------------------ report


@dataclass
class RunReport:
    now: str = ""
    fetched: int = 0
    updated: int = 0
    unchanged: int = 0
    failed: int = 0
    windowed: int = 0
    vectorized: int = 0
    skipped: int = 0
    cliques: int = 0
    clusters: int = 0
    eligible: int = 0
    published: int = 0
    posts: list = field(default_factory=list)
    receipts: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def partial_failure(self) -> bool:
        return bool(self.errors) or any(not r["ok"] for r in self.receipts)

    def to_dict(self, timings: bool = False) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "timings"}
        if timings:
            d["timings"] = self.timings
        return d

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = [
            f"run at {self.now}",
            f"  ingest    fetched={self.fetched} updated={self.updated} unchanged={self.unchanged} failed={self.failed}",
            f"  window    articles={self.windowed} vectorized={self.vectorized} skipped={self.skipped}",
            f"  cluster   cliques={self.cliques} clusters={self.clusters} eligible={self.eligible}",
            f"  publish   published={self.published}",
        ]
        for p in self.posts:
            lines.append(f"    post {p['post_id']} [{p['frame']}] {p['title']}")
        for r in self.receipts:
            state = "skip" if r["skipped"] else ("ok" if r["ok"] else "FAIL")
            lines.append(f"    {r['channel']:<12} {r['post_id']} {state} {r['detail']}".rstrip())
        for e in self.errors:
            lines.append(f"  error: {e}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ stages


def ingest_sources(cfg: PipelineConfig, store: ArticleStore, now: datetime, fetcher, report: RunReport) -> None:
    for source in cfg.sources:
        try:
            entries = poll_feed(source, fetcher.fetch(source.feed_url))
        except (FetchError, MalformedFeed) as e:
            report.errors.append(f"feed {source.source_id}: {e}")
            continue
        for entry in entries:
            try:
                html = fetcher.fetch(entry.link)
                article = read_article(entry, html, source.rules, source.source_id, now)
            except (FetchError, ExtractionFailed) as e:
                report.failed += 1
                report.errors.append(f"article {source.source_id}/{entry.guid}: {e}")
                continue
            previous = store.get(article.article_id)
            if previous is not None and previous.content_hash() == article.content_hash():
                report.unchanged += 1
                continue
            store.upsert(merge_update(previous, article))
            if previous is None:
                report.fetched += 1
            else:
                report.updated += 1


def _load_image(url: str | None, fetcher, placeholder: Path) -> tuple[bytes, str]:
    if url:
        try:
            data = fetcher.fetch(url)
            with Image.open(io.BytesIO(data)) as im:
                im.verify()
            return data, url
        except Exception as e:  # unreachable or undecodable lead image: fall back
            log.warning("lead image %s unusable (%s), using placeholder", url, e)
    return placeholder.read_bytes(), placeholder.resolve().as_uri()


def analyse_window(cfg: PipelineConfig, store: ArticleStore, now: datetime, report: RunReport | None = None):
    """Vectorize and cluster the current window.

    Returns ``(window, vectors, matrix, cliques, clusters)``.
    """
    report = report if report is not None else RunReport()
    window = select_window(store, now, timedelta(hours=cfg.window_hours))
    if len(window) > cfg.max_nodes:
        report.errors.append(f"window holds {len(window)} articles, clustering the newest {cfg.max_nodes}")
        window = window[-cfg.max_nodes:]
    report.windowed = len(window)

    provider = cfg.embedding.build()
    lexicon, stops = cfg.lexicon(), cfg.stoplist()
    vcfg = embed.VectorizeConfig(cfg.n_tokens)
    vectors = []
    for article in window:
        try:
            vectors.append(embed.vectorize_article(article, provider, vcfg, lexicon, stops))
        except embed.NoEmbeddableTokens:
            report.skipped += 1
    report.vectorized = len(vectors)

    by_id = {a.article_id: a for a in window}

    def rate(clique):
        return score_cluster([by_id[i] for i in clique])

    matrix, cliques, clusters = cluster_articles(vectors, rate, cfg.threshold, cfg.max_nodes)
    report.cliques = len(cliques)
    report.clusters = len(clusters)
    return window, vectors, matrix, cliques, clusters


def run_once(cfg: PipelineConfig, now: datetime, *, ingest: bool = True, fetcher=None) -> RunReport:
    """One full pass: poll, window, vectorize, cluster, score, compose, publish."""
    now = as_utc(now)
    report = RunReport(now=now.isoformat())
    cfg.state_dir.mkdir(parents=True, exist_ok=True)
    with FileLock(str(cfg.state_dir / ".run.lock")):
        store = ArticleStore(cfg.article_dir)
        fetcher = fetcher or cfg.fetcher()
        clock = time.perf_counter()
        if ingest:
            ingest_sources(cfg, store, now, fetcher, report)
        report.timings["ingest"] = time.perf_counter() - clock

        clock = time.perf_counter()
        window, vectors, _, _, clusters = analyse_window(cfg, store, now, report)
        report.timings["cluster"] = time.perf_counter() - clock

        clock = time.perf_counter()
        by_id = {a.article_id: a for a in window}
        sources = {s.source_id: s for s in cfg.sources}
        channels = build_channels(cfg)
        ledger = DeliveryLedger(cfg.ledger_path)
        try:
            for cluster in clusters:
                if not should_publish(cluster.score, cfg.policy):
                    continue
                report.eligible += 1
                members = [by_id[i] for i in sorted(cluster.members)]
                rep_id = select_representative(cluster.members, vectors)
                category = classify(members, cluster.score, cfg.policy, by_id[rep_id], sources)
                image_bytes, image_url = _load_image(by_id[rep_id].image_url, fetcher, cfg.placeholder())
                with Image.open(io.BytesIO(image_bytes)) as im:
                    dims = im.size
                post = build_post(cluster, by_id, vectors, category, cfg.hashtags, now, image_dims=dims,
                                  palette=cfg.palette, font_rules=cfg.font, placeholder_url=image_url)
                if post.image.source_image_url != image_url:
                    post = replace(post, image=replace(post.image, source_image_url=image_url))
                try:
                    png = render_image(post.image, image_bytes, cfg.font)
                except (DecodeFailed, ValueError) as e:
                    report.errors.append(f"render {post.post_id}: {e}")
                    continue
                receipts = deliver(post, png, channels, ledger, now)
                report.receipts.extend(r.to_dict() for r in receipts)
                if any(r.ok and not r.skipped for r in receipts):
                    report.published += 1
                    report.posts.append({
                        "post_id": post.post_id,
                        "representative": post.representative_article_id,
                        "title": post.title,
                        "frame": post.image.frame_name,
                        "region": post.category.region,
                        "important": post.category.important,
                        "members": list(post.members),
                    })
        finally:
            ledger.close()
        report.timings["publish"] = time.perf_counter() - clock
    return report


def inspect_window(cfg: PipelineConfig, now: datetime) -> dict:
    """Similarity matrix, cliques and scores of the current window, for debugging."""
    now = as_utc(now)
    store = ArticleStore(cfg.article_dir)
    report = RunReport(now=now.isoformat())
    window, vectors, matrix, cliques, clusters = analyse_window(cfg, store, now, report)
    by_id = {a.article_id: a for a in window}
    return {
        "now": now.isoformat(),
        "threshold": cfg.threshold,
        "articles": [{"id": i, "source": by_id[i].source_id, "title": by_id[i].title} for i in matrix.ids],
        "skipped": report.skipped,
        "matrix": np.round(matrix.s, 6).tolist(),
        "cliques": [list(c) for c in cliques],
        "clusters": [
            {
                "members": sorted(c.members),
                "score": list(c.score.as_tuple()),
                "publish": should_publish(c.score, cfg.policy),
            }
            for c in clusters
        ],
    }

