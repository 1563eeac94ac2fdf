import hashlib
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BURST, NOW, make_article
from newsburst.ingest import (
    Article,
    ArticleStore,
    DirectoryFetcher,
    ExtractionFailed,
    ExtractionRules,
    FeedEntry,
    FeedSource,
    FetchError,
    MalformedFeed,
    UpsertResult,
    article_id_for,
    poll_feed,
    read_article,
    select_window,
    upsert_article,
)

SOURCE = FeedSource("src-a", "Source A", "https://a.example/rss", {"Domácí": "National"})

RSS_TWO = b"""<?xml version="1.0" encoding="UTF-8"?>
<rss version="2.0"><channel><title>A</title>
<item><title>First</title><link>https://a.example/1</link><guid>g1</guid>
  <pubDate>Thu, 01 Oct 2020 10:00:00 GMT</pubDate><category>Dom\xc3\xa1c\xc3\xad</category><category>Politika</category></item>
<item><title>Second</title><link>https://a.example/2</link><guid>g2</guid>
  <pubDate>Thu, 01 Oct 2020 11:30:00 +0200</pubDate></item>
</channel></rss>"""


def test_poll_empty_feed():
    xml = b'<rss version="2.0"><channel><title>A</title></channel></rss>'
    assert poll_feed(SOURCE, xml) == []


def test_poll_two_items_in_order():
    entries = poll_feed(SOURCE, RSS_TWO)
    assert entries == [
        FeedEntry("g1", "https://a.example/1", "First", datetime(2020, 10, 1, 10, 0, tzinfo=timezone.utc), ("Domácí", "Politika")),
        FeedEntry("g2", "https://a.example/2", "Second", datetime(2020, 10, 1, 9, 30, tzinfo=timezone.utc), ()),
    ]


def test_poll_skips_item_without_date(caplog):
    xml = RSS_TWO.replace(b"<pubDate>Thu, 01 Oct 2020 10:00:00 GMT</pubDate>", b"")
    entries = poll_feed(SOURCE, xml)
    assert [e.guid for e in entries] == ["g2"]
    assert "g1" in caplog.text


def test_poll_guid_falls_back_to_link_and_skips_anonymous():
    xml = b"""<rss version="2.0"><channel>
    <item><title>No guid</title><link>https://a.example/x</link><pubDate>Thu, 01 Oct 2020 10:00:00 GMT</pubDate></item>
    <item><title>Nothing</title><pubDate>Thu, 01 Oct 2020 10:00:00 GMT</pubDate></item>
    </channel></rss>"""
    entries = poll_feed(SOURCE, xml)
    assert [(e.guid, e.link) for e in entries] == [("https://a.example/x", "https://a.example/x")]


def test_poll_atom():
    xml = b"""<?xml version="1.0" encoding="utf-8"?>
<feed xmlns="http://www.w3.org/2005/Atom"><title>A</title>
  <entry><id>urn:1</id><title>Atom one</title><link rel="alternate" href="https://a.example/a1"/>
    <updated>2020-10-01T08:00:00Z</updated><category term="World"/></entry>
  <entry><id>urn:2</id><title>Atom two</title><link href="https://a.example/a2"/>
    <published>2020-10-01T09:00:00+01:00</published></entry>
</feed>"""
    entries = poll_feed(SOURCE, xml)
    assert [(e.guid, e.link, e.categories) for e in entries] == [
        ("urn:1", "https://a.example/a1", ("World",)),
        ("urn:2", "https://a.example/a2", ()),
    ]
    assert entries[1].published_at == datetime(2020, 10, 1, 8, 0, tzinfo=timezone.utc)


@pytest.mark.parametrize("raw", [b"", b"<rss><channel>", b"not xml at all", b"<html><body/></html>"])
def test_poll_malformed(raw):
    with pytest.raises(MalformedFeed):
        poll_feed(SOURCE, raw)


def test_poll_deterministic():
    assert poll_feed(SOURCE, RSS_TWO) == poll_feed(SOURCE, RSS_TWO)


PAGE = """<html><head><meta property="og:image" content="/img/lead.jpg"></head><body>
<nav><p>menu</p></nav>
<article><h1>Head</h1>
<p class="perex">Lead  text.</p>
<p>Block one.</p>
<p>Block <b>two</b>.</p>
<p>Block<br>three.</p>
</article></body></html>"""

ENTRY = FeedEntry("g1", "https://a.example/news/1", "Title", NOW - timedelta(hours=1), ("Domácí",))


def test_read_article_extracts_parts():
    art = read_article(ENTRY, PAGE.encode(), ExtractionRules(), "src-a", NOW)
    assert art.perex == "Lead text."
    assert art.body == "Block one.\n\nBlock two.\n\nBlock three."
    assert art.image_url == "https://a.example/img/lead.jpg"
    assert art.article_id == article_id_for("src-a", "g1")
    assert art.categories == ("Domácí",)
    assert art.published_at <= art.fetched_at


def test_read_article_without_image():
    page = PAGE.replace('<meta property="og:image" content="/img/lead.jpg">', "")
    assert read_article(ENTRY, page, ExtractionRules(), "src-a", NOW).image_url is None


def test_read_article_body_missing():
    with pytest.raises(ExtractionFailed):
        read_article(ENTRY, PAGE, ExtractionRules(body="div.content p"), "src-a", NOW)


def test_read_article_custom_rules():
    page = '<div id="x"><span class="lead">L</span><div class="t">A</div><div class="t">B</div><img class="hero" src="h.png"></div>'
    rules = ExtractionRules(perex="span.lead", body="div.t", image="img.hero")
    art = read_article(ENTRY, page, rules, "src-a", NOW)
    assert (art.perex, art.body, art.image_url) == ("L", "A\n\nB", "https://a.example/news/h.png")


def test_read_article_never_published_in_future():
    future = replace(ENTRY, published_at=NOW + timedelta(hours=2))
    art = read_article(future, PAGE, ExtractionRules(), "src-a", NOW)
    assert art.published_at == NOW


def test_upsert_insert_then_update():
    store = ArticleStore()
    art = make_article()
    assert upsert_article(store, art) is UpsertResult.INSERTED
    assert len(store) == 1
    changed = replace(art, body="Nové tělo.")
    assert upsert_article(store, changed) is UpsertResult.UPDATED
    assert len(store) == 1
    assert store.get(art.article_id).body == "Nové tělo."


def test_same_guid_different_sources_are_distinct():
    a = make_article(guid="shared", source="src-a")
    b = make_article(guid="shared", source="src-b")
    store = ArticleStore()
    upsert_article(store, a)
    upsert_article(store, b)
    assert len(store) == 2
    # digests recomputed independently
    assert a.article_id == hashlib.sha256("src-a\x1fshared".encode()).hexdigest()[:20]
    assert b.article_id == hashlib.sha256("src-b\x1fshared".encode()).hexdigest()[:20]


def test_upsert_idempotent(tmp_path):
    store = ArticleStore(tmp_path)
    art = make_article()
    store.upsert(art)
    before = sorted(p.read_bytes() for p in tmp_path.iterdir())
    store.upsert(art)
    assert sorted(p.read_bytes() for p in tmp_path.iterdir()) == before
    assert list(store) == [art]


def test_store_round_trips_all_fields(tmp_path):
    arts = [
        make_article("g1", title="Přílišný „kůň“ <b>", body="A\n\nB", categories=("Domácí", "Svět"),
                     image_url="https://x/y.png", perex="Perex"),
        make_article("g2", image_url=None),
    ]
    store = ArticleStore(tmp_path)
    for a in arts:
        store.upsert(a)
    reloaded = ArticleStore(tmp_path)
    assert sorted(reloaded, key=lambda a: a.article_id) == sorted(arts, key=lambda a: a.article_id)


def test_window_boundaries():
    store = ArticleStore()
    inside = make_article("in", minutes_ago=23 * 60)
    outside = make_article("out", minutes_ago=25 * 60)
    edge = make_article("edge", minutes_ago=24 * 60)
    for a in (inside, outside, edge):
        store.upsert(a)
    assert select_window(store, NOW, timedelta(hours=24)) == [inside]


def test_window_upper_bound_inclusive_and_future_excluded():
    store = ArticleStore()
    at_now = make_article("now", minutes_ago=0)
    store.upsert(at_now)
    store.upsert(replace(make_article("future"), published_at=NOW + timedelta(seconds=1)))
    assert select_window(store, NOW, timedelta(hours=1)) == [at_now]


def test_window_empty_and_bad_duration():
    assert select_window(ArticleStore(), NOW, timedelta(hours=24)) == []
    with pytest.raises(ValueError):
        select_window(ArticleStore(), NOW, timedelta(0))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 3000), st.sampled_from("abcdef")), max_size=15, unique=True), st.randoms())
def test_window_order_independent_of_insertion(specs, rnd):
    arts = [make_article(f"{src}{m}", source=src, minutes_ago=m) for m, src in specs]
    shuffled = arts[:]
    rnd.shuffle(shuffled)
    s1, s2 = ArticleStore(), ArticleStore()
    for a in arts:
        s1.upsert(a)
    for a in shuffled:
        s2.upsert(a)
    w1 = select_window(s1, NOW, timedelta(hours=24))
    assert w1 == select_window(s2, NOW, timedelta(hours=24))
    assert set(w1) <= set(arts)
    keys = [(a.published_at, a.article_id) for a in w1]
    assert keys == sorted(keys)


def test_directory_fetcher():
    f = DirectoryFetcher(BURST)
    assert f.fetch("https://denik-a.example.cz/rss").startswith(b"<?xml")
    with pytest.raises(FetchError):
        f.fetch("https://nowhere.example/")


def test_feed_source_validation():
    with pytest.raises(ValueError):
        FeedSource("", "x", "https://x")
    with pytest.raises(ValueError):
        FeedSource("a", "x", "")
    with pytest.raises(ValueError):
        FeedSource("a", "x", "https://x", {"World": "Galactic"})


def test_article_dict_round_trip():
    art = make_article(categories=("a",), image_url="https://i")
    assert Article.from_dict(art.to_dict()) == art
