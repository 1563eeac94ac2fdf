"""Cluster rating, the publish gate, and post categories."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .ingest import INTERNATIONAL, NATIONAL
from .textpipe import tokenize


@dataclass(frozen=True, order=False)
class ClusterScore:
    size: int
    distinct_sources: int
    time_span: float
    avg_length: float

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not 1 <= self.distinct_sources <= self.size:
            raise ValueError("distinct_sources must lie in [1, size]")
        if self.time_span < 0:
            raise ValueError("time_span must be >= 0")

    def rank_key(self) -> tuple:
        """Ascending sort on this key puts the best cluster first.

        Size and source diversity decide; a tighter burst and longer articles
        only break ties.
        """
        return (-self.size, -self.distinct_sources, self.time_span, -self.avg_length)

    def as_tuple(self) -> tuple:
        return (self.size, self.distinct_sources, self.time_span, self.avg_length)


@dataclass(frozen=True)
class PublishPolicy:
    min_size: int = 3
    min_distinct_sources: int = 2
    important_min_size: int = 5
    important_min_sources: int = 3

    def __post_init__(self):
        if self.min_size < 1 or self.min_distinct_sources < 1:
            raise ValueError("publish thresholds must be >= 1")
        if self.important_min_size < self.min_size or self.important_min_sources < self.min_distinct_sources:
            raise ValueError("important thresholds must not be below the publish thresholds")


@dataclass(frozen=True)
class PostCategory:
    region: str
    important: bool = False

    def __post_init__(self):
        if self.region not in (NATIONAL, INTERNATIONAL):
            raise ValueError(f"unknown region {self.region!r}")


def score_cluster(members) -> ClusterScore:
    if not members:
        raise ValueError("cannot score an empty cluster")
    times = [a.published_at for a in members]
    lengths = [len(tokenize(a.body)) for a in members]
    return ClusterScore(
        size=len(members),
        distinct_sources=len({a.source_id for a in members}),
        time_span=(max(times) - min(times)).total_seconds(),
        avg_length=sum(lengths) / len(lengths),
    )


def compare_scores(a: ClusterScore, b: ClusterScore) -> int:
    """1 if ``a`` ranks above ``b``, -1 if below, 0 if equal."""
    ka, kb = a.rank_key(), b.rank_key()
    if ka == kb:
        return 0
    return 1 if ka < kb else -1


def should_publish(s: ClusterScore, p: PublishPolicy) -> bool:
    return s.size >= p.min_size and s.distinct_sources >= p.min_distinct_sources


def is_important(s: ClusterScore, p: PublishPolicy) -> bool:
    return s.size >= p.important_min_size and s.distinct_sources >= p.important_min_sources


def classify(members, s: ClusterScore, p: PublishPolicy, representative, sources) -> PostCategory:
    """Region by majority of member feed categories, importance by the stricter gate.

    ``sources`` maps source_id to a :class:`~newsburst.ingest.FeedSource`
    (anything with ``region_of(categories)``). Members whose categories map to
    nothing count as national.
    """

    def region(article) -> str:
        src = sources.get(article.source_id)
        found = src.region_of(article.categories) if src is not None else None
        return found or NATIONAL

    votes = Counter(region(a) for a in members)
    if votes[NATIONAL] > votes[INTERNATIONAL]:
        winner = NATIONAL
    elif votes[INTERNATIONAL] > votes[NATIONAL]:
        winner = INTERNATIONAL
    else:
        winner = region(representative)
    return PostCategory(winner, is_important(s, p))
